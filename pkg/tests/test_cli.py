import csv
import json
import math
import subprocess
import sys

import pytest

from mpgame import cli
from mpgame.tomography import fit_power_law


def run(argv):
    try:
        return cli.main([str(a) for a in argv])
    except SystemExit as exc:
        return exc.code


def load(path):
    return json.loads(path.read_text())


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


# ---------------------------------------------------------------- game


def test_game_schema(tmp_path):
    out = tmp_path / "g.json"
    assert run(["game", "--kind", "tetramp", "--strategy", "collective", "--trials", 20000, "--seed", 4, "--out", out]) == 0
    doc = load(out)
    assert list(doc) == ["kind", "strategy", "trials", "seed", "average_fidelity", "standard_error",
                         "theoretical_benchmark", "per_state"]
    assert doc["kind"] == "tetramp" and doc["trials"] == 20000
    assert doc["theoretical_benchmark"] == pytest.approx(5 / 6, abs=1e-10)
    assert len(doc["per_state"]) == 4
    assert set(doc["per_state"][0]) == {"theta", "phi", "trials", "freq", "fidelity"}
    assert len(doc["per_state"][0]["freq"]) == 4
    man = load(tmp_path / "g.manifest.json")
    assert man["command"] == "game" and man["seed"] == 4
    assert set(man["outputs"]) == {"g.json"}
    assert man["config"]["strategy"] == "collective"


def test_game_benchmark_genmp(tmp_path):
    out = tmp_path / "g.json"
    assert run(["game", "--kind", "genmp", "--strategy", "locc", "--trials", 5000, "--seed", 1, "--out", out]) == 0
    doc = load(out)
    assert doc["theoretical_benchmark"] == pytest.approx((3 + math.sqrt(2)) / 6, abs=1e-6)
    assert doc["per_state"] == []


def test_game_number_format(tmp_path):
    out = tmp_path / "g.json"
    run(["game", "--kind", "genmp", "--trials", 1000, "--seed", 1, "--out", out])
    line = next(ln for ln in out.read_text().splitlines() if "average_fidelity" in ln)
    value = line.split(":")[1].strip().rstrip(",")
    mantissa = value.split("e")[0].lstrip("-")
    assert len(mantissa.replace(".", "")) == 12


def test_game_single_trial_stderr_null(tmp_path):
    out = tmp_path / "g.json"
    assert run(["game", "--trials", 1, "--out", out]) == 0
    assert load(out)["standard_error"] is None


@pytest.mark.parametrize(
    "argv",
    [
        ["--kind", "genmp", "--strategy", "locc", "--trials", 0],
        ["--kind", "bogus"],
        ["--kind", "set"],
        ["--kind", "set", "/nonexistent/file.csv"],
        ["--strategy", "telepathy"],
        ["--concurrence", 1.5],
        ["--splitting", 1.2],
        ["--imperfection", "0.9"],
        ["--rotation", "1,2"],
        ["--trials", "many"],
    ],
)
def test_game_usage_errors(tmp_path, argv, capsys):
    assert run(["game", "--trials", 100, *argv, "--out", tmp_path / "g.json"]) == 2
    assert capsys.readouterr().err
    assert not (tmp_path / "g.json").exists()


def test_game_set_file(tmp_path):
    states = tmp_path / "states.csv"
    states.write_text("theta,phi,weight\n0.0,0.0,0.75\n1.5,2.0,0.25\n")
    out = tmp_path / "s.json"
    assert run(["game", "--kind", "set", states, "--trials", 20000, "--seed", 3, "--out", out]) == 0
    doc = load(out)
    assert doc["kind"] == "set" and len(doc["per_state"]) == 2
    assert doc["per_state"][0]["trials"] > doc["per_state"][1]["trials"]
    js = tmp_path / "states.json"
    js.write_text(json.dumps([{"theta": 0.0, "phi": 0.0}]))
    assert run(["game", "--kind", "set", js, "--trials", 1000, "--out", out]) == 0
    assert load(out)["theoretical_benchmark"] == pytest.approx(5 / 6, abs=1e-12)


def test_game_config_file(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"kind": "tetramp", "strategy": "supp-ent", "trials": 3000, "seed": 9}))
    out = tmp_path / "c.json"
    assert run(["game", "--config", cfg, "--trials", 2000, "--out", out]) == 0
    doc = load(out)
    assert doc["strategy"] == "supp-ent" and doc["trials"] == 2000 and doc["seed"] == 9
    cfg.write_text(json.dumps({"colour": "red"}))
    assert run(["game", "--config", cfg, "--out", out]) == 2


def test_game_imperfection_and_rotation(tmp_path):
    out = tmp_path / "i.json"
    assert run(["game", "--imperfection", "0.987,0.93", "--rotation", "0.3,1.1,-0.4",
                "--trials", 20000, "--seed", 2, "--out", out]) == 0
    assert load(out)["theoretical_benchmark"] < 0.75


def test_game_reproducible(tmp_path):
    argv = ["game", "--kind", "tetramp", "--strategy", "supp-ent", "--trials", 100000, "--seed", 7]
    a, b = tmp_path / "a" / "r.json", tmp_path / "b" / "r.json"
    assert run([*argv, "--out", a]) == 0
    assert run([*argv, "--out", b]) == 0
    assert a.read_bytes() == b.read_bytes()
    ma, mb = load(a.with_name("r.manifest.json")), load(b.with_name("r.manifest.json"))
    assert ma["outputs"] == mb["outputs"]


# ---------------------------------------------------------------- tomography


def test_tomography_outputs(tmp_path):
    prefix = tmp_path / "t"
    assert run(["tomography", "--theta", 1.0, "--phi", 0.5, "--nens", "8,32,128,512", "--repeats", 20,
                "--seed", 3, "--out", prefix]) == 0
    rows = read_csv(tmp_path / "t_curve.csv")
    assert list(rows[0]) == ["n_ens", "mean_infidelity", "stderr", "repeats"]
    assert [int(r["n_ens"]) for r in rows] == [8, 32, 128, 512]
    assert b"\r" not in (tmp_path / "t_curve.csv").read_bytes()
    gm = read_csv(tmp_path / "t_gill_massar.csv")
    assert float(gm[0]["infidelity"]) == pytest.approx(1 / 8)
    fit = load(tmp_path / "t_fit.json")
    assert set(fit) >= {"a", "b", "stderr_a", "stderr_b", "r_squared"}
    # the CSV round-trips to the fitted summary
    again = fit_power_law([(int(r["n_ens"]), float(r["mean_infidelity"])) for r in rows])
    assert again.a == pytest.approx(fit["a"], abs=1e-9) and again.b == pytest.approx(fit["b"], abs=1e-9)
    man = load(tmp_path / "t_manifest.json")
    assert set(man["outputs"]) == {"t_curve.csv", "t_gill_massar.csv", "t_fit.json"}


def test_tomography_single_size(tmp_path):
    prefix = tmp_path / "s"
    assert run(["tomography", "--random-state", "--seed", 2, "--nens", "64", "--repeats", 5, "--out", prefix]) == 0
    assert (tmp_path / "s_curve.csv").exists()
    assert not (tmp_path / "s_fit.json").exists()


def test_tomography_single_repeat(tmp_path):
    prefix = tmp_path / "r"
    assert run(["tomography", "--theta", 0.2, "--phi", 0.0, "--nens", "8,16", "--repeats", 1, "--out", prefix]) == 0
    assert all(r["stderr"] == "nan" for r in read_csv(tmp_path / "r_curve.csv"))


def test_tomography_largest_n(tmp_path):
    prefix = tmp_path / "l"
    assert run(["tomography", "--theta", 0.2, "--phi", 0.0, "--nens", "8,16,32,64", "--repeats", 10,
                "--reference", "largest-n", "--out", prefix]) == 0
    rows = read_csv(tmp_path / "l_curve.csv")
    assert float(rows[-1]["mean_infidelity"]) == 0.0
    assert load(tmp_path / "l_fit.json")["points"] == 3


@pytest.mark.parametrize(
    "argv",
    [
        ["--theta", 0.1, "--phi", 0.0, "--nens", "8,15"],
        ["--theta", 0.1, "--phi", 0.0, "--nens", "16,8"],
        ["--theta", 0.1, "--phi", 0.0, "--nens", "8,x"],
        ["--theta", 0.1, "--phi", 0.0, "--repeats", 0],
        ["--theta", 0.1, "--nens", "8"],
        ["--random-state", "--theta", 0.1, "--phi", 0.0],
        ["--nens", "8"],
        ["--theta", 4.0, "--phi", 0.0, "--nens", "8"],
    ],
)
def test_tomography_usage_errors(tmp_path, argv):
    assert run(["tomography", *argv, "--out", tmp_path / "x"]) == 2


def test_tomography_reproducible(tmp_path):
    argv = ["tomography", "--random-state", "--seed", 11, "--nens", "8,64,256", "--repeats", 30]
    assert run([*argv, "--out", tmp_path / "a" / "p"]) == 0
    assert run([*argv, "--out", tmp_path / "b" / "p"]) == 0
    for name in ("p_curve.csv", "p_gill_massar.csv", "p_fit.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


# ---------------------------------------------------------------- device


def test_device_json(capsys):
    assert run(["device", "--concurrence", 0.25, "--json"]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert rep["extinction_ratio"] == pytest.approx(62.0, abs=0.5)
    assert rep["efficiency"] == pytest.approx(4 / (4 + math.sqrt(15)), abs=1e-10)
    assert max(rep["setting_residuals"]) < 1e-10
    assert rep["max_crosstalk"] < 1e-10
    assert len(rep["mp_basis"]) == 4


def test_device_full_concurrence(capsys):
    assert run(["device", "--concurrence", 1, "--json", "--print-povm"]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert rep["t_H"] == 1 and rep["t_V"] == 1 and rep["efficiency"] == 1
    assert len(rep["povm"]) == 4


def test_device_text(capsys):
    assert run(["device", "--concurrence", 0.25, "--print-povm"]) == 0
    out = capsys.readouterr().out
    assert "extinction ratio" in out and "MP_4" in out and "effect 4:" in out


@pytest.mark.parametrize("argv", [["--concurrence", 1.5], ["--concurrence", 0], [], ["--concurrence", 0.5, "--splitting", -1]])
def test_device_usage_errors(argv):
    assert run(["device", *argv]) == 2


def test_device_reproducible(capsys):
    run(["device", "--concurrence", 0.25, "--json", "--rotation", "0.1,0.2,0.3"])
    a = capsys.readouterr().out
    run(["device", "--concurrence", 0.25, "--json", "--rotation", "0.1,0.2,0.3"])
    assert capsys.readouterr().out == a


# ---------------------------------------------------------------- process level


def test_module_entry_point(tmp_path):
    out = tmp_path / "m.json"
    proc = subprocess.run([sys.executable, "-m", "mpgame", "game", "--trials", "100", "--out", str(out)],
                          capture_output=True, text=True)
    assert proc.returncode == 0 and out.exists()
    proc = subprocess.run([sys.executable, "-m", "mpgame", "game", "--trials", "0"], capture_output=True, text=True)
    assert proc.returncode == 2 and "error" in proc.stderr


def test_numeric_failure_exit(tmp_path, monkeypatch):
    import mpgame.tomography as tomo

    monkeypatch.setattr(tomo, "MLE_MAXITER", 1)
    code = run(["tomography", "--theta", 1.0, "--phi", 0.3, "--nens", "64", "--repeats", 3, "--out", tmp_path / "n"])
    assert code == 3
