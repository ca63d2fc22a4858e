"""Command-line entry point: ``mpgame {game,tomography,device}``.

Exit codes: 0 success, 2 usage or validation error, 3 numeric failure.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import sys
import time
from pathlib import Path

import numpy as np
from scipy.spatial.transform import Rotation

from . import __version__
from .game import (
    GameConfig,
    ImperfectionTargets,
    Prior,
    PriorKind,
    expected_fidelity,
    fit_imperfection_unitary,
    run_game,
)
from .measurement import (
    DegenerateInputError,
    StrategyKind,
    build_mp_basis,
    build_tetrahedron,
    device_coincidence_prob,
    effect_operators,
    efficiency,
    make_device,
    polarizer_concurrence,
    polarizer_for_concurrence,
)
from .qcore import ConvergenceError, DomainError, haar_random_qubit, state_from_angles
from .tomography import (
    TomographyConfig,
    fit_points,
    fit_power_law,
    gill_massar_reference,
    infidelity_curve,
)

EXIT_USAGE = 2
EXIT_NUMERIC = 3
# spawn key reserved for drawing the random tomography state
STATE_STREAM = 0x5EED


class UsageError(Exception):
    pass


# ----------------------------------------------------------------- formatting


def fmt(x) -> str:
    """Fixed scientific notation, 12 significant digits."""
    if x is None or (isinstance(x, float) and not math.isfinite(x)):
        return "nan"
    return f"{float(x):.11e}"


def _json(obj, indent=0) -> str:
    pad = "  " * (indent + 1)
    end = "  " * indent
    if obj is None:
        return "null"
    if isinstance(obj, bool):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return "null" if not math.isfinite(obj) else fmt(obj)
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {_json(v, indent + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(not isinstance(v, (dict, list, tuple)) for v in obj):
            return "[" + ", ".join(_json(v) for v in obj) + "]"
        return "[\n" + ",\n".join(pad + _json(v, indent + 1) for v in obj) + "\n" + end + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps(obj) -> str:
    return _json(obj) + "\n"


def _write(path: Path, text: str) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    return path


def _write_csv(path: Path, header, rows) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    return path


def _digest(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def write_manifest(path: Path, command: str, config: dict, seed, started: float, outputs) -> Path:
    manifest = {
        "command": command,
        "config": config,
        "seed": seed,
        "version": __version__,
        "duration_seconds": time.perf_counter() - started,
        "outputs": {p.name: _digest(p) for p in outputs},
    }
    return _write(path, dumps(manifest))


# ----------------------------------------------------------------- parsing helpers


def _floats(text: str, n: int, name: str):
    try:
        vals = [float(v) for v in str(text).split(",")]
    except ValueError:
        raise UsageError(f"{name}: expected {n} comma-separated numbers, got {text!r}")
    if len(vals) != n:
        raise UsageError(f"{name}: expected {n} comma-separated numbers, got {text!r}")
    return vals


def _rotation(text):
    if text is None:
        return None
    return Rotation.from_euler("ZYZ", _floats(text, 3, "--rotation")).as_matrix()


def _build_device(args, frame, strict=False):
    basis = build_mp_basis(frame)
    imperfection = None
    if getattr(args, "imperfection", None):
        v, a = _floats(args.imperfection, 2, "--imperfection")
        imperfection = fit_imperfection_unitary(ImperfectionTargets(v, a))
    if not (0 <= args.splitting <= 1):
        raise UsageError("--splitting must lie in [0, 1]")
    return make_device(basis, args.concurrence, args.splitting, imperfection, strict=strict)


def _load_set(path: str) -> Prior:
    p = Path(path)
    if not p.exists():
        raise UsageError(f"state-set file {path!r} not found")
    if p.suffix.lower() == ".json":
        rows = json.loads(p.read_text())
        rows = rows["states"] if isinstance(rows, dict) else rows
    else:
        with open(p, newline="") as fh:
            rows = list(csv.DictReader(fh))
    states = [state_from_angles(float(r["theta"]), float(r["phi"])) for r in rows]
    weights = None
    if rows and all(r.get("weight") not in (None, "") for r in rows):
        weights = [float(r["weight"]) for r in rows]
    return Prior.finite_set(states, weights)


def _common_device_flags(p):
    p.add_argument("--concurrence", type=float, default=0.25)
    p.add_argument("--splitting", type=float, default=0.5, help="beamsplitter power transmittance")
    p.add_argument("--imperfection", default=None, metavar="vH,vA",
                   help="overlap targets |<V|U|V>|^2,|<A|U|A>|^2 of the arm-1 imperfection")
    p.add_argument("--rotation", default=None, metavar="a,b,c", help="ZYZ Euler angles of the frame rotation")


def build_parser():
    parser = argparse.ArgumentParser(prog="mpgame", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"mpgame {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("game", help="Monte Carlo estimation game")
    g.add_argument("--config", default=None, help="JSON file with flag values (flags override)")
    g.add_argument("--kind", nargs="+", default=["genmp"], metavar="KIND", help="genmp | tetramp | set FILE")
    g.add_argument("--strategy", choices=[k.value for k in StrategyKind], default="collective")
    g.add_argument("--trials", type=int, default=1_000_000)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--workers", type=int, default=1)
    _common_device_flags(g)
    g.add_argument("--out", default="game.json")

    t = sub.add_parser("tomography", help="infidelity scaling of pair-wise collective tomography")
    t.add_argument("--config", default=None)
    t.add_argument("--theta", type=float, default=None)
    t.add_argument("--phi", type=float, default=None)
    t.add_argument("--random-state", action="store_true")
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--nens", default="8,16,32,64,128,256,512,1024,2048")
    t.add_argument("--repeats", type=int, default=200)
    t.add_argument("--reference", choices=["true", "largest-n"], default="true")
    _common_device_flags(t)
    t.add_argument("--out", default="tomography")

    d = sub.add_parser("device", help="report derived device quantities")
    d.add_argument("--config", default=None)
    d.add_argument("--concurrence", type=float, required=False, default=None)
    d.add_argument("--splitting", type=float, default=0.5)
    d.add_argument("--rotation", default=None)
    d.add_argument("--print-povm", action="store_true")
    d.add_argument("--json", action="store_true")
    return parser, {"game": g, "tomography": t, "device": d}


def parse_args(argv):
    parser, subs = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        try:
            cfg = json.loads(Path(args.config).read_text())
        except (OSError, ValueError) as exc:
            parser.error(f"cannot read config file: {exc}")
        sp = subs[args.command]
        known = {a.dest for a in sp._actions}
        bad = set(cfg) - known
        if bad:
            parser.error(f"unknown config keys: {sorted(bad)}")
        sp.set_defaults(**cfg)
        args = parser.parse_args(argv)
    return args


# ----------------------------------------------------------------- commands


def _prior(kind):
    if isinstance(kind, str):  # config files may give "genmp" or "set states.csv"
        kind = kind.split()
    name = kind[0]
    if name == "genmp" and len(kind) == 1:
        return Prior.uniform_sphere()
    if name == "tetramp" and len(kind) == 1:
        return Prior.tetrahedron_vertices()
    if name == "set" and len(kind) == 2:
        return _load_set(kind[1])
    raise UsageError("--kind must be 'genmp', 'tetramp' or 'set FILE'")


def cmd_game(args) -> int:
    started = time.perf_counter()
    if args.trials < 1:
        raise UsageError("--trials must be at least 1")
    if args.workers < 1:
        raise UsageError("--workers must be at least 1")
    prior = _prior(args.kind)
    frame = build_tetrahedron(_rotation(args.rotation))
    device = _build_device(args, frame)
    strategy = StrategyKind(args.strategy)
    config = GameConfig(prior, strategy, args.trials, args.seed, device, frame, workers=args.workers)
    result = run_game(config)
    bench = expected_fidelity(prior, strategy, device, frame)
    doc = {
        "kind": prior.kind.value,
        "strategy": strategy.value,
        "trials": result.trials,
        "seed": args.seed,
        "average_fidelity": result.average_fidelity,
        "standard_error": result.standard_error,
        "theoretical_benchmark": bench,
        "per_state": [
            {"theta": s.state.theta, "phi": s.state.phi, "trials": s.trials, "freq": list(s.freq), "fidelity": s.fidelity}
            for s in result.per_state
        ],
    }
    out = _write(Path(args.out), dumps(doc))
    write_manifest(out.with_name(out.stem + ".manifest.json"), "game", _resolved(args), args.seed, started, [out])
    print(f"average fidelity {fmt(result.average_fidelity)} +/- {fmt(result.standard_error)} "
          f"(benchmark {fmt(bench)})", file=sys.stderr)
    return 0


def _schedule(text):
    try:
        sizes = [int(v) for v in str(text).split(",")]
    except ValueError:
        raise UsageError(f"--nens: expected comma-separated integers, got {text!r}")
    return sizes


def cmd_tomography(args) -> int:
    started = time.perf_counter()
    if args.random_state == (args.theta is not None or args.phi is not None):
        raise UsageError("give either --theta and --phi, or --random-state")
    if args.random_state:
        state = haar_random_qubit(np.random.default_rng(np.random.SeedSequence(args.seed, spawn_key=(STATE_STREAM,))))
    else:
        if args.theta is None or args.phi is None:
            raise UsageError("--theta and --phi must be given together")
        state = state_from_angles(args.theta, args.phi)
    frame = build_tetrahedron(_rotation(args.rotation))
    device = _build_device(args, frame)
    config = TomographyConfig(state, tuple(_schedule(args.nens)), args.repeats, args.seed, device, frame, args.reference)
    curve = infidelity_curve(config)

    prefix = Path(args.out)
    outputs = [
        _write_csv(prefix.with_name(prefix.name + "_curve.csv"), ["n_ens", "mean_infidelity", "stderr", "repeats"],
                   [[p.n_ens, fmt(p.mean_infidelity), fmt(p.stderr), p.repeats] for p in curve]),
        _write_csv(prefix.with_name(prefix.name + "_gill_massar.csv"), ["n_ens", "infidelity"],
                   [[p.n_ens, fmt(gill_massar_reference(p.n_ens))] for p in curve]),
    ]
    pts = fit_points(curve)
    fit_path = prefix.with_name(prefix.name + "_fit.json")
    if len(pts) >= 3:
        fit = fit_power_law(pts)
        doc = {"a": fit.a, "b": fit.b, "stderr_a": fit.stderr_a, "stderr_b": fit.stderr_b,
               "r_squared": fit.r_squared, "points": len(pts),
               "state": {"theta": state.theta, "phi": state.phi}}
        outputs.append(_write(fit_path, dumps(doc)))
        print(f"fit: infidelity = {fmt(fit.a)} * N^{fmt(fit.b)}", file=sys.stderr)
    elif fit_path.exists():
        fit_path.unlink()
    resolved = _resolved(args)
    resolved["state"] = {"theta": state.theta, "phi": state.phi}
    write_manifest(prefix.with_name(prefix.name + "_manifest.json"), "tomography", resolved, args.seed, started, outputs)
    return 0


def cmd_device(args) -> int:
    if args.concurrence is None:
        raise UsageError("--concurrence is required")
    try:
        pol = polarizer_for_concurrence(args.concurrence)
    except DomainError as exc:
        raise UsageError(str(exc))
    if not (0 <= args.splitting <= 1):
        raise UsageError("--splitting must lie in [0, 1]")
    frame = build_tetrahedron(_rotation(args.rotation))
    basis = build_mp_basis(frame)
    eta = efficiency(args.concurrence)
    check = make_device(basis, args.concurrence, 0.5, strict=False)
    diag, cross = [], 0.0
    for i in range(1, 5):
        for j in range(1, 5):
            pr = device_coincidence_prob(check, i, basis.states[j - 1])
            if i == j:
                diag.append(abs(pr - eta))
            else:
                cross = max(cross, pr)
    report = {
        "concurrence": args.concurrence,
        "t_H": pol.t_H,
        "t_V": pol.t_V,
        "polarizer_concurrence": polarizer_concurrence(pol),
        "extinction_ratio": pol.extinction_ratio,
        "efficiency": eta,
        "splitting": args.splitting,
        "mp_basis": [
            {"re": [float(v.real) for v in row], "im": [float(v.imag) for v in row]} for row in basis.states
        ],
        "setting_residuals": diag,
        "max_crosstalk": cross,
    }
    if args.print_povm:
        dev = make_device(basis, args.concurrence, args.splitting, strict=False)
        report["povm"] = [
            {"re": e.real.tolist(), "im": e.imag.tolist()} for e in effect_operators(StrategyKind.COLLECTIVE, dev)
        ]
    if args.json:
        sys.stdout.write(dumps(report))
        return 0
    lines = [
        f"concurrence        {fmt(args.concurrence)}",
        f"t_H                {fmt(pol.t_H)}",
        f"t_V                {fmt(pol.t_V)}",
        f"extinction ratio   {fmt(pol.extinction_ratio)}",
        f"efficiency         {fmt(eta)}",
        "MP basis (|00>, |01>, |10>, |11>):",
    ]
    for i, row in enumerate(basis.states, 1):
        lines.append(f"  MP_{i}  " + "  ".join(f"{v.real:+.6f}{v.imag:+.6f}j" for v in row))
    lines.append("setting residuals  " + " ".join(fmt(r) for r in diag))
    lines.append(f"max crosstalk      {fmt(cross)}")
    if args.print_povm:
        for i, e in enumerate(report["povm"], 1):
            lines.append(f"effect {i}:")
            for re_row, im_row in zip(e["re"], e["im"]):
                lines.append("  " + "  ".join(f"{a:+.6f}{b:+.6f}j" for a, b in zip(re_row, im_row)))
    sys.stdout.write("\n".join(lines) + "\n")
    return 0


def _resolved(args) -> dict:
    return {k: v for k, v in sorted(vars(args).items()) if k not in ("config",)}


COMMANDS = {"game": cmd_game, "tomography": cmd_tomography, "device": cmd_device}


def main(argv=None) -> int:
    args = parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (UsageError, DomainError) as exc:
        print(f"mpgame {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ConvergenceError, DegenerateInputError) as exc:
        print(f"mpgame {args.command}: numeric failure: {exc}", file=sys.stderr)
        for k, v in getattr(exc, "diagnostics", {}).items():
            print(f"  {k}: {v}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
