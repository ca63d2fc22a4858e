import math

import numpy as np
import pytest

import oracles
from conftest import random_rotation
from mpgame.game import (
    GameConfig,
    ImperfectionTargets,
    Prior,
    corrected_fidelity_bound,
    expected_fidelity,
    fit_imperfection_unitary,
    optimal_collective_fidelity,
    overlaps,
    run_game,
    sphere_quadrature,
)
from mpgame.measurement import StrategyKind, build_mp_basis, build_tetrahedron, make_device, strategy_outcome_probs
from mpgame.qcore import DomainError, is_unitary, state_from_angles, su2_to_rotation

COLL = StrategyKind.COLLECTIVE
LOCC = StrategyKind.LOCC
SUPP = StrategyKind.SUPPRESSED_ENTANGLEMENT


def cfg(prior, strategy, trials, seed, device, frame, **kw):
    return GameConfig(prior=prior, strategy=strategy, trials=trials, seed=seed, device=device, frame=frame, **kw)


def suppressed_oracle(device, bloch, weights):
    from mpgame.qcore import state_from_bloch

    a = np.array([state_from_bloch(b).amplitudes for b in bloch])
    p = oracles.suppressed_probs(device, a)
    frame = build_tetrahedron()
    return oracles.brute_force_game(p, np.asarray(bloch), frame.bloch, np.asarray(weights))


# ---------------------------------------------------------------- closed forms


def test_optimal_collective_fidelity():
    assert optimal_collective_fidelity(2) == 0.75
    assert optimal_collective_fidelity(1) == pytest.approx(2 / 3)
    assert optimal_collective_fidelity(10**6) == pytest.approx(1, abs=1e-5)
    with pytest.raises(DomainError):
        optimal_collective_fidelity(0)


def test_quadrature_weights():
    pts, w = sphere_quadrature()
    assert math.fsum(w) == pytest.approx(1, abs=1e-14)
    np.testing.assert_allclose(np.linalg.norm(pts, axis=1), 1, atol=1e-14)
    assert abs(np.sum(w * pts[:, 2] ** 2) - 1 / 3) < 1e-14


def test_expected_fidelity_examples(device, frame):
    assert expected_fidelity(Prior.tetrahedron_vertices(), COLL, device, frame) == pytest.approx(5 / 6, abs=1e-12)
    assert expected_fidelity(Prior.finite_set([state_from_angles(0, 0)]), COLL, device, frame) == pytest.approx(5 / 6, abs=1e-12)
    assert expected_fidelity(Prior.uniform_sphere(), COLL, device, frame) == pytest.approx(0.75, abs=1e-6)
    assert expected_fidelity(Prior.uniform_sphere(), LOCC, device, frame) == pytest.approx((3 + math.sqrt(2)) / 6, abs=1e-6)


def test_quadrature_converged(device, frame):
    for kind in (COLL, LOCC, SUPP):
        a = expected_fidelity(Prior.uniform_sphere(), kind, device, frame)
        b = expected_fidelity(Prior.uniform_sphere(), kind, device, frame, order=(160, 320))
        assert abs(a - b) < 1e-8


def test_strategy_ordering(device, frame):
    gap = (expected_fidelity(Prior.uniform_sphere(), COLL, device, frame)
           - expected_fidelity(Prior.uniform_sphere(), LOCC, device, frame))
    assert gap == pytest.approx(0.75 - (3 + math.sqrt(2)) / 6, abs=1e-6)
    assert gap == pytest.approx(0.0143, abs=5e-5)


def test_tetramp_suppressed_gap(device, frame):
    supp = expected_fidelity(Prior.tetrahedron_vertices(), SUPP, device, frame)
    assert supp == pytest.approx(suppressed_oracle(device, frame.bloch, np.full(4, 0.25)), abs=1e-12)
    assert 5 / 6 - supp > 0.10


def test_finite_prior_matches_brute_force(device, basis, frame, rng):
    states = [state_from_angles(float(rng.uniform(0, math.pi)), float(rng.uniform(0, 2 * math.pi))) for _ in range(5)]
    w = rng.dirichlet(np.ones(5))
    for kind in (COLL, LOCC, SUPP):
        p = np.array([strategy_outcome_probs(kind, device, basis, s) for s in states])
        from mpgame.measurement import guess_bloch

        want = oracles.brute_force_game(p, np.array([s.bloch for s in states]), guess_bloch(kind, basis), w)
        got = expected_fidelity(Prior.finite_set(states, w), kind, device, frame)
        assert got == pytest.approx(want, abs=1e-12)


def test_tetramp_rotation_invariance(rng):
    for _ in range(10):
        fr = build_tetrahedron(random_rotation(rng))
        dev = make_device(build_mp_basis(fr))
        for kind in (COLL, SUPP):
            base_fr = build_tetrahedron()
            base = expected_fidelity(Prior.tetrahedron_vertices(), kind, make_device(build_mp_basis(base_fr)), base_fr)
            assert abs(expected_fidelity(Prior.tetrahedron_vertices(), kind, dev, fr) - base) < 1e-10


def test_prior_validation():
    with pytest.raises(DomainError):
        Prior.finite_set([])
    with pytest.raises(DomainError):
        Prior.finite_set([state_from_angles(0, 0)], [0.5])


# ---------------------------------------------------------------- Monte Carlo


def test_determinism(device, frame):
    c = cfg(Prior.finite_set([state_from_angles(0, 0), state_from_angles(2.0, 1.0)]), COLL, 150_000, 3, device, frame)
    assert run_game(c) == run_game(c)
    g = cfg(Prior.uniform_sphere(), LOCC, 100_000, 3, device, frame)
    assert run_game(g) == run_game(g)


def test_workers_do_not_change_result(device, frame):
    c = cfg(Prior.uniform_sphere(), COLL, 300_000, 11, device, frame)
    assert run_game(c) == run_game(GameConfig(**{**c.__dict__, "workers": 4}))


def test_per_state_table(device, frame):
    res = run_game(cfg(Prior.tetrahedron_vertices(), COLL, 200_000, 5, device, frame))
    assert len(res.per_state) == 4
    assert sum(s.trials for s in res.per_state) == 200_000
    for s in res.per_state:
        assert sum(s.freq) == pytest.approx(1)
        assert s.fidelity == pytest.approx(5 / 6, abs=0.01)
    assert run_game(cfg(Prior.uniform_sphere(), COLL, 1000, 5, device, frame)).per_state == ()


def test_single_trial_has_no_stderr(device, frame):
    res = run_game(cfg(Prior.uniform_sphere(), COLL, 1, 1, device, frame))
    assert math.isnan(res.standard_error)


@pytest.mark.slow
def test_finite_prior_converges(device, frame):
    states = [state_from_angles(0.3, 0.0), state_from_angles(1.9, 4.0), state_from_angles(2.8, 2.2)]
    prior = Prior.finite_set(states, [0.5, 0.3, 0.2])
    for kind in (COLL, SUPP):
        want = expected_fidelity(prior, kind, device, frame)
        for seed in range(20 if kind is COLL else 3):
            res = run_game(cfg(prior, kind, 1_000_000, seed, device, frame))
            assert abs(res.average_fidelity - want) < 4 * res.standard_error


# ---------------------------------------------------------------- imperfection


def test_fit_identity():
    u = fit_imperfection_unitary(ImperfectionTargets(1.0, 1.0))
    np.testing.assert_allclose(overlaps(u), 1, atol=1e-10)


@pytest.mark.parametrize("targets", [(0.987, 0.93), (0.95, 0.99), (0.9, 0.9), (0.999, 0.5)])
def test_fit_matches_closed_form(targets):
    u = fit_imperfection_unitary(ImperfectionTargets(*targets))
    assert is_unitary(u, 1e-12)
    assert np.max(np.abs(overlaps(u) - targets)) < 1e-8
    angle = 2 * math.acos(min(1.0, abs(np.trace(u)) / 2))
    want, _ = oracles.min_angle_rotation(*targets)
    assert angle == pytest.approx(want, abs=1e-6)
    r = su2_to_rotation(u)
    assert (r[2, 2] + 1) / 2 == pytest.approx(targets[0], abs=1e-8)
    assert (r[0, 0] + 1) / 2 == pytest.approx(targets[1], abs=1e-8)


def test_fit_rejects_bad_targets():
    with pytest.raises(DomainError):
        ImperfectionTargets(1.2, 0.5)


def test_correction_bound_identity(device, frame):
    res = corrected_fidelity_bound(cfg(Prior.uniform_sphere(), COLL, 100_000, 1, device, frame),
                                   ImperfectionTargets(1.0, 1.0))
    assert res.perturbed == res.ideal
    assert res.gap == 0


def test_correction_bound_direction(device, frame):
    for seed in (1, 2, 3):
        res = corrected_fidelity_bound(cfg(Prior.uniform_sphere(), COLL, 200_000, seed, device, frame),
                                       ImperfectionTargets(0.987, 0.93))
        assert res.expected_perturbed < res.expected_ideal
        assert res.perturbed < res.ideal
        assert res.gap > 3 * res.gap_stderr
        assert res.ideal == pytest.approx(0.75, abs=0.004)


def test_correction_bound_tetramp(device, frame):
    res = corrected_fidelity_bound(cfg(Prior.tetrahedron_vertices(), COLL, 200_000, 4, device, frame),
                                   ImperfectionTargets(0.987, 0.93))
    assert math.isfinite(res.gap_stderr) and res.gap_stderr > 0
    assert res.expected_ideal == pytest.approx(5 / 6, abs=1e-12)
    assert abs(res.gap - (res.expected_ideal - res.expected_perturbed)) < 4 * res.gap_stderr


def test_correction_bound_requires_collective(device, frame):
    with pytest.raises(DomainError):
        corrected_fidelity_bound(cfg(Prior.uniform_sphere(), LOCC, 10, 1, device, frame), ImperfectionTargets(1, 1))
