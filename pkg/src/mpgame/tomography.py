"""Pair-wise collective tomography of a pure qubit and its infidelity scaling."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .measurement import DeviceModel, StrategyKind, TetrahedronFrame, build_mp_basis, outcome_model, strategy_outcome_probs
from .qcore import ConvergenceError, DomainError, PureQubit, state_from_bloch

MLE_TOL = 1e-10
MLE_MAXITER = 10_000


@dataclass(frozen=True)
class OutcomeCounts:
    counts: tuple

    def __post_init__(self):
        c = np.asarray(self.counts, dtype=float)
        if c.shape != (4,) or np.any(c < 0) or not np.all(np.isfinite(c)):
            raise DomainError("counts must be four nonnegative numbers")

    @property
    def total_pairs(self):
        return sum(self.counts)


@dataclass(frozen=True, eq=False)
class TomographyConfig:
    true_state: PureQubit
    ensemble_sizes: tuple
    repeats: int
    seed: int
    device: DeviceModel
    frame: TetrahedronFrame
    reference: str = "true"  # or "largest-n"

    def __post_init__(self):
        sizes = list(self.ensemble_sizes)
        if not sizes:
            raise DomainError("need at least one ensemble size")
        for n in sizes:
            if int(n) != n or n < 4 or n % 2:
                raise DomainError(f"ensemble size {n!r} must be an even integer >= 4")
        if sizes != sorted(set(sizes)):
            raise DomainError("ensemble sizes must be strictly ascending")
        if self.repeats < 1:
            raise DomainError("repeats must be at least 1")
        if self.reference not in ("true", "largest-n"):
            raise DomainError(f"unknown reference mode {self.reference!r}")


@dataclass(frozen=True)
class CurvePoint:
    n_ens: int
    mean_infidelity: float
    stderr: float | None
    repeats: int


@dataclass(frozen=True)
class ScalingFit:
    a: float
    b: float
    stderr_a: float
    stderr_b: float
    r_squared: float


def sample_outcomes(state: PureQubit, pairs: int, device: DeviceModel, frame: TetrahedronFrame,
                    rng: np.random.Generator) -> OutcomeCounts:
    if pairs < 1:
        raise DomainError("need at least one pair")
    p = strategy_outcome_probs(StrategyKind.COLLECTIVE, device, build_mp_basis(frame), state)
    return OutcomeCounts(tuple(int(c) for c in rng.multinomial(pairs, p)))


def mle_starts(frame: TetrahedronFrame) -> np.ndarray:
    return np.vstack([frame.bloch, [[0.0, 0.0, 1.0], [0.0, 0.0, -1.0]]])


def mle_reconstruct_bloch(counts, frame: TetrahedronFrame, device: DeviceModel) -> np.ndarray:
    """Batched ML estimates (unit Bloch vectors) for rows of outcome counts."""
    c = np.atleast_2d(np.asarray(counts, dtype=float))
    tot = c.sum(axis=1)
    if np.any(~(tot > 0)):
        raise DomainError("every count vector needs at least one event")
    freqs = c / tot[:, None]
    model = outcome_model(StrategyKind.COLLECTIVE, device, build_mp_basis(frame))
    x, f, conv, gnorm, iters = kernels.apg_mle_batch(freqs, model.forms, mle_starts(frame), MLE_TOL, MLE_MAXITER)
    if not np.all(conv):
        j = int(np.flatnonzero(~conv)[0])
        raise ConvergenceError(
            "ML reconstruction did not converge",
            counts=c[j].tolist(),
            last_iterate=x[j].tolist(),
            gradient_norm=float(gnorm[j]),
            iterations=int(iters[j]),
        )
    return x / np.linalg.norm(x, axis=1, keepdims=True)


def mle_reconstruct(counts, frame: TetrahedronFrame, device: DeviceModel) -> PureQubit:
    """Most likely pure state n given pair outcomes on n x n."""
    if isinstance(counts, OutcomeCounts):
        counts = counts.counts
    return state_from_bloch(mle_reconstruct_bloch([counts], frame, device)[0])


def bloch_infidelity(m, ref) -> np.ndarray:
    """1 - |<m|ref>|^2 for unit Bloch vectors."""
    return np.clip(0.5 * (1.0 - np.sum(np.asarray(m) * np.asarray(ref), axis=-1)), 0.0, 1.0)


def infidelity_curve(config: TomographyConfig) -> list:
    basis = build_mp_basis(config.frame)
    p = strategy_outcome_probs(StrategyKind.COLLECTIVE, config.device, basis, config.true_state)
    sizes = [int(n) for n in config.ensemble_sizes]
    counts = np.empty((len(sizes), config.repeats, 4))
    for j, n in enumerate(sizes):
        for r in range(config.repeats):
            rng = np.random.default_rng(np.random.SeedSequence(config.seed, spawn_key=(j, r)))
            counts[j, r] = rng.multinomial(n // 2, p)
    est = mle_reconstruct_bloch(counts.reshape(-1, 4), config.frame, config.device)
    est = est.reshape(len(sizes), config.repeats, 3)
    if config.reference == "true":
        ref = np.broadcast_to(config.true_state.bloch, est.shape)
    else:
        ref = np.broadcast_to(est[-1], est.shape)
    inf = bloch_infidelity(est, ref)
    out = []
    for j, n in enumerate(sizes):
        row = inf[j]
        se = float(np.std(row, ddof=1) / math.sqrt(len(row))) if len(row) > 1 else None
        out.append(CurvePoint(n, float(math.fsum(row) / len(row)), se, config.repeats))
    return out


def fit_power_law(points) -> ScalingFit:
    """Least squares of log(infidelity) on log(N): infidelity = a * N**b."""
    pts = [(float(n), float(y)) for n, y in points]
    if len(pts) < 3:
        raise DomainError("a power-law fit needs at least 3 points")
    if any(n <= 0 or y <= 0 for n, y in pts):
        raise DomainError("power-law fit needs positive sizes and infidelities")
    x = np.log([n for n, _ in pts])
    y = np.log([v for _, v in pts])
    design = np.column_stack([np.ones_like(x), x])
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    resid = y - design @ coef
    dof = len(x) - 2
    s2 = float(resid @ resid) / dof if dof > 0 else 0.0
    cov = s2 * np.linalg.inv(design.T @ design)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(resid @ resid) / ss_tot if ss_tot > 0 else 1.0
    a = math.exp(coef[0])
    return ScalingFit(a=a, b=float(coef[1]), stderr_a=a * math.sqrt(cov[0, 0]),
                      stderr_b=math.sqrt(cov[1, 1]), r_squared=r2)


def gill_massar_reference(n_ens: int) -> float:
    if n_ens < 1:
        raise DomainError("ensemble size must be at least 1")
    return 1.0 / n_ens


def fit_points(curve) -> list:
    """(N, mean) pairs usable for a fit; the zero-by-construction point is dropped."""
    return [(p.n_ens, p.mean_infidelity) for p in curve if p.mean_infidelity > 0]


def pooled_curve(curves) -> list:
    """Average several states' curves point by point (same schedule required)."""
    sizes = [p.n_ens for p in curves[0]]
    if any([p.n_ens for p in c] != sizes for c in curves):
        raise DomainError("curves must share one ensemble-size schedule")
    return [(n, math.fsum(c[j].mean_infidelity for c in curves) / len(curves)) for j, n in enumerate(sizes)]
