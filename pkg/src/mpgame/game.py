"""Monte Carlo engine and closed forms for the two-copy guessing game."""
from __future__ import annotations

import enum
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import least_squares, minimize

from . import kernels
from .measurement import (
    DegenerateInputError,
    DeviceModel,
    StrategyKind,
    TetrahedronFrame,
    build_mp_basis,
    outcome_model,
)
from .qcore import PAULI, ConvergenceError, DomainError, PureQubit, is_unitary, uniforms_to_bloch

CHUNK = 1 << 16
QUAD_ORDER = (96, 192)


class PriorKind(enum.Enum):
    UNIFORM_SPHERE = "genmp"
    TETRAHEDRON_VERTICES = "tetramp"
    FINITE_SET = "set"


@dataclass(frozen=True)
class Prior:
    kind: PriorKind
    states: tuple = ()
    weights: tuple | None = None

    def __post_init__(self):
        if self.kind is not PriorKind.FINITE_SET:
            return
        if not self.states:
            raise DomainError("finite prior needs at least one state")
        if self.weights is not None:
            w = np.asarray(self.weights, dtype=float)
            if w.shape != (len(self.states),) or np.any(w < 0) or abs(w.sum() - 1) > 1e-9:
                raise DomainError("weights must be nonnegative, one per state, and sum to 1")

    @classmethod
    def uniform_sphere(cls) -> "Prior":
        return cls(PriorKind.UNIFORM_SPHERE)

    @classmethod
    def tetrahedron_vertices(cls) -> "Prior":
        return cls(PriorKind.TETRAHEDRON_VERTICES)

    @classmethod
    def finite_set(cls, states, weights=None) -> "Prior":
        return cls(PriorKind.FINITE_SET, tuple(states), None if weights is None else tuple(float(w) for w in weights))

    def support(self, frame: TetrahedronFrame):
        """(states, bloch, weights) of a discrete prior."""
        if self.kind is PriorKind.UNIFORM_SPHERE:
            raise DomainError("the uniform prior has no finite support")
        if self.kind is PriorKind.TETRAHEDRON_VERTICES:
            states = frame.states
            bloch = np.array(frame.bloch)
        else:
            states = self.states
            bloch = np.array([s.bloch for s in states])
        w = np.full(len(states), 1 / len(states)) if self.weights is None else np.asarray(self.weights)
        return states, bloch, w


@dataclass(frozen=True, eq=False)
class GameConfig:
    prior: Prior
    strategy: StrategyKind
    trials: int
    seed: int
    device: DeviceModel
    frame: TetrahedronFrame
    workers: int = 1


@dataclass(frozen=True)
class StateStat:
    state: PureQubit
    trials: int
    freq: tuple  # conditional outcome frequencies P(g|n)
    fidelity: float


@dataclass(frozen=True)
class GameResult:
    average_fidelity: float
    standard_error: float
    trials: int
    per_state: tuple = field(default_factory=tuple)


def _chunk_rng(seed: int, k: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(k,)))


def _chunk_sizes(trials: int):
    full, rest = divmod(trials, CHUNK)
    return [CHUNK] * full + ([rest] if rest else [])


def _simulate_chunk(k, n, config, model, support):
    rng = _chunk_rng(config.seed, k)
    if support is None:
        u = rng.random((n, 3))
        idx = None
        bloch = uniforms_to_bloch(u[:, 0], u[:, 1])
        u_out = u[:, 2]
    else:
        u = rng.random((n, 2))
        cum = np.cumsum(support[2])
        idx = np.minimum(np.searchsorted(cum, u[:, 0] * cum[-1], side="right"), len(cum) - 1)
        bloch = support[1][idx]
        u_out = u[:, 1]
    q = kernels.outcome_weights(bloch, model.forms)
    outcome, fid = kernels.score_trials(q, u_out, bloch, model.guesses)
    bad = np.flatnonzero(outcome < 0)
    if bad.size:
        m = bloch[bad[0]]
        raise DegenerateInputError(f"no coincidences for Bloch vector {m.tolist()}")
    return idx, outcome, fid


def _chunks(config: GameConfig):
    if config.trials < 1:
        raise DomainError("trials must be at least 1")
    basis = build_mp_basis(config.frame)
    model = outcome_model(config.strategy, config.device, basis)
    support = None if config.prior.kind is PriorKind.UNIFORM_SPHERE else config.prior.support(config.frame)
    sizes = _chunk_sizes(config.trials)
    work = [(k, n) for k, n in enumerate(sizes)]
    if config.workers > 1:
        with ThreadPoolExecutor(config.workers) as pool:
            yield from pool.map(lambda kn: _simulate_chunk(kn[0], kn[1], config, model, support), work)
    else:
        for k, n in work:
            yield _simulate_chunk(k, n, config, model, support)


class _Moments:
    """Chunk-merged mean/variance; order of merging is fixed by chunk index."""

    def __init__(self):
        self.n = 0
        self.sums = []
        self.mean = 0.0
        self.m2 = 0.0

    def add(self, x):
        n_b = x.size
        mean_b = math.fsum(x) / n_b
        m2_b = math.fsum((x - mean_b) ** 2)
        n = self.n + n_b
        delta = mean_b - self.mean
        self.mean += delta * n_b / n
        self.m2 += m2_b + delta * delta * self.n * n_b / n
        self.n = n
        self.sums.append(math.fsum(x))

    def result(self):
        mean = math.fsum(self.sums) / self.n
        se = math.sqrt(self.m2 / (self.n - 1) / self.n) if self.n > 1 else math.nan
        return mean, se


def run_game(config: GameConfig) -> GameResult:
    mom = _Moments()
    finite = config.prior.kind is not PriorKind.UNIFORM_SPHERE
    if finite:
        states, _, _ = config.prior.support(config.frame)
        ns = len(states)
        counts = np.zeros((ns, 4), dtype=np.int64)
        fsums = [[] for _ in range(ns)]
    for idx, outcome, fid in _chunks(config):
        mom.add(fid)
        if finite:
            counts += np.bincount(idx * 4 + outcome, minlength=ns * 4).reshape(ns, 4)
            order = np.argsort(idx, kind="stable")
            bounds = np.searchsorted(idx[order], np.arange(ns + 1))
            for s in range(ns):
                fsums[s].append(math.fsum(fid[order[bounds[s]:bounds[s + 1]]]))
    mean, se = mom.result()
    per_state = ()
    if finite:
        rows = []
        for s in range(ns):
            n_s = int(counts[s].sum())
            freq = tuple(float(c) / n_s for c in counts[s]) if n_s else (math.nan,) * 4
            fid_s = math.fsum(fsums[s]) / n_s if n_s else math.nan
            rows.append(StateStat(states[s], n_s, freq, fid_s))
        per_state = tuple(rows)
    return GameResult(mean, se, config.trials, per_state)


# ----------------------------------------------------------------- closed forms


def sphere_quadrature(order=QUAD_ORDER):
    """Gauss-Legendre in cos(theta) times a uniform phi grid; weights sum to 1.

    Exact for polynomial integrands in the Bloch components up to degree
    min(2*nz - 1, nphi - 1).
    """
    nz, nphi = order
    z, wz = np.polynomial.legendre.leggauss(nz)
    phi = 2 * np.pi * np.arange(nphi) / nphi
    zz, pp = np.meshgrid(z, phi, indexing="ij")
    st = np.sqrt(1 - zz * zz)
    pts = np.stack([st * np.cos(pp), st * np.sin(pp), zz], axis=-1).reshape(-1, 3)
    w = np.repeat(wz / 2, nphi) / nphi
    return pts, w


def expected_fidelity(prior: Prior, strategy: StrategyKind, device: DeviceModel, frame: TetrahedronFrame,
                      order=QUAD_ORDER) -> float:
    """Average fidelity without sampling noise."""
    model = outcome_model(strategy, device, build_mp_basis(frame))
    if prior.kind is PriorKind.UNIFORM_SPHERE:
        pts, w = sphere_quadrature(order)
    else:
        _, pts, w = prior.support(frame)
    q = kernels.outcome_weights(pts, model.forms)
    tot = q.sum(axis=1)
    if np.any(~(tot > 0)):
        raise DegenerateInputError("a prior state produces no coincidences")
    p = q / tot[:, None]
    fid = 0.5 * (1 + pts @ model.guesses.T)
    return math.fsum(w * np.sum(p * fid, axis=1))


def optimal_collective_fidelity(n: int) -> float:
    if n < 1:
        raise DomainError("need at least one copy")
    return (n + 1) / (n + 2)


# ----------------------------------------------------------------- imperfection

_V = np.array([0, 1], dtype=complex)
_A = np.array([1, -1], dtype=complex) / math.sqrt(2)


@dataclass(frozen=True)
class ImperfectionTargets:
    v_overlap: float
    a_overlap: float

    def __post_init__(self):
        for v in (self.v_overlap, self.a_overlap):
            if not (0 <= v <= 1):
                raise DomainError("overlap targets must lie in [0, 1]")


def unitary_from_rotvec(k) -> np.ndarray:
    """exp(-i k.sigma / 2)."""
    k = np.asarray(k, dtype=float)
    a = float(np.linalg.norm(k))
    if a == 0:
        return np.eye(2, dtype=complex)
    n = k / a
    gen = n[0] * PAULI[1] + n[1] * PAULI[2] + n[2] * PAULI[3]
    return math.cos(a / 2) * np.eye(2) - 1j * math.sin(a / 2) * gen


def overlaps(u) -> np.ndarray:
    """(|<V|U|V>|^2, |<A|U|A>|^2)."""
    return np.array([abs(np.vdot(_V, u @ _V)) ** 2, abs(np.vdot(_A, u @ _A)) ** 2])


def _residual(k, target):
    return overlaps(unitary_from_rotvec(k)) - target


def _family(targets: ImperfectionTargets, restarts: int, seed: int, tol: float):
    """Distinct exact solutions from seeded random starts (rotation vectors)."""
    target = np.array([targets.v_overlap, targets.a_overlap])
    rng = np.random.default_rng(seed)
    found = []
    for _ in range(restarts):
        k0 = rng.normal(size=3) * rng.uniform(0.05, math.pi)
        sol = least_squares(_residual, k0, args=(target,), xtol=1e-15, ftol=1e-15, gtol=1e-15)
        if np.max(np.abs(sol.fun)) < tol:
            found.append(sol.x)
    return found


def fit_imperfection_unitary(targets: ImperfectionTargets, restarts: int = 32, seed: int = 0,
                             tol: float = 1e-8) -> np.ndarray:
    """Smallest-angle unitary meeting both overlap targets.

    The overlap pair leaves a one-parameter family of solutions; the member
    closest to the identity (largest |Tr U|) is returned.
    """
    target = np.array([targets.v_overlap, targets.a_overlap])
    if np.allclose(target, 1.0, rtol=0, atol=1e-15):
        return np.eye(2, dtype=complex)
    rng = np.random.default_rng(seed)
    cons = {"type": "eq", "fun": lambda k: _residual(k, target)}
    best = None
    last = None
    for _ in range(restarts):
        k0 = rng.normal(size=3) * rng.uniform(0.05, math.pi)
        sol = minimize(lambda k: float(k @ k), k0, jac=lambda k: 2 * k, constraints=[cons],
                       method="SLSQP", options={"ftol": 1e-14, "maxiter": 500})
        polished = least_squares(_residual, sol.x, args=(target,), xtol=1e-15, ftol=1e-15, gtol=1e-15)
        last = polished
        res = float(np.max(np.abs(polished.fun)))
        if res < tol and (best is None or polished.x @ polished.x < best @ best - 1e-12):
            best = polished.x
    if best is None:
        raise ConvergenceError(
            "no unitary met the overlap targets",
            restarts=restarts,
            last_point=None if last is None else last.x.tolist(),
            last_residual=None if last is None else last.fun.tolist(),
        )
    u = unitary_from_rotvec(best)
    assert is_unitary(u)
    return u


@dataclass(frozen=True, eq=False)
class CorrectionBound:
    """Simulated fidelity with the fitted imperfection and without it."""

    perturbed: float
    ideal: float
    gap: float  # ideal - perturbed, paired over common random numbers
    gap_stderr: float
    perturbed_stderr: float
    ideal_stderr: float
    expected_perturbed: float
    expected_ideal: float
    unitary: np.ndarray


def corrected_fidelity_bound(config: GameConfig, targets: ImperfectionTargets,
                             restarts: int = 32, seed: int = 0) -> CorrectionBound:
    """Conservative effect of the imperfection on a collective game.

    Explores the solution family of the imperfection fit and keeps the member
    whose exact expected fidelity is highest (smallest gap), then simulates
    both devices on common random numbers.
    """
    if config.strategy is not StrategyKind.COLLECTIVE:
        raise DomainError("the correction bound applies to the collective strategy")
    members = [fit_imperfection_unitary(targets, restarts=restarts, seed=seed)]
    members += [unitary_from_rotvec(k) for k in _family(targets, restarts, seed + 1, 1e-8)]
    ideal_dev = replace(config.device, imperfection=np.eye(2, dtype=complex))
    exp_ideal = expected_fidelity(config.prior, config.strategy, ideal_dev, config.frame)
    scored = [
        (expected_fidelity(config.prior, config.strategy, replace(config.device, imperfection=u), config.frame), i)
        for i, u in enumerate(members)
    ]
    exp_pert, best = max(scored, key=lambda s: (s[0], -s[1]))
    u = members[best]

    pert_cfg = replace(config, device=replace(config.device, imperfection=u))
    ideal_cfg = replace(config, device=ideal_dev)
    mp, mi, md = _Moments(), _Moments(), _Moments()
    for (_, _, fp), (_, _, fi) in zip(_chunks(pert_cfg), _chunks(ideal_cfg)):
        mp.add(fp)
        mi.add(fi)
        md.add(fi - fp)
    p_mean, p_se = mp.result()
    i_mean, i_se = mi.result()
    gap, gap_se = md.result()
    return CorrectionBound(p_mean, i_mean, gap, gap_se, p_se, i_se, exp_pert, exp_ideal, u)
