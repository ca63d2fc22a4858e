"""Tetrahedron frame, two-copy collective basis, LOCC strategy and the
HOM-based projection device."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .qcore import (
    CHAIN_ATOL,
    PAULI,
    SINGLET,
    DomainError,
    PureQubit,
    concurrence,
    rotation_to_su2,
    state_from_amplitudes,
    tensor_square,
)

TETRA_ALPHAS = (0.0, 2 * math.pi / 3, 4 * math.pi / 3)
SWAP = np.eye(4)[[0, 2, 1, 3]]


class DegenerateInputError(ArithmeticError):
    """Every outcome of a strategy has zero probability for the given input."""


class StrategyKind(enum.Enum):
    COLLECTIVE = "collective"
    LOCC = "locc"
    SUPPRESSED_ENTANGLEMENT = "supp-ent"


@dataclass(frozen=True, eq=False)
class TetrahedronFrame:
    """Four guess states on a regular tetrahedron.

    ``vectors`` keeps the phases produced by the SU(2) image of the rotation;
    the collective basis needs them. ``states`` are the canonical
    (real |H> amplitude) representatives.
    """

    vectors: np.ndarray
    bloch: np.ndarray
    rotation: np.ndarray
    alphas: tuple = TETRA_ALPHAS
    states: tuple = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "states", tuple(state_from_amplitudes(v) for v in self.vectors))


def build_tetrahedron(rotation=None) -> TetrahedronFrame:
    c = 1 / math.sqrt(3)
    s = math.sqrt(2 / 3)
    vecs = [np.array([1.0, 0.0], dtype=complex)]
    bloch = [np.array([0.0, 0.0, 1.0])]
    for a in TETRA_ALPHAS:
        vecs.append(np.array([c, s * complex(math.cos(a), math.sin(a))]))
        bloch.append(np.array([2 * math.sqrt(2) / 3 * math.cos(a), 2 * math.sqrt(2) / 3 * math.sin(a), -1 / 3]))
    vecs = np.array(vecs)
    bloch = np.array(bloch)
    if rotation is None:
        r = np.eye(3)
    else:
        r = np.asarray(rotation, dtype=float)
        u = rotation_to_su2(r)
        vecs = vecs @ u.T
        bloch = bloch @ r.T
    return TetrahedronFrame(vectors=vecs, bloch=bloch, rotation=r)


@dataclass(frozen=True, eq=False)
class MPBasis:
    states: np.ndarray  # (4, 4) complex, row i is |MP_i>
    frame: TetrahedronFrame


def build_mp_basis(frame: TetrahedronFrame) -> MPBasis:
    signs = (0.5, -0.5, -0.5, -0.5)
    rows = [s * SINGLET + math.sqrt(3) / 2 * np.kron(v, v) for s, v in zip(signs, frame.vectors)]
    return MPBasis(states=np.array(rows), frame=frame)


def collective_outcome_probs(basis: MPBasis, n: PureQubit) -> np.ndarray:
    return np.abs(basis.states.conj() @ tensor_square(n)) ** 2


# ---------------------------------------------------------------- LOCC

_H = np.array([1.0, 0.0], dtype=complex)
_V = np.array([0.0, 1.0], dtype=complex)
_D = np.array([1.0, 1.0], dtype=complex) / math.sqrt(2)
_A = np.array([1.0, -1.0], dtype=complex) / math.sqrt(2)
# (photon in D/A basis, photon in H/V basis) for outcomes 1..4
LOCC_PROJECTORS = ((_D, _H), (_D, _V), (_A, _H), (_A, _V))
_LOCC_GUESSES = (
    PureQubit(math.pi / 4, 0.0),
    PureQubit(3 * math.pi / 4, 0.0),
    PureQubit(math.pi / 4, math.pi),
    PureQubit(3 * math.pi / 4, math.pi),
)


def locc_outcome_probs(n: PureQubit) -> np.ndarray:
    a = n.amplitudes
    return np.array([abs(np.vdot(p, a)) ** 2 * abs(np.vdot(q, a)) ** 2 for p, q in LOCC_PROJECTORS])


def locc_guess(outcome_index: int) -> PureQubit:
    if outcome_index not in (1, 2, 3, 4):
        raise DomainError(f"LOCC outcome index must be 1..4, got {outcome_index!r}")
    return _LOCC_GUESSES[outcome_index - 1]


# ---------------------------------------------------------------- device


@dataclass(frozen=True)
class PartialPolarizer:
    t_H: float
    t_V: float

    def __post_init__(self):
        if not (0 <= self.t_H <= 1 and 0 <= self.t_V <= 1):
            raise DomainError("polarizer amplitudes must lie in [0, 1]")
        if self.t_H == 0 and self.t_V == 0:
            raise DomainError("polarizer blocks both polarizations")

    @property
    def matrix(self) -> np.ndarray:
        return np.diag([self.t_H, self.t_V]).astype(complex)

    @property
    def extinction_ratio(self) -> float:
        """Power ratio of the stronger to the weaker transmitted polarization."""
        lo, hi = sorted((self.t_H, self.t_V))
        return math.inf if lo == 0 else (hi / lo) ** 2


def polarizer_concurrence(p: PartialPolarizer) -> float:
    return 2 * p.t_H * p.t_V / (p.t_H**2 + p.t_V**2)


def polarizer_for_concurrence(c: float) -> PartialPolarizer:
    if not (0 < c <= 1):
        raise DomainError(f"concurrence must lie in (0, 1], got {c!r}")
    # C / (1 + sqrt(1 - C^2)) equals (1 - sqrt(1 - C^2)) / C without the cancellation
    return PartialPolarizer(c / (1 + math.sqrt(1 - c * c)), 1.0)


def efficiency(c: float) -> float:
    if not (0 <= c <= 1):
        raise DomainError(f"concurrence must lie in [0, 1], got {c!r}")
    return 1 / (1 + math.sqrt(1 - c * c))


@dataclass(frozen=True, eq=False)
class DeviceModel:
    """Partial polarizer and imperfection in arm 1, setting unitaries on both
    arms, then a beamsplitter with power transmittance ``transmittance``."""

    transmittance: float
    polarizer: PartialPolarizer
    setting_unitaries: tuple  # 4 pairs (U_A, U_B)
    imperfection: np.ndarray = field(default_factory=lambda: np.eye(2, dtype=complex))
    distinguishable: bool = False

    def __post_init__(self):
        if not (0 <= self.transmittance <= 1):
            raise DomainError("beamsplitter transmittance must lie in [0, 1]")
        if len(self.setting_unitaries) != 4:
            raise DomainError("need one unitary pair per setting")

    def setting_operator(self, setting: int) -> np.ndarray:
        """4x4 map applied to the photon pair before the beamsplitter."""
        if setting not in (1, 2, 3, 4):
            raise DomainError(f"setting must be 1..4, got {setting!r}")
        ua, ub = self.setting_unitaries[setting - 1]
        return np.kron(self.imperfection @ self.polarizer.matrix @ ua, ub)

    def coincidence_operator(self) -> np.ndarray:
        t = self.transmittance
        r = 1 - t
        if self.distinguishable:
            return (t * t + r * r) * np.eye(4)
        m = t * np.eye(4) - r * SWAP
        return m.T @ m


def device_coincidence_prob(device: DeviceModel, setting: int, psi) -> float:
    out = device.setting_operator(setting) @ np.asarray(psi, dtype=complex)
    t = device.transmittance
    if device.distinguishable:
        return float((t * t + (1 - t) ** 2) * np.vdot(out, out).real)
    amp = t * out - (1 - t) * out[[0, 2, 1, 3]]
    return float(np.vdot(amp, amp).real)


def _coeff(psi) -> np.ndarray:
    return np.asarray(psi, dtype=complex).reshape(2, 2)


def setting_unitaries_for(basis: MPBasis, polarizer: PartialPolarizer, strict: bool = True) -> tuple:
    """Local unitaries steering the singlet projection onto each MP state.

    The filtered singlet (W x I)|S> and |MP_i> are aligned through their
    Schmidt decompositions. With ``strict=False`` a polarizer whose
    concurrence differs from the basis is accepted and the Schmidt bases are
    aligned anyway (a mis-set device).
    """
    c_pol = polarizer_concurrence(polarizer)
    base = _coeff(np.kron(polarizer.matrix, np.eye(2)) @ SINGLET)
    p0, _, q0h = np.linalg.svd(base)
    pairs = []
    for mp in basis.states:
        if strict and abs(concurrence(mp) - c_pol) > CHAIN_ATOL:
            raise DomainError(
                f"polarizer concurrence {c_pol:.6g} does not match basis concurrence {concurrence(mp):.6g}"
            )
        pi, _, qih = np.linalg.svd(_coeff(mp))
        # A base B^T = c * target with A = Pi P0^dag, B^T = Q0 Qi^dag
        a = pi @ p0.conj().T
        bt = q0h.conj().T @ qih
        pairs.append((a.conj().T, bt.conj()))
    return tuple(pairs)


def make_device(
    basis: MPBasis,
    concurrence_target: float = 0.25,
    transmittance: float = 0.5,
    imperfection=None,
    distinguishable: bool = False,
    strict: bool = True,
) -> DeviceModel:
    pol = polarizer_for_concurrence(concurrence_target)
    u = np.eye(2, dtype=complex) if imperfection is None else np.asarray(imperfection, dtype=complex)
    return DeviceModel(
        transmittance=transmittance,
        polarizer=pol,
        setting_unitaries=setting_unitaries_for(basis, pol, strict=strict),
        imperfection=u,
        distinguishable=distinguishable,
    )


def _device_for(kind: StrategyKind, device: DeviceModel) -> DeviceModel:
    want = kind is StrategyKind.SUPPRESSED_ENTANGLEMENT
    return device if device.distinguishable == want else replace(device, distinguishable=want)


def strategy_outcome_probs(kind: StrategyKind, device: DeviceModel, basis: MPBasis, n: PureQubit) -> np.ndarray:
    """Outcome distribution after post-selecting on coincidences."""
    if kind is StrategyKind.LOCC:
        return locc_outcome_probs(n)
    dev = _device_for(kind, device)
    psi = tensor_square(n)
    q = np.array([device_coincidence_prob(dev, i, psi) for i in (1, 2, 3, 4)])
    total = q.sum()
    if not total > 0:
        raise DegenerateInputError(f"no coincidences for input theta={n.theta}, phi={n.phi}")
    return q / total


def guess_states(kind: StrategyKind, basis: MPBasis) -> tuple:
    if kind is StrategyKind.LOCC:
        return _LOCC_GUESSES
    return basis.frame.states


def guess_bloch(kind: StrategyKind, basis: MPBasis) -> np.ndarray:
    if kind is StrategyKind.LOCC:
        return np.array([g.bloch for g in _LOCC_GUESSES])
    return np.array(basis.frame.bloch)


# ---------------------------------------------------------------- Bloch forms


def effect_operators(kind: StrategyKind, device: DeviceModel) -> np.ndarray:
    """Unnormalized two-copy effects E_i; outcome weight is <psi|E_i|psi>."""
    if kind is StrategyKind.LOCC:
        return np.array([np.kron(np.outer(p, p.conj()), np.outer(q, q.conj())) for p, q in LOCC_PROJECTORS])
    dev = _device_for(kind, device)
    c = dev.coincidence_operator()
    return np.array([k.conj().T @ c @ k for k in (dev.setting_operator(i) for i in (1, 2, 3, 4))])


def bloch_forms(effects) -> np.ndarray:
    """Symmetric 4x4 forms G_i with Tr[E_i rho(m) x rho(m)] = r G_i r, r = (1, m)."""
    effects = np.asarray(effects)
    sig = np.array([[np.kron(PAULI[a], PAULI[b]) for b in range(4)] for a in range(4)])
    g = 0.25 * np.einsum("ixy,abyx->iab", effects, sig).real
    return 0.5 * (g + g.transpose(0, 2, 1))


@dataclass(frozen=True, eq=False)
class OutcomeModel:
    """Everything a batch kernel needs: quadratic Bloch forms and guesses."""

    kind: StrategyKind
    forms: np.ndarray  # (4, 4, 4)
    guesses: np.ndarray  # (4, 3)


def outcome_model(kind: StrategyKind, device: DeviceModel, basis: MPBasis) -> OutcomeModel:
    forms = np.ascontiguousarray(bloch_forms(effect_operators(kind, device)))
    return OutcomeModel(kind=kind, forms=forms, guesses=np.ascontiguousarray(guess_bloch(kind, basis)))
