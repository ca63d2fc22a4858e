"""Exact one- and two-qubit linear algebra.

Conventions: |H> = |0>, |V> = |1>; two-qubit amplitudes are ordered
(|00>, |01>, |10>, |11>) with the first factor in arm 1.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial.transform import Rotation

ATOL = 1e-12
CHAIN_ATOL = 1e-10

PAULI = np.array(
    [
        [[1, 0], [0, 1]],
        [[0, 1], [1, 0]],
        [[0, -1j], [1j, 0]],
        [[1, 0], [0, -1]],
    ],
    dtype=complex,
)

SINGLET = np.array([0, 1, -1, 0], dtype=complex) / math.sqrt(2)


class DomainError(ValueError):
    """Input outside the mathematical domain of an operation."""


class ConvergenceError(ArithmeticError):
    """An iterative solver stopped without meeting its tolerance."""

    def __init__(self, message, **diagnostics):
        super().__init__(message)
        self.diagnostics = diagnostics


@dataclass(frozen=True)
class PureQubit:
    """Pure qubit cos(theta/2)|H> + exp(i phi) sin(theta/2)|V>."""

    theta: float
    phi: float

    def __post_init__(self):
        if not (0.0 <= self.theta <= math.pi) or not math.isfinite(self.theta):
            raise DomainError(f"theta={self.theta!r} outside [0, pi]")
        if not (0.0 <= self.phi < 2 * math.pi) or not math.isfinite(self.phi):
            raise DomainError(f"phi={self.phi!r} outside [0, 2pi)")

    @property
    def amplitudes(self) -> np.ndarray:
        c0 = math.cos(self.theta / 2)
        s = math.sin(self.theta / 2)
        return np.array([c0, s * complex(math.cos(self.phi), math.sin(self.phi))])

    @property
    def bloch(self) -> np.ndarray:
        st = math.sin(self.theta)
        return np.array(
            [st * math.cos(self.phi), st * math.sin(self.phi), math.cos(self.theta)]
        )

    def density_matrix(self) -> np.ndarray:
        a = self.amplitudes
        return np.outer(a, a.conj())


def state_from_angles(theta: float, phi: float) -> PureQubit:
    return PureQubit(float(theta), float(phi))


def _wrap_phi(phi: float) -> float:
    phi = math.fmod(phi, 2 * math.pi)
    if phi < 0:
        phi += 2 * math.pi
    # fmod of values just below 2pi can round up to 2pi
    return 0.0 if phi >= 2 * math.pi else phi


def state_from_bloch(v) -> PureQubit:
    """Canonical state (real, nonnegative |H> amplitude) for a unit Bloch vector."""
    x, y, z = (float(c) for c in v)
    r = math.sqrt(x * x + y * y + z * z)
    if abs(r - 1.0) > 1e-9:
        raise DomainError(f"Bloch vector norm {r} is not 1")
    theta = math.acos(max(-1.0, min(1.0, z / r)))
    phi = _wrap_phi(math.atan2(y, x)) if (x or y) else 0.0
    return PureQubit(theta, phi)


def state_from_amplitudes(amps) -> PureQubit:
    """Canonical PureQubit for a (possibly unnormalized, phased) 2-vector."""
    a = np.asarray(amps, dtype=complex)
    nrm = np.linalg.norm(a)
    if nrm == 0:
        raise DomainError("zero vector is not a state")
    a = a / nrm
    c0 = abs(a[0])
    theta = 2 * math.atan2(abs(a[1]), c0)
    if abs(a[1]) < 1e-300:
        return PureQubit(theta, 0.0)
    rel = a[1] * np.conj(a[0]) if c0 > 0 else a[1]
    return PureQubit(theta, _wrap_phi(math.atan2(rel.imag, rel.real)))


def bloch_of_amplitudes(amps) -> np.ndarray:
    a = np.asarray(amps, dtype=complex)
    rho = np.outer(a, a.conj()) / np.vdot(a, a).real
    return np.array([np.trace(rho @ PAULI[k]).real for k in (1, 2, 3)])


def fidelity_pure(a: PureQubit, b: PureQubit) -> float:
    return float(abs(np.vdot(a.amplitudes, b.amplitudes)) ** 2)


def bloch_fidelity(n, g) -> np.ndarray:
    """(1 + n.g)/2 for broadcastable arrays of Bloch vectors."""
    return 0.5 * (1.0 + np.sum(np.asarray(n) * np.asarray(g), axis=-1))


def validate_density_matrix(rho) -> np.ndarray:
    rho = np.asarray(rho, dtype=complex)
    if rho.shape != (2, 2):
        raise DomainError(f"expected a 2x2 matrix, got {rho.shape}")
    if np.max(np.abs(rho - rho.conj().T)) > ATOL:
        raise DomainError("density matrix is not Hermitian")
    if abs(np.trace(rho) - 1) > ATOL:
        raise DomainError("density matrix trace is not 1")
    if np.linalg.eigvalsh(rho).min() < -ATOL:
        raise DomainError("density matrix is not positive semidefinite")
    return rho


def infidelity_mixed(est, true_state) -> float:
    """1 - F with the Uhlmann fidelity F.

    For qubits F = Tr(est true) + 2 sqrt(det est det true), which stays
    accurate for rank-one inputs where a matrix square root loses digits.
    """
    est = validate_density_matrix(est)
    true_state = validate_density_matrix(true_state)
    overlap = float(np.real(np.trace(est @ true_state)))
    dets = max(0.0, float(np.real(np.linalg.det(est)))) * max(0.0, float(np.real(np.linalg.det(true_state))))
    f = overlap + 2.0 * math.sqrt(dets)
    return min(1.0, max(0.0, 1.0 - f))


def concurrence(psi) -> float:
    a, b, c, d = np.asarray(psi, dtype=complex)
    return float(2 * abs(a * d - b * c))


def tensor_square(n: PureQubit) -> np.ndarray:
    return np.kron(n.amplitudes, n.amplitudes)


def is_unitary(u, atol: float = ATOL) -> bool:
    u = np.asarray(u, dtype=complex)
    return bool(np.max(np.abs(u.conj().T @ u - np.eye(u.shape[0]))) <= atol)


def rotation_to_su2(rotation) -> np.ndarray:
    """SU(2) matrix U with U (n.sigma) U^dag = (R n).sigma."""
    r = np.asarray(rotation, dtype=float)
    if r.shape != (3, 3):
        raise DomainError("rotation must be 3x3")
    if np.max(np.abs(r.T @ r - np.eye(3))) > CHAIN_ATOL or abs(np.linalg.det(r) - 1) > CHAIN_ATOL:
        raise DomainError("rotation is not orthogonal with determinant +1")
    rotvec = Rotation.from_matrix(r).as_rotvec()
    angle = float(np.linalg.norm(rotvec))
    if angle < 1e-15:
        return np.eye(2, dtype=complex)
    axis = rotvec / angle
    gen = axis[0] * PAULI[1] + axis[1] * PAULI[2] + axis[2] * PAULI[3]
    return math.cos(angle / 2) * np.eye(2) - 1j * math.sin(angle / 2) * gen


def su2_to_rotation(u) -> np.ndarray:
    u = np.asarray(u, dtype=complex)
    r = np.empty((3, 3))
    for j in range(3):
        img = u @ PAULI[j + 1] @ u.conj().T
        for i in range(3):
            r[i, j] = 0.5 * np.trace(PAULI[i + 1] @ img).real
    return r


def haar_random_qubit(rng: np.random.Generator) -> PureQubit:
    """Uniform state on the Bloch sphere (inverse CDF in cos theta)."""
    u, v = rng.random(2)
    return PureQubit(math.acos(1.0 - 2.0 * u), _wrap_phi(2 * math.pi * v))


def haar_random_bloch(rng: np.random.Generator, size: int) -> np.ndarray:
    u = rng.random((size, 2))
    return uniforms_to_bloch(u[:, 0], u[:, 1])


def uniforms_to_bloch(u, v) -> np.ndarray:
    z = 1.0 - 2.0 * np.asarray(u)
    phi = 2 * np.pi * np.asarray(v)
    st = np.sqrt(np.clip(1.0 - z * z, 0.0, None))
    return np.stack([st * np.cos(phi), st * np.sin(phi), z], axis=-1)
