"""Polarization-qubit algebra: states, observables, GHZ construction.

Dense density matrices for up to 6 qubits (64 x 64), which covers the
four-photon experiment and the fiber-loop extension.  |H> = (1, 0),
|V> = (0, 1); multi-qubit basis states are Kronecker-ordered with qubit 0
as the leftmost factor.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import reduce

import numpy as np

MAX_QUBITS = 6

KET = {
    "H": np.array([1.0, 0.0], dtype=complex),
    "V": np.array([0.0, 1.0], dtype=complex),
    "D": np.array([1.0, 1.0], dtype=complex) / np.sqrt(2.0),
    "A": np.array([1.0, -1.0], dtype=complex) / np.sqrt(2.0),
    "R": np.array([1.0, -1.0j], dtype=complex) / np.sqrt(2.0),
    "L": np.array([1.0, 1.0j], dtype=complex) / np.sqrt(2.0),
}

SIGMA_X = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
SIGMA_Y = np.array([[0.0, -1.0j], [1.0j, 0.0]], dtype=complex)
SIGMA_Z = np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex)


@dataclass(frozen=True)
class Observable:
    """Hermitian observable on one qubit (or a tensor power of one)."""

    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError("observable must be a square matrix")
        if not np.allclose(m, m.conj().T, atol=1e-12):
            raise ValueError("observable must be Hermitian within 1e-12")
        object.__setattr__(self, "matrix", m)


def m_theta(theta: float) -> Observable:
    """Equatorial observable M(theta) = cos(theta) sx + sin(theta) sy.

    Hermitian with eigenvalues +-1; M(0) = sigma_x, M(pi/2) = sigma_y.
    Parity scans of M(theta)^(x)N read out the GHZ coherence.
    """
    return Observable(np.cos(theta) * SIGMA_X + np.sin(theta) * SIGMA_Y)


@dataclass(frozen=True)
class PolarizationState:
    """N-qubit polarization density matrix (N <= 6).

    Validated on construction: Hermitian and unit trace within 1e-10,
    eigenvalues above -1e-8.  Negative eigenvalues inside that tolerance are
    kept as-is so raw reconstructions stay inspectable; use :meth:`clipped`
    to project onto the physical cone explicitly.
    """

    n_qubits: int
    matrix: np.ndarray

    def __post_init__(self):
        if not 1 <= self.n_qubits <= MAX_QUBITS:
            raise ValueError(f"n_qubits must be in 1..{MAX_QUBITS}, got {self.n_qubits}")
        m = np.asarray(self.matrix, dtype=complex)
        dim = 2 ** self.n_qubits
        if m.shape != (dim, dim):
            raise ValueError(f"matrix shape {m.shape} does not match {self.n_qubits} qubits")
        if not np.allclose(m, m.conj().T, atol=1e-10):
            raise ValueError("density matrix must be Hermitian within 1e-10")
        if abs(np.trace(m).real - 1.0) > 1e-10 or abs(np.trace(m).imag) > 1e-10:
            raise ValueError(f"density matrix must have unit trace, got {np.trace(m)}")
        if np.linalg.eigvalsh(m).min() < -1e-8:
            raise ValueError("density matrix has an eigenvalue below -1e-8")
        object.__setattr__(self, "matrix", m)

    @property
    def dim(self):
        return 2 ** self.n_qubits

    def purity(self):
        return float(np.real(np.trace(self.matrix @ self.matrix)))

    def clipped(self) -> "PolarizationState":
        """Project onto the closest PSD unit-trace matrix (eigenvalue clip)."""
        w, u = np.linalg.eigh(self.matrix)
        w = np.clip(w, 0.0, None)
        m = (u * w) @ u.conj().T
        return PolarizationState(self.n_qubits, m / np.trace(m).real)


def maximally_mixed(n: int) -> PolarizationState:
    dim = 2 ** n
    return PolarizationState(n, np.eye(dim, dtype=complex) / dim)


def _ghz_vector(n, phi):
    dim = 2 ** n
    vec = np.zeros(dim, dtype=complex)
    vec[0] = 1.0 / np.sqrt(2.0)
    vec[-1] = np.exp(1j * phi) / np.sqrt(2.0)
    return vec


def ghz_pure(n: int, phi: float = 0.0) -> PolarizationState:
    """Projector onto (|H>^n + exp(i phi) |V>^n)/sqrt(2)."""
    if not 2 <= n <= MAX_QUBITS:
        raise ValueError(f"GHZ size must be in 2..{MAX_QUBITS}, got {n}")
    vec = _ghz_vector(n, phi)
    return PolarizationState(n, np.outer(vec, vec.conj()))


def ghz_from_decomposition(n: int, phi: float = 0.0) -> PolarizationState:
    """GHZ density matrix assembled from population and parity terms.

    Builds rho as the H/V population projector plus the alternating sum of
    tensor powers of M(theta_i), theta_i = (i pi + phi)/n, i = 0..n-1:

        rho = (|H><H|^n + |V><V|^n)/2
              + (1/2n) sum_i (-1)^i M(theta_i)^(x)n

    The off-sector products of the parity terms cancel in the alternating
    sum, leaving exactly the GHZ coherence; the result equals
    :func:`ghz_pure` elementwise.  (With M = cos sx + sin sy and our
    |V> phase convention the sign of phi in the angles is +, which is the
    choice that reproduces the +phi pure state.)
    """
    if not 2 <= n <= MAX_QUBITS:
        raise ValueError(f"GHZ size must be in 2..{MAX_QUBITS}, got {n}")
    dim = 2 ** n
    rho = np.zeros((dim, dim), dtype=complex)
    rho[0, 0] = 0.5
    rho[-1, -1] = 0.5
    for i in range(n):
        theta = (i * np.pi + phi) / n
        term = reduce(np.kron, [m_theta(theta).matrix] * n)
        rho += ((-1) ** i) * term / (2.0 * n)
    return PolarizationState(n, rho)


def _as_matrix(obs):
    if isinstance(obs, Observable):
        return obs.matrix
    return Observable(np.asarray(obs, dtype=complex)).matrix


def expectation(state: PolarizationState, observables) -> float:
    """<O> = Tr(rho (O_1 x ... x O_n)) for one observable per qubit.

    ``observables`` may be a single Observable/matrix applied to every qubit
    or a sequence with one entry per qubit.
    """
    if isinstance(observables, (Observable, np.ndarray)):
        observables = [observables] * state.n_qubits
    mats = [_as_matrix(o) for o in observables]
    if len(mats) != state.n_qubits or any(m.shape != (2, 2) for m in mats):
        raise ValueError("need one 2x2 observable per qubit")
    full = reduce(np.kron, mats)
    val = np.trace(state.matrix @ full)
    if abs(val.imag) > 1e-10:
        raise ValueError(f"expectation has imaginary residue {val.imag:.2e}")
    return float(val.real)


def tensor(*states: PolarizationState) -> PolarizationState:
    """Tensor product of polarization states (total size capped at 6)."""
    if len(states) == 1 and isinstance(states[0], (list, tuple)):
        states = tuple(states[0])
    n = sum(s.n_qubits for s in states)
    if n > MAX_QUBITS:
        raise ValueError(f"tensor product has {n} qubits, cap is {MAX_QUBITS}")
    mat = reduce(np.kron, [s.matrix for s in states])
    return PolarizationState(n, mat)


def partial_trace(state: PolarizationState, keep) -> PolarizationState:
    """Trace out all qubits except those in ``keep`` (original ordering)."""
    keep = sorted(keep)
    n = state.n_qubits
    if any(q < 0 or q >= n for q in keep) or len(set(keep)) != len(keep):
        raise ValueError(f"keep indices must be distinct in 0..{n - 1}")
    if len(keep) == 0:
        raise ValueError("must keep at least one qubit")
    rho = state.matrix.reshape([2] * (2 * n))
    traced = [q for q in range(n) if q not in keep]
    for offset, q in enumerate(traced):
        ax = q - offset  # axes shift as we trace
        rho = np.trace(rho, axis1=ax, axis2=ax + n - offset)
        n_left = rho.ndim // 2
    dim = 2 ** len(keep)
    return PolarizationState(len(keep), rho.reshape(dim, dim))


def fidelity(a: PolarizationState, b: PolarizationState) -> float:
    """Uhlmann fidelity F(a, b) = (Tr sqrt(sqrt(a) b sqrt(a)))^2.

    Symmetric, in [0, 1], and equal to <psi|b|psi> when ``a`` is pure.
    """
    if a.n_qubits != b.n_qubits:
        raise ValueError("states must have the same number of qubits")
    wa, ua = np.linalg.eigh(a.matrix)
    wa = np.clip(wa, 0.0, None)
    sqrt_a = (ua * np.sqrt(wa)) @ ua.conj().T
    inner = sqrt_a @ b.matrix @ sqrt_a
    w = np.linalg.eigvalsh(inner)
    w = np.clip(w, 0.0, None)
    return float(min(1.0, np.sum(np.sqrt(w)) ** 2))
