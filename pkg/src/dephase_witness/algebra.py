"""Two-qubit operators and states.

Operators and density matrices are plain ``(4, 4)`` complex numpy arrays in
the product basis ``|+z,+z>, |+z,-z>, |-z,+z>, |-z,-z>``; qubit A is the left
tensor factor.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

HERMITIAN_TOL = 1e-12
TRACE_TOL = 1e-12
EIGEN_TOL = 1e-10

SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)
IDENTITY2 = np.eye(2, dtype=complex)
IDENTITY4 = np.eye(4, dtype=complex)

BELL_KINDS = ("phi+", "phi-", "psi+", "psi-")

_BELL_VECTORS = {
    "phi+": np.array([1, 0, 0, 1], dtype=complex) / np.sqrt(2),
    "phi-": np.array([1, 0, 0, -1], dtype=complex) / np.sqrt(2),
    "psi+": np.array([0, 1, 1, 0], dtype=complex) / np.sqrt(2),
    "psi-": np.array([0, 1, -1, 0], dtype=complex) / np.sqrt(2),
}

# Pauli products entering every correlator sigma(a) (x) sigma(b).
PAULI_XX = np.kron(SIGMA_X, SIGMA_X)
PAULI_XY = np.kron(SIGMA_X, SIGMA_Y)
PAULI_YX = np.kron(SIGMA_Y, SIGMA_X)
PAULI_YY = np.kron(SIGMA_Y, SIGMA_Y)
PAULI_BASIS = np.stack([PAULI_XX, PAULI_XY, PAULI_YX, PAULI_YY])


class InvalidStateError(ValueError):
    """Raised when a matrix is not a valid two-qubit density matrix."""


def _sigma(theta: float) -> np.ndarray:
    return SIGMA_X * np.cos(theta) + SIGMA_Y * np.sin(theta)


def local_observable(theta: float, qubit: str) -> np.ndarray:
    """``sigma_x cos(theta) + sigma_y sin(theta)`` on one qubit, identity on the other."""
    if not np.isfinite(theta):
        raise ValueError(f"angle must be finite, got {theta!r}")
    if qubit == "A":
        return np.kron(_sigma(theta), IDENTITY2)
    if qubit == "B":
        return np.kron(IDENTITY2, _sigma(theta))
    raise ValueError(f"qubit must be 'A' or 'B', got {qubit!r}")


def correlator_operator(theta_a: float, theta_b: float) -> np.ndarray:
    if not (np.isfinite(theta_a) and np.isfinite(theta_b)):
        raise ValueError("angles must be finite")
    return np.kron(_sigma(theta_a), _sigma(theta_b))


@dataclass(frozen=True)
class ChshSettings:
    alpha: float
    alpha_prime: float
    beta: float
    beta_prime: float


def chsh_operator(settings: ChshSettings) -> np.ndarray:
    s = settings
    return (
        correlator_operator(s.alpha, s.beta)
        + correlator_operator(s.alpha, s.beta_prime)
        + correlator_operator(s.alpha_prime, s.beta)
        - correlator_operator(s.alpha_prime, s.beta_prime)
    )


_OPTIMAL = {
    "phi+": (-np.pi / 4, np.pi / 4),
    "phi-": (3 * np.pi / 4, 5 * np.pi / 4),
    "psi+": (np.pi / 4, -np.pi / 4),
    "psi-": (5 * np.pi / 4, 3 * np.pi / 4),
}


def optimal_settings(kind: str) -> ChshSettings:
    """Settings giving ``<B> = +2*sqrt(2)`` on the given Bell state.

    In this basis ``<Phi+-|E(a,b)|Phi+-> = +-cos(a+b)`` and
    ``<Psi+-|E(a,b)|Psi+-> = +-cos(a-b)``; the minus states get beta
    shifted by pi, the Phi family gets beta mirrored.
    """
    try:
        beta, beta_prime = _OPTIMAL[kind]
    except KeyError:
        raise ValueError(f"unknown Bell state {kind!r}; expected one of {BELL_KINDS}") from None
    return ChshSettings(0.0, np.pi / 2, beta, beta_prime)


def bell_vector(kind: str) -> np.ndarray:
    try:
        return _BELL_VECTORS[kind].copy()
    except KeyError:
        raise ValueError(f"unknown Bell state {kind!r}; expected one of {BELL_KINDS}") from None


def bell_state(kind: str) -> np.ndarray:
    psi = bell_vector(kind)
    return np.outer(psi, psi.conj())


def werner_state(p: float) -> np.ndarray:
    """``(1-p)/4 * 1 + p |Psi-><Psi-|``."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"Werner mixing parameter must lie in [0, 1], got {p}")
    return (1.0 - p) / 4.0 * IDENTITY4 + p * bell_state("psi-")


def haar_qubit(rng: np.random.Generator) -> np.ndarray:
    """Haar-random single-qubit pure state vector."""
    z = rng.standard_normal(2) + 1j * rng.standard_normal(2)
    return z / np.linalg.norm(z)


def random_product_state(rng: np.random.Generator) -> np.ndarray:
    psi = np.kron(haar_qubit(rng), haar_qubit(rng))
    return np.outer(psi, psi.conj())


def random_separable_state(rng: np.random.Generator, terms: int = 4) -> np.ndarray:
    """Dirichlet-weighted mixture of ``terms`` Haar-random product states."""
    if terms < 1:
        raise ValueError("need at least one product term")
    weights = rng.dirichlet(np.ones(terms))
    rho = np.zeros((4, 4), dtype=complex)
    for w in weights:
        rho += w * random_product_state(rng)
    return rho


def random_density_matrix(rng: np.random.Generator, rank: int = 4) -> np.ndarray:
    """Random state from the induced (Ginibre) measure; ``rank=4`` is Hilbert-Schmidt."""
    if not 1 <= rank <= 4:
        raise ValueError("rank must be between 1 and 4")
    g = rng.standard_normal((4, rank)) + 1j * rng.standard_normal((4, rank))
    rho = g @ g.conj().T
    return rho / np.trace(rho).real


def validate_density_matrix(rho: np.ndarray) -> np.ndarray:
    rho = np.asarray(rho, dtype=complex)
    if rho.shape != (4, 4):
        raise InvalidStateError(f"expected a 4x4 matrix, got shape {rho.shape}")
    if not np.all(np.isfinite(rho)):
        raise InvalidStateError("density matrix has non-finite entries")
    if np.max(np.abs(rho - rho.conj().T)) > HERMITIAN_TOL:
        raise InvalidStateError("density matrix is not Hermitian")
    if abs(np.trace(rho) - 1.0) > TRACE_TOL:
        raise InvalidStateError(f"trace is {np.trace(rho).real:.3e}, not 1")
    if np.linalg.eigvalsh(rho).min() < -EIGEN_TOL:
        raise InvalidStateError("density matrix has a negative eigenvalue")
    return rho


def partial_transpose(rho: np.ndarray, qubit: str = "B") -> np.ndarray:
    r = np.asarray(rho).reshape(2, 2, 2, 2)  # (a, b, a', b')
    if qubit == "B":
        return r.transpose(0, 3, 2, 1).reshape(4, 4)
    if qubit == "A":
        return r.transpose(2, 1, 0, 3).reshape(4, 4)
    raise ValueError(f"qubit must be 'A' or 'B', got {qubit!r}")


def ppt_is_entangled(rho: np.ndarray) -> bool:
    """Peres-Horodecki test; exact for two qubits."""
    rho = validate_density_matrix(rho)
    return bool(np.linalg.eigvalsh(partial_transpose(rho)).min() < -EIGEN_TOL)


def expectation(op: np.ndarray, rho: np.ndarray) -> float:
    value = np.trace(np.asarray(op) @ np.asarray(rho))
    if abs(value.imag) > 1e-9:
        raise ValueError(
            f"expectation has imaginary part {value.imag:.3e}; operator is not Hermitian"
        )
    return float(value.real)


def pauli_components(rho: np.ndarray) -> np.ndarray:
    """Expectations of (XX, XY, YX, YY) on ``rho``; real for Hermitian ``rho``."""
    return np.einsum("kij,ji->k", PAULI_BASIS, np.asarray(rho)).real


def operator_from_components(coeffs: np.ndarray) -> np.ndarray:
    """Inverse of the Pauli decomposition used by the averaged correlators."""
    return np.tensordot(np.asarray(coeffs, dtype=float), PAULI_BASIS, axes=1)
