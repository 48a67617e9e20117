"""Dense operator helpers for small Hilbert spaces.

Matrices are plain ``numpy`` complex arrays.  A density matrix is any
Hermitian, positive semi-definite array; normalisation is checked where an
operation needs it.  Basis convention for qubits: index 0 is the ground
state ``|0>``, index 1 the excited state ``|1>`` with ``sigma_z |1> = +|1>``
and ``sigma_minus |1> = |0>``.
"""

from __future__ import annotations

import warnings
from typing import NamedTuple

import numpy as np

from .errors import ContractError, DimensionError, PositivityError

HERM_TOL = 1e-10
POS_TOL = 1e-9
TRACE_TOL = 1e-9

SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, 1j], [-1j, 0]], dtype=complex)
SIGMA_Z = np.array([[-1, 0], [0, 1]], dtype=complex)
SIGMA_MINUS = np.array([[0, 1], [0, 0]], dtype=complex)
SIGMA_PLUS = SIGMA_MINUS.conj().T


class BlochVector(NamedTuple):
    x: float
    y: float
    z: float

    @property
    def length(self) -> float:
        return float(np.sqrt(self.x**2 + self.y**2 + self.z**2))


def dag(a: np.ndarray) -> np.ndarray:
    return a.conj().swapaxes(-1, -2)


def ket_bra(i: int, j: int, dim: int = 2) -> np.ndarray:
    """Return the matrix unit ``|i><j|``."""
    m = np.zeros((dim, dim), dtype=complex)
    m[i, j] = 1.0
    return m


def as_operator(m) -> np.ndarray:
    a = np.asarray(m, dtype=complex)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionError(f"expected a square matrix, got shape {a.shape}")
    if a.shape[0] < 2:
        raise DimensionError("operator dimension must be at least 2")
    return a


def hermiticity_defect(m: np.ndarray) -> float:
    return float(np.max(np.abs(m - dag(m))))


def hermitize(m: np.ndarray) -> np.ndarray:
    """Return the Hermitian part ``(A + A^dagger) / 2``."""
    m = as_operator(m)
    return 0.5 * (m + dag(m))


def project_psd(m: np.ndarray, floor: float = POS_TOL) -> np.ndarray:
    """Clip small negative eigenvalues of a Hermitian matrix to zero.

    Eigenvalues in ``[-floor, 0)`` are set to zero; anything further below
    zero raises :class:`PositivityError` carrying the offending eigenvalue.
    """
    m = as_operator(m)
    if hermiticity_defect(m) > HERM_TOL * max(1.0, float(np.max(np.abs(m)))):
        raise ContractError("project_psd requires a Hermitian matrix")
    vals, vecs = np.linalg.eigh(hermitize(m))
    if vals[0] < -floor:
        raise PositivityError(vals[0])
    if vals[0] >= 0:
        return hermitize(m)
    vals = np.clip(vals, 0.0, None)
    return (vecs * vals) @ dag(vecs)


def check_density(rho, normalized: bool = True) -> np.ndarray:
    """Validate a density matrix and return it as a complex array.

    Raises
    ------
    ContractError
        If ``rho`` is not Hermitian, not positive within ``POS_TOL``, or (when
        ``normalized``) does not have unit trace.
    """
    rho = as_operator(rho)
    scale = max(1.0, float(np.real(np.trace(rho))))
    if hermiticity_defect(rho) > HERM_TOL * scale:
        raise ContractError("density matrix is not Hermitian")
    lam = np.linalg.eigvalsh(hermitize(rho))[0]
    if lam < -POS_TOL * scale:
        raise PositivityError(lam, f"density matrix has eigenvalue {lam:.3e}")
    tr = float(np.real(np.trace(rho)))
    if normalized and abs(tr - 1.0) > TRACE_TOL:
        raise ContractError(f"density matrix trace is {tr!r}, expected 1")
    if not normalized and tr <= 0:
        raise ContractError("unnormalized state must have positive trace")
    return rho


def check_effect(e) -> np.ndarray:
    e = as_operator(e)
    scale = max(1.0, float(np.max(np.abs(e))))
    if hermiticity_defect(e) > HERM_TOL * scale:
        raise ContractError("effect operator is not Hermitian")
    lam = np.linalg.eigvalsh(hermitize(e))[0]
    if lam < -POS_TOL * scale:
        raise PositivityError(lam, f"effect operator has eigenvalue {lam:.3e}")
    return e


def normalize(rho: np.ndarray) -> np.ndarray:
    return rho / np.real(np.trace(rho))


def pure_state(psi) -> np.ndarray:
    psi = np.asarray(psi, dtype=complex)
    psi = psi / np.linalg.norm(psi)
    return np.outer(psi, psi.conj())


def basis_state(i: int, dim: int = 2) -> np.ndarray:
    return ket_bra(i, i, dim)


def purity(rho) -> float:
    """Purity ``Tr[rho^2]`` of a normalised state."""
    rho = check_density(rho)
    # Tr[rho^2] = sum |rho_ij|^2 for Hermitian rho
    return float(np.sum(np.abs(rho) ** 2))


def fidelity(rho_true, rho_c) -> float:
    """Overlap ``Tr[rho_true rho_c]`` of a state with a pure reference.

    This is the fidelity only when ``rho_true`` is pure; a mixed reference
    emits a ``RuntimeWarning`` and the overlap is returned regardless.
    """
    rho_true = check_density(rho_true)
    rho_c = check_density(rho_c)
    p = float(np.sum(np.abs(rho_true) ** 2))
    if p < 1 - 1e-6:
        warnings.warn(
            f"fidelity reference state is mixed (purity {p:.6f}); returning overlap",
            RuntimeWarning,
            stacklevel=2,
        )
    return float(np.real(np.vdot(rho_true, rho_c)))


def to_bloch(rho) -> BlochVector:
    rho = check_density(rho)
    if rho.shape != (2, 2):
        raise DimensionError("Bloch vectors are defined for d=2 only")
    return BlochVector(
        float(np.real(np.trace(SIGMA_X @ rho))),
        float(np.real(np.trace(SIGMA_Y @ rho))),
        float(np.real(np.trace(SIGMA_Z @ rho))),
    )


def from_bloch(b) -> np.ndarray:
    x, y, z = (float(v) for v in b)
    if x * x + y * y + z * z > 1 + 1e-9:
        raise ContractError("Bloch vector lies outside the unit ball")
    return 0.5 * (np.eye(2) + x * SIGMA_X + y * SIGMA_Y + z * SIGMA_Z)


def bloch_components(rhos: np.ndarray) -> np.ndarray:
    """Vectorised Bloch coordinates for a stack of qubit states, shape (..., 3)."""
    x = 2 * rhos[..., 0, 1].real
    y = 2 * rhos[..., 0, 1].imag
    z = (rhos[..., 1, 1] - rhos[..., 0, 0]).real
    return np.stack([x, y, z], axis=-1)
