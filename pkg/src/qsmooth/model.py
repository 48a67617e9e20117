"""Open quantum system descriptions: Hamiltonian plus monitored channels."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, DimensionError, ParameterError
from .operators import (
    HERM_TOL,
    SIGMA_MINUS,
    SIGMA_X,
    SIGMA_Z,
    as_operator,
    dag,
    hermiticity_defect,
)


@dataclass(frozen=True)
class HomodyneChannel:
    """Observed output channel with Lindblad operator ``L`` and LO phase."""

    L: np.ndarray
    phase: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "L", as_operator(self.L))

    @property
    def quadrature(self) -> np.ndarray:
        """``e^{-i phase} L + e^{i phase} L^dagger``; its mean is the signal."""
        a = np.exp(-1j * self.phase) * self.L
        return a + dag(a)


@dataclass(frozen=True)
class JumpChannel:
    """Unobserved channel unravelled as photon counting."""

    L: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "L", as_operator(self.L))


@dataclass(frozen=True)
class OpenSystemModel:
    H: np.ndarray
    observed: tuple = field(default_factory=tuple)
    unobserved: tuple = field(default_factory=tuple)

    def __post_init__(self):
        H = as_operator(self.H)
        if hermiticity_defect(H) > HERM_TOL * max(1.0, float(np.max(np.abs(H)))):
            raise ContractError("Hamiltonian must be Hermitian")
        object.__setattr__(self, "H", H)
        object.__setattr__(self, "observed", tuple(self.observed))
        object.__setattr__(self, "unobserved", tuple(self.unobserved))
        for ch in self.observed + self.unobserved:
            if ch.L.shape != H.shape:
                raise DimensionError(
                    f"channel operator shape {ch.L.shape} does not match H {H.shape}"
                )

    @property
    def dim(self) -> int:
        return self.H.shape[0]

    @property
    def n_observed(self) -> int:
        return len(self.observed)

    @property
    def n_unobserved(self) -> int:
        return len(self.unobserved)

    def lindblad_ops(self) -> list[np.ndarray]:
        return [ch.L for ch in self.observed] + [ch.L for ch in self.unobserved]

    def effective_generator(self) -> np.ndarray:
        """``iH + 1/2 sum_k L_k^dagger L_k`` (the no-jump drift)."""
        G = 1j * self.H
        for L in self.lindblad_ops():
            G = G + 0.5 * dag(L) @ L
        return G


def two_level_atom(omega: float, gamma: float, eta: float, phi: float) -> OpenSystemModel:
    """Resonantly driven two-level atom with partially observed fluorescence.

    A fraction ``eta`` of the emission is homodyned at local-oscillator phase
    ``phi``; the remainder is treated as unobserved photon counts.

    Parameters
    ----------
    omega : float
        Rabi frequency; ``H = (omega / 2) sigma_x``.
    gamma : float
        Radiative decay rate, must be positive.
    eta : float
        Detection efficiency in ``[0, 1]``.
    phi : float
        Local-oscillator phase in radians (``pi/2`` is Y-homodyne, 0 is X).
    """
    if not gamma > 0:
        raise ParameterError("gamma must be positive")
    if not 0.0 <= eta <= 1.0:
        raise ParameterError(f"eta must lie in [0, 1], got {eta}")
    H = 0.5 * omega * SIGMA_X
    b = np.sqrt(gamma * eta) * SIGMA_MINUS
    c = np.sqrt(gamma * (1.0 - eta)) * SIGMA_MINUS
    return OpenSystemModel(H, (HomodyneChannel(b, phi),), (JumpChannel(c),))


def dephased_decay_model(gamma: float, kappa: float, phi: float = 0.0) -> OpenSystemModel:
    """Undriven qubit whose dynamics never leave the energy basis.

    Decay ``sqrt(gamma) sigma_minus`` is unobserved photon counting and the
    observed channel is a homodyne measurement of ``sqrt(kappa) sigma_z``.
    Both maps send diagonal states to diagonal states, so the filter is
    equivalent to a two-state hidden Markov model.
    """
    if not gamma > 0 or kappa < 0:
        raise ParameterError("need gamma > 0 and kappa >= 0")
    H = np.zeros((2, 2), dtype=complex)
    b = np.sqrt(kappa) * SIGMA_Z
    c = np.sqrt(gamma) * SIGMA_MINUS
    return OpenSystemModel(H, (HomodyneChannel(b, phi),), (JumpChannel(c),))


def lindblad_generator(model: OpenSystemModel, rho: np.ndarray) -> np.ndarray:
    """Unconditional master-equation right-hand side ``L[rho]``."""
    rho = np.asarray(rho, dtype=complex)
    out = -1j * (model.H @ rho - rho @ model.H)
    for L in model.lindblad_ops():
        LdL = dag(L) @ L
        out = out + L @ rho @ dag(L) - 0.5 * (LdL @ rho + rho @ LdL)
    return out


def liouvillian(model: OpenSystemModel) -> np.ndarray:
    """Superoperator matrix acting on row-major ``vec(rho)``.

    Built from Kronecker products, independently of :func:`lindblad_generator`.
    """
    d = model.dim
    eye = np.eye(d)
    # row-major vec: vec(A X B) = kron(A, B^T) vec(X)
    sup = -1j * (np.kron(model.H, eye) - np.kron(eye, model.H.T))
    for L in model.lindblad_ops():
        LdL = dag(L) @ L
        sup = sup + np.kron(L, L.conj()) - 0.5 * (np.kron(LdL, eye) + np.kron(eye, LdL.T))
    return sup


def steady_state(model: OpenSystemModel) -> np.ndarray:
    """Steady state from the null space of the Liouvillian."""
    from scipy.linalg import null_space

    ns = null_space(liouvillian(model))
    if ns.shape[1] != 1:
        raise ContractError(f"steady state is not unique (null space dim {ns.shape[1]})")
    rho = ns[:, 0].reshape(model.dim, model.dim)
    rho = rho / np.trace(rho)
    return 0.5 * (rho + dag(rho))
