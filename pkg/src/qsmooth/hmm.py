"""Filtering, retrofiltering and smoothing for finite-state hidden Markov models.

Time convention: the hidden state ``x_t`` emits ``r_t`` during ``[t, t+dt)``
and then transitions.  The filtered distribution at grid index ``k`` is
conditioned on ``r_0 .. r_{k-1}``; the retrofiltered one on ``r_k .. r_{T-1}``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.linalg import expm

from .errors import ContractError, ImpossibleRecordError
from .model import OpenSystemModel


@dataclass(frozen=True)
class ClassicalModel:
    """Per-step transition matrix and emission likelihood.

    ``transition[i, j]`` is the probability of moving from state ``j`` to
    state ``i`` in one step (columns sum to one).  ``likelihood(r)`` returns
    the vector of ``p(r | x)`` over states, up to a factor common to all
    states.
    """

    transition: np.ndarray
    likelihood: Callable[[object], np.ndarray]

    def __post_init__(self):
        T = np.asarray(self.transition, dtype=float)
        if T.ndim != 2 or T.shape[0] != T.shape[1]:
            raise ContractError("transition matrix must be square")
        if np.any(T < 0) or not np.allclose(T.sum(axis=0), 1.0, atol=1e-12):
            raise ContractError("transition columns must be probability vectors")
        object.__setattr__(self, "transition", T)

    @property
    def n_states(self) -> int:
        return self.transition.shape[0]

    @classmethod
    def discrete(cls, transition, emission) -> "ClassicalModel":
        """Model over a finite alphabet; ``emission[r, x] = p(r | x)``."""
        emission = np.asarray(emission, dtype=float)
        if np.any(emission < 0):
            raise ContractError("emission probabilities must be non-negative")
        return cls(transition, lambda r: emission[int(r)])


@dataclass(frozen=True)
class ClassicalPath:
    """Normalised distributions on the grid with log normalisers.

    The unnormalised distribution at index ``k`` is
    ``probs[k] * exp(log_scale[k])``.
    """

    probs: np.ndarray
    log_scale: np.ndarray

    def __len__(self):
        return len(self.probs)

    def unnormalized(self, k: int) -> np.ndarray:
        return self.probs[k] * np.exp(self.log_scale[k])


def _likelihoods(model, record):
    L = np.array([np.asarray(model.likelihood(r), dtype=float) for r in record])
    return L.reshape(len(record), model.n_states)


def hmm_filter(model: ClassicalModel, record, prior) -> ClassicalPath:
    prior = np.asarray(prior, dtype=float)
    if abs(prior.sum() - 1) > 1e-12 or np.any(prior < 0):
        raise ContractError("prior must be a normalised distribution")
    L = _likelihoods(model, record)
    probs = np.empty((len(L) + 1, model.n_states))
    logs = np.zeros(len(L) + 1)
    probs[0] = prior
    for t, lik in enumerate(L):
        p = model.transition @ (lik * probs[t])
        z = p.sum()
        if not z > 0:
            raise ImpossibleRecordError("observation has zero likelihood", step=t)
        probs[t + 1] = p / z
        logs[t + 1] = logs[t] + np.log(z)
    return ClassicalPath(probs, logs)


def hmm_retrofilter(model: ClassicalModel, record) -> ClassicalPath:
    """Backward pass from the uninformative final condition ``p(x_T) = 1``."""
    L = _likelihoods(model, record)
    n = model.n_states
    probs = np.empty((len(L) + 1, n))
    logs = np.zeros(len(L) + 1)
    probs[-1] = 1.0 / n
    logs[-1] = np.log(n)
    for t in range(len(L) - 1, -1, -1):
        e = L[t] * (model.transition.T @ probs[t + 1])
        z = e.sum()
        if not z > 0:
            raise ImpossibleRecordError("future record has zero likelihood", step=t)
        probs[t] = e / z
        logs[t] = logs[t + 1] + np.log(z)
    return ClassicalPath(probs, logs)


def combine(filtered: ClassicalPath, retro: ClassicalPath) -> np.ndarray:
    prod = filtered.probs * retro.probs
    z = prod.sum(axis=1, keepdims=True)
    if np.any(z <= 0):
        raise ImpossibleRecordError("filtered and retrofiltered states are disjoint")
    return prod / z


def hmm_smooth(model: ClassicalModel, record, prior) -> np.ndarray:
    """Smoothed distributions at every grid index, shape (steps + 1, n_states)."""
    return combine(hmm_filter(model, record, prior), hmm_retrofilter(model, record))


def is_diagonal_model(model: OpenSystemModel, tol: float = 1e-12) -> bool:
    """True when every operator maps basis projectors to diagonal matrices."""
    off = lambda A: A - np.diag(np.diag(A))  # noqa: E731
    if np.max(np.abs(off(model.H)), initial=0.0) > tol:
        return False
    if any(np.max(np.abs(off(ch.L))) > tol for ch in model.observed):
        return False
    for ch in model.unobserved:
        # each basis state must jump to a single basis state
        if np.any((np.abs(ch.L) > tol).sum(axis=0) > 1):
            return False
    return True


def hmm_from_diagonal_model(model: OpenSystemModel, dt: float) -> ClassicalModel:
    """Two-level-style HMM equivalent of a model with no coherent dynamics.

    Populations move with rates ``|L_ij|^2`` from every Lindblad operator.
    Each homodyne value is Gaussian with variance ``1/dt`` about the
    state-dependent mean ``<x| e^{-i phi} L + h.c. |x>``; likelihoods are
    taken relative to the zero-mean Gaussian.
    """
    if not is_diagonal_model(model):
        raise ContractError("model has coherent dynamics; no HMM reduction exists")
    d = model.dim
    rates = np.zeros((d, d))
    for L in model.lindblad_ops():
        rates += np.abs(L) ** 2
    np.fill_diagonal(rates, 0.0)
    generator = rates - np.diag(rates.sum(axis=0))
    T = expm(generator * dt)
    T = np.clip(T, 0.0, None)
    T /= T.sum(axis=0, keepdims=True)
    means = np.array([np.diag(ch.quadrature).real for ch in model.observed]).reshape(-1, d)

    def likelihood(y):
        y = np.atleast_1d(np.asarray(y, dtype=float))
        return np.exp(dt * (y @ means) - 0.5 * dt * np.sum(means**2, axis=0))

    return ClassicalModel(T, likelihood)
