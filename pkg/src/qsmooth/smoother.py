"""Smoothed quantum states from an ostensible ensemble of unobserved records.

For a fixed observed record the unobserved count records are drawn from the
filtered-rate ostensible distribution.  Each sample ``k`` carries its doubly
conditioned state ``rho_k(t)`` and the log ratio of actual to ostensible
likelihood of its past.  The smoothed state is the self-normalised average

    rho_S(t) = sum_k w_k(t) rho_k(t) / sum_k w_k(t),
    w_k(t)   = Tr[E(t) rho~_k(t)],

with ``E(t)`` the effect retrofiltered from the observed record after ``t``.
Because every ``rho_k`` is a state, ``rho_S`` is positive by construction.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import ContractError, DegenerateEnsembleError
from .forward import (
    TrajectoryGrid,
    filter_forward,
    jump_operators,
    no_jump_operators,
    ostensible_jump_table,
    pure_vector,
)
from .model import OpenSystemModel
from .operators import check_density, purity
from .records import Record
from .retrofilter import EffectGrid, retrofilter_record

ESS_WARN_FRACTION = 0.01


@dataclass(frozen=True)
class SmoothedTrajectory:
    dt: float
    states: np.ndarray
    ess: np.ndarray
    var_re: np.ndarray
    var_im: np.ndarray
    t0: float = 0.0

    def __len__(self):
        return len(self.states)

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(len(self.states))

    @property
    def stderr(self) -> np.ndarray:
        """Max-entry Monte Carlo standard error of each state."""
        return np.sqrt(np.maximum(self.var_re, self.var_im)).max(axis=(1, 2))

    def purities(self) -> np.ndarray:
        return np.einsum("tij,tji->t", self.states, self.states).real


@dataclass(frozen=True)
class SmoothingEnsemble:
    """Materialised ensemble: every sample's count record and state path.

    ``log_ratio[k, t]`` is the log trace of sample ``k``'s unnormalised state
    relative to the observed-only filter; ``log_prior[k]`` is an extra log
    weight (zero for samples drawn from the ostensible distribution, the log
    ostensible probability when records are enumerated instead).
    """

    counts: np.ndarray
    states: np.ndarray
    log_ratio: np.ndarray
    log_prior: np.ndarray
    effects: EffectGrid
    filtered: TrajectoryGrid

    @property
    def size(self) -> int:
        return len(self.states)

    @property
    def steps(self) -> int:
        return self.states.shape[1] - 1

    def log_weights(self, t: int) -> np.ndarray:
        overlap = np.einsum("ij,kji->k", self.effects.effects[t], self.states[:, t]).real
        with np.errstate(divide="ignore"):
            return self.log_prior + self.log_ratio[:, t] + np.log(np.clip(overlap, 0.0, None))


def _spawn_uniforms(rng, M: int, steps: int) -> np.ndarray:
    """Independent uniform streams per sample, shape (M, steps)."""
    children = rng.spawn(M)
    U = np.empty((M, steps))
    for k, g in enumerate(children):
        U[k] = g.random(steps)
    return U


def _prepare(model, record_Y, rho0, filtered, effects):
    rho0 = check_density(rho0)
    if purity(rho0) < 1 - 1e-9:
        raise ContractError("smoothing needs a pure initial state")
    if record_Y.n_y != model.n_observed:
        raise ContractError("record and model disagree on the number of observed channels")
    record_Y = record_Y.observed()
    if filtered is None:
        filtered = filter_forward(model, record_Y, rho0)
    if effects is None:
        effects = retrofilter_record(model, record_Y)
    p = ostensible_jump_table(model, filtered)
    logF = np.diff(filtered.log_weights)
    return rho0, record_Y, filtered, effects, p, logF


def build_ensemble(
    model: OpenSystemModel,
    record_Y: Record,
    rho0,
    M: int,
    rng,
    filtered: TrajectoryGrid | None = None,
    effects: EffectGrid | None = None,
) -> SmoothingEnsemble:
    """Draw ``M`` unobserved records and keep every doubly conditioned path."""
    if M < 1:
        raise ContractError("ensemble size must be at least 1")
    rho0, record_Y, filtered, effects, p, logF = _prepare(model, record_Y, rho0, filtered, effects)
    U = _spawn_uniforms(rng, M, len(record_Y))
    psis, logL, chans = _kernels.ensemble_paths(
        no_jump_operators(model, record_Y),
        jump_operators(model, record_Y.dt),
        p,
        logF,
        pure_vector(rho0),
        U,
    )
    counts = np.zeros((M, len(record_Y), model.n_unobserved), dtype=np.int8)
    k, t = np.nonzero(chans >= 0)
    counts[k, t, chans[k, t]] = 1
    states = np.einsum("kti,ktj->ktij", psis, psis.conj())
    return SmoothingEnsemble(counts, states, logL, np.zeros(M), effects, filtered)


def ensemble_from_records(
    model: OpenSystemModel,
    record_Y: Record,
    rho0,
    count_records,
    log_prior=None,
    filtered: TrajectoryGrid | None = None,
    effects: EffectGrid | None = None,
) -> SmoothingEnsemble:
    """Ensemble over explicitly given count records (e.g. full enumeration).

    With ``log_prior=None`` each record is weighted by its ostensible
    probability, which turns the ensemble average into an exact sum.
    """
    rho0, record_Y, filtered, effects, p, logF = _prepare(model, record_Y, rho0, filtered, effects)
    counts = np.asarray(count_records, dtype=np.int8)
    if counts.ndim == 2:
        counts = counts[:, :, None]
    if counts.shape[1:] != (len(record_Y), model.n_unobserved):
        raise ContractError("count records do not match the observed record and model")
    K0s = no_jump_operators(model, record_Y)
    Cs = jump_operators(model, record_Y.dt)
    states, logL, priors = [], [], []
    for n in counts:
        rho, logw, bad = _kernels.filter_joint(K0s, Cs, _kernels.channel_index(n), p, rho0)
        if bad >= 0:
            # impossible record: zero weight from the offending step on
            rho[bad + 1 :] = rho[bad]
            logw[bad + 1 :] = -np.inf
        states.append(rho)
        logL.append(logw - filtered.log_weights)
        jumped = n.sum(axis=1) > 0
        p_sel = np.where(jumped, (p * n).sum(axis=1), 1.0 - p.sum(axis=1))
        with np.errstate(divide="ignore"):
            priors.append(np.log(p_sel).sum())
    if log_prior is None:
        log_prior = np.array(priors)
    return SmoothingEnsemble(
        counts, np.array(states), np.array(logL), np.asarray(log_prior, dtype=float), effects, filtered
    )


def smoothed_record_weights(ensemble: SmoothingEnsemble, t: int) -> np.ndarray:
    """Self-normalised smoothed probabilities of the sampled records at grid index ``t``.

    Only the prefix of each count record before ``t`` matters; the weights
    approximate the smoothed distribution of that prefix given the whole
    observed record.
    """
    lw = ensemble.log_weights(t)
    top = lw.max()
    if not np.isfinite(top):
        raise DegenerateEnsembleError(ensemble.filtered.times[t], t)
    w = np.exp(lw - top)
    return w / w.sum()


def smooth_from_ensemble(ensemble: SmoothingEnsemble) -> SmoothedTrajectory:
    n_t = ensemble.steps + 1
    d = ensemble.states.shape[-1]
    states = np.empty((n_t, d, d), dtype=complex)
    ess = np.empty(n_t)
    var_re = np.empty((n_t, d, d))
    var_im = np.empty((n_t, d, d))
    for t in range(n_t):
        w = smoothed_record_weights(ensemble, t)
        x = ensemble.states[:, t]
        m = np.einsum("k,kij->ij", w, x)
        states[t] = m
        ess[t] = 1.0 / np.sum(w**2)
        var_re[t] = np.einsum("k,kij->ij", w**2, (x.real - m.real) ** 2)
        var_im[t] = np.einsum("k,kij->ij", w**2, (x.imag - m.imag) ** 2)
    f = ensemble.filtered
    return SmoothedTrajectory(f.dt, states, ess, var_re, var_im, f.t0)


def _stream(model, record_Y, rho0, M, rng, filtered, effects, use_effects):
    if M < 1:
        raise ContractError("ensemble size must be at least 1")
    rho0, record_Y, filtered, effects, p, logF = _prepare(model, record_Y, rho0, filtered, effects)
    E = effects.effects
    if not use_effects:
        E = np.broadcast_to(np.eye(model.dim, dtype=complex), E.shape).copy()
    U = np.ascontiguousarray(_spawn_uniforms(rng, M, len(record_Y)).T)
    kernel = _kernels.smooth_stream_qubit if model.dim == 2 else _kernels.smooth_stream
    mean, var_re, var_im, ess, bad = kernel(
        no_jump_operators(model, record_Y),
        jump_operators(model, record_Y.dt),
        p,
        logF,
        E,
        pure_vector(rho0),
        U,
    )
    if bad >= 0:
        raise DegenerateEnsembleError(record_Y.t0 + bad * record_Y.dt, bad)
    if ess[1:].size and ess[1:].min() < ESS_WARN_FRACTION * M:
        warnings.warn(
            f"effective sample size fell to {ess[1:].min():.1f} of {M}",
            RuntimeWarning,
            stacklevel=3,
        )
    return SmoothedTrajectory(record_Y.dt, mean, ess, var_re, var_im, record_Y.t0)


def smooth(
    model: OpenSystemModel,
    record_Y: Record,
    rho0,
    M: int,
    rng,
    filtered: TrajectoryGrid | None = None,
    effects: EffectGrid | None = None,
) -> SmoothedTrajectory:
    """Smoothed state on the whole grid from an ostensible ensemble of size ``M``.

    ``rng`` is a ``numpy.random.Generator``; sample ``k`` draws from
    ``rng.spawn(M)[k]``, so results depend only on the generator's seed.
    Precomputed ``filtered`` and ``effects`` grids for ``record_Y`` may be
    passed to avoid recomputing them.
    """
    return _stream(model, record_Y, rho0, M, rng, filtered, effects, True)


def ensemble_filtered_average(
    model: OpenSystemModel,
    record_Y: Record,
    rho0,
    M: int,
    rng,
    filtered: TrajectoryGrid | None = None,
) -> SmoothedTrajectory:
    """Likelihood-weighted ensemble average of doubly conditioned states.

    This uses no future information and estimates the filtered state; it is
    the consistency check for the ensemble machinery.
    """
    return _stream(model, record_Y, rho0, M, rng, filtered, None, False)
