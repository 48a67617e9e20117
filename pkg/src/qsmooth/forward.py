"""Forward conditioned evolution (quantum trajectories) on a uniform grid.

Each interval ``[t, t + dt)`` carries homodyne values ``y`` (one per observed
channel) and photon counts ``n`` (one per unobserved channel, at most one
jump per step).  With ostensible homodyne statistics ``y ~ N(0, 1/dt)`` the
operations are

* no jump: ``K0(y) rho K0(y)^dagger`` with
  ``K0(y) = I - (iH + 1/2 sum L^dagger L) dt + sum_j e^{-i phi_j} y_j dt b_j``;
* jump in channel ``j``: ``c_j rho c_j^dagger dt``.

When the counts themselves are drawn from an ostensible distribution ``p``,
the two branches are divided by ``1 - sum p`` and ``p_j`` respectively, so
that averaging the joint operation over ``n`` gives back the observed-only
operation ``K0 rho K0^dagger + sum_j c_j rho c_j^dagger dt`` exactly.  The
trace of an updated state is then the ratio of the actual record likelihood
to its ostensible likelihood.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import ContractError, ImpossibleRecordError, StepSizeError
from .model import OpenSystemModel
from .operators import check_density, dag, purity
from .records import Record, RecordStep

MAX_OSTENSIBLE_JUMP = 0.5
# spectral-norm bound on the first-order correction G dt
MAX_GENERATOR_STEP = 0.1


@dataclass(frozen=True)
class TrajectoryGrid:
    """Normalised states on the grid plus accumulated log trace weights.

    ``log_weights[k]`` is the log of the trace the unnormalised state would
    have at grid point ``k`` without per-step renormalisation.
    """

    dt: float
    states: np.ndarray
    log_weights: np.ndarray
    t0: float = 0.0

    def __len__(self):
        return len(self.states)

    @property
    def weights(self) -> np.ndarray:
        return np.exp(self.log_weights)

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(len(self.states))

    def purities(self) -> np.ndarray:
        return np.einsum("tij,tji->t", self.states, self.states).real

    def unnormalized(self, k: int) -> np.ndarray:
        return self.states[k] * np.exp(self.log_weights[k])


def no_jump_operator(model: OpenSystemModel, y, dt: float) -> np.ndarray:
    """``K0(y)`` for one interval."""
    y = np.atleast_1d(np.asarray(y, dtype=float))
    if len(y) != model.n_observed:
        raise ContractError(f"expected {model.n_observed} homodyne values, got {len(y)}")
    K = np.eye(model.dim, dtype=complex) - model.effective_generator() * dt
    for yj, ch in zip(y, model.observed):
        K = K + np.exp(-1j * ch.phase) * yj * dt * ch.L
    return K


def no_jump_operators(model: OpenSystemModel, record: Record) -> np.ndarray:
    """Stack of ``K0(y_t)`` for every step of ``record``, shape (steps, d, d)."""
    if record.n_y != model.n_observed:
        raise ContractError("record and model disagree on the number of observed channels")
    dt = record.dt
    base = np.eye(model.dim, dtype=complex) - model.effective_generator() * dt
    Ks = np.broadcast_to(base, (len(record), model.dim, model.dim)).copy()
    for j, ch in enumerate(model.observed):
        Ks += (record.y[:, j] * dt)[:, None, None] * (np.exp(-1j * ch.phase) * ch.L)
    return Ks


def jump_operators(model: OpenSystemModel, dt: float) -> np.ndarray:
    """Unobserved jump operators scaled by ``sqrt(dt)``, shape (n_n, d, d)."""
    ops = [np.sqrt(dt) * ch.L for ch in model.unobserved]
    if not ops:
        return np.zeros((0, model.dim, model.dim), dtype=complex)
    return np.array(ops)


def _check_step_size(model, dt):
    G = model.effective_generator()
    if np.linalg.norm(G, 2) * dt >= MAX_GENERATOR_STEP:
        raise StepSizeError(f"dt={dt} too large for this model (need ||G|| dt < {MAX_GENERATOR_STEP})")


def kraus_step(model: OpenSystemModel, rho, step: RecordStep, dt: float, p_ost=None) -> np.ndarray:
    """Apply the joint measurement operation for one interval.

    Parameters
    ----------
    rho : array
        Current (possibly unnormalised) state.
    step : RecordStep
        Homodyne values and photon counts for the interval.
    p_ost : sequence of float, optional
        Ostensible jump probability per unobserved channel.  If given, the
        output is reweighted by the inverse probability of the drawn outcome.

    Returns
    -------
    array
        The unnormalised updated state.
    """
    _check_step_size(model, dt)
    n = np.asarray(step.n, dtype=int)
    if len(n) != model.n_unobserved:
        raise ContractError(f"expected {model.n_unobserved} counts, got {len(n)}")
    if n.sum() > 1:
        raise ContractError("at most one jump per step")
    rho = np.asarray(rho, dtype=complex)
    if n.sum() == 0:
        K = no_jump_operator(model, step.y, dt)
        out = K @ rho @ dag(K)
        scale = 1.0 if p_ost is None else 1.0 - float(np.sum(p_ost))
    else:
        j = int(np.argmax(n))
        c = model.unobserved[j].L
        out = c @ rho @ dag(c) * dt
        scale = 1.0 if p_ost is None else float(p_ost[j])
        if scale <= 0:
            raise ImpossibleRecordError("jump drawn in a channel with zero ostensible probability")
    tr = float(np.real(np.trace(out)))
    if not tr > 0:
        raise ImpossibleRecordError("record has zero probability given the state")
    return out / scale


def observed_step(model: OpenSystemModel, rho, y, dt: float) -> np.ndarray:
    """Observed-only operation: unobserved counts averaged out."""
    K = no_jump_operator(model, y, dt)
    rho = np.asarray(rho, dtype=complex)
    out = K @ rho @ dag(K)
    for ch in model.unobserved:
        out = out + ch.L @ rho @ dag(ch.L) * dt
    return out


def jump_probabilities(model: OpenSystemModel, rho, dt: float) -> np.ndarray:
    return np.array(
        [float(np.real(np.trace(ch.L @ rho @ dag(ch.L)))) * dt for ch in model.unobserved]
    )


def _draw_count(p, u):
    n = np.zeros(len(p), dtype=int)
    edges = np.cumsum(p)
    j = int(np.searchsorted(edges, u, side="right"))
    if j < len(p):
        n[j] = 1
    return n


def sample_true_step(model: OpenSystemModel, rho_true, rng, dt: float) -> RecordStep:
    """Draw one interval of the actual (O, U) record from the true state."""
    rho_true = check_density(rho_true)
    n = _draw_count(jump_probabilities(model, rho_true, dt), rng.random())
    xi = rng.standard_normal(model.n_observed)
    y = [
        float(np.real(np.trace(ch.quadrature @ rho_true))) + xi[j] / np.sqrt(dt)
        for j, ch in enumerate(model.observed)
    ]
    return RecordStep(tuple(y), tuple(int(v) for v in n))


def sample_ostensible_unobserved_step(rho_filtered, model: OpenSystemModel, rng, dt: float):
    """Draw counts from the filtered-rate ostensible distribution.

    Returns
    -------
    n : tuple of int
        Sampled counts, one per unobserved channel.
    p : ndarray
        Ostensible jump probability per channel used for the draw.
    """
    rho_filtered = check_density(rho_filtered)
    p = jump_probabilities(model, rho_filtered, dt)
    total = p.sum()
    if total < 0 or total > MAX_OSTENSIBLE_JUMP:
        raise StepSizeError(f"ostensible jump probability {total:.3g} outside [0, 0.5]")
    return tuple(int(v) for v in _draw_count(p, rng.random())), p


def _raise_if_bad(bad, record):
    if bad >= 0:
        raise ImpossibleRecordError("record has zero probability given the state", step=bad)


def filter_forward(model: OpenSystemModel, record_Y: Record, rho0) -> TrajectoryGrid:
    """Filtered states conditioned on the observed record alone."""
    rho0 = check_density(rho0)
    _check_step_size(model, record_Y.dt)
    states, logw, bad = _kernels.filter_density(
        no_jump_operators(model, record_Y), jump_operators(model, record_Y.dt), rho0
    )
    _raise_if_bad(bad, record_Y)
    return TrajectoryGrid(record_Y.dt, states, logw, record_Y.t0)


def ostensible_jump_table(model: OpenSystemModel, filtered: TrajectoryGrid) -> np.ndarray:
    """Ostensible jump probabilities for every step, shape (steps, n_n)."""
    ops = [ch.L for ch in model.unobserved]
    if not ops:
        return np.zeros((len(filtered) - 1, 0))
    rates = np.stack(
        [np.einsum("tij,ji->t", filtered.states[:-1], dag(L) @ L).real for L in ops], axis=1
    )
    p = rates * filtered.dt
    total = p.sum(axis=1)
    if np.any(total > MAX_OSTENSIBLE_JUMP) or np.any(p < -1e-15):
        raise StepSizeError("ostensible jump probability outside [0, 0.5]; reduce dt")
    return np.clip(p, 0.0, None)


def filter_forward_joint(
    model: OpenSystemModel,
    record_Y: Record,
    record_N: Record | None,
    rho0,
    p_ost=None,
    ostensible: bool = True,
) -> TrajectoryGrid:
    """States conditioned on both the observed and the unobserved record.

    By default the counts are treated as drawn from the filtered-rate
    ostensible distribution, so ``log_weights`` hold the log ratio of actual
    to ostensible likelihood.  Pass ``ostensible=False`` for the plain
    physical operation (used when the counts come from the true state).
    """
    rho0 = check_density(rho0)
    counts = record_Y.n if record_N is None else record_N.n
    if len(counts) != len(record_Y):
        raise ContractError("observed and unobserved records differ in length")
    if counts.shape[1] != model.n_unobserved:
        raise ContractError("record and model disagree on the number of unobserved channels")
    _check_step_size(model, record_Y.dt)
    if not ostensible:
        p = np.full((len(record_Y), model.n_unobserved), np.nan)
    elif p_ost is None:
        p = ostensible_jump_table(model, filter_forward(model, record_Y, rho0))
    else:
        p = np.asarray(p_ost, dtype=float).reshape(len(record_Y), model.n_unobserved)
    states, logw, bad = _kernels.filter_joint(
        no_jump_operators(model, record_Y),
        jump_operators(model, record_Y.dt),
        _kernels.channel_index(counts),
        p,
        rho0,
    )
    _raise_if_bad(bad, record_Y)
    return TrajectoryGrid(record_Y.dt, states, logw, record_Y.t0)


def sample_true_record(
    model: OpenSystemModel, rho0, steps: int, dt: float, rng, t0: float = 0.0
) -> tuple[Record, np.ndarray]:
    """Generate an all-time (O, U) record together with the true state path.

    Returns the record (both ``y`` and ``n`` filled) and the true pure states
    on the grid, shape (steps + 1, d, d).
    """
    rho0 = check_density(rho0)
    if purity(rho0) < 1 - 1e-9:
        raise ContractError("true-state sampling needs a pure initial state")
    _check_step_size(model, dt)
    u = rng.random(steps)
    xi = rng.standard_normal((steps, model.n_observed))
    psi0 = pure_vector(rho0)
    quads = np.array([ch.quadrature for ch in model.observed]).reshape(-1, model.dim, model.dim)
    base = np.eye(model.dim, dtype=complex) - model.effective_generator() * dt
    meas = np.array([np.exp(-1j * ch.phase) * ch.L for ch in model.observed]).reshape(
        -1, model.dim, model.dim
    )
    psis, y, jumps = _kernels.true_trajectory(
        base, meas, quads, jump_operators(model, dt), psi0, u, xi, dt
    )
    n = np.zeros((steps, model.n_unobserved), dtype=np.int8)
    hit = jumps >= 0
    n[np.nonzero(hit)[0], jumps[hit]] = 1
    states = np.einsum("ti,tj->tij", psis, psis.conj())
    return Record(dt, y, n, t0=t0), states


def pure_vector(rho) -> np.ndarray:
    """State vector of a (numerically) pure density matrix."""
    vals, vecs = np.linalg.eigh(rho)
    psi = vecs[:, -1]
    # fix the global phase so the largest component is real positive
    k = int(np.argmax(np.abs(psi)))
    return psi * (abs(psi[k]) / psi[k])
