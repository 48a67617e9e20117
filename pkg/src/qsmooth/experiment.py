"""End-to-end experiments: single trajectories, averaged purity, checks.

Seeding: every random stream is derived from the root seed by a key, so
the result of one record never depends on how records are scheduled.

* true record ``r``:          ``SeedSequence(seed, spawn_key=(0, r))``
* ostensible samples for ``r``: ``SeedSequence(seed, spawn_key=(1, r))``,
  spawned once more per sample inside :func:`qsmooth.smoother.smooth`.
"""

from __future__ import annotations

import json
import math
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from .errors import ContractError, ParameterError, QsmoothError
from .forward import filter_forward, filter_forward_joint, sample_true_record
from .hmm import hmm_filter, hmm_from_diagonal_model, hmm_smooth
from .model import dephased_decay_model, two_level_atom
from .operators import HERM_TOL, POS_TOL, TRACE_TOL, basis_state, bloch_components
from .records import Record
from .retrofilter import retrofilter_record
from .smoother import smooth

RESULTS_MAGIC = "# qsmooth-v1"


class InvariantError(QsmoothError, ArithmeticError):
    """A numerical invariant of the smoothed or true states failed."""


@dataclass(frozen=True)
class ExperimentConfig:
    omega: float = 20.0
    gamma: float = 1.0
    eta: float = 10 / 11
    phi: float = math.pi / 2
    dt: float = 1e-3
    t_final: float = 4.0
    n_y_records: int = 1
    n_u_samples: int = 1000
    seed: int = 0
    output_path: str | None = None
    output_format: str = "csv"
    kappa: float = 1.0
    record_index: int = 0

    def __post_init__(self):
        if not self.dt > 0 or not self.t_final > 0:
            raise ParameterError("dt and t_final must be positive")
        if self.n_y_records < 1 or self.n_u_samples < 1:
            raise ParameterError("record and sample counts must be at least 1")
        if self.output_format not in ("csv", "json"):
            raise ParameterError(f"unknown output format {self.output_format!r}")
        if not 0 <= self.seed < 2**64:
            raise ParameterError("seed must be a 64-bit unsigned integer")
        if not self.gamma > 0 or not 0 <= self.eta <= 1:
            raise ParameterError("need gamma > 0 and 0 <= eta <= 1")

    @property
    def steps(self) -> int:
        return int(round(self.t_final / self.dt))

    def model(self):
        return two_level_atom(self.omega, self.gamma, self.eta, self.phi)


def stream(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=key))


def worker_count() -> int:
    env = os.environ.get("QSMOOTH_THREADS")
    if env:
        try:
            n = int(env)
        except ValueError:
            raise ParameterError(f"QSMOOTH_THREADS must be an integer, got {env!r}") from None
        if n < 1:
            raise ParameterError("QSMOOTH_THREADS must be at least 1")
        return n
    return os.cpu_count() or 1


@dataclass
class RecordRun:
    """All grid quantities for one true (Y, N) pair."""

    record: Record
    times: np.ndarray
    rho_T: np.ndarray
    rho_F: np.ndarray
    rho_S: np.ndarray
    ess: np.ndarray
    stderr: np.ndarray

    @property
    def purity_F(self):
        return _purities(self.rho_F)

    @property
    def purity_S(self):
        return _purities(self.rho_S)

    @property
    def purity_T(self):
        return _purities(self.rho_T)

    @property
    def fidelity_F(self):
        return _overlaps(self.rho_T, self.rho_F)

    @property
    def fidelity_S(self):
        return _overlaps(self.rho_T, self.rho_S)

    @property
    def has_jump(self) -> bool:
        return self.record.jump_count > 0

    @property
    def jump_times(self) -> np.ndarray:
        return self.record.t0 + self.record.dt * np.nonzero(self.record.n.any(axis=1))[0]


def _purities(rhos):
    return np.einsum("tij,tji->t", rhos, rhos).real


def _overlaps(a, b):
    return np.einsum("tij,tji->t", a, b).real


def simulate_record(config: ExperimentConfig, index: int, model=None) -> RecordRun:
    """Generate true record ``index`` and compute its true, filtered and smoothed states."""
    model = model or config.model()
    rho0 = basis_state(1, model.dim)
    record, rho_T = sample_true_record(model, rho0, config.steps, config.dt, stream(config.seed, 0, index))
    observed = record.observed()
    filtered = filter_forward(model, observed, rho0)
    effects = retrofilter_record(model, observed)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        smoothed = smooth(
            model, observed, rho0, config.n_u_samples, stream(config.seed, 1, index), filtered, effects
        )
    return RecordRun(
        record, record.times, rho_T, filtered.states, smoothed.states, smoothed.ess, smoothed.stderr
    )


def structural_violations(rhos: np.ndarray) -> dict:
    """Worst Hermiticity defect, lowest eigenvalue and trace error over a stack of states."""
    herm = np.abs(rhos - rhos.conj().swapaxes(-1, -2)).max()
    hermitian = 0.5 * (rhos + rhos.conj().swapaxes(-1, -2))
    min_eig = np.linalg.eigvalsh(hermitian)[:, 0].min()
    trace_err = np.abs(np.trace(rhos, axis1=1, axis2=2) - 1).max()
    return {"herm_defect": float(herm), "min_eig": float(min_eig), "trace_err": float(trace_err)}


def check_run(run: RecordRun, rho0=None):
    """Raise :class:`InvariantError` if a smoothed or true state breaks its invariants."""
    v = structural_violations(run.rho_S)
    if v["herm_defect"] > HERM_TOL or v["min_eig"] < -POS_TOL or v["trace_err"] > TRACE_TOL:
        raise InvariantError(f"smoothed state invariants violated: {v}")
    if rho0 is not None and not (
        np.array_equal(run.rho_S[0], rho0) and np.array_equal(run.rho_F[0], rho0)
    ):
        raise InvariantError("smoothed/filtered state at t0 differs from the initial state")


def metrics_rows(run: RecordRun) -> list[dict]:
    bF, bS, bT = (bloch_components(r) for r in (run.rho_F, run.rho_S, run.rho_T))
    cols = {
        "t": run.times,
        "purity_F": run.purity_F,
        "purity_S": run.purity_S,
        "fidelity_F": run.fidelity_F,
        "fidelity_S": run.fidelity_S,
    }
    for name, b in (("F", bF), ("S", bS), ("T", bT)):
        for i, axis in enumerate("xyz"):
            cols[f"bloch_{name}_{axis}"] = b[:, i]
    cols["ess"] = run.ess
    keys = list(cols)
    return [{k: float(cols[k][i]) for k in keys} for i in range(len(run.times))]


def run_single_trajectory(config: ExperimentConfig):
    """Single-record comparison of true, filtered and smoothed states.

    Returns the metric rows and the underlying :class:`RecordRun`.
    """
    run = simulate_record(config, config.record_index)
    check_run(run, basis_state(1))
    return metrics_rows(run), run


@dataclass
class AverageResult:
    times: np.ndarray
    purity_F: np.ndarray
    purity_S: np.ndarray
    fidelity_F: np.ndarray
    fidelity_S: np.ndarray
    purity_T_min: np.ndarray
    jumps: np.ndarray
    ess_min: np.ndarray
    final_gap: np.ndarray
    initial_exact: np.ndarray
    violations: list
    window: tuple

    @property
    def n_records(self) -> int:
        return len(self.purity_F)

    @property
    def mean_purity_F(self):
        return self.purity_F.mean(axis=0)

    @property
    def mean_purity_S(self):
        return self.purity_S.mean(axis=0)

    def window_mask(self):
        lo, hi = self.window
        return (self.times >= lo - 1e-12) & (self.times <= hi + 1e-12)

    @property
    def recovery_fraction(self) -> float:
        """Fraction of the filtered purity deficit recovered by smoothing.

        Purities are averaged over records and over the steady-state window
        before forming the ratio.
        """
        w = self.window_mask()
        pF = self.mean_purity_F[w].mean()
        pS = self.mean_purity_S[w].mean()
        return float((pS - pF) / (1 - pF))

    def rows(self) -> list[dict]:
        n = self.n_records
        se = lambda x: x.std(axis=0, ddof=1) / np.sqrt(n) if n > 1 else np.zeros(x.shape[1])  # noqa: E731
        cols = {
            "t": self.times,
            "mean_purity_F": self.mean_purity_F,
            "mean_purity_S": self.mean_purity_S,
            "se_purity_F": se(self.purity_F),
            "se_purity_S": se(self.purity_S),
            "mean_fidelity_F": self.fidelity_F.mean(axis=0),
            "mean_fidelity_S": self.fidelity_S.mean(axis=0),
        }
        keys = list(cols)
        return [{k: float(cols[k][i]) for k in keys} for i in range(len(self.times))]

    def summary(self) -> dict:
        return {
            "n_records": self.n_records,
            "recovery_fraction": self.recovery_fraction,
            "window_start": self.window[0],
            "window_end": self.window[1],
            "records_with_jumps": int((self.jumps > 0).sum()),
        }


def _summarise(run: RecordRun, rho0):
    return {
        "purity_F": run.purity_F,
        "purity_S": run.purity_S,
        "fidelity_F": run.fidelity_F,
        "fidelity_S": run.fidelity_S,
        "purity_T_min": run.purity_T.min(),
        "jumps": run.record.jump_count,
        "ess_min": run.ess.min(),
        "final_gap": np.abs(run.rho_S[-1] - run.rho_F[-1]).max(),
        "initial_exact": bool(
            np.array_equal(run.rho_S[0], rho0) and np.array_equal(run.rho_F[0], rho0)
        ),
        "violations": structural_violations(run.rho_S),
    }


def run_average_purity(config: ExperimentConfig, workers: int | None = None) -> AverageResult:
    """Average purity and fidelity over ``n_y_records`` true records."""
    model = config.model()
    rho0 = basis_state(1)

    def one(r):
        return _summarise(simulate_record(config, r, model), rho0)

    workers = workers or worker_count()
    indices = range(config.n_y_records)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(one, indices))
    else:
        parts = [one(r) for r in indices]
    stack = lambda key: np.array([p[key] for p in parts])  # noqa: E731
    times = config.dt * np.arange(config.steps + 1)
    return AverageResult(
        times=times,
        purity_F=stack("purity_F"),
        purity_S=stack("purity_S"),
        fidelity_F=stack("fidelity_F"),
        fidelity_S=stack("fidelity_S"),
        purity_T_min=stack("purity_T_min"),
        jumps=stack("jumps"),
        ess_min=stack("ess_min"),
        final_gap=stack("final_gap"),
        initial_exact=stack("initial_exact"),
        violations=[p["violations"] for p in parts],
        window=(config.t_final / 2, 0.9 * config.t_final),
    )


def check_average(result: AverageResult):
    for v in result.violations:
        if v["herm_defect"] > HERM_TOL or v["min_eig"] < -POS_TOL or v["trace_err"] > TRACE_TOL:
            raise InvariantError(f"smoothed state invariants violated: {v}")
    if not result.initial_exact.all():
        raise InvariantError("smoothed/filtered state at t0 differs from the initial state")


@dataclass
class HmmCheck:
    dev_F: np.ndarray
    dev_S: np.ndarray
    abs_F: float
    abs_S: float

    @staticmethod
    def _z(x):
        se = x.std(ddof=1) / np.sqrt(len(x)) if len(x) > 1 else np.inf
        return float(abs(x.mean()) / se) if se > 0 else 0.0

    @property
    def z_F(self) -> float:
        return self._z(self.dev_F)

    @property
    def z_S(self) -> float:
        return self._z(self.dev_S)

    def summary(self) -> dict:
        return {
            "records": len(self.dev_F),
            "mean_dev_F": float(self.dev_F.mean()),
            "mean_dev_S": float(self.dev_S.mean()),
            "z_F": self.z_F,
            "z_S": self.z_S,
            "max_abs_dev_F": self.abs_F,
            "max_abs_dev_S": self.abs_S,
        }


def run_hmm_check(config: ExperimentConfig) -> HmmCheck:
    """Compare quantum and classical smoothers on an undriven diagonal qubit.

    The quantum model is :func:`qsmooth.model.dephased_decay_model` with decay
    ``gamma`` (unobserved) and a ``sigma_z`` homodyne of strength ``kappa``.
    The local-oscillator phase is fixed at zero: for a Hermitian measured
    operator any other phase only shrinks the signal, and ``phi = pi/2``
    removes it entirely.  ``config.phi`` is therefore ignored.
    Per record the excited-state population deviation is averaged over the
    grid; the returned z-scores test that these deviations average to zero.
    """
    if config.omega != 0:
        raise ParameterError("the HMM reduction needs an undriven model (omega = 0)")
    model = dephased_decay_model(config.gamma, config.kappa, 0.0)
    hmm = hmm_from_diagonal_model(model, config.dt)
    rho0 = basis_state(1)
    prior = np.array([0.0, 1.0])

    def one(r):
        record, _ = sample_true_record(model, rho0, config.steps, config.dt, stream(config.seed, 0, r))
        observed = record.observed()
        filtered = filter_forward(model, observed, rho0)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            smoothed = smooth(
                model, observed, rho0, config.n_u_samples, stream(config.seed, 1, r), filtered
            )
        pF = hmm_filter(hmm, record.y, prior).probs[:, 1]
        pS = hmm_smooth(hmm, record.y, prior)[:, 1]
        dF = filtered.states[:, 1, 1].real - pF
        dS = smoothed.states[:, 1, 1].real - pS
        return dF[1:].mean(), dS[1:].mean(), np.abs(dF).max(), np.abs(dS).max()

    parts = [one(r) for r in range(config.n_y_records)]
    a = np.array(parts)
    return HmmCheck(a[:, 0], a[:, 1], float(a[:, 2].max()), float(a[:, 3].max()))


def run_convergence(config: ExperimentConfig) -> list[dict]:
    """Rerun one record at ``dt`` and ``dt/2`` and report the drift.

    The fine record is sampled at ``dt/2``; the coarse record is obtained by
    averaging pairs of homodyne values and merging pairs of counts, so both
    grids see the same noise realisation.
    """
    model = config.model()
    rho0 = basis_state(1)
    fine_dt = config.dt / 2
    fine, rho_T_fine = sample_true_record(
        model, rho0, 2 * config.steps, fine_dt, stream(config.seed, 0, config.record_index)
    )
    y = 0.5 * (fine.y[0::2] + fine.y[1::2])
    n = np.minimum(fine.n[0::2] + fine.n[1::2], 1)
    coarse = Record(config.dt, y, n)
    out = {}
    for name, rec in (("coarse", coarse), ("fine", fine)):
        obs = rec.observed()
        f = filter_forward(model, obs, rho0)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            s = smooth(
                model, obs, rho0, config.n_u_samples, stream(config.seed, 1, config.record_index), f
            )
        out[name] = (f.states, s.states)
    rho_T_coarse = filter_forward_joint(model, coarse, None, rho0, ostensible=False).states
    fF, fS = out["fine"]
    cF, cS = out["coarse"]
    rows = []
    for i in range(config.steps + 1):
        j = 2 * i
        rows.append(
            {
                "t": i * config.dt,
                "drift_F": float(np.abs(cF[i] - fF[j]).max()),
                "drift_S": float(np.abs(cS[i] - fS[j]).max()),
                "drift_T": float(np.abs(rho_T_coarse[i] - rho_T_fine[j]).max()),
            }
        )
    return rows


def _format(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_results(rows: list[dict], path, fmt: str = "csv", meta: dict | None = None) -> str:
    """Write rows as versioned CSV (metadata in ``# key=value`` lines) or JSON."""
    if fmt == "json":
        text = json.dumps(rows, indent=1) + "\n"
    elif fmt == "csv":
        lines = [RESULTS_MAGIC]
        for k, v in (meta or {}).items():
            lines.append(f"# {k}={_format(v)}")
        keys = list(rows[0]) if rows else []
        lines.append(",".join(keys))
        for row in rows:
            lines.append(",".join(_format(row[k]) for k in keys))
        text = "\n".join(lines) + "\n"
    else:
        raise ContractError(f"unknown output format {fmt!r}")
    if path is not None:
        Path(path).write_text(text)
    return text


def config_dict(config: ExperimentConfig) -> dict:
    return {f.name: getattr(config, f.name) for f in fields(config) if f.name != "output_path"}


__all__ = [
    "AverageResult",
    "ExperimentConfig",
    "HmmCheck",
    "InvariantError",
    "RecordRun",
    "check_average",
    "check_run",
    "metrics_rows",
    "run_average_purity",
    "run_convergence",
    "run_hmm_check",
    "run_single_trajectory",
    "simulate_record",
    "stream",
    "write_results",
]
