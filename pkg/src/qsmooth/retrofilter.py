"""Backward propagation of effect operators conditioned on the future record."""

from __future__ import annotations

import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import _kernels
from .errors import ContractError, PositivityError
from .forward import jump_operators, no_jump_operator, no_jump_operators
from .model import OpenSystemModel
from .operators import POS_TOL, check_effect, dag, hermitize
from .records import Record, _fmt, read_header, write_header

EFFECT_MAGIC = "# qsmooth-effects-v1"


@dataclass(frozen=True)
class EffectGrid:
    """Retrofiltered effects on the grid.

    ``effects[k]`` is stored with unit trace; the actual effect is
    ``effects[k] * exp(log_scale[k])``.  The last entry is the identity.
    """

    dt: float
    effects: np.ndarray
    log_scale: np.ndarray
    t0: float = 0.0

    def __len__(self):
        return len(self.effects)

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(len(self.effects))

    def unnormalized(self, k: int) -> np.ndarray:
        return self.effects[k] * np.exp(self.log_scale[k])


def effect_back_step(model: OpenSystemModel, E_next, y, dt: float) -> np.ndarray:
    """Adjoint of the observed-only operation applied to ``E(t + dt)``.

    ``E(t) = K0(y)^dagger E K0(y) + sum_j c_j^dagger E c_j dt``.
    """
    E_next = check_effect(E_next)
    K = no_jump_operator(model, y, dt)
    out = dag(K) @ E_next @ K
    for ch in model.unobserved:
        out = out + dag(ch.L) @ E_next @ ch.L * dt
    out = hermitize(out)
    lam = np.linalg.eigvalsh(out)[0]
    if lam < -POS_TOL * max(1.0, float(np.max(np.abs(out)))):
        raise PositivityError(lam)
    return out


def retrofilter_record(model: OpenSystemModel, record_Y: Record) -> EffectGrid:
    if record_Y.n_y != model.n_observed:
        raise ContractError("record and model disagree on the number of observed channels")
    effects, logs, bad = _kernels.retrofilter(
        no_jump_operators(model, record_Y), jump_operators(model, record_Y.dt)
    )
    if bad >= 0:
        raise PositivityError(0.0, f"retrofiltered effect lost positivity at step {bad}")
    return EffectGrid(record_Y.dt, effects, logs, record_Y.t0)


def record_consistency(effects: EffectGrid, filtered) -> np.ndarray:
    """``log Tr[E(t) rho_F(t)]`` with both scale factors restored.

    For a correct pair of passes over one record this is constant in ``t``.
    """
    overlap = np.einsum("tij,tji->t", effects.effects, filtered.states).real
    return np.log(overlap) + effects.log_scale + filtered.log_weights


def dump_effects(grid: EffectGrid, path=None) -> str:
    d = grid.effects.shape[1]
    buf = io.StringIO()
    write_header(
        buf,
        EFFECT_MAGIC,
        {"dt": _fmt(grid.dt), "t0": _fmt(grid.t0), "points": len(grid), "dim": d},
    )
    cols = ["step", "log_scale"]
    for i in range(d):
        for j in range(d):
            cols += [f"e{i}{j}_re", f"e{i}{j}_im"]
    buf.write(",".join(cols) + "\n")
    for k in range(len(grid)):
        row = [str(k), _fmt(grid.log_scale[k])]
        for v in grid.effects[k].ravel():
            row += [_fmt(v.real), _fmt(v.imag)]
        buf.write(",".join(row) + "\n")
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text)
    return text


def load_effects(source) -> EffectGrid:
    if isinstance(source, Path) or (isinstance(source, str) and "\n" not in source):
        source = Path(source).read_text()
    lines = source.splitlines()
    fields = read_header(lines, EFFECT_MAGIC)
    d = int(fields["dim"])
    rows = [line.split(",") for line in lines[3:] if line.strip()]
    logs = np.array([float(r[1]) for r in rows])
    flat = np.array([[float(v) for v in r[2:]] for r in rows]).reshape(len(rows), d * d, 2)
    effects = (flat[..., 0] + 1j * flat[..., 1]).reshape(len(rows), d, d)
    return EffectGrid(float(fields["dt"]), effects, logs, float(fields["t0"]))
