"""Measurement records and their columnar text format.

A record holds one homodyne value per observed channel and one photon count
per unobserved channel for each interval ``[t, t + dt)`` of a uniform grid.

Text format (``# qsmooth-record-v1``)::

    # qsmooth-record-v1
    # dt=0.001 t0=0.0 T=4.0 n_y=1 n_n=1
    step,y0,n0
    0,12.5,0
    ...

Floats are written with ``repr`` so a dump/load round trip is bit exact.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ContractError

RECORD_MAGIC = "# qsmooth-record-v1"


@dataclass(frozen=True)
class RecordStep:
    y: tuple
    n: tuple


class Record:
    """Time-ordered homodyne values ``y`` and counts ``n`` on a uniform grid."""

    def __init__(self, dt, y=None, n=None, t0=0.0, steps=None):
        if not dt > 0:
            raise ContractError("record time step must be positive")
        if y is None and n is None:
            if steps is None:
                raise ContractError("need y/n arrays or a step count")
            y = np.zeros((steps, 0))
        if y is None:
            y = np.zeros((len(n), 0))
        y = np.asarray(y, dtype=float)
        if y.ndim == 1:
            y = y[:, None]
        if n is None:
            n = np.zeros((len(y), 0), dtype=np.int8)
        n = np.asarray(n)
        if n.ndim == 1:
            n = n[:, None]
        if len(n) != len(y):
            raise ContractError("observed and unobserved records differ in length")
        if n.size and not np.isin(n, (0, 1)).all():
            raise ContractError("photon counts per step must be 0 or 1")
        n = n.astype(np.int8)
        y.setflags(write=False)
        n.setflags(write=False)
        self.dt = float(dt)
        self.t0 = float(t0)
        self.y = y
        self.n = n

    def __len__(self):
        return len(self.y)

    def __getitem__(self, k) -> RecordStep:
        if isinstance(k, slice):
            start = k.start or 0
            return Record(self.dt, self.y[k], self.n[k], t0=self.t0 + start * self.dt)
        return RecordStep(tuple(float(v) for v in self.y[k]), tuple(int(v) for v in self.n[k]))

    def __iter__(self):
        for k in range(len(self)):
            yield self[k]

    def __eq__(self, other):
        if not isinstance(other, Record):
            return NotImplemented
        return (
            self.dt == other.dt
            and self.t0 == other.t0
            and np.array_equal(self.y, other.y)
            and np.array_equal(self.n, other.n)
        )

    def __repr__(self):
        return (
            f"Record(dt={self.dt}, steps={len(self)}, n_y={self.n_y}, n_n={self.n_n}, "
            f"jumps={self.jump_count})"
        )

    @property
    def steps(self) -> list[RecordStep]:
        return list(self)

    @property
    def n_y(self) -> int:
        return self.y.shape[1]

    @property
    def n_n(self) -> int:
        return self.n.shape[1]

    @property
    def t_final(self) -> float:
        return self.t0 + len(self) * self.dt

    @property
    def times(self) -> np.ndarray:
        """Grid times ``t0 .. T`` (one more than the number of steps)."""
        return self.t0 + self.dt * np.arange(len(self) + 1)

    @property
    def jump_count(self) -> int:
        return int(self.n.sum())

    def observed(self) -> "Record":
        """The O-record alone (unobserved columns dropped)."""
        return Record(self.dt, self.y, None, t0=self.t0)

    def unobserved(self) -> "Record":
        return Record(self.dt, None, self.n, t0=self.t0)

    def with_counts(self, n) -> "Record":
        return Record(self.dt, self.y, n, t0=self.t0)


def _fmt(v: float) -> str:
    return repr(float(v))


def write_header(fh, magic, fields):
    fh.write(magic + "\n")
    fh.write("# " + " ".join(f"{k}={v}" for k, v in fields.items()) + "\n")


def read_header(lines, magic):
    if not lines or lines[0].strip() != magic:
        raise ContractError(f"missing {magic!r} header")
    fields = {}
    for item in lines[1].lstrip("#").split():
        key, _, value = item.partition("=")
        fields[key] = value
    return fields


def dump_record(record: Record, path=None) -> str:
    buf = io.StringIO()
    write_header(
        buf,
        RECORD_MAGIC,
        {
            "dt": _fmt(record.dt),
            "t0": _fmt(record.t0),
            "T": _fmt(record.t_final),
            "n_y": record.n_y,
            "n_n": record.n_n,
        },
    )
    cols = ["step"] + [f"y{j}" for j in range(record.n_y)] + [f"n{j}" for j in range(record.n_n)]
    buf.write(",".join(cols) + "\n")
    for k in range(len(record)):
        row = [str(k)] + [_fmt(v) for v in record.y[k]] + [str(int(v)) for v in record.n[k]]
        buf.write(",".join(row) + "\n")
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text)
    return text


def load_record(source) -> Record:
    """Parse a record from a path or from the text produced by :func:`dump_record`."""
    if isinstance(source, Path) or (isinstance(source, str) and "\n" not in source):
        source = Path(source).read_text()
    lines = source.splitlines()
    fields = read_header(lines, RECORD_MAGIC)
    n_y, n_n = int(fields["n_y"]), int(fields["n_n"])
    rows = [line.split(",") for line in lines[3:] if line.strip()]
    y = np.array([[float(v) for v in r[1 : 1 + n_y]] for r in rows], dtype=float).reshape(
        len(rows), n_y
    )
    n = np.array([[int(v) for v in r[1 + n_y :]] for r in rows], dtype=np.int8).reshape(
        len(rows), n_n
    )
    for k, r in enumerate(rows):
        if int(r[0]) != k:
            raise ContractError(f"record rows out of order at line {k + 4}")
    return Record(float(fields["dt"]), y, n, t0=float(fields["t0"]))
