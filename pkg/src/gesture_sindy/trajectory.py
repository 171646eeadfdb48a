"""Uniformly sampled kinematic time series and their CSV round trip.

The on-disk format is a plain CSV with header ``t,x,v`` or ``t,x,v,a``
and one row per sample. Floats are written with ``repr`` so a read
back reproduces the arrays bit for bit.
"""

import csv
from dataclasses import dataclass

import numpy as np

from .errors import DataFormatError

__all__ = ["Trajectory", "read_trajectory_csv", "write_trajectory_csv"]

# absolute slack (seconds) allowed on sample spacing
DT_TOL = 1e-9


def _frozen_array(values, name):
    arr = np.asarray(values, dtype=float)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be 1-D, got shape {arr.shape}")
    arr = arr.copy()
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class Trajectory:
    """Position/velocity (and optionally acceleration) on a uniform grid.

    t must be strictly increasing with constant spacing to within
    ``DT_TOL`` seconds; x and v (and a, if given) must be finite and
    the same length as t. Arrays are stored read-only.
    """

    t: np.ndarray
    x: np.ndarray
    v: np.ndarray
    a: np.ndarray = None

    def __post_init__(self):
        t = _frozen_array(self.t, "t")
        x = _frozen_array(self.x, "x")
        v = _frozen_array(self.v, "v")
        a = None if self.a is None else _frozen_array(self.a, "a")
        if t.size < 2:
            raise ValueError("a trajectory needs at least two samples")
        lengths = {t.size, x.size, v.size} | ({a.size} if a is not None else set())
        if len(lengths) != 1:
            raise ValueError("t, x, v, a must share one length")
        steps = np.diff(t)
        if not np.all(steps > 0):
            raise ValueError("t must be strictly increasing")
        dt = float(t[1] - t[0])
        if np.max(np.abs(steps - dt)) > DT_TOL:
            raise ValueError("t must be uniformly spaced")
        for name, arr in (("x", x), ("v", v), ("a", a)):
            if arr is not None and not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} contains non-finite values")
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "v", v)
        object.__setattr__(self, "a", a)

    @property
    def dt(self):
        return float(self.t[1] - self.t[0])

    @property
    def duration(self):
        return float(self.t[-1] - self.t[0])

    def __len__(self):
        return self.t.size


def write_trajectory_csv(path, traj):
    """Write ``traj`` to ``path`` with header t,x,v[,a]."""
    has_a = traj.a is not None
    with open(path, "w", newline="") as fh:
        fh.write("t,x,v,a\n" if has_a else "t,x,v\n")
        for i in range(len(traj)):
            row = [repr(float(traj.t[i])), repr(float(traj.x[i])), repr(float(traj.v[i]))]
            if has_a:
                row.append(repr(float(traj.a[i])))
            fh.write(",".join(row) + "\n")


def read_trajectory_csv(path):
    """Parse a t,x,v[,a] CSV back into a :class:`Trajectory`."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataFormatError("empty file", path=path, line=1) from None
        header = [h.strip() for h in header]
        if header == ["t", "x", "v"]:
            has_a = False
        elif header == ["t", "x", "v", "a"]:
            has_a = True
        else:
            raise DataFormatError(
                f"expected header t,x,v[,a], got {','.join(header)}", path=path, line=1
            )
        width = 4 if has_a else 3
        columns = [[] for _ in range(width)]
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != width:
                raise DataFormatError(
                    f"expected {width} fields, got {len(row)}", path=path, line=lineno
                )
            try:
                values = [float(field) for field in row]
            except ValueError:
                raise DataFormatError("non-numeric field", path=path, line=lineno) from None
            for col, value in zip(columns, values):
                col.append(value)
    if len(columns[0]) < 2:
        raise DataFormatError("fewer than two data rows", path=path, line=1)
    try:
        return Trajectory(
            t=columns[0], x=columns[1], v=columns[2], a=columns[3] if has_a else None
        )
    except ValueError as exc:
        raise DataFormatError(str(exc), path=path) from exc
