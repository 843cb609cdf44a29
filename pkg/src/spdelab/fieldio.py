"""Space-time fields on uniform grids and their CSV / binary / JSON layouts.

Binary layout (little-endian throughout):

    magic   4 bytes  b"SPDF"
    version u32      1
    d       u32      number of spatial axes
    seed    u64
    n       u64      number of samples
    nt      u64      number of times
    times   nt x f64
    for each spatial axis: length u64, then length x f64 coordinates
    values  n x nt x (axis lengths) x f64, C order
"""

import csv
import json
import struct
from dataclasses import dataclass, field

import numpy as np

MAGIC = b"SPDF"
VERSION = 1


@dataclass
class Field:
    """Values on times x spatial axes; `values` may carry a leading sample axis."""

    times: np.ndarray
    axes: tuple
    values: np.ndarray
    seed: int = 0
    meta: dict = field(default_factory=dict)

    @property
    def dimension(self):
        return len(self.axes)

    @property
    def grid_shape(self):
        return (len(self.times),) + tuple(len(a) for a in self.axes)

    @property
    def n_samples(self):
        extra = self.values.ndim - len(self.grid_shape)
        return self.values.shape[0] if extra == 1 else 1

    def samples(self):
        """Values with an explicit leading sample axis."""
        if self.values.ndim == len(self.grid_shape):
            return self.values[None]
        return self.values

    def restrict(self, L):
        """Sub-field on [-L, L]^d."""
        idx = [np.nonzero(np.abs(a) <= L + 1e-9)[0] for a in self.axes]
        vals = self.values
        lead = vals.ndim - len(self.grid_shape)
        for k, ix in enumerate(idx):
            vals = np.take(vals, ix, axis=lead + 1 + k)
        axes = tuple(a[ix] for a, ix in zip(self.axes, idx))
        return Field(self.times, axes, vals, self.seed, dict(self.meta))


def write_binary(path, f):
    vals = np.ascontiguousarray(f.samples(), dtype="<f8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<IIQQQ", VERSION, f.dimension, int(f.seed) & (2 ** 64 - 1),
                             vals.shape[0], len(f.times)))
        fh.write(np.asarray(f.times, dtype="<f8").tobytes())
        for a in f.axes:
            fh.write(struct.pack("<Q", len(a)))
            fh.write(np.asarray(a, dtype="<f8").tobytes())
        fh.write(vals.tobytes())


def read_binary(path):
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != MAGIC:
        raise ValueError("not a field file")
    version, d, seed, n, nt = struct.unpack_from("<IIQQQ", data, 4)
    if version != VERSION:
        raise ValueError(f"unsupported field version {version}")
    off = 4 + struct.calcsize("<IIQQQ")
    times = np.frombuffer(data, "<f8", nt, off).copy()
    off += 8 * nt
    axes = []
    for _ in range(d):
        (m,) = struct.unpack_from("<Q", data, off)
        off += 8
        axes.append(np.frombuffer(data, "<f8", m, off).copy())
        off += 8 * m
    shape = (n, nt) + tuple(len(a) for a in axes)
    vals = np.frombuffer(data, "<f8", int(np.prod(shape)), off).reshape(shape).copy()
    return Field(times, tuple(axes), vals, seed)


def write_csv(path, f, sample=0):
    """One row per grid node: t, x_1..x_d, value (a single sample)."""
    vals = f.samples()[sample]
    names = ["t"] + [f"x{k + 1}" for k in range(f.dimension)] + ["value"]
    grids = np.meshgrid(f.times, *f.axes, indexing="ij")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(names)
        cols = [g.reshape(-1) for g in grids] + [vals.reshape(-1)]
        for row in zip(*cols):
            w.writerow([repr(float(x)) for x in row])


def write_rows(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow(row)


def _default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.bool_,)):
        return bool(o)
    if hasattr(o, "to_dict"):
        return o.to_dict()
    return repr(o)


def write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, default=_default, allow_nan=True)
        fh.write("\n")
