"""GOE/GUE-type matrix paths and the canonical vector <-> matrix identifications.

A real symmetric d x d matrix is stored as the length d(d+1)/2 vector of its
upper triangle read row by row.  A Hermitian matrix is stored as a real
vector of length d^2: the first d(d+1)/2 slots hold the diagonal and the real
parts of the upper triangle (row by row), the trailing d(d-1)/2 slots the
imaginary parts of the strict upper triangle in the same order.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field

import numpy as np

from . import seeds
from .errors import ConfigError, ShapeError
from .field import CovarianceKernel, GridSpec, grid_factor

SQRT2 = math.sqrt(2.0)


def sym_length(d):
    return d * (d + 1) // 2


def herm_length(d):
    return d * d


def vec_length(beta, d):
    return sym_length(d) if beta == 1 else herm_length(d)


def dim_from_length(length, beta):
    if beta == 1:
        d = int(round((math.isqrt(8 * length + 1) - 1) / 2))
        if sym_length(d) != length:
            raise ShapeError(f"length {length} is not d(d+1)/2")
    else:
        d = math.isqrt(length)
        if d * d != length:
            raise ShapeError(f"length {length} is not a square")
    if d < 1:
        raise ShapeError("empty vector")
    return d


@functools.lru_cache(maxsize=None)
def _sym_index(d):
    """0-based (row, col, slot) triples for i <= j, from x~_ij = x_{i(2d-i+1)/2 - d + j}."""
    rows, cols, slots = [], [], []
    for i in range(1, d + 1):
        for j in range(i, d + 1):
            rows.append(i - 1)
            cols.append(j - 1)
            slots.append(i * (2 * d - i + 1) // 2 - d + j - 1)
    return np.array(rows), np.array(cols), np.array(slots)


@functools.lru_cache(maxsize=None)
def _herm_index(d):
    """0-based slots of the real and imaginary parts of the strict upper triangle."""
    diag = np.array([(i - 1) * (2 * d - i + 2) // 2 for i in range(1, d + 1)])
    rows, cols, re_slots, im_slots = [], [], [], []
    for i in range(1, d + 1):
        for j in range(i + 1, d + 1):
            rows.append(i - 1)
            cols.append(j - 1)
            re_slots.append((i - 1) * (2 * d - i + 2) // 2 + j - i)
            im_slots.append(d * (d + 1) // 2 + (i - 1) * (2 * d - i) // 2 + j - i - 1)
    return diag, np.array(rows, dtype=int), np.array(cols, dtype=int), \
        np.array(re_slots, dtype=int), np.array(im_slots, dtype=int)


def sym_identify(x):
    """Symmetric matrix (or stack of them, leading axes kept) from its vector."""
    x = np.asarray(x, dtype=float)
    d = dim_from_length(x.shape[-1], 1)
    rows, cols, slots = _sym_index(d)
    out = np.zeros(x.shape[:-1] + (d, d))
    out[..., rows, cols] = x[..., slots]
    out[..., cols, rows] = x[..., slots]
    return out


def sym_vectorize(m):
    m = np.asarray(m)
    d = m.shape[-1]
    if m.shape[-2] != d:
        raise ShapeError("matrix must be square")
    rows, cols, slots = _sym_index(d)
    out = np.empty(m.shape[:-2] + (sym_length(d),))
    out[..., slots] = m[..., rows, cols].real
    return out


def herm_identify(x):
    x = np.asarray(x, dtype=float)
    d = dim_from_length(x.shape[-1], 2)
    diag, rows, cols, re_slots, im_slots = _herm_index(d)
    out = np.zeros(x.shape[:-1] + (d, d), dtype=complex)
    idx = np.arange(d)
    out[..., idx, idx] = x[..., diag]
    upper = x[..., re_slots] + 1j * x[..., im_slots]
    out[..., rows, cols] = upper
    out[..., cols, rows] = np.conj(upper)
    return out


def herm_vectorize(m):
    m = np.asarray(m)
    d = m.shape[-1]
    if m.shape[-2] != d:
        raise ShapeError("matrix must be square")
    diag, rows, cols, re_slots, im_slots = _herm_index(d)
    out = np.empty(m.shape[:-2] + (herm_length(d),))
    idx = np.arange(d)
    out[..., diag] = m[..., idx, idx].real
    out[..., re_slots] = m[..., rows, cols].real
    out[..., im_slots] = m[..., rows, cols].imag
    return out


def identify(x, beta):
    return sym_identify(x) if beta == 1 else herm_identify(x)


def vectorize(m, beta):
    return sym_vectorize(m) if beta == 1 else herm_vectorize(m)


def driver_keys(beta, d):
    """(i, j, component) for every independent field copy, 0-based, i <= j."""
    keys = [(i, j, 0) for i in range(d) for j in range(i, d)]
    if beta == 2:
        keys += [(i, j, 1) for i in range(d) for j in range(i + 1, d)]
    return keys


def drivers_to_vectors(values, beta, d):
    """Map driver values (..., n_drivers) ordered as ``driver_keys`` to X in vector form.

    Slot order of the real block coincides with driver order, so only the
    diagonal needs the sqrt(2) factor; the imaginary block is appended as is.
    """
    out = np.array(values, dtype=float, copy=True)
    diag = np.array([i * (2 * d - i + 1) // 2 for i in range(d)])
    out[..., diag] *= SQRT2
    return out


@dataclass(frozen=True)
class ProcessConfig:
    beta: int
    d: int
    kernel: CovarianceKernel
    grid: GridSpec
    seed: int = 0
    shift: np.ndarray = None

    def __post_init__(self):
        if self.beta not in (1, 2):
            raise ConfigError("beta must be 1 or 2")
        if int(self.d) < 2:
            raise ConfigError("d must be at least 2")
        if self.kernel.n != self.grid.n:
            raise ConfigError("kernel and grid dimensions differ")
        shift = np.zeros((self.d, self.d)) if self.shift is None else np.asarray(self.shift)
        if shift.shape != (self.d, self.d):
            raise ConfigError(f"shift must be {self.d}x{self.d}")
        if self.beta == 1:
            if np.iscomplexobj(shift) and np.any(shift.imag != 0):
                raise ConfigError("beta=1 needs a real shift")
            shift = shift.real.astype(float)
            if not np.array_equal(shift, shift.T):
                raise ConfigError("shift must be exactly symmetric")
        else:
            shift = shift.astype(complex)
            if not np.array_equal(shift, shift.conj().T):
                raise ConfigError("shift must be exactly Hermitian")
        shift.setflags(write=False)
        object.__setattr__(self, "shift", shift)

    def __hash__(self):
        return hash((self.beta, self.d, self.kernel, self.grid, self.seed, self.shift.tobytes()))

    def __eq__(self, other):
        return (isinstance(other, ProcessConfig)
                and (self.beta, self.d, self.kernel, self.grid, self.seed)
                == (other.beta, other.d, other.kernel, other.grid, other.seed)
                and np.array_equal(self.shift, other.shift))

    @property
    def vec_length(self):
        return vec_length(self.beta, self.d)

    @property
    def shift_vector(self):
        return vectorize(self.shift, self.beta)

    def to_dict(self):
        return {
            "beta": self.beta,
            "d": self.d,
            "kernel": self.kernel.kind,
            "hurst": list(self.kernel.hurst.h),
            "a": list(self.grid.a),
            "b": list(self.grid.b),
            "resolution": list(self.grid.resolution),
            "seed": int(self.seed),
            "shift": self.shift_vector.tolist(),
        }


class FunctionRefiner:
    """Evaluates a deterministic matrix-valued function at new points."""

    def __init__(self, fn, beta):
        self.fn = fn
        self.beta = beta

    def sample(self, points):
        return np.stack([np.asarray(self.fn(p), dtype=float) for p in np.atleast_2d(points)])


class FieldRefiner:
    """Conditional resampling of a random path's driving fields at new points."""

    def __init__(self, path):
        from .field import ConditionalSampler
        cfg = path.config
        factor = grid_factor(cfg.kernel, cfg.grid)
        self.path = path
        self.sampler = ConditionalSampler(cfg.kernel, path.points, factor, path.normals)
        self.streams = [seeds.generator(path.seed_path[0], path.seed_path[1], seeds.STAGE_REFINE, *key)
                        for key in path.driver_keys]

    def sample(self, points):
        points = np.atleast_2d(points)
        normals = np.stack([g.standard_normal(points.shape[0]) for g in self.streams], axis=1)
        drivers = self.sampler.sample(points, normals)
        cfg = self.path.config
        return cfg.shift_vector + drivers_to_vectors(drivers, cfg.beta, cfg.d)


@dataclass(frozen=True)
class MatrixPath:
    """Y(t) = A + X(t) on the grid, stored in canonical vector form."""

    config: ProcessConfig
    points: np.ndarray
    entries: np.ndarray
    driver_keys: tuple = ()
    normals: np.ndarray = None
    seed_path: tuple = ()
    source: object = None
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        self.entries.setflags(write=False)

    @property
    def driver_count(self):
        return len(self.driver_keys)

    @property
    def beta(self):
        return self.config.beta

    @property
    def d(self):
        return self.config.d

    def matrices(self):
        return identify(self.entries, self.beta)

    def refiner(self):
        if self.source is not None:
            return FunctionRefiner(self.source, self.beta)
        if self.normals is None:
            return None
        return FieldRefiner(self)

    @classmethod
    def from_function(cls, fn, config):
        """Deterministic path t -> vector(Y(t)); refinement evaluates ``fn`` exactly."""
        pts = config.grid.points()
        entries = np.stack([np.asarray(fn(p), dtype=float) for p in pts])
        if entries.shape[1] != config.vec_length:
            raise ShapeError("function returns vectors of the wrong length")
        return cls(config, pts, entries, source=fn)

    @classmethod
    def from_entries(cls, config, entries):
        entries = np.asarray(entries, dtype=float)
        if entries.shape != (config.grid.size, config.vec_length):
            raise ShapeError("entries do not match the grid and matrix size")
        return cls(config, config.grid.points(), entries)

    def to_csv(self, path):
        """Real paths: one row per vector slot.  Complex paths: one row per upper-triangle entry with re/im."""
        from .io import write_csv
        n = self.points.shape[1]
        head = [f"t_{j + 1}" for j in range(n)]
        if self.beta == 1:
            rows = (list(p) + [idx + 1, v]
                    for p, row in zip(self.points, self.entries) for idx, v in enumerate(row))
            return write_csv(path, head + ["vec_index", "value"], rows)
        rows_i, cols_j = np.triu_indices(self.d)
        mats = self.matrices()
        rows = (list(p) + [e + 1, m[i, j].real, m[i, j].imag]
                for p, m in zip(self.points, mats) for e, (i, j) in enumerate(zip(rows_i, cols_j)))
        return write_csv(path, head + ["entry_index", "re", "im"], rows)

    def manifest(self):
        return {
            "config": self.config.to_dict(),
            "seed_path": list(self.seed_path),
            "driver_count": self.driver_count,
            "vec_length": self.config.vec_length,
            "points": int(self.points.shape[0]),
        }


def assemble_path(config, replicate=0):
    """Draw one path Y = A + X with independent drivers per canonical entry."""
    keys = driver_keys(config.beta, config.d)
    factor = grid_factor(config.kernel, config.grid)
    normals = np.stack(
        [seeds.generator(config.seed, replicate, seeds.STAGE_BASE, *key).standard_normal(config.grid.size)
         for key in keys], axis=1)
    drivers = factor @ normals
    entries = config.shift_vector + drivers_to_vectors(drivers, config.beta, config.d)
    normals.setflags(write=False)
    return MatrixPath(config, config.grid.points(), entries, tuple(keys), normals,
                      (int(config.seed), int(replicate)))
