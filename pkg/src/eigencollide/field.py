"""Exact synthesis of centered Gaussian fields on rectangular grids.

Two kernels are built in: isotropic fractional Brownian motion and the
fractional Brownian sheet (product of one-dimensional fBm kernels).  Fields
are drawn by Cholesky factorization of the grid covariance, so every sample
has exactly the prescribed law; the factor is cached per (kernel, grid) and
shared by all drivers and replicates.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular

from . import seeds
from .errors import ConfigError, DomainError, KernelNotPSDError, ResourceError, ShapeError

ISOTROPIC_FBM = "isotropic-fbm"
FRACTIONAL_SHEET = "fractional-brownian-sheet"
KERNEL_KINDS = (ISOTROPIC_FBM, FRACTIONAL_SHEET)

DEFAULT_POINT_BUDGET = 4096
JITTER_LIMIT = 1e-10


@dataclass(frozen=True)
class HurstVector:
    h: tuple

    def __post_init__(self):
        h = tuple(float(x) for x in np.atleast_1d(self.h))
        if not h:
            raise DomainError("Hurst vector must be nonempty")
        for x in h:
            if not 0.0 < x < 1.0:
                raise DomainError(f"Hurst index {x} outside (0, 1)")
        object.__setattr__(self, "h", h)

    @property
    def n(self):
        return len(self.h)

    @property
    def q(self):
        """Exponent sum Q = sum of 1/H_j."""
        return math.fsum(1.0 / x for x in self.h)

    def sorted(self):
        return HurstVector(tuple(sorted(self.h)))


@dataclass(frozen=True)
class GridSpec:
    a: tuple
    b: tuple
    resolution: tuple
    budget: int = DEFAULT_POINT_BUDGET

    def __post_init__(self):
        a = tuple(float(x) for x in np.atleast_1d(self.a))
        b = tuple(float(x) for x in np.atleast_1d(self.b))
        res = tuple(int(x) for x in np.atleast_1d(self.resolution))
        if not (len(a) == len(b) == len(res)):
            raise ShapeError("grid endpoints and resolution must have equal length")
        for lo, hi, r in zip(a, b, res):
            if lo < 0:
                raise DomainError("grid must lie in the nonnegative orthant")
            if not lo < hi:
                raise ConfigError(f"empty interval [{lo}, {hi}]")
            if r < 1:
                raise ConfigError("resolution must be positive")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "resolution", res)
        if self.size > self.budget:
            raise ResourceError(f"grid has {self.size} points, budget is {self.budget}")

    @classmethod
    def cube(cls, n, lo=1.0, hi=2.0, resolution=64, budget=DEFAULT_POINT_BUDGET):
        res = np.broadcast_to(np.atleast_1d(resolution), (n,))
        return cls((lo,) * n, (hi,) * n, tuple(int(r) for r in res), budget)

    @property
    def n(self):
        return len(self.a)

    @property
    def size(self):
        return int(np.prod(self.resolution))

    @property
    def spacing(self):
        return tuple((hi - lo) / (r - 1) if r > 1 else 0.0
                     for lo, hi, r in zip(self.a, self.b, self.resolution))

    def axes(self):
        return [np.linspace(lo, hi, r) if r > 1 else np.array([lo])
                for lo, hi, r in zip(self.a, self.b, self.resolution)]

    def points(self):
        """Grid points as an (size, N) array in row-major order."""
        mesh = np.meshgrid(*self.axes(), indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    def contains(self, pts):
        pts = np.atleast_2d(pts)
        return np.all((pts >= np.array(self.a)) & (pts <= np.array(self.b)), axis=-1)


@dataclass(frozen=True)
class CovarianceKernel:
    kind: str
    hurst: HurstVector

    def __post_init__(self):
        if self.kind not in KERNEL_KINDS:
            raise ConfigError(f"unknown kernel kind {self.kind!r}")
        if not isinstance(self.hurst, HurstVector):
            object.__setattr__(self, "hurst", HurstVector(self.hurst))
        if self.kind == ISOTROPIC_FBM and len(set(self.hurst.h)) != 1:
            raise ConfigError("isotropic fBm needs equal Hurst indices on every axis")

    @classmethod
    def isotropic(cls, h, n=1):
        return cls(ISOTROPIC_FBM, HurstVector((float(h),) * n))

    @classmethod
    def sheet(cls, h):
        return cls(FRACTIONAL_SHEET, HurstVector(h))

    @property
    def n(self):
        return self.hurst.n

    def matrix(self, s, t):
        """Covariance matrix [C(s_i, t_j)] between two point sets of shape (m, N)."""
        s = np.atleast_2d(np.asarray(s, dtype=float))
        t = np.atleast_2d(np.asarray(t, dtype=float))
        if s.shape[-1] != self.n or t.shape[-1] != self.n:
            raise ShapeError(f"points must have {self.n} coordinates")
        if (s < 0).any() or (t < 0).any():
            raise DomainError("kernel is defined on the nonnegative orthant only")
        if self.kind == ISOTROPIC_FBM:
            two_h = 2.0 * self.hurst.h[0]
            ns = np.linalg.norm(s, axis=1) ** two_h
            nt = np.linalg.norm(t, axis=1) ** two_h
            dist = np.linalg.norm(s[:, None, :] - t[None, :, :], axis=-1) ** two_h
            return 0.5 * (ns[:, None] + nt[None, :] - dist)
        out = np.ones((s.shape[0], t.shape[0]))
        for j, h in enumerate(self.hurst.h):
            sj, tj = s[:, j], t[:, j]
            out *= 0.5 * (sj[:, None] ** (2 * h) + tj[None, :] ** (2 * h)
                          - np.abs(sj[:, None] - tj[None, :]) ** (2 * h))
        return out

    def variance(self, t):
        t = np.atleast_2d(np.asarray(t, dtype=float))
        if self.kind == ISOTROPIC_FBM:
            return np.linalg.norm(t, axis=1) ** (2.0 * self.hurst.h[0])
        return np.prod(t ** (2.0 * np.array(self.hurst.h)), axis=1)


def kernel_eval(kernel, s, t):
    """C(s, t) for a single pair of points."""
    s = np.atleast_1d(np.asarray(s, dtype=float))
    t = np.atleast_1d(np.asarray(t, dtype=float))
    return float(kernel.matrix(s[None, :], t[None, :])[0, 0])


def anisotropic_distance(hurst, s, t):
    """Sum over axes of |s_j - t_j|^(2 H_j); broadcasts over leading axes."""
    diff = np.abs(np.asarray(s, dtype=float) - np.asarray(t, dtype=float))
    return np.sum(diff ** (2.0 * np.asarray(hurst.h)), axis=-1)


@dataclass
class StructureReport:
    c1: float
    c2: float
    c3: float
    c4: float
    n_pairs: int
    increment_ratios: np.ndarray = field(repr=False)
    conditional_ratios: np.ndarray = field(repr=False)
    failure: str = ""

    @property
    def passed(self):
        vals = (self.c1, self.c2, self.c3, self.c4)
        return not self.failure and all(math.isfinite(v) and v > 0 for v in vals)


def _stratified_pairs(grid, pair_budget, rng):
    """Point pairs whose separations cover dyadic scales of the interval evenly."""
    a, b = np.array(grid.a), np.array(grid.b)
    width = b - a
    n_levels = max(1, int(math.log2(max(grid.resolution))) + 1)
    per_level = np.full(n_levels, pair_budget // n_levels)
    per_level[: pair_budget % n_levels] += 1
    ss, ts = [], []
    for level, count in enumerate(per_level):
        if count == 0:
            continue
        scale = width * 2.0 ** (-level)
        # separation magnitude uniform in [scale/2, scale] per axis
        sep = scale * rng.uniform(0.5, 1.0, size=(count, grid.n))
        sep *= rng.choice([-1.0, 1.0], size=(count, grid.n))
        s = a + rng.uniform(size=(count, grid.n)) * width
        t = np.clip(s + sep, a, b)
        same = np.all(s == t, axis=1)
        if same.any():
            t[same] = np.where(s[same] - a > width / 2, a, b)
        ss.append(s)
        ts.append(t)
    # the box corners are where fBm-type variances are extremal
    ss.append(a[None, :])
    ts.append(b[None, :])
    return np.concatenate(ss), np.concatenate(ts)


def structure_check(kernel, grid, pair_budget=2000, seed=0):
    """Empirical analogues of the constants in conditions (A1)/(A2) over the grid's box.

    Returns c1 = min variance, (c2, c3) = min/max of the increment-variance
    ratio, and c4 = min conditional-variance ratio, all ratios taken against
    sum_j |s_j - t_j|^(2 H_j).
    """
    if pair_budget < 2:
        raise ConfigError("pair budget must be at least 2")
    if kernel.n != grid.n:
        raise ShapeError("kernel and grid dimensions differ")
    rng = seeds.generator(seed, seeds.STAGE_FIELD, 0xA1)
    s, t = _stratified_pairs(grid, pair_budget, rng)
    css = kernel.variance(s)
    ctt = kernel.variance(t)
    cst = np.array([kernel_eval(kernel, si, ti) for si, ti in zip(s, t)])
    rho = anisotropic_distance(kernel.hurst, s, t)
    keep = rho > 0
    if np.any(css <= 0) or np.any(ctt <= 0):
        return StructureReport(0.0, math.nan, math.nan, math.nan, len(s),
                               np.array([]), np.array([]),
                               failure="(A1) fails: zero variance at a sampled point")
    increment = (css + ctt - 2.0 * cst)[keep] / rho[keep]
    conditional = (ctt - cst ** 2 / css)[keep] / rho[keep]
    c1 = float(min(css.min(), ctt.min()))
    return StructureReport(c1, float(increment.min()), float(increment.max()),
                           float(conditional.min()), int(keep.sum()), increment, conditional)


@dataclass(frozen=True)
class FieldSample:
    grid: GridSpec
    values: np.ndarray
    seed_path: tuple

    def __post_init__(self):
        self.values.setflags(write=False)

    def to_csv(self, path):
        from .io import write_csv
        pts = self.grid.points()
        header = [f"t_{j + 1}" for j in range(self.grid.n)] + ["value"]
        rows = (list(p) + [v] for p, v in zip(pts, self.values))
        return write_csv(path, header, rows)


def _cholesky_with_jitter(cov, scale=None):
    """Cholesky factor, adding diagonal jitter up to 1e-10 * ``scale`` (default: max diagonal)."""
    if scale is None:
        scale = float(np.max(np.diag(cov))) if cov.size else 1.0
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        pass
    eye = np.eye(cov.shape[0])
    for rel in (1e-14, 1e-13, 1e-12, 1e-11, JITTER_LIMIT):
        try:
            return np.linalg.cholesky(cov + rel * scale * eye)
        except np.linalg.LinAlgError:
            continue
    raise KernelNotPSDError(f"covariance not PSD within jitter {JITTER_LIMIT:g} (relative)")


@functools.lru_cache(maxsize=16)
def grid_factor(kernel, grid):
    """Lower Cholesky factor of the grid covariance, read-only and cached."""
    cov = kernel.matrix(grid.points(), grid.points())
    factor = _cholesky_with_jitter(cov)
    factor.setflags(write=False)
    return factor


def sample_field(kernel, grid, seed, key=(0,)):
    """One exact draw of the centered field on the grid.

    ``key`` extends the seed lineage, so independent copies of the field
    for the same master seed use distinct keys.
    """
    if kernel.n != grid.n:
        raise ShapeError("kernel and grid dimensions differ")
    factor = grid_factor(kernel, grid)
    z = seeds.generator(seed, seeds.STAGE_FIELD, *key).standard_normal(grid.size)
    return FieldSample(grid, factor @ z, (int(seed), seeds.STAGE_FIELD) + tuple(key))


class ConditionalSampler:
    """Sequential exact sampling of a Gaussian field given all earlier values.

    Maintains the block Cholesky factor of the covariance of every point
    sampled so far together with the whitened values, so a batch of new
    points is drawn from the exact conditional (bridge) law.  Several
    independent drivers sharing the kernel are handled as columns.
    """

    def __init__(self, kernel, base_points, base_factor, base_whitened, point_budget=4096):
        self.kernel = kernel
        self.points = [np.asarray(base_points, dtype=float)]
        # block rows of the lower factor: (off-diagonal blocks, diagonal block)
        self._blocks = [([], base_factor)]
        self.whitened = [np.asarray(base_whitened, dtype=float)]
        self.point_budget = point_budget
        self.n_added = 0

    def _solve(self, rhs):
        """Forward substitution with the block lower-triangular factor."""
        parts = []
        offset = 0
        for off_blocks, diag in self._blocks:
            m = diag.shape[0]
            r = rhs[offset:offset + m].copy()
            for blk, prev in zip(off_blocks, parts):
                r -= blk @ prev
            parts.append(solve_triangular(diag, r, lower=True, check_finite=False))
            offset += m
        return parts

    def sample(self, new_points, normals):
        """Draw values at ``new_points`` (m, N) given standard normals (m, drivers)."""
        new_points = np.atleast_2d(np.asarray(new_points, dtype=float))
        m = new_points.shape[0]
        if m == 0:
            return np.zeros((0, self.whitened[0].shape[1]))
        if self.n_added + m > self.point_budget:
            raise ResourceError("refinement point budget exhausted")
        old = np.concatenate(self.points)
        cross = self.kernel.matrix(old, new_points)
        parts = self._solve(cross)
        mean = sum(w.T @ z for w, z in zip(parts, self.whitened))
        prior = self.kernel.matrix(new_points, new_points)
        schur = prior - sum(w.T @ w for w in parts)
        schur = 0.5 * (schur + schur.T)
        # cancellation makes the Schur complement lose digits relative to the prior variance
        diag = _cholesky_with_jitter(schur, float(np.max(np.diag(prior))))
        values = mean + diag @ normals
        self._blocks.append(([w.T for w in parts], diag))
        self.points.append(new_points)
        self.whitened.append(np.asarray(normals, dtype=float))
        self.n_added += m
        return values
