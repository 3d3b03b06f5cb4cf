"""Hausdorff dimension of collision-time sets: closed form and empirical estimators."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DomainError, EmptyRegimeError
from .field import HurstVector
from .strata import stratum_codim


@dataclass(frozen=True)
class DimFormulaResult:
    value: float
    ell0: int
    terms: tuple
    codim: int
    hurst: tuple

    def to_dict(self):
        return {"value": self.value, "ell0": self.ell0, "terms": list(self.terms),
                "codim": self.codim, "hurst_sorted": list(self.hurst)}


def dimension_terms(h, codim):
    """Terms sum_{j<=l} H_l/H_j + N - l - H_l * codim for l = 1..N (h sorted ascending)."""
    h = np.asarray(h, dtype=float)
    n = h.size
    out = []
    for ell in range(1, n + 1):
        hl = h[ell - 1]
        out.append(math.fsum(hl / h[:ell]) + n - ell - hl * codim)
    return out


def theoretical_dim(hurst, k, beta):
    """Dimension of the k-collision time set when Q exceeds the stratum codimension.

    Hurst indices are sorted ascending first.  The minimum over l is checked
    against the term at l0, the first l whose partial sum of 1/H_j exceeds
    the codimension.
    """
    if not isinstance(hurst, HurstVector):
        hurst = HurstVector(hurst)
    codim = stratum_codim(beta, k)
    h = np.sort(np.asarray(hurst.h))
    partial = np.cumsum(1.0 / h)
    if not partial[-1] > codim:
        raise EmptyRegimeError(f"Q = {partial[-1]:.6g} does not exceed {codim}; the set is empty a.s.")
    ell0 = int(np.argmax(partial > codim)) + 1
    terms = dimension_terms(h, codim)
    value = min(terms)
    if abs(value - terms[ell0 - 1]) > 1e-12:
        raise AssertionError(f"min-form {value} and l0-form {terms[ell0 - 1]} disagree")
    return DimFormulaResult(float(value), ell0, tuple(float(t) for t in terms), codim,
                            tuple(float(x) for x in h))


@dataclass(frozen=True)
class TimeSet:
    points: np.ndarray
    cell_size: float
    origin: tuple = None
    extent: tuple = None

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        object.__setattr__(self, "points", pts)
        origin = np.zeros(pts.shape[1]) if self.origin is None else np.atleast_1d(self.origin)
        object.__setattr__(self, "origin", tuple(float(x) for x in origin))
        if self.extent is not None:
            object.__setattr__(self, "extent", tuple(float(x) for x in np.atleast_1d(self.extent)))


@dataclass
class BoxDimResult:
    slope: float
    intercept: float
    residual: float
    r_squared: float
    scales: np.ndarray = field(repr=False)
    counts: np.ndarray = field(repr=False)

    def to_dict(self):
        return {"box_estimate": self.slope, "intercept": self.intercept, "residual": self.residual,
                "r_squared": self.r_squared, "scales": self.scales.tolist(), "counts": self.counts.tolist()}


BOX_TOL = 1e-9


def occupied_boxes(points, scale, origin, extent=None):
    """Number of grid boxes of side ``scale`` anchored at ``origin`` that hold a point.

    Points on the far face of ``extent`` are folded into the last box so a
    closed interval is not charged an extra box.
    """
    if not np.asarray(points).size:
        return 0
    idx = np.floor((np.asarray(points) - np.asarray(origin)) / scale + BOX_TOL).astype(np.int64)
    if extent is not None:
        last = np.ceil((np.asarray(extent) - np.asarray(origin)) / scale - BOX_TOL).astype(np.int64) - 1
        idx = np.minimum(idx, np.maximum(last, 0))
    return int(np.unique(idx, axis=0).shape[0])


def box_counts(timesets, scales):
    """Occupied-box counts summed over one or several time sets."""
    if isinstance(timesets, TimeSet):
        timesets = [timesets]
    return np.array([sum(occupied_boxes(ts.points, s, ts.origin, ts.extent) for ts in timesets) for s in scales],
                    dtype=float)


def fit_box_dimension(scales, counts):
    scales = np.asarray(scales, dtype=float)
    counts = np.asarray(counts, dtype=float)
    ok = counts > 0
    if ok.sum() < 2:
        raise DomainError("fewer than two occupied scales; dimension undefined")
    x = np.log(1.0 / scales[ok])
    y = np.log(counts[ok])
    slope, intercept = np.polyfit(x, y, 1)
    fit = slope * x + intercept
    ss_res = float(np.sum((y - fit) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return BoxDimResult(float(slope), float(intercept), math.sqrt(ss_res / ok.sum()), r2, scales, counts)


def box_dimension(ts, scales):
    """Least-squares slope of log(occupied boxes) against log(1/scale).

    ``ts`` may be a single TimeSet or a sequence of them; counts are summed
    across sets before fitting.
    """
    scales = np.asarray(scales, dtype=float)
    if scales.size < 4:
        raise ConfigError("at least four scales are required")
    if np.any(np.diff(scales) >= 0) or np.any(scales <= 0):
        raise ConfigError("scales must be positive and strictly decreasing")
    if scales[0] / scales[-1] < 100.0 * (1 - 1e-12):
        raise ConfigError("scales must span at least two decades")
    sets = [ts] if isinstance(ts, TimeSet) else list(ts)
    if not sets or all(s.points.size == 0 for s in sets):
        raise DomainError("empty time set")
    return fit_box_dimension(scales, box_counts(sets, scales))


def dyadic_scales(top, finest):
    """top * 2^-m for m = 0, 1, ... down to (and including) the first scale <= finest."""
    out = [float(top)]
    while out[-1] > finest * (1 + 1e-12):
        out.append(out[-1] / 2.0)
    return np.array(out)


def cantor_points(level):
    """Left endpoints of the 2^level intervals of the middle-thirds construction."""
    pts = np.array([0.0])
    for m in range(1, level + 1):
        pts = np.concatenate([pts, pts + 2.0 * 3.0 ** (-m)])
    return np.sort(pts)


def riesz_kernel(r, q):
    """f_q(r): r^-q for q > 0, ln(e / min(r, 1)) for q = 0, 1 for q < 0."""
    r = np.asarray(r, dtype=float)
    if q > 0:
        with np.errstate(divide="ignore"):
            return r ** (-q)
    if q == 0:
        with np.errstate(divide="ignore"):
            return np.log(math.e / np.minimum(r, 1.0))
    return np.ones_like(r)


def riesz_energy(points, q, block=1024):
    """Mean of f_q(|x - y|) over ordered pairs x != y.

    Coincident points with q >= 0 give ``inf`` (overflow flag) rather than
    raising.  Blocks are reduced in a fixed order so the value is bit-stable.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    n = pts.shape[0]
    if n < 2:
        raise DomainError("need at least two points")
    if q < 0:
        return 1.0
    total = 0.0
    for start in range(0, n, block):
        chunk = pts[start:start + block]
        r = np.linalg.norm(chunk[:, None, :] - pts[None, :, :], axis=-1)
        rows = np.arange(chunk.shape[0])
        r[rows, start + rows] = np.nan
        vals = riesz_kernel(r, q)
        vals = vals[~np.isnan(vals)]
        if not np.all(np.isfinite(vals)):
            return math.inf
        total += float(np.sum(vals))
    return total / (n * (n - 1))


def energy_profile(points, qs):
    return [{"q": float(q), "energy": riesz_energy(points, q)} for q in qs]


def weyl_cells(path, k):
    """Grid points whose forward cell cannot be certified collision-free.

    A cell is kept when the smaller endpoint k-gap is at most twice the
    operator norm of the matrix increment across it (the Weyl margin).
    """
    from .matrix import identify
    from .spectral import eigh_batch, k_gap

    grid = path.config.grid
    shape = tuple(grid.resolution)
    gaps = k_gap(eigh_batch(path.matrices()), k).reshape(shape)
    ent = path.entries.reshape(shape + (-1,))
    keep = np.zeros(shape, dtype=bool)
    for axis in range(len(shape)):
        if shape[axis] < 2:
            continue
        inc = np.diff(ent, axis=axis)
        norm = np.max(np.abs(eigh_batch(identify(inc, path.beta))), axis=-1)
        lo = np.take(gaps, range(shape[axis] - 1), axis=axis)
        hi = np.take(gaps, range(1, shape[axis]), axis=axis)
        hit = np.minimum(lo, hi) <= 2.0 * norm
        pad = [(0, 1) if a == axis else (0, 0) for a in range(len(shape))]
        keep |= np.pad(hit, pad, constant_values=False)
    pts = path.points[keep.ravel()]
    return TimeSet(pts, float(min(s for s in grid.spacing if s > 0)), origin=grid.a, extent=grid.b)


def _uncertified(gaps, vecs, beta):
    """Weyl test on one cell from its corner values: True when a collision cannot be excluded."""
    from .matrix import identify
    from .spectral import eigh_batch
    j = int(np.argmin(gaps))
    diff = vecs - vecs[j]
    norm = float(np.max(np.abs(eigh_batch(identify(diff, beta))))) if len(gaps) > 1 else 0.0
    return gaps[j] <= 2.0 * norm


def refine_cells(path, k, lower, width, depth):
    """Refine a window of grid cells down ``depth`` bisection levels, keeping uncertified cells.

    ``lower`` is the integer grid index of the window's lower corner and
    ``width`` the window size in grid cells per moving axis.  New lattice
    points are drawn from the path's conditional law.  Returns the centres
    of the finest uncertified cells and the finest cell size per axis.
    """
    from .spectral import eigh_batch, k_gap

    grid = path.config.grid
    n = grid.n
    h = np.array(grid.spacing)
    shape = np.array(grid.resolution)
    moving = [j for j in range(n) if h[j] > 0]
    unit = h / 2.0 ** depth
    scale = 2 ** depth
    beta = path.beta
    refiner = path.refiner()
    base = np.array(grid.a, dtype=float)
    corners = [np.array(c) for c in itertools.product((0, 1), repeat=len(moving))]

    gaps = k_gap(eigh_batch(path.matrices()), k)
    flat_index = np.arange(grid.size).reshape(tuple(shape))
    values = {}

    def lookup(key):
        if key not in values:
            idx = np.array(key) // scale
            f = flat_index[tuple(idx)]
            values[key] = (path.entries[f], gaps[f])
        return values[key]

    def corner_keys(lo, size):
        out = []
        for c in corners:
            q = lo.copy()
            q[moving] += c * size
            out.append(tuple(int(v) for v in q))
        return out

    def on_grid(key):
        return all(v % scale == 0 for v in key)

    def ensure(keys):
        new = sorted({q for q in keys if q not in values and not on_grid(q)})
        if new:
            pts = base + np.array(new, dtype=float) * unit
            vec = refiner.sample(pts)
            gp = k_gap(eigh_batch(identify_batch(vec, beta)), k)
            for q, v, g in zip(new, vec, gp):
                values[q] = (v, g)

    def test(lo, size):
        vals = [lookup(q) for q in corner_keys(lo, size)]
        return _uncertified(np.array([v[1] for v in vals]), np.array([v[0] for v in vals]), beta)

    cells = []
    size = scale
    for off in itertools.product(*[range(width) for _ in moving]):
        idx = np.array(lower, dtype=np.int64)
        idx[moving] += np.array(off, dtype=np.int64)
        if np.any(idx[moving] >= shape[moving] - 1):
            continue
        lo = idx * scale
        if test(lo, size):
            cells.append(lo)
    for _ in range(depth):
        size //= 2
        children = []
        for lo in cells:
            for c in corners:
                child = lo.copy()
                child[moving] += c * size
                children.append(child)
        ensure([q for ch in children for q in corner_keys(ch, size)])
        cells = [ch for ch in children if test(ch, size)]
        if not cells:
            break
    step = unit * size
    centres = np.array([base + lo * unit + step / 2.0 for lo in cells]).reshape(-1, n)
    return centres, step


def identify_batch(vec, beta):
    from .matrix import identify
    return identify(vec, beta)


@dataclass
class EmpiricalDimResult:
    theory: DimFormulaResult
    box: BoxDimResult
    paths: int
    replicates_tried: int
    energy_profile: list

    def to_dict(self):
        return {"theory": self.theory.value, "ell0": self.theory.ell0, "box_estimate": self.box.slope,
                "residual": self.box.residual, "r_squared": self.box.r_squared, "paths": self.paths,
                "replicates_tried": self.replicates_tried, "energy_profile": self.energy_profile}

    def csv_rows(self):
        return [[s, c] for s, c in zip(self.box.scales, self.box.counts)]


def empirical_dimension(process, k, paths=50, eps=1e-2, refine_depth=6, window=16, max_replicates=5000,
                        qs=(0.2, 0.4, 0.6, 0.8)):
    """Box dimension of uncertified cells around the collision argmin, aggregated over flagged paths.

    Replicates are drawn in order until ``paths`` of them flag a collision at
    ``eps``.  For each, a window of ``window`` grid cells per axis centred on
    the argmin is refined ``refine_depth`` levels; box scales are the window
    size times 2^-m down to the finest cell.
    """
    from .collision import detect_collision
    from .matrix import assemble_path

    theory = theoretical_dim(process.kernel.hurst, k, process.beta)
    grid = process.grid
    h = np.array(grid.spacing)
    res = np.array(grid.resolution)
    if np.any((res > 1) & (res - 1 < window)):
        raise ConfigError("window larger than the grid")
    sets, tried = [], 0
    span = None
    for r in range(max_replicates):
        tried += 1
        path = assemble_path(process, r)
        rec = detect_collision(path, k, (eps,), refine_depth, replicate=r)
        if not rec.flags[0]:
            continue
        centre = np.where(h > 0, (np.array(rec.argmin) - np.array(grid.a)) / np.where(h > 0, h, 1.0), 0.0)
        lower = np.clip(np.floor(centre).astype(int) - window // 2, 0, np.maximum(res - 1 - window, 0))
        pts, step = refine_cells(path, k, lower, window, refine_depth)
        origin = np.array(grid.a) + lower * h
        span = window * h
        sets.append(TimeSet(pts, float(np.max(step)), origin=origin, extent=origin + span))
        if len(sets) >= paths:
            break
    if len(sets) < paths:
        raise DomainError(f"only {len(sets)} of {tried} replicates flagged a collision at eps={eps:g}")
    top = float(np.max(span))
    scales = dyadic_scales(top, sets[0].cell_size)
    box = box_dimension(sets, scales)
    profile = []
    for q in qs:
        vals = [riesz_energy(s.points, q) for s in sets if s.points.shape[0] >= 2]
        profile.append({"q": float(q), "energy": float(np.mean(vals)) if vals else math.nan})
    return EmpiricalDimResult(theory, box, len(sets), tried, profile)
