"""Monte Carlo estimation of k-fold eigenvalue collision probabilities.

A collision is certified only up to a gap threshold eps: a replicate is
flagged at eps when the smallest k-gap found on the grid, after local
refinement around promising minima, is below eps.  Refinement draws the
driving fields at new points from their exact conditional law given every
value sampled so far.
"""

from __future__ import annotations

import hashlib
import itertools
import math
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError, DomainError, InconclusiveResolutionError
from .io import fmt
from .matrix import ProcessConfig, assemble_path, identify
from .spectral import eigh_batch, k_gap
from .strata import stratum_codim

SUBCRITICAL = "subcritical"
SUPERCRITICAL = "supercritical"
CRITICAL = "critical"
INCONCLUSIVE_LIMIT = 0.05
Z95 = statistics.NormalDist().inv_cdf(0.975)


def threshold(beta, k):
    """Critical exponent sum: (k+2)(k-1)/2 for beta=1, k^2-1 for beta=2."""
    return float(stratum_codim(beta, k))


def regime(q, thr, tol=1e-12):
    if abs(q - thr) <= tol * max(1.0, thr):
        return CRITICAL
    return SUPERCRITICAL if q > thr else SUBCRITICAL


def wilson_interval(successes, n, z=Z95):
    if n <= 0:
        raise DomainError("need at least one trial")
    p = successes / n
    denom = 1.0 + z * z / n
    center = (p + z * z / (2 * n)) / denom
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / denom
    lo = 0.0 if successes == 0 else max(0.0, center - half)
    hi = 1.0 if successes == n else min(1.0, center + half)
    return lo, hi


def _check_schedule(eps):
    eps = tuple(float(e) for e in eps)
    if not eps or eps[-1] <= 0 or any(b >= a for a, b in zip(eps, eps[1:])):
        raise ConfigError("eps schedule must be strictly decreasing and positive")
    return eps


@dataclass(frozen=True)
class CollisionConfig:
    process: ProcessConfig
    k: int
    eps_schedule: tuple = (1e-2, 1e-3, 1e-4, 1e-5, 1e-6)
    refine_depth: int = 6
    replicates: int = 200
    master_seed: int = 42
    max_candidates: int = 8

    def __post_init__(self):
        object.__setattr__(self, "eps_schedule", _check_schedule(self.eps_schedule))
        if self.replicates < 1:
            raise ConfigError("replicates must be at least 1")
        if self.refine_depth < 0:
            raise ConfigError("refine depth must be nonnegative")
        if not 2 <= self.k <= self.process.d:
            raise DomainError(f"k must satisfy 2 <= k <= d={self.process.d}")

    def to_dict(self):
        return {"process": self.process.to_dict(), "k": self.k, "eps_schedule": list(self.eps_schedule),
                "refine_depth": self.refine_depth, "replicates": self.replicates,
                "master_seed": int(self.master_seed), "max_candidates": self.max_candidates}


@dataclass(frozen=True)
class CollisionRecord:
    replicate: int
    eps: tuple
    flags: tuple
    indeterminate: tuple
    argmin: tuple
    min_gap: float
    grid_min_gap: float
    modulus: float
    n_refined: int
    cell_step: tuple = ()

    def row(self):
        return [self.replicate, self.min_gap, self.grid_min_gap, self.modulus, self.n_refined,
                *self.argmin, *self.flags, *self.indeterminate]


def path_gaps(entries, beta, k):
    """k-gap at every stored point of a vectorized path."""
    return k_gap(eigh_batch(identify(entries, beta)), k)


def _op_norm(diff_vectors, beta):
    if diff_vectors.shape[0] == 0:
        return np.zeros(0)
    return np.max(np.abs(eigh_batch(identify(diff_vectors, beta))), axis=-1)


def _grid_local_minima(gaps, resolution):
    g = gaps.reshape(resolution)
    is_min = np.ones(g.shape, dtype=bool)
    for axis in range(g.ndim):
        if g.shape[axis] < 2:
            continue
        padded = np.pad(g, [(1, 1) if a == axis else (0, 0) for a in range(g.ndim)],
                        constant_values=np.inf)
        lo = np.take(padded, range(0, g.shape[axis]), axis=axis)
        hi = np.take(padded, range(2, g.shape[axis] + 2), axis=axis)
        is_min &= (g <= lo) & (g <= hi)
    return np.flatnonzero(is_min.ravel())


def detect_collision(path, k, eps_schedule, refine_depth, max_candidates=8, keep_per_patch=2,
                     replicate=None):
    """Flag near-collisions of k eigenvalues along one path for every eps.

    Local minima of the grid k-gap below the coarsest eps seed a refinement:
    at each level, every candidate gets its 3^N - 1 lattice neighbours at half
    the previous step, and the best points of each patch become the next
    candidates.  The Weyl margin 2 * (max operator-norm increment to the
    neighbours of the minimizer) decides which non-flags are indeterminate.
    """
    eps = _check_schedule(eps_schedule)
    beta = path.beta
    grid = path.config.grid
    spacing = np.array(grid.spacing)
    lo, hi = np.array(grid.a), np.array(grid.b)

    pts = [np.asarray(path.points, dtype=float)]
    vecs = [np.asarray(path.entries, dtype=float)]
    gaps = [path_gaps(path.entries, beta, k)]
    grid_gaps = gaps[0]
    index = {tuple(p): i for i, p in enumerate(pts[0])}
    level = {i: 0 for i in range(len(pts[0]))}
    n_total = len(pts[0])

    minima = _grid_local_minima(grid_gaps, grid.resolution)
    minima = minima[grid_gaps[minima] < eps[0]]
    minima = minima[np.argsort(grid_gaps[minima], kind="stable")][:max_candidates]
    candidates = [int(i) for i in minima]

    refiner = path.refiner() if (refine_depth > 0 and candidates) else None
    moving = [j for j in range(grid.n) if spacing[j] > 0]
    offsets = [np.array(o) for o in itertools.product((-1, 0, 1), repeat=len(moving)) if any(o)]

    all_pts = pts[0]
    all_vecs = vecs[0]
    all_gaps = gaps[0]
    n_refined = 0
    for m in range(1, refine_depth + 1 if refiner is not None else 1):
        step = spacing / 2.0 ** m
        new_points, new_keys, patches = [], {}, []
        for c in candidates:
            level[c] = m
            centre = all_pts[c]
            members = [c]
            for off in offsets:
                q = centre.copy()
                q[moving] += off * step[moving]
                if np.any(q < lo) or np.any(q > hi):
                    continue
                key = tuple(q)
                if key in index:
                    members.append(index[key])
                elif key in new_keys:
                    members.append(new_keys[key])
                else:
                    new_keys[key] = n_total + len(new_points)
                    members.append(new_keys[key])
                    new_points.append(q)
            patches.append(members)
        if new_points:
            new_points = np.array(new_points)
            new_vecs = refiner.sample(new_points)
            new_gaps = path_gaps(new_vecs, beta, k)
            all_pts = np.concatenate([all_pts, new_points])
            all_vecs = np.concatenate([all_vecs, new_vecs])
            all_gaps = np.concatenate([all_gaps, new_gaps])
            for key, i in new_keys.items():
                index[key] = i
                level[i] = m
            n_total += len(new_points)
            n_refined += len(new_points)
        chosen = []
        for members in patches:
            best = sorted(set(members), key=lambda i: (all_gaps[i], i))[:keep_per_patch]
            for i in best:
                level[i] = m
            chosen.extend(best)
        candidates = sorted(set(chosen), key=lambda i: (all_gaps[i], i))[:max_candidates]
        if not candidates:
            break

    best = int(np.argmin(all_gaps))
    min_gap = float(all_gaps[best])
    step = spacing / 2.0 ** level[best]
    scaled = np.abs(all_pts[:, moving] - all_pts[best, moving]) / np.where(step[moving] > 0, step[moving], 1.0)
    near = np.flatnonzero(np.all(scaled <= 1.0 + 1e-9, axis=1))
    near = near[near != best]
    modulus = float(np.max(_op_norm(all_vecs[near] - all_vecs[best], beta))) if near.size else math.inf
    flags = tuple(bool(min_gap < e) for e in eps)
    indeterminate = tuple(bool(min_gap >= e and min_gap - 2.0 * modulus < e) for e in eps)
    rep = path.seed_path[1] if replicate is None and len(path.seed_path) > 1 else (replicate or 0)
    return CollisionRecord(int(rep), eps, flags, indeterminate, tuple(float(x) for x in all_pts[best]),
                           min_gap, float(np.min(grid_gaps)), modulus, n_refined,
                           tuple(float(x) for x in step))


@dataclass(frozen=True)
class PhaseCell:
    beta: int
    d: int
    k: int
    hurst: tuple
    q: float
    threshold: float
    eps: tuple
    estimates: tuple
    ci_lows: tuple
    ci_highs: tuple
    flagged: tuple
    indeterminate: tuple
    replicates: int
    records_digest: str = ""
    records: tuple = field(default=(), repr=False, compare=False)

    @property
    def estimate(self):
        return self.estimates[-1]

    @property
    def ci_low(self):
        return self.ci_lows[-1]

    @property
    def ci_high(self):
        return self.ci_highs[-1]

    @property
    def regime(self):
        return regime(self.q, self.threshold)

    @property
    def indeterminate_fraction(self):
        return self.indeterminate[-1] / self.replicates

    def to_dict(self):
        return {"beta": self.beta, "d": self.d, "k": self.k, "N": len(self.hurst), "hurst": list(self.hurst),
                "Q": self.q, "threshold": self.threshold, "regime": self.regime, "eps": list(self.eps),
                "estimates": list(self.estimates), "ci_low": list(self.ci_lows), "ci_high": list(self.ci_highs),
                "flagged": list(self.flagged), "indeterminate": list(self.indeterminate),
                "replicates": self.replicates, "records_digest": self.records_digest}

    def csv_rows(self):
        for i, e in enumerate(self.eps):
            yield [self.beta, self.d, self.k, len(self.hurst), *self.hurst, self.q, self.threshold,
                   self.regime, e, self.estimates[i], self.ci_lows[i], self.ci_highs[i]]


def phase_header(n):
    return (["beta", "d", "k", "N"] + [f"H_{j + 1}" for j in range(n)]
            + ["Q", "threshold", "regime", "eps", "estimate", "ci_low", "ci_high"])


def records_digest(records):
    h = hashlib.sha256()
    for r in records:
        h.update((",".join(fmt(v) for v in r.row()) + "\n").encode())
    return h.hexdigest()


def run_replicate(config, replicate):
    proc = replace(config.process, seed=config.master_seed)
    path = assemble_path(proc, replicate)
    return detect_collision(path, config.k, config.eps_schedule, config.refine_depth,
                            config.max_candidates, replicate=replicate)


def _run_star(args):
    return run_replicate(*args)


def run_replicates(config, threads=1):
    jobs = [(config, r) for r in range(config.replicates)]
    if threads is None or threads <= 1 or config.replicates == 1:
        return [run_replicate(*j) for j in jobs]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(_run_star, jobs, chunksize=max(1, len(jobs) // (4 * threads))))


def summarize(config, records):
    n = len(records)
    eps = config.eps_schedule
    flagged = tuple(sum(r.flags[i] for r in records) for i in range(len(eps)))
    indet = tuple(sum(r.indeterminate[i] for r in records) for i in range(len(eps)))
    cis = [wilson_interval(f, n) for f in flagged]
    hurst = config.process.kernel.hurst
    return PhaseCell(config.process.beta, config.process.d, config.k, hurst.h, hurst.q,
                     threshold(config.process.beta, config.k), eps, tuple(f / n for f in flagged),
                     tuple(c[0] for c in cis), tuple(c[1] for c in cis), flagged, indet, n,
                     records_digest(records), tuple(records))


def estimate_probability(config, threads=1, on_inconclusive="raise"):
    """Fraction of replicates flagged at each eps, with 95% Wilson intervals.

    With ``on_inconclusive="raise"`` more than 5% indeterminate replicates at
    the finest eps raise InconclusiveResolutionError; ``"report"`` returns
    the cell regardless.
    """
    records = run_replicates(config, threads)
    cell = summarize(config, records)
    if on_inconclusive == "raise" and cell.indeterminate_fraction > INCONCLUSIVE_LIMIT:
        raise InconclusiveResolutionError(
            f"{cell.indeterminate_fraction:.1%} of replicates indeterminate at eps={cell.eps[-1]:g}; "
            "refine deeper", cell.indeterminate_fraction)
    return cell


def with_hurst(config, hurst, k=None):
    from .field import CovarianceKernel, HurstVector
    kern = config.process.kernel
    h = HurstVector(hurst if np.ndim(hurst) else (float(hurst),) * kern.n)
    proc = replace(config.process, kernel=CovarianceKernel(kern.kind, h))
    return replace(config, process=proc, k=config.k if k is None else k)


def phase_scan(base, hurst_list, k_list, threads=1, on_inconclusive="report"):
    """Estimate every (k, H) cell; all cells share the base master seed."""
    if not hurst_list or not k_list:
        raise ConfigError("hurst and k lists must be nonempty")
    cells = []
    for k in k_list:
        for h in hurst_list:
            cells.append(estimate_probability(with_hurst(base, h, k), threads, on_inconclusive))
    return cells


def monotonicity_violations(cells):
    """Pairs (H_low, H_high) in one (beta, d, k) group where the estimate rises with H beyond CI overlap."""
    out = []
    groups = {}
    for c in cells:
        groups.setdefault((c.beta, c.d, c.k), []).append(c)
    for group in groups.values():
        group = sorted(group, key=lambda c: -c.q)
        for a, b in zip(group, group[1:]):
            if a.ci_high < b.ci_low:
                out.append((a.hurst, b.hurst))
    return out
