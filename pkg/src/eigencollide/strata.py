"""Geometry of the strata of matrices with a k-fold repeated eigenvalue.

Frames, the diagonal embedding u -> Delta(u) (repeated value in the last k
slots), the Gram-Schmidt chart completion, complex phase fixing, random
stratum witnesses and numerical certification of the stratum dimension via
the rank of an explicit tangent family.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import seeds
from .errors import DomainError, InfeasibleError, NumericalError, OutOfChartError, PhaseUndefinedError, ShapeError
from .matrix import vec_length, vectorize
from .spectral import eigs_ascending, k_gap

REAL = "real"
COMPLEX = "complex"
RANK_TOL = 1e-8
GS_GUARD = 0.5


def field_of(beta):
    return REAL if beta == 1 else COMPLEX


def stratum_codim(beta, k):
    """Codimension of the k-fold stratum: (k+2)(k-1)/2 real, k^2-1 complex."""
    if k < 2:
        raise DomainError("k must be at least 2")
    if beta == 1:
        return (k + 2) * (k - 1) // 2
    if beta == 2:
        return k * k - 1
    raise DomainError("beta must be 1 or 2")


def ambient_dim(beta, d):
    return vec_length(beta, d)


def stratum_dim(beta, d, k):
    """Expected manifold dimension near a witness with exactly d-k+1 distinct eigenvalues."""
    if not 1 <= k <= d:
        raise DomainError("need 1 <= k <= d")
    if beta == 1:
        return (d * (d + 1) - k * (k + 1)) // 2 + 1
    return d * d - k * k + 1


def stiefel_dim(d, l, field):
    if not 0 <= l <= d - 1:
        raise DomainError(f"l must lie in [0, {d - 1}]")
    if field == REAL:
        return (d * (d - 1) - l * (l - 1)) // 2
    if field == COMPLEX:
        return d * d - l * l
    raise DomainError(f"unknown field tag {field!r}")


@dataclass(frozen=True)
class StiefelPoint:
    frame: np.ndarray
    field: str

    def __post_init__(self):
        if self.field not in (REAL, COMPLEX):
            raise DomainError(f"unknown field tag {self.field!r}")
        f = np.asarray(self.frame)
        if f.ndim != 2 or f.shape[1] > f.shape[0]:
            raise ShapeError("frame must be d x (d-l) with d-l <= d")

    @property
    def d(self):
        return self.frame.shape[0]

    def orthonormality_error(self):
        f = self.frame
        return float(np.linalg.norm(f.conj().T @ f - np.eye(f.shape[1])))


def random_stiefel(d, l, field, seed, key=(0,)):
    """Haar-distributed frame from the QR factorization of a Gaussian matrix."""
    stiefel_dim(d, l, field)
    rng = seeds.generator(seed, seeds.STAGE_STIEFEL, *key)
    cols = d - l
    for _ in range(3):
        g = rng.standard_normal((d, cols))
        if field == COMPLEX:
            g = g + 1j * rng.standard_normal((d, cols))
        q, r = np.linalg.qr(g)
        diag = np.diagonal(r)
        if np.min(np.abs(diag)) > 1e-12 * max(np.max(np.abs(diag)), 1.0):
            q = q * (diag / np.abs(diag))[None, :]
            return StiefelPoint(q, field)
    raise NumericalError("rank-deficient Gaussian draw three times in a row")


def delta(u, d):
    """Diagonal of Delta(u): u_1..u_{d-k} then u_{d-k+1} repeated k times."""
    u = np.asarray(u, dtype=float)
    k = d - u.size + 1
    if not 1 <= k <= d:
        raise ShapeError("u must have between 1 and d entries")
    return np.concatenate([u[: d - k], np.full(k, u[-1])])


def gram_schmidt_complete(partial, reference):
    """Complete d-k orthonormal columns to a full frame using reference columns d-k+1..d.

    Column d-k+1+m is the Gram-Schmidt residual of reference column d-k+1+m
    against ``partial`` and the completed columns before it.
    """
    a = np.asarray(partial.frame if isinstance(partial, StiefelPoint) else partial)
    ref = np.asarray(reference.frame if isinstance(reference, StiefelPoint) else reference)
    d, m = a.shape
    if ref.shape != (d, d):
        raise ShapeError("reference must be a full d x d frame")
    dtype = complex if np.iscomplexobj(a) or np.iscomplexobj(ref) else float
    out = np.zeros((d, d), dtype=dtype)
    out[:, :m] = a
    for j in range(m, d):
        col = ref[:, j].astype(dtype)
        resid = col - out[:, :j] @ (out[:, :j].conj().T @ col)
        nrm = float(np.linalg.norm(resid))
        if nrm < GS_GUARD:
            raise OutOfChartError(f"Gram-Schmidt denominator {nrm:.3g} below {GS_GUARD}")
        out[:, j] = resid / nrm
    return out


def phase_fix(b, a):
    """Rotate each column of ``b`` by the unit scalar making <a_j, b_j> real and nonnegative."""
    bf = np.asarray(b.frame if isinstance(b, StiefelPoint) else b, dtype=complex)
    af = np.asarray(a.frame if isinstance(a, StiefelPoint) else a, dtype=complex)
    if af.shape != bf.shape:
        raise ShapeError("frames must have equal shape")
    ip = np.einsum("ij,ij->j", af.conj(), bf)
    mag = np.abs(ip)
    if np.any(mag == 0):
        raise PhaseUndefinedError("zero inner product; phase is undefined")
    return StiefelPoint(bf * (np.conj(ip) / mag)[None, :], COMPLEX)


@dataclass(frozen=True)
class StratumPoint:
    u: np.ndarray
    frame: np.ndarray
    vector: np.ndarray
    k: int
    beta: int

    @property
    def d(self):
        return self.frame.shape[0]

    def matrix(self):
        from .matrix import identify
        return identify(self.vector, self.beta)

    def conjugated(self, unitary):
        g = np.asarray(unitary) @ self.frame
        return _make_point(self.u, g, self.k, self.beta)


def _make_point(u, frame, k, beta):
    d = frame.shape[0]
    if k == d:
        mat = u[-1] * np.eye(d, dtype=frame.dtype)
    else:
        mat = (frame * delta(u, d)[None, :]) @ frame.conj().T
    return StratumPoint(np.asarray(u, dtype=float), frame, vectorize(mat, beta), k, beta)


def random_stratum_point(d, k, beta, box=(-1.0, 1.0), min_gap=0.1, seed=0, key=(0,), max_tries=10000):
    """Random matrix with exactly d-k+1 distinct eigenvalues, the repeated one k-fold."""
    if not 2 <= k <= d:
        raise DomainError("need 2 <= k <= d")
    lo, hi = float(box[0]), float(box[1])
    n = d - k + 1
    if not hi > lo or (n - 1) * min_gap >= hi - lo:
        raise InfeasibleError(f"cannot place {n} values {min_gap} apart in [{lo}, {hi}]")
    rng = seeds.generator(seed, seeds.STAGE_STRATUM, *key)
    for _ in range(max_tries):
        u = rng.uniform(lo, hi, size=n)
        if n == 1 or np.min(np.diff(np.sort(u))) >= min_gap:
            break
    else:
        raise InfeasibleError("rejection sampling of well-separated eigenvalues failed")
    u = np.concatenate([np.sort(u[:-1]), u[-1:]])
    frame = random_stiefel(d, 0, field_of(beta), seed, key=(seeds.STAGE_STRATUM,) + tuple(key)).frame
    return _make_point(u, frame, k, beta)


def _skew_basis(d, field):
    basis = []
    for p in range(d):
        for q in range(p + 1, d):
            e = np.zeros((d, d), dtype=complex if field == COMPLEX else float)
            e[p, q], e[q, p] = 1.0, -1.0
            basis.append(e)
    if field == COMPLEX:
        for p in range(d):
            for q in range(p + 1, d):
                e = np.zeros((d, d), dtype=complex)
                e[p, q] = e[q, p] = 1j
                basis.append(e)
        for p in range(d):
            e = np.zeros((d, d), dtype=complex)
            e[p, p] = 1j
            basis.append(e)
    return basis


def tangent_generators(point):
    """Columns spanning the tangent space of the stratum at ``point``, in vector coordinates.

    Orbit directions Gamma (Omega Delta - Delta Omega) Gamma* for a basis of
    skew-symmetric/skew-Hermitian Omega, plus eigenvalue directions
    Gamma Delta(e_i) Gamma*.
    """
    d, beta = point.d, point.beta
    g = point.frame
    diag = delta(point.u, d)
    cols = []
    for omega in _skew_basis(d, field_of(beta)):
        comm = omega * diag[None, :] - diag[:, None] * omega
        cols.append(vectorize(g @ comm @ g.conj().T, beta))
    for i in range(point.u.size):
        e = np.zeros(point.u.size)
        e[i] = 1.0
        cols.append(vectorize((g * delta(e, d)[None, :]) @ g.conj().T, beta))
    return np.stack(cols, axis=1)


def tangent_rank(point, tol=RANK_TOL):
    u = point.u
    if np.unique(u).size != u.size:
        raise DomainError("eigenvalue multiplicities do not match k")
    s = np.linalg.svd(tangent_generators(point), compute_uv=False)
    return int(np.sum(s > tol * s[0]))


def verify_strata(dmax=6, samples=20, seed=0, betas=(1, 2)):
    """Rank certification table over 2 <= k <= d <= dmax."""
    rows = []
    for beta in betas:
        for d in range(2, dmax + 1):
            for k in range(2, d + 1):
                ranks = []
                for s in range(samples):
                    p = random_stratum_point(d, k, beta, seed=seed, key=(beta, d, k, s))
                    if k_gap(eigs_ascending(p.matrix()), k) > 1e-10 * max(1.0, float(np.ptp(p.u))):
                        raise NumericalError("stratum witness lost its repeated eigenvalue")
                    ranks.append(tangent_rank(p))
                expected = stratum_dim(beta, d, k)
                amb = ambient_dim(beta, d)
                measured = min(ranks) if len(set(ranks)) > 1 else ranks[0]
                ok = all(r == expected for r in ranks) and all(amb - r == stratum_codim(beta, k) for r in ranks)
                rows.append({"beta": beta, "d": d, "k": k, "expected_dim": expected,
                             "measured_rank": measured, "ambient_dim": amb,
                             "codim": stratum_codim(beta, k), "samples": samples, "pass": ok})
    return rows


def format_strata_table(rows):
    head = f"{'beta':>4} {'d':>3} {'k':>3} {'expected':>9} {'measured':>9} {'codim':>6}  pass"
    lines = [head, "-" * len(head)]
    for r in rows:
        lines.append(f"{r['beta']:>4} {r['d']:>3} {r['k']:>3} {r['expected_dim']:>9} "
                     f"{r['measured_rank']:>9} {r['codim']:>6}  {'yes' if r['pass'] else 'NO'}")
    return "\n".join(lines)
