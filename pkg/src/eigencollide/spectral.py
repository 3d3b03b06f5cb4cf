"""Ordered spectra, k-gaps, contour-integral projectors and eigenbasis continuation.

The eigensolver is a cyclic Jacobi iteration vectorized over a leading batch
axis, so a whole path of small matrices is diagonalized at once.  Hermitian
inputs get a diagonal phase step before each real rotation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (AccuracyError, ContourDegenerateError, DomainError, NumericalError,
                     OutOfNeighborhoodError, ShapeError, SpectralDriftError)

MAX_SWEEPS = 60
SWEEP_TOL = 1e-15


def _jacobi(a, want_vectors):
    """Diagonalize a stack of Hermitian matrices of shape (B, d, d) in place."""
    batch, d, _ = a.shape
    is_complex = np.iscomplexobj(a)
    v = np.broadcast_to(np.eye(d, dtype=a.dtype), a.shape).copy() if want_vectors else None
    norm = np.sqrt(np.sum(np.abs(a) ** 2, axis=(1, 2)))
    limit = SWEEP_TOL * np.where(norm > 0, norm, 1.0)
    iu = np.triu_indices(d, 1)
    active = np.arange(batch)
    for _ in range(MAX_SWEEPS):
        off = np.sqrt(np.sum(np.abs(a[active][:, iu[0], iu[1]]) ** 2, axis=1) * 2.0)
        active = active[off > limit[active]]
        if active.size == 0:
            break
        sub = a[active]
        vs = v[active] if want_vectors else None
        for p in range(d - 1):
            for q in range(p + 1, d):
                apq = sub[:, p, q]
                mag = np.abs(apq)
                nz = mag > 0
                if not nz.any():
                    continue
                if is_complex:
                    # rotate column/row q so that a_pq becomes real and nonnegative
                    phase = np.where(nz, apq / np.where(nz, mag, 1.0), 1.0)
                    sub[:, :, q] *= np.conj(phase)[:, None]
                    sub[:, q, :] *= phase[:, None]
                    if want_vectors:
                        vs[:, :, q] *= np.conj(phase)[:, None]
                    apq = sub[:, p, q].real
                app = sub[:, p, p].real
                aqq = sub[:, q, q].real
                safe = np.where(nz, apq, 1.0)
                theta = (aqq - app) / (2.0 * safe)
                t = np.sign(theta) / (np.abs(theta) + np.sqrt(theta * theta + 1.0))
                t = np.where(theta == 0, 1.0, t)
                t = np.where(nz, t, 0.0)
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                cc, ss = c[:, None], s[:, None]
                colp = sub[:, :, p].copy()
                colq = sub[:, :, q].copy()
                sub[:, :, p] = cc * colp - ss * colq
                sub[:, :, q] = ss * colp + cc * colq
                rowp = sub[:, p, :].copy()
                rowq = sub[:, q, :].copy()
                sub[:, p, :] = cc * rowp - ss * rowq
                sub[:, q, :] = ss * rowp + cc * rowq
                sub[nz, p, q] = 0.0
                sub[nz, q, p] = 0.0
                if want_vectors:
                    vp = vs[:, :, p].copy()
                    vq = vs[:, :, q].copy()
                    vs[:, :, p] = cc * vp - ss * vq
                    vs[:, :, q] = ss * vp + cc * vq
        a[active] = sub
        if want_vectors:
            v[active] = vs
    else:
        off = np.sqrt(np.sum(np.abs(a[:, iu[0], iu[1]]) ** 2, axis=1) * 2.0)
        if np.any(off > 1e-12 * np.where(norm > 0, norm, 1.0)):
            raise NumericalError("Jacobi iteration did not converge")
    return np.real(np.diagonal(a, axis1=1, axis2=2)).copy(), v


def eigh_batch(mats, vectors=False):
    """Ascending eigenvalues (and optionally eigenvectors) of a stack (..., d, d)."""
    mats = np.asarray(mats)
    if mats.ndim < 2 or mats.shape[-1] != mats.shape[-2]:
        raise ShapeError("expected square matrices")
    if not np.all(np.isfinite(mats)):
        raise NumericalError("non-finite matrix entries")
    lead = mats.shape[:-2]
    d = mats.shape[-1]
    dtype = complex if np.iscomplexobj(mats) else float
    work = np.array(mats, dtype=dtype).reshape((-1, d, d))
    if dtype is complex and np.all(work.imag == 0):
        work = work.real.copy()
    vals, vecs = _jacobi(work, vectors)
    order = np.argsort(vals, axis=1, kind="stable")
    vals = np.take_along_axis(vals, order, axis=1).reshape(lead + (d,))
    if not vectors:
        return vals
    vecs = np.take_along_axis(vecs, order[:, None, :], axis=2)
    if dtype is complex and not np.iscomplexobj(vecs):
        vecs = vecs.astype(complex)
    return vals, vecs.reshape(lead + (d, d))


def eigs_ascending(m, vectors=False):
    """Spectrum E_1 <= ... <= E_d of one symmetric/Hermitian matrix."""
    m = np.asarray(m)
    if m.ndim != 2:
        raise ShapeError("expected a single square matrix")
    out = eigh_batch(m[None], vectors)
    if vectors:
        return out[0][0], out[1][0]
    return out[0]


def k_gap(values, k):
    """Smallest width E_{i+k} - E_{i+1} over windows of k consecutive eigenvalues.

    Works on the last axis, so a whole SpectrumPath is handled in one call.
    """
    values = np.asarray(values, dtype=float)
    d = values.shape[-1]
    if not 2 <= k <= d:
        raise DomainError(f"k must satisfy 2 <= k <= d={d}, got {k}")
    widths = values[..., k - 1:] - values[..., : d - k + 1]
    return np.min(widths, axis=-1)


@dataclass(frozen=True)
class ContourSpec:
    center: float
    radius: float
    nodes: int = 32

    def __post_init__(self):
        if not self.radius > 0:
            raise DomainError("contour radius must be positive")
        if self.nodes < 16:
            raise DomainError("at least 16 quadrature nodes required")


NODE_CAP = 512
IDEMPOTENCE_TARGET = 1e-10
PROJECTOR_TOL = 1e-8


def _trapezoid_projector(m, spec, nodes):
    d = m.shape[0]
    theta = 2.0 * np.pi * np.arange(nodes) / nodes
    w = spec.radius * np.exp(1j * theta)
    z = spec.center + w
    resolvent = np.linalg.solve(z[:, None, None] * np.eye(d) - m[None], np.broadcast_to(np.eye(d), (nodes, d, d)))
    return np.tensordot(w, resolvent, axes=1) / nodes


def contour_projection(m, spec, spectrum=None):
    """Spectral projector onto the eigenvalues enclosed by a circle.

    Equispaced trapezoidal quadrature of (1/2 pi i) \\oint (zI - m)^{-1} dz,
    starting from ``spec.nodes`` and doubling until the idempotence residual
    is below 1e-10 (cap 512 nodes).
    """
    m = np.asarray(m)
    real_input = not np.iscomplexobj(m) or np.all(np.asarray(m).imag == 0)
    vals = eigs_ascending(m) if spectrum is None else np.asarray(spectrum)
    diameter = float(vals[-1] - vals[0])
    dist = np.abs(np.abs(vals - spec.center) - spec.radius)
    if np.any(dist <= 1e-8 * diameter) or np.any(dist == 0):
        raise ContourDegenerateError("an eigenvalue lies on the contour")
    inside = int(np.sum(np.abs(vals - spec.center) < spec.radius))
    nodes = spec.nodes
    while True:
        p = _trapezoid_projector(m.astype(complex), spec, nodes)
        resid = np.linalg.norm(p @ p - p)
        if resid < IDEMPOTENCE_TARGET or nodes >= NODE_CAP:
            break
        nodes *= 2
    if real_input:
        p = p.real
    herm = np.linalg.norm(p - p.conj().T)
    trace_err = abs(np.trace(p).real - inside)
    if resid > PROJECTOR_TOL or herm > PROJECTOR_TOL or trace_err > PROJECTOR_TOL:
        raise AccuracyError(f"projector quadrature did not converge (residual {resid:.3g})")
    return p


def canonical_decomposition(a, k, tol=1e-8):
    """(P, D) with A = P diag(D) P*, simple eigenvalues ascending first, the k-fold one last."""
    vals, vecs = eigs_ascending(a, vectors=True)
    d = vals.size
    scale = max(float(vals[-1] - vals[0]), 1.0)
    widths = vals[k - 1:] - vals[: d - k + 1]
    start = int(np.argmin(widths))
    if widths[start] > tol * scale:
        raise DomainError(f"matrix has no {k}-fold eigenvalue")
    block = list(range(start, start + k))
    rest = [i for i in range(d) if i not in block]
    order = rest + block
    dvals = vals[order].copy()
    dvals[d - k:] = np.mean(vals[block])
    return vecs[:, order], dvals


def cluster_radius(distinct):
    distinct = np.asarray(distinct, dtype=float)
    if distinct.size < 2:
        return None
    diffs = np.abs(distinct[:, None] - distinct[None, :])
    return 0.5 * float(np.min(diffs[~np.eye(distinct.size, dtype=bool)]))


def _normalize_guarded(vec, what):
    nrm = float(np.linalg.norm(vec))
    if nrm < 0.5:
        raise OutOfNeighborhoodError(f"{what} has norm {nrm:.3g} < 0.5")
    return vec / nrm


def continue_eigenbasis(p, dvals, b, k):
    """Eigenbasis of B continued from the decomposition A = P diag(D) P*.

    The first d-k columns are the normalized projections of the matching
    columns of P onto their eigenvalue cluster of B; the last k come from
    Gram-Schmidt on the projections of P's repeated-block columns.  Returns
    (Q, F) with F the diagonal of Q* B Q.
    """
    p = np.asarray(p)
    b = np.asarray(b)
    dvals = np.asarray(dvals, dtype=float)
    d = dvals.size
    if not 1 <= k <= d:
        raise DomainError("k out of range")
    distinct = dvals[: d - k + 1]
    if np.any(dvals[d - k:] != dvals[d - k]) or np.unique(distinct).size != distinct.size:
        raise DomainError("reference must have d-k+1 distinct eigenvalues with the repeated block last")
    complex_out = np.iscomplexobj(p) or np.iscomplexobj(b)
    dtype = complex if complex_out else float
    radius = cluster_radius(distinct)
    spectrum_b = eigs_ascending(b)
    projectors = []
    for i, center in enumerate(distinct):
        mult = 1 if i < d - k else k
        if radius is None:
            proj = np.eye(d, dtype=dtype)
        else:
            try:
                proj = contour_projection(b, ContourSpec(float(center), radius), spectrum_b)
            except ContourDegenerateError as exc:
                raise SpectralDriftError(str(exc)) from exc
            enclosed = int(np.sum(np.abs(spectrum_b - center) < radius))
            if enclosed != mult:
                raise SpectralDriftError(f"cluster {i} holds {enclosed} eigenvalues, expected {mult}")
        projectors.append(proj)
    q = np.zeros((d, d), dtype=dtype)
    for j in range(d - k):
        q[:, j] = _normalize_guarded(projectors[j] @ p[:, j], f"projected column {j}")
    block = projectors[-1]
    for j in range(d - k, d):
        y = _normalize_guarded(block @ p[:, j], f"projected column {j}")
        for i in range(d - k, j):
            y = y - q[:, i] * np.vdot(q[:, i], y)
        q[:, j] = _normalize_guarded(y, f"Gram-Schmidt residual {j}")
    f = np.real(np.einsum("ij,ik,kj->j", q.conj(), b, q))
    return q, f


def align_columns(q, ref):
    """Multiply each column of ``q`` by the unimodular scalar making <ref_j, q_j> real >= 0."""
    q = np.array(q, copy=True)
    ip = np.einsum("ij,ij->j", np.conj(ref), q)
    mag = np.abs(ip)
    factor = np.where(mag > 0, np.conj(ip) / np.where(mag > 0, mag, 1.0), 1.0)
    if not np.iscomplexobj(q):
        factor = factor.real
    return q * factor[None, :]


def spectrum_path_rows(points, values, ks):
    gaps = [k_gap(values, k) for k in ks]
    for idx, (pt, row) in enumerate(zip(points, values)):
        yield list(pt) + list(row) + [g[idx] for g in gaps]


def spectrum_path_header(n, d, ks):
    return ([f"t_{j + 1}" for j in range(n)] + [f"lambda_{i + 1}" for i in range(d)]
            + [f"kgap_{k}" for k in ks])


def operator_norm(mats):
    """Spectral norm of Hermitian matrices = max |eigenvalue|."""
    vals = eigh_batch(mats)
    return np.max(np.abs(vals), axis=-1)


def spectral_diameter(values):
    values = np.asarray(values)
    return values[..., -1] - values[..., 0]


__all__ = [
    "ContourSpec", "align_columns", "canonical_decomposition", "cluster_radius",
    "continue_eigenbasis", "contour_projection", "eigh_batch", "eigs_ascending", "k_gap",
    "operator_norm", "spectral_diameter", "spectrum_path_header", "spectrum_path_rows",
]
