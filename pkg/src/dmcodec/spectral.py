"""Eigen-trajectory dictionaries and graph Fourier projections.

A dictionary is the orthonormal eigenvector matrix of the temporal
autocorrelation ``A @ A.T`` of a trajectory matrix, columns ordered by
decreasing eigenvalue.  Blocks after the first are tracked with orthogonal
iterations warm-started from the previous block's dictionary.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
from scipy.linalg.lapack import dgeqrf as _geqrf, dorgqr as _orgqr

from .errors import ConvergenceFailure, DimensionMismatch, RankDeficiency


@dataclass(frozen=True, eq=False)
class TrajectoryDictionary:
    U: np.ndarray
    eigenvalues: np.ndarray | None = None

    @property
    def m(self) -> int:
        return self.U.shape[0]

    def orthonormality_error(self) -> float:
        return float(np.abs(self.U.T @ self.U - np.eye(self.m)).max())


def _as_matrix(u):
    return u.U if isinstance(u, TrajectoryDictionary) else np.asarray(u, dtype=np.float64)


def canonical_signs(u: np.ndarray) -> np.ndarray:
    """Flip columns so each one's largest-magnitude entry is non-negative."""
    u = np.array(u, dtype=np.float64, copy=True)
    if u.size == 0:
        return u
    pivot = u[np.argmax(np.abs(u), axis=0), np.arange(u.shape[1])]
    u[:, pivot < 0] *= -1.0
    return u


def autocorrelation(a) -> np.ndarray:
    """Symmetrised ``A @ A.T`` of a ``k x n`` matrix."""
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] < 1 or a.shape[1] < 1:
        raise DimensionMismatch(f"expected a non-empty 2-D matrix, got shape {a.shape}")
    r = a @ a.T
    return 0.5 * (r + r.T)


def full_eigenbasis(r) -> TrajectoryDictionary:
    """Direct symmetric eigendecomposition, eigenvalues descending."""
    r = np.asarray(r, dtype=np.float64)
    if r.ndim != 2 or r.shape[0] != r.shape[1]:
        raise DimensionMismatch(f"autocorrelation must be square, got {r.shape}")
    if not np.isfinite(r).all():
        raise ConvergenceFailure("autocorrelation contains non-finite entries")
    try:
        w, v = scipy.linalg.eigh(r)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise ConvergenceFailure(f"eigendecomposition failed: {exc}") from exc
    order = np.argsort(w)[::-1]
    w = np.maximum(w[order], 0.0)
    return TrajectoryDictionary(canonical_signs(v[:, order]), w)


RANK_RTOL = 1e-10


def _qr(m):
    # raw LAPACK Householder QR: geqrf + orgqr, without the wrapper overhead
    qr, tau, _, info = _geqrf(m)
    if info:
        raise ConvergenceFailure(f"geqrf failed with info={info}")
    diag = qr.diagonal().copy()
    q, _, info = _orgqr(qr, tau)
    if info:
        raise ConvergenceFailure(f"orgqr failed with info={info}")
    return q, diag


def _orthonormal_factor(m: np.ndarray, prev: np.ndarray, deficient: str, block=None) -> np.ndarray:
    # Householder QR; make diag(R) >= 0 so columns do not flip between sweeps
    if deficient == "carry":
        norms = np.sqrt(np.einsum("ij,ij->j", m, m))
        top = norms.max(initial=0.0)
        small = norms <= RANK_RTOL * max(top, np.finfo(float).tiny)
        if small.any():
            # null-space directions carry over from the previous iterate
            m = np.where(small, prev * max(top, 1.0), m)
    q, d = _qr(m)
    ad = np.abs(d)
    top = ad.max(initial=0.0)
    tiny = ad <= RANK_RTOL * max(top, np.finfo(float).tiny)
    if tiny.any():
        if deficient == "raise":
            col = int(np.argmax(tiny))
            where = f" in block {block}" if block is not None else ""
            raise RankDeficiency(f"QR found a zero column {col}{where}", block=block)
        m = np.where(tiny, prev * max(top, 1.0), m)
        q, d = _qr(m)
    q[:, d < 0] *= -1.0
    return q


def orthogonal_iterations(r, u_init, t_max: int = 4, tol: float | None = None, block=None,
                          deficient: str = "raise", history: list | None = None) -> TrajectoryDictionary:
    """Refine ``u_init`` by ``t_max - 1`` sweeps of ``U <- qr(R @ U)``.

    Parameters
    ----------
    r : ndarray (m, m)
        Symmetric PSD autocorrelation of the block.
    u_init : TrajectoryDictionary or ndarray (m, m)
        Warm start, normally the previous block's dictionary.
    t_max : int
        Iteration count as in the classic formulation; ``t_max=1`` returns
        the warm start unchanged (up to canonical signs).
    tol : float, optional
        Stop early once no leading subspace moved by more than ``tol`` radians.
    block : int, optional
        Block number quoted in :class:`RankDeficiency`.
    deficient : {'raise', 'carry'}
        What to do when ``R @ U`` loses rank: raise, or keep the previous
        iterate's column for the missing directions.
    history : list, optional
        Receives every iterate.
    """
    r = np.asarray(r, dtype=np.float64)
    u = _as_matrix(u_init)
    if r.ndim != 2 or r.shape[0] != r.shape[1] or u.shape[0] != r.shape[0]:
        raise DimensionMismatch(f"R is {r.shape} but the initial dictionary is {u.shape}")
    if t_max < 1:
        raise ValueError("t_max must be at least 1")
    if deficient not in ("raise", "carry"):
        raise ValueError(f"unknown rank-deficiency policy {deficient!r}")
    for _ in range(2, t_max + 1):
        nxt = _orthonormal_factor(r @ u, u, deficient, block=block)
        if history is not None:
            history.append(nxt)
        done = tol is not None and _column_drift(u, nxt) < tol
        u = nxt
        if done:
            break
    # column order follows the warm start, so Rayleigh quotients need not be sorted
    return TrajectoryDictionary(canonical_signs(u))


def _column_drift(u, v):
    # nested leading subspaces are what the sweeps converge; track the worst one
    if u.shape[1] < 2:
        return 0.0
    return max(subspace_angle(u[:, :p], v[:, :p]) for p in range(1, u.shape[1]))


def gft_project(u, delta_t) -> np.ndarray:
    """Graph Fourier coefficients ``U.T @ X``."""
    u = _as_matrix(u)
    x = np.asarray(delta_t, dtype=np.float64)
    if x.shape[0] != u.shape[0]:
        raise DimensionMismatch(f"dictionary is {u.shape[0]}-dimensional, input has {x.shape[0]} rows")
    return u.T @ x


def gft_unproject(u, c) -> np.ndarray:
    u = _as_matrix(u)
    c = np.asarray(c, dtype=np.float64)
    if c.shape[0] != u.shape[1]:
        raise DimensionMismatch(f"dictionary has {u.shape[1]} atoms, coefficients have {c.shape[0]} rows")
    return u @ c


def align_signs(prev, cur) -> TrajectoryDictionary:
    """Negate columns of ``cur`` that point away from the matching column of ``prev``."""
    p, c = _as_matrix(prev), _as_matrix(cur)
    if p.shape != c.shape:
        raise DimensionMismatch(f"cannot align {c.shape} against {p.shape}")
    flip = np.einsum("ij,ij->j", p, c) < 0
    out = np.where(flip, -c, c)
    lam = cur.eigenvalues if isinstance(cur, TrajectoryDictionary) else None
    return TrajectoryDictionary(out, lam)


def subspace_angle(u, v) -> float:
    """Largest principal angle (radians) between the column spans of ``u`` and ``v``."""
    u, v = _as_matrix(u), _as_matrix(v)
    if u.ndim == 1:
        u, v = u[:, None], v[:, None]
    if u.shape != v.shape:
        raise DimensionMismatch(f"shapes differ: {u.shape} vs {v.shape}")
    s = np.linalg.svd(u.T @ v, compute_uv=False)
    smin = float(np.clip(s.min(), 0.0, 1.0))
    if smin > 0.9:
        # arccos loses digits near 1; use the sine of the angle instead
        resid = v - u @ (u.T @ v)
        return float(np.arcsin(min(1.0, np.linalg.norm(resid, 2))))
    return float(np.arccos(smin))
