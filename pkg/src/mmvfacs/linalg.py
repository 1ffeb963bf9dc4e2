"""Dense real-matrix kernel.

Matrices are plain 2-D ``float64`` numpy arrays. Index sets (supports) are
sorted, duplicate-free ``intp`` arrays; :func:`index_set` produces that
canonical form.

Least squares goes through a column-pivoted QR factorization; the normal
equations are never formed and no inverse is ever built explicitly.
"""

from __future__ import annotations

from typing import Iterable

import numpy as np
import scipy.linalg as sla

from .errors import DimensionMismatch, RankDeficient

RANK_RTOL = 1e-10


def as_mat(X, name: str = "matrix") -> np.ndarray:
    """Return ``X`` as a finite 2-D float64 array (a 1-D input becomes a column)."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2:
        raise DimensionMismatch(f"{name} must be 2-D, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ValueError(f"{name} contains NaN or Inf")
    return X


def index_set(indices: Iterable[int] = (), dim: int | None = None) -> np.ndarray:
    """Canonical index set: strictly increasing, duplicate-free, zero-based."""
    if not isinstance(indices, np.ndarray):
        indices = list(indices)
    idx = np.unique(np.asarray(indices, dtype=np.intp).ravel())
    if idx.size and idx[0] < 0:
        raise IndexError(f"negative index {idx[0]}")
    if dim is not None and idx.size and idx[-1] >= dim:
        raise IndexError(f"index {idx[-1]} out of range for dimension {dim}")
    return idx


def numerical_rank(A: np.ndarray, rtol: float = RANK_RTOL) -> int:
    if A.size == 0:
        return 0
    s = np.linalg.svd(A, compute_uv=False)
    if s[0] == 0.0:
        return 0
    return int(np.count_nonzero(s > rtol * s[0]))


def lstsq(A_sub, B, rtol: float = RANK_RTOL) -> np.ndarray:
    """Least-squares solution of ``A_sub @ X = B`` for full-column-rank ``A_sub``.

    Uses a column-pivoted QR factorization. The numerical rank is checked on
    the singular values of the triangular factor (identical to those of
    ``A_sub``) at ``rtol`` relative to the largest one.

    Raises
    ------
    RankDeficient
        If the numerical rank is smaller than the number of columns.
    DimensionMismatch
        If the row counts differ.
    """
    A_sub = np.asarray(A_sub, dtype=np.float64)
    B = np.asarray(B, dtype=np.float64)
    squeeze = B.ndim == 1
    if squeeze:
        B = B[:, None]
    m, n = A_sub.shape
    if B.shape[0] != m:
        raise DimensionMismatch(f"A has {m} rows but B has {B.shape[0]}")
    if n == 0:
        X = np.zeros((0, B.shape[1]))
        return X[:, 0] if squeeze else X
    if n > m:
        raise RankDeficient(f"{n} columns but only {m} rows")
    Q, R, perm = sla.qr(A_sub, mode="economic", pivoting=True)
    s = np.linalg.svd(R, compute_uv=False)
    if s[0] == 0.0 or s[-1] <= rtol * s[0]:
        rank = 0 if s[0] == 0.0 else int(np.count_nonzero(s > rtol * s[0]))
        raise RankDeficient(f"numerical rank {rank} < {n} columns")
    Y = sla.solve_triangular(R, Q.T @ B, lower=False)
    X = np.empty_like(Y)
    X[perm] = Y
    return X[:, 0] if squeeze else X


def lstsq_min_norm(A_sub, B, rtol: float = RANK_RTOL) -> np.ndarray:
    """Minimum-norm least squares via a truncated SVD; never raises on rank loss."""
    A_sub = np.asarray(A_sub, dtype=np.float64)
    B = np.asarray(B, dtype=np.float64)
    if A_sub.shape[1] == 0:
        return np.zeros((0,) + B.shape[1:])
    U, s, Vt = np.linalg.svd(A_sub, full_matrices=False)
    keep = s > rtol * s[0] if s.size and s[0] > 0 else np.zeros(s.shape, dtype=bool)
    coef = (U[:, keep].T @ B) / (s[keep][:, None] if B.ndim == 2 else s[keep])
    return Vt[keep].T @ coef


def row_l2_norms(X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    return np.sqrt(np.einsum("ij,ij->i", X, X))


def mixed_norm(X, p: float, q: float) -> float:
    """The (p, q) mixed norm ``(sum_i ||X[i, :]||_p ** q) ** (1/q)``.

    ``q = inf`` gives the largest row p-norm. (2, 2) is the Frobenius norm
    and (2, 1) the sum of row l2 norms.
    """
    if p < 1 or q < 1:
        raise ValueError("mixed norm needs p >= 1 and q >= 1")
    X = np.asarray(X, dtype=np.float64)
    if X.size == 0:
        return 0.0
    rows = np.linalg.norm(X, ord=p, axis=1)
    return float(np.linalg.norm(rows, ord=q))


def top_k_rows(X, K: int) -> np.ndarray:
    """Indices of the ``K`` rows of largest l2 norm, ties to the smaller index."""
    norms = row_l2_norms(X)
    if K > norms.size:
        raise ValueError(f"K={K} exceeds {norms.size} rows")
    order = np.argsort(-norms, kind="stable")
    return np.sort(order[:K]).astype(np.intp)


def keep_top_k_rows(X, K: int) -> np.ndarray:
    """``X`` with every row outside its K largest (by l2 norm) set to zero."""
    X = np.asarray(X, dtype=np.float64)
    out = np.zeros_like(X)
    keep = top_k_rows(X, K)
    out[keep] = X[keep]
    return out


def embed_rows(values: np.ndarray, rows: np.ndarray, n_rows: int) -> np.ndarray:
    """Scatter ``values`` into an ``n_rows``-row zero matrix at ``rows``."""
    out = np.zeros((n_rows, values.shape[1]))
    out[rows] = values
    return out
