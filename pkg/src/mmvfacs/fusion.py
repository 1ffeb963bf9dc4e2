"""MMV-FACS: fuse the support estimates of several participating algorithms.

1. ``gamma`` = union of the participants' supports.
2. ``V[gamma] = lstsq(A[:, gamma], B)``, zero elsewhere.
3. Support = the K rows of ``V`` with the largest l2 norm.
4. Estimate = least squares on that support.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import RankDeficient, UnionTooLarge
from .linalg import embed_rows, index_set, lstsq, lstsq_min_norm, row_l2_norms, top_k_rows


@dataclass
class FusionOutput:
    gamma: np.ndarray
    support: np.ndarray
    X_hat: np.ndarray
    V: np.ndarray
    flags: list = field(default_factory=list)

    @property
    def R(self) -> int:
        return int(self.gamma.size)


def union_supports(supports: Sequence) -> np.ndarray:
    parts = [index_set(s) for s in supports]
    if not parts:
        return index_set()
    return index_set(np.concatenate(parts))


def _solve_flagged(A_sub, B, flags, flag):
    try:
        return lstsq(A_sub, B)
    except RankDeficient:
        flags.append(flag)
        return lstsq_min_norm(A_sub, B)


def fuse(A, B, K: int, supports: Sequence, *, prune_union: bool = False) -> FusionOutput:
    """Fuse ``supports`` (at least two) into a K-row estimate of X.

    A union larger than ``M`` raises :class:`UnionTooLarge` unless
    ``prune_union`` is set, in which case only the ``M`` union atoms with the
    largest correlation row norm ``||A_j^T B||`` are kept and the output is
    flagged ``union_pruned``. A rank-deficient least-squares problem falls
    back to the minimum-norm solution and is flagged.
    """
    A = np.asarray(A, dtype=np.float64)
    B = np.asarray(B, dtype=np.float64)
    if B.ndim == 1:
        B = B[:, None]
    M, N = A.shape
    if len(supports) < 2:
        raise ValueError("fusion needs at least two participating supports")
    flags: list[str] = []
    gamma = union_supports(supports)
    if gamma.size and gamma[-1] >= N:
        raise IndexError(f"support index {gamma[-1]} out of range for N={N}")
    if gamma.size > M:
        if not prune_union:
            raise UnionTooLarge(f"|union| = {gamma.size} exceeds M = {M}")
        corr = row_l2_norms(A[:, gamma].T @ B)
        keep = np.argsort(-corr, kind="stable")[:M]
        gamma = index_set(gamma[keep])
        flags.append("union_pruned")
    if gamma.size < K:
        raise ValueError(f"|union| = {gamma.size} is smaller than K = {K}")

    V_gamma = _solve_flagged(A[:, gamma], B, flags, "rank_deficient_union")
    V = embed_rows(V_gamma, gamma, N)
    # top-K is taken within gamma so that zero rows outside it can never win a tie
    support = gamma[top_k_rows(V_gamma, K)]
    coef = _solve_flagged(A[:, support], B, flags, "rank_deficient_support")
    X_hat = embed_rows(coef, support, N)
    return FusionOutput(gamma, support, X_hat, V, flags)
