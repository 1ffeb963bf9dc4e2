"""Participating MMV recovery algorithms.

Every solver returns a :class:`SolverOutput` holding exactly ``K`` support
indices and an estimate refit by least squares on that support. M-FOCUSS
and M-BPDN do not produce exactly K-sparse iterates; their support is the
K rows of largest l2 norm of the final iterate.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .errors import InvalidSparsity, NonConvergence
from .linalg import embed_rows, index_set, lstsq, row_l2_norms, top_k_rows


class SolverId(str, Enum):
    MOMP = "MOMP"
    MSP = "MSP"
    MFOCUSS = "MFOCUSS"
    MBPDN = "MBPDN"
    ORACLE = "Oracle"


class StepRule(str, Enum):
    FIXED_LIPSCHITZ = "fixed"
    BACKTRACKING = "backtracking"


@dataclass(frozen=True)
class SolverConfig:
    max_iter: int = 200
    tol: float = 1e-6
    focuss_p: float = 0.8
    focuss_eps_floor: float = 1e-10
    bpdn_lambda: float | None = None  # None -> 0.1 * max row norm of A^T B
    bpdn_step_rule: StepRule = StepRule.FIXED_LIPSCHITZ

    def __post_init__(self):
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if not self.tol > 0:
            raise ValueError("tol must be > 0")
        if not 0 < self.focuss_p <= 1:
            raise ValueError("focuss_p must lie in (0, 1]")
        if self.bpdn_lambda is not None and self.bpdn_lambda < 0:
            raise ValueError("bpdn_lambda must be >= 0")
        object.__setattr__(self, "bpdn_step_rule", StepRule(self.bpdn_step_rule))

    @classmethod
    def from_dict(cls, d: dict | None) -> "SolverConfig":
        return cls(**(d or {}))

    def to_dict(self) -> dict:
        return {"max_iter": self.max_iter, "tol": self.tol, "focuss_p": self.focuss_p,
                "focuss_eps_floor": self.focuss_eps_floor, "bpdn_lambda": self.bpdn_lambda,
                "bpdn_step_rule": self.bpdn_step_rule.value}


@dataclass
class SolverOutput:
    support: np.ndarray
    X_hat: np.ndarray
    residual_fro: float
    iterations: int
    solver_id: SolverId
    converged: bool = True
    history: list = field(default_factory=list)


def _refit(A, B, support, solver_id, iterations, converged=True, history=None) -> SolverOutput:
    support = index_set(support)
    coef = lstsq(A[:, support], B)
    X_hat = embed_rows(coef, support, A.shape[1])
    res = float(np.linalg.norm(B - A @ X_hat))
    return SolverOutput(support, X_hat, res, iterations, SolverId(solver_id), converged,
                        history if history is not None else [])


def _check_inputs(A, B, K):
    A = np.asarray(A, dtype=np.float64)
    B = np.asarray(B, dtype=np.float64)
    if B.ndim == 1:
        B = B[:, None]
    M, N = A.shape
    if B.shape[0] != M:
        raise ValueError(f"A has {M} rows, B has {B.shape[0]}")
    if not 0 <= K <= min(M, N):
        raise InvalidSparsity(f"K={K} must satisfy 0 <= K <= min(M, N) = {min(M, N)}")
    return A, B


def _best_k_excluding(scores: np.ndarray, exclude, k: int) -> np.ndarray:
    s = scores.copy()
    s[np.asarray(exclude, dtype=np.intp)] = -np.inf
    order = np.argsort(-s, kind="stable")
    return order[:k]


def solve_momp(A, B, K: int, cfg: SolverConfig | None = None) -> SolverOutput:
    """Simultaneous OMP: pick the atom whose correlation row has the largest l2 norm."""
    A, B = _check_inputs(A, B, K)
    S: list[int] = []
    R = B
    history = [float(np.linalg.norm(R))]
    for _ in range(K):
        corr = row_l2_norms(A.T @ R)
        corr[S] = -np.inf
        S.append(int(np.argmax(corr)))
        cols = np.sort(np.array(S, dtype=np.intp))
        R = B - A[:, cols] @ lstsq(A[:, cols], B)
        history.append(float(np.linalg.norm(R)))
    return _refit(A, B, S, SolverId.MOMP, K, history=history)


def solve_msp(A, B, K: int, cfg: SolverConfig | None = None) -> SolverOutput:
    """Subspace pursuit on row-sparse matrices.

    Stops as soon as an iteration fails to lower the residual Frobenius norm,
    when the relative residual drops below ``cfg.tol``, or at ``max_iter``.
    ``history`` holds the accepted residual norms, which are therefore
    non-increasing.
    """
    cfg = cfg or SolverConfig()
    A, B = _check_inputs(A, B, K)
    M = A.shape[0]
    if 2 * K > M:
        raise InvalidSparsity(f"subspace pursuit needs 2K <= M, got K={K}, M={M}")
    b_norm = float(np.linalg.norm(B))

    S = top_k_rows(A.T @ B, K)
    R = B - A[:, S] @ lstsq(A[:, S], B)
    res = float(np.linalg.norm(R))
    history = [res]
    iterations = 1
    while iterations < cfg.max_iter and res > cfg.tol * b_norm:
        cand = _best_k_excluding(row_l2_norms(A.T @ R), S, K)
        merged = index_set(np.concatenate([S, cand]))
        V = lstsq(A[:, merged], B)
        S_new = merged[top_k_rows(V, K)]
        R_new = B - A[:, S_new] @ lstsq(A[:, S_new], B)
        res_new = float(np.linalg.norm(R_new))
        iterations += 1
        if res_new >= res:
            break
        S, R, res = S_new, R_new, res_new
        history.append(res)
    return _refit(A, B, S, SolverId.MSP, iterations, history=history)


def focuss_diversity(X, p: float) -> float:
    """Row-sparsity diversity ``sum_i ||X[i, :]||_2 ** p`` minimized by M-FOCUSS."""
    return float(np.sum(row_l2_norms(X) ** p))


def _tikhonov_solve(AW, B, eps):
    # argmin ||AW Q - B||^2 + eps ||Q||^2 = AW^T (AW AW^T + eps I)^-1 B
    G = AW @ AW.T
    G[np.diag_indices_from(G)] += eps
    try:
        c = cho_factor(G, check_finite=False)
        return AW.T @ cho_solve(c, B, check_finite=False)
    except np.linalg.LinAlgError:
        pass
    U, s, Vt = np.linalg.svd(AW, full_matrices=False)
    return Vt.T @ ((s / (s * s + eps))[:, None] * (U.T @ B))


def mfocuss_iterates(A, B, cfg: SolverConfig | None = None):
    """Run the M-FOCUSS reweighting loop and return ``(X, iterations, converged, objective)``.

    Starts from the regularized minimum-norm solution and iterates
    ``X <- W (A W)^+ B`` with ``W = diag(||X[i, :]||^(1 - p/2))``.
    """
    cfg = cfg or SolverConfig()
    A = np.asarray(A, dtype=np.float64)
    B = np.asarray(B, dtype=np.float64)
    p, eps = cfg.focuss_p, cfg.focuss_eps_floor
    X = _tikhonov_solve(A, B, eps)
    objective = [focuss_diversity(X, p)]
    for it in range(1, cfg.max_iter + 1):
        w = row_l2_norms(X) ** (1.0 - p / 2.0)
        X_new = w[:, None] * _tikhonov_solve(A * w, B, eps)
        diff = float(np.linalg.norm(X_new - X))
        scale = float(np.linalg.norm(X))
        X = X_new
        objective.append(focuss_diversity(X, p))
        if diff == 0.0 or diff < cfg.tol * scale:
            return X, it, True, objective
    return X, cfg.max_iter, False, objective


def solve_mfocuss(A, B, K: int, cfg: SolverConfig | None = None) -> SolverOutput:
    cfg = cfg or SolverConfig()
    A, B = _check_inputs(A, B, K)
    X, iters, converged, objective = mfocuss_iterates(A, B, cfg)
    return _refit(A, B, top_k_rows(X, K), SolverId.MFOCUSS, iters, converged, objective)


def group_soft_threshold(V, t: float) -> np.ndarray:
    """Row-wise prox of ``t * ||.||_{2,1}``: each row r becomes ``r * max(0, 1 - t/||r||)``."""
    V = np.asarray(V, dtype=np.float64)
    norms = row_l2_norms(V)
    scale = np.zeros_like(norms)
    nz = norms > 0
    scale[nz] = np.maximum(0.0, 1.0 - t / norms[nz])
    return V * scale[:, None]


def default_bpdn_lambda(A, B) -> float:
    return 0.1 * float(np.max(row_l2_norms(A.T @ B), initial=0.0))


def group_lasso_fista(A, B, lam: float, cfg: SolverConfig | None = None):
    """Accelerated proximal gradient for ``0.5 ||AX - B||_F^2 + lam ||X||_{2,1}``.

    Returns ``(X, iterations, converged, objective_history)``. Stops when the
    relative change of the objective falls below ``cfg.tol``.
    """
    cfg = cfg or SolverConfig()
    A = np.asarray(A, dtype=np.float64)
    B = np.asarray(B, dtype=np.float64)

    def smooth(Z):
        r = A @ Z - B
        return 0.5 * float(np.sum(r * r))

    def objective(Z):
        return smooth(Z) + lam * float(np.sum(row_l2_norms(Z)))

    lip = float(np.linalg.norm(A, 2)) ** 2
    if lip == 0.0:
        lip = 1.0
    X = np.zeros((A.shape[1], B.shape[1]))
    Y, t = X, 1.0
    f_old = objective(X)
    history = [f_old]
    for it in range(1, cfg.max_iter + 1):
        grad = A.T @ (A @ Y - B)
        if cfg.bpdn_step_rule is StepRule.BACKTRACKING:
            fy = smooth(Y)
            while True:
                Z = group_soft_threshold(Y - grad / lip, lam / lip)
                D = Z - Y
                if smooth(Z) <= fy + float(np.sum(grad * D)) + 0.5 * lip * float(np.sum(D * D)) + 1e-12 * abs(fy):
                    break
                lip *= 2.0
        else:
            Z = group_soft_threshold(Y - grad / lip, lam / lip)
        t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        Y = Z + ((t - 1.0) / t_new) * (Z - X)
        X, t = Z, t_new
        f = objective(X)
        history.append(f)
        if abs(f_old - f) <= cfg.tol * max(abs(f_old), np.finfo(float).tiny):
            return X, it, True, history
        f_old = f
    return X, cfg.max_iter, False, history


def solve_mbpdn(A, B, K: int, cfg: SolverConfig | None = None) -> SolverOutput:
    cfg = cfg or SolverConfig()
    A, B = _check_inputs(A, B, K)
    lam = cfg.bpdn_lambda if cfg.bpdn_lambda is not None else default_bpdn_lambda(A, B)
    X, iters, converged, history = group_lasso_fista(A, B, lam, cfg)
    return _refit(A, B, top_k_rows(X, K), SolverId.MBPDN, iters, converged, history)


def solve_oracle(A, B, true_support, K: int) -> SolverOutput:
    """Least squares on the true support; a benchmarking ceiling, not a recovery method."""
    A, B = _check_inputs(A, B, K)
    T = index_set(true_support, A.shape[1])
    if T.size != K:
        raise InvalidSparsity(f"oracle support has {T.size} indices, expected K={K}")
    return _refit(A, B, T, SolverId.ORACLE, 0)


_DISPATCH = {
    SolverId.MOMP: solve_momp,
    SolverId.MSP: solve_msp,
    SolverId.MFOCUSS: solve_mfocuss,
    SolverId.MBPDN: solve_mbpdn,
}


def run_solver(solver_id, A, B, K: int, cfg: SolverConfig | None = None,
               true_support=None, strict: bool = False) -> SolverOutput:
    """Dispatch by id. With ``strict=True`` a non-converged run raises NonConvergence."""
    sid = SolverId(solver_id)
    if sid is SolverId.ORACLE:
        if true_support is None:
            raise ValueError("the oracle needs the true support")
        return solve_oracle(A, B, true_support, K)
    out = _DISPATCH[sid](A, B, K, cfg)
    if strict and not out.converged:
        raise NonConvergence(f"{sid.value} stopped at max_iter={out.iterations}")
    return out
