"""Restricted isometry constants and the performance guarantees of MMV-FACS.

Contents:

* exact RIC by enumerating column subsets (and a sampled lower bound),
* checkers for the two auxiliary inequalities used by the analysis,
* the worst-case error bound and SRER-gain condition,
* the residual-decrease condition,
* the average-case quantities ``C2(L)``, ``A2(L)`` and the probability
  bound on picking every true atom from the union.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import asdict, dataclass, field
from enum import Enum

import numpy as np

from .errors import BudgetExceeded, DeltaOutOfRange, PremiseViolated
from .linalg import index_set, keep_top_k_rows, lstsq, mixed_norm, row_l2_norms, top_k_rows

DEFAULT_RIC_BUDGET = 2_000_000
_CHUNK = 50_000


class RicMethod(str, Enum):
    EXACT = "ExactEnumeration"
    RANDOM_LOWER_BOUND = "RandomLowerBound"


@dataclass(frozen=True)
class RicEstimate:
    s: int
    delta: float
    method: RicMethod


def _subset_delta(G: np.ndarray, idx: np.ndarray) -> float:
    sub = G[idx[:, :, None], idx[:, None, :]]
    ev = np.linalg.eigvalsh(sub)
    return float(max(ev[:, -1].max() - 1.0, 1.0 - ev[:, 0].min()))


def ric_exact(A, s: int, budget: int = DEFAULT_RIC_BUDGET,
              coherence_shortcut: bool = False) -> RicEstimate:
    """Exact restricted isometry constant of order ``s`` by enumeration.

    ``delta_s = max_S max(sigma_max(A_S)^2 - 1, 1 - sigma_min(A_S)^2)`` over
    every size-``s`` column subset. Orders above ``N`` are clamped to ``N``.
    With ``coherence_shortcut`` and ``s == 2`` the value is read off the
    largest off-diagonal Gram entry instead (valid for unit-norm columns).
    """
    A = np.asarray(A, dtype=np.float64)
    N = A.shape[1]
    s = min(int(s), N)
    if s <= 0:
        return RicEstimate(0, 0.0, RicMethod.EXACT)
    G = A.T @ A
    if s == 1:
        d = float(np.max(np.abs(np.diag(G) - 1.0)))
        return RicEstimate(1, d, RicMethod.EXACT)
    if s == 2 and coherence_shortcut:
        off = np.abs(G - np.diag(np.diag(G)))
        return RicEstimate(2, float(off.max()), RicMethod.EXACT)
    n_subsets = math.comb(N, s)
    if n_subsets > budget:
        raise BudgetExceeded(f"C({N},{s}) = {n_subsets} subsets exceeds budget {budget}")
    combos = itertools.combinations(range(N), s)
    delta = 0.0
    while True:
        chunk = list(itertools.islice(combos, _CHUNK))
        if not chunk:
            break
        delta = max(delta, _subset_delta(G, np.array(chunk, dtype=np.intp)))
    return RicEstimate(s, delta, RicMethod.EXACT)


def ric_lower_bound(A, s: int, n_samples: int = 10_000, seed: int = 0) -> RicEstimate:
    """Certified lower bound on ``delta_s`` from randomly sampled subsets."""
    A = np.asarray(A, dtype=np.float64)
    N = A.shape[1]
    s = min(int(s), N)
    if s <= 0:
        return RicEstimate(0, 0.0, RicMethod.RANDOM_LOWER_BOUND)
    rng = np.random.default_rng(seed)
    idx = np.sort(np.argsort(rng.random((n_samples, N)), axis=1)[:, :s], axis=1)
    return RicEstimate(s, _subset_delta(A.T @ A, idx), RicMethod.RANDOM_LOWER_BOUND)


def lemma1_check(A, X, R: int, K: int, delta: float, atol: float = 1e-9):
    """Check ``||AX||_F <= sqrt(1+delta) (||X||_F + ||X||_{2,1} / sqrt(R+K))``.

    Returns ``(holds, slack)`` with ``slack = rhs - lhs``; violations smaller
    than ``atol`` count as holding.
    """
    X = np.asarray(X, dtype=np.float64)
    lhs = float(np.linalg.norm(np.asarray(A) @ X))
    rhs = math.sqrt(1.0 + delta) * (float(np.linalg.norm(X)) + mixed_norm(X, 2, 1) / math.sqrt(R + K))
    slack = rhs - lhs
    return slack >= -atol, slack


def projection_residual(A, S, Y) -> np.ndarray:
    """``Y - A_S A_S^+ Y``: the part of ``Y`` outside the span of ``A[:, S]``."""
    A = np.asarray(A, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    S = index_set(S)
    if S.size == 0:
        return Y.copy()
    A_S = A[:, S]
    return Y - A_S @ lstsq(A_S, Y)


def lemma2_check(A, T1, T2, Y, delta: float | None = None, atol: float = 1e-9):
    """Two-sided bound on the residual of ``Y`` after projecting out ``span(A_T2)``.

    Verifies ``(1 - delta/(1-delta)) ||Y||_F <= ||R||_F <= ||Y||_F`` where
    ``Y`` lies in ``span(A_T1)``, ``T1`` and ``T2`` are disjoint and
    ``delta = delta_{|T1|+|T2|}`` (computed exactly when not given).

    Returns ``(holds, lower_slack, upper_slack)``.
    """
    A = np.asarray(A, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    T1, T2 = index_set(T1), index_set(T2)
    if np.intersect1d(T1, T2).size:
        raise PremiseViolated("T1 and T2 must be disjoint")
    y_norm = float(np.linalg.norm(Y))
    if np.linalg.norm(projection_residual(A, T1, Y)) > 1e-8 * max(y_norm, 1.0):
        raise PremiseViolated("Y is not in the span of A[:, T1]")
    if delta is None:
        delta = ric_exact(A, T1.size + T2.size).delta
    if delta >= 1.0:
        raise DeltaOutOfRange(f"delta = {delta} >= 1")
    r_norm = float(np.linalg.norm(projection_residual(A, T2, Y)))
    lower_slack = r_norm - (1.0 - delta / (1.0 - delta)) * y_norm
    upper_slack = y_norm - r_norm
    return lower_slack >= -atol and upper_slack >= -atol, lower_slack, upper_slack


@dataclass
class BoundReport:
    delta: float
    R: int
    K: int
    C1: float
    C2: float
    C3: float
    nu: float
    error_bound: float
    eta_i: float | None = None
    zeta: float | None = None
    xi: float | None = None
    gain_condition_holds: bool = False
    gain_factor: float | None = None
    flags: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)


def thm1_constants(delta: float, R: int, K: int):
    """``(C1, C2, C3, nu)`` of the worst-case error bound; needs ``0 <= delta < 1``."""
    if not 0.0 <= delta < 1.0:
        raise DeltaOutOfRange(f"delta = {delta} outside [0, 1); the bound is vacuous")
    nu = (3.0 - delta) / (1.0 - delta) ** 2
    root = math.sqrt(1.0 + delta)
    C1 = 1.0 + nu * root
    C2 = nu * root / math.sqrt(R + K)
    C3 = (1.0 + delta) / (1.0 - delta) ** 2
    return C1, C2, C3, nu


def _resolve_delta(A_or_delta, s: int) -> float:
    if np.ndim(A_or_delta) == 0:
        return float(A_or_delta)
    return ric_exact(A_or_delta, s).delta


def _complement_norm(X, keep) -> float:
    mask = np.ones(X.shape[0], dtype=bool)
    mask[index_set(keep)] = False
    return float(np.linalg.norm(X[mask]))


def thm1_bound(A_or_delta, X, W, gamma, K: int) -> BoundReport:
    """Upper bound on ``||X - X_hat||_F`` for the fused estimate.

    ``C1 ||X - X^K||_F + C2 ||X - X^K||_{2,1} + C3 ||X[gamma^c]||_F + nu ||W||_F``
    where ``X^K`` keeps the K largest rows. ``A_or_delta`` is either the RIC of
    order ``R + K`` or the sensing matrix (the RIC is then enumerated).
    """
    X = np.asarray(X, dtype=np.float64)
    gamma = index_set(gamma)
    R = int(gamma.size)
    delta = _resolve_delta(A_or_delta, R + K)
    C1, C2, C3, nu = thm1_constants(delta, R, K)
    tail = X - keep_top_k_rows(X, K)
    bound = (C1 * float(np.linalg.norm(tail)) + C2 * mixed_norm(tail, 2, 1)
             + C3 * _complement_norm(X, gamma) + nu * float(np.linalg.norm(W)))
    return BoundReport(delta, R, K, C1, C2, C3, nu, bound)


def gain_quantities(delta: float, X, W, gamma, participant_support, K: int):
    """``(eta_i, zeta, xi)`` for one participant.

    Raises PremiseViolated when ``X`` vanishes off the participant's support or
    off the union (the ratios are then undefined).
    """
    X = np.asarray(X, dtype=np.float64)
    gamma = index_set(gamma)
    R = int(gamma.size)
    off_gamma = _complement_norm(X, gamma)
    off_part = _complement_norm(X, participant_support)
    if off_gamma == 0.0 or off_part == 0.0:
        raise PremiseViolated("X must be nonzero off both the union and the participant's support")
    tail = X - keep_top_k_rows(X, K)
    root = math.sqrt(1.0 + delta)
    eta_i = off_gamma / off_part
    zeta = float(np.linalg.norm(W)) / off_gamma
    xi = ((3.0 * root + 1.0) * float(np.linalg.norm(tail)) / (3.0 * off_gamma)
          + root / math.sqrt(R + K) * mixed_norm(tail, 2, 1) / off_gamma)
    return eta_i, zeta, xi


def srer_gain_threshold(zeta: float, xi: float, delta: float) -> float:
    return (1.0 - delta) ** 2 / (1.0 + delta + 3.0 * zeta + 3.0 * xi)


def srer_gain_condition(eta_i: float, zeta: float, xi: float, delta: float):
    """``(holds, gain_factor)``: fusion beats participant i in SRER by ``gain_factor``
    whenever ``eta_i`` is below the threshold ``(1-delta)^2 / (1 + delta + 3 zeta + 3 xi)``."""
    if not 0.0 <= delta < 1.0:
        raise DeltaOutOfRange(f"delta = {delta} outside [0, 1)")
    if eta_i <= 0.0:
        raise PremiseViolated("eta_i must be positive")
    threshold = srer_gain_threshold(zeta, xi, delta)
    return eta_i < threshold, (threshold / eta_i) ** 2


def bound_report(A_or_delta, X, W, gamma, K: int, participant_support=None) -> BoundReport:
    """Error bound plus, when a participant support is given, its SRER-gain terms.

    A RIC of 1 or more does not raise here: the report carries an infinite
    ``error_bound`` and the ``delta_out_of_range`` flag.
    """
    gamma = index_set(gamma)
    delta = _resolve_delta(A_or_delta, gamma.size + K)
    try:
        rep = thm1_bound(delta, X, W, gamma, K)
    except DeltaOutOfRange:
        nan = math.nan
        return BoundReport(delta, int(gamma.size), K, nan, nan, nan, nan, math.inf,
                           flags=["delta_out_of_range"])
    if participant_support is not None:
        try:
            rep.eta_i, rep.zeta, rep.xi = gain_quantities(delta, X, W, gamma, participant_support, K)
        except PremiseViolated:
            rep.flags.append("gain_premise_violated")
        else:
            rep.gain_condition_holds, rep.gain_factor = srer_gain_condition(
                rep.eta_i, rep.zeta, rep.xi, delta)
    return rep


def prop2_sides(eta_i: float, zeta: float, delta: float):
    """Both sides of the residual-decrease condition, ``(lhs, rhs)``."""
    lhs = math.sqrt(1.0 + delta) / (1.0 - delta) * (1.0 + delta + 3.0 * zeta)
    rhs = (1.0 - 2.0 * delta) / (eta_i * math.sqrt(1.0 - delta)) - zeta
    return lhs, rhs


def prop2_condition(eta_i: float, zeta: float, delta: float) -> bool:
    """Sufficient condition for the fused residual to be no larger than participant i's."""
    if not 0.0 <= delta < 0.5:
        return False
    lhs, rhs = prop2_sides(eta_i, zeta, delta)
    return lhs <= rhs


def _log_gamma_ratio(L: float) -> float:
    return math.lgamma((L + 1.0) / 2.0) - math.lgamma(L / 2.0)


def c2_of_L(L: float) -> float:
    """Mean l2 norm of an L-dimensional standard normal vector."""
    if L < 1:
        raise ValueError("L must be >= 1")
    return math.sqrt(2.0) * math.exp(_log_gamma_ratio(L))


def a2_of_L(L: float) -> float:
    """``(Gamma((L+1)/2) / Gamma(L/2))^2``, approximately ``L/2``."""
    if L < 1:
        raise ValueError("L must be >= 1")
    return math.exp(2.0 * _log_gamma_ratio(L))


@dataclass
class AvgCaseReport:
    C2L: float
    A2L: float
    gamma: float
    eta_noise: float
    p_theta_lower: float
    assumption_holds: bool
    min_true: float
    max_false: float

    def to_dict(self) -> dict:
        return asdict(self)


def thm2_bound(A, gamma, T, Sigma, W, L: int) -> AvgCaseReport:
    """Average-case lower bound on the probability that fusion keeps every true atom.

    The signal on ``T`` is modelled as ``Sigma @ Phi`` with i.i.d. Gaussian
    ``Phi``. Row norms of ``A_gamma^+ A_T Sigma`` and ``A_gamma^+ W`` are
    compared between true atoms (``T`` within ``gamma``) and false atoms
    (``gamma`` minus ``T``). An empty false set contributes 0, and the
    separation ratio is clamped to at most 1.
    """
    A = np.asarray(A, dtype=np.float64)
    W = np.asarray(W, dtype=np.float64)
    gamma, T = index_set(gamma), index_set(T)
    Sigma = np.asarray(Sigma, dtype=np.float64)
    if Sigma.ndim == 1:
        Sigma = np.diag(Sigma)
    if Sigma.shape != (T.size, T.size) or np.any(np.diag(Sigma) <= 0):
        raise ValueError("Sigma must be a positive diagonal |T| x |T| matrix")
    K = int(T.size)
    A_g = A[:, gamma]
    sig_rows = row_l2_norms(lstsq(A_g, A[:, T] @ Sigma))
    noise_rows = row_l2_norms(lstsq(A_g, W))
    is_true = np.isin(gamma, T)
    min_true = float(sig_rows[is_true].min()) if is_true.any() else 0.0
    max_false = float(sig_rows[~is_true].max()) if (~is_true).any() else 0.0
    eta = ((float(noise_rows[is_true].min()) if is_true.any() else 0.0)
           + (float(noise_rows[~is_true].max()) if (~is_true).any() else 0.0))
    C2L, A2L = c2_of_L(L), a2_of_L(L)
    margin = min_true - max_false - eta / C2L
    denom = min_true + max_false
    g = min(margin / denom, 1.0) if denom > 0 else -math.inf
    p = 1.0 - K * math.exp(-2.0 * A2L * g * g) if math.isfinite(g) else -math.inf
    return AvgCaseReport(C2L, A2L, g, eta, p, bool(margin > 0), min_true, max_false)


def fusion_keeps_true_atoms(A, gamma, T, B) -> bool:
    """Whether the K largest rows of ``A_gamma^+ B`` are exactly the true atoms ``T``."""
    gamma, T = index_set(gamma), index_set(T)
    V = lstsq(np.asarray(A)[:, gamma], B)
    return bool(np.array_equal(gamma[top_k_rows(V, T.size)], T))
