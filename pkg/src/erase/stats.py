"""Rank-sum test and Pearson correlation significance."""

from __future__ import annotations

import math
from typing import Literal, NamedTuple

import numpy as np
from scipy import special

EXACT_MAX_SIZE = 10


class RankSumResult(NamedTuple):
    statistic: float  # Mann-Whitney U of the first sample
    pvalue: float
    method: str


def midranks(x: np.ndarray) -> np.ndarray:
    """1-based ranks with ties sharing their average rank."""
    x = np.asarray(x, dtype=float)
    order = np.argsort(x, kind="mergesort")
    xs = x[order]
    ranks = np.empty(len(x), dtype=float)
    i = 0
    n = len(x)
    while i < n:
        j = i
        while j + 1 < n and xs[j + 1] == xs[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def _exact_pvalue(ranks: np.ndarray, n1: int, observed: float) -> float:
    """Two-sided permutation P of the first-sample rank sum.

    Counts subsets of size n1 by their (doubled, hence integral) rank sum
    with a knapsack recursion, so ties are handled exactly.
    """
    r2 = np.rint(2 * ranks).astype(int)
    total = int(r2.sum())
    counts = np.zeros((n1 + 1, total + 1), dtype=float)
    counts[0, 0] = 1.0
    for v in r2:
        counts[1:, v:] += counts[:-1, :total + 1 - v].copy()
    dist = counts[n1]
    obs = int(round(2 * observed))
    n_subsets = dist.sum()
    lower = dist[:obs + 1].sum() / n_subsets
    upper = dist[obs:].sum() / n_subsets
    return min(1.0, 2.0 * min(lower, upper))


def _normal_pvalue(ranks, x_all, n1, n2, u) -> float:
    n = n1 + n2
    _, tie_counts = np.unique(x_all, return_counts=True)
    tie_term = float(np.sum(tie_counts ** 3 - tie_counts)) / (n * (n - 1)) if n > 1 else 0.0
    var = n1 * n2 / 12.0 * ((n + 1) - tie_term)
    if var <= 0:
        return 1.0
    z = (abs(u - n1 * n2 / 2.0) - 0.5) / math.sqrt(var)
    if z <= 0:
        return 1.0
    return min(1.0, math.erfc(z / math.sqrt(2.0)))


def wilcoxon_ranksum(a, b, method: Literal["auto", "exact", "normal"] = "auto") -> RankSumResult:
    """Two-sided Wilcoxon rank-sum (Mann-Whitney) test.

    ``auto`` uses exact enumeration when both samples have at most 10
    values, otherwise the normal approximation with tie and continuity
    corrections.
    """
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    if a.size == 0 or b.size == 0:
        raise ValueError("both samples must be non-empty")
    if not (np.isfinite(a).all() and np.isfinite(b).all()):
        raise ValueError("samples must be finite")
    n1, n2 = a.size, b.size
    x = np.concatenate([a, b])
    ranks = midranks(x)
    r1 = float(ranks[:n1].sum())
    u = r1 - n1 * (n1 + 1) / 2.0
    if method == "auto":
        method = "exact" if max(n1, n2) <= EXACT_MAX_SIZE else "normal"
    if method == "exact":
        p = _exact_pvalue(ranks, n1, r1)
    elif method == "normal":
        p = _normal_pvalue(ranks, x, n1, n2, u)
    else:
        raise ValueError(f"unknown method {method!r}")
    return RankSumResult(u, p, method)


class PearsonResult(NamedTuple):
    r: float
    t: float
    pvalue: float
    significant_r: float
    n: int


def pearson_significance(x, y, alpha: float = 0.05,
                         t_variant: Literal["n_minus_1", "standard"] = "n_minus_1") -> PearsonResult:
    """Pearson R with a t-distribution significance test.

    ``n_minus_1`` computes t = |R| sqrt(N-1) / sqrt(1-R^2); ``standard`` uses
    sqrt(N-2). Either way the two-sided P comes from Student's t with N-2
    degrees of freedom, and ``significant_r`` is R when P <= alpha, else 0.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("x and y must be 1-D arrays of equal length")
    n = x.size
    if n < 3:
        raise ValueError(f"need at least 3 points, got {n}")
    xc = x - x.mean()
    yc = y - y.mean()
    sxx = float(xc @ xc)
    syy = float(yc @ yc)
    if sxx <= 0 or syy <= 0:
        raise ValueError("zero variance input")
    r = float(np.clip((xc @ yc) / math.sqrt(sxx * syy), -1.0, 1.0))
    t = correlation_t(r, n, t_variant)
    p = t_pvalue(t, n - 2)
    return PearsonResult(r, t, p, r if p <= alpha else 0.0, n)


def correlation_t(r: float, n: int, variant: str = "n_minus_1") -> float:
    k = {"n_minus_1": n - 1, "standard": n - 2}[variant]
    if abs(r) >= 1.0:
        return math.inf
    return abs(r) * math.sqrt(k) / math.sqrt(1.0 - r * r)


def t_pvalue(t: float, df: int) -> float:
    """Two-sided P of |T| >= t for Student's t, via the regularized incomplete beta."""
    if math.isinf(t):
        return 0.0
    return float(special.betainc(df / 2.0, 0.5, df / (df + t * t)))
