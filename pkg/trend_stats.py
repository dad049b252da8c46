"""
Statistical kernels for calltopics trend analytics
Kendall's tau-b against time with exact or normal p-values, and LOESS
"""

import math
from functools import lru_cache
from itertools import permutations
from typing import List, Sequence, Tuple

import numpy as np
from scipy.stats import norm

from errors import InsufficientDataError, ParameterError

# Series up to this length get the exact permutation p-value
EXACT_MAX_N = 8


def _s_statistic(values: np.ndarray) -> int:
    """Sum of sign(y_j - y_i) over i < j (time is the other ranking)"""
    i, j = np.triu_indices(len(values), 1)
    return int(np.sign(values[j] - values[i]).sum())


@lru_cache(maxsize=None)
def _null_abs_s(multiset: Tuple[float, ...]) -> np.ndarray:
    """|S| over every distinct arrangement of the multiset"""
    arrangements = np.array(sorted(set(permutations(multiset))), dtype=float)
    i, j = np.triu_indices(len(multiset), 1)
    return np.abs(np.sign(arrangements[:, j] - arrangements[:, i]).sum(axis=1))


def kendall_tau(series: Sequence[float]) -> Tuple[float, float]:
    """
    Kendall's tau-b of a count series against time indices 1..n

    Args:
        series: Counts in time order, length >= 3

    Returns:
        (tau, two-sided p-value). Constant series give (0.0, 1.0).
        n <= 8 uses the exact permutation distribution of S; longer
        series use the tie-corrected normal approximation with
        continuity correction.
    """
    y = np.asarray(series, dtype=float)
    n = len(y)
    if n < 3:
        raise InsufficientDataError(f"kendall_tau needs at least 3 points, got {n}")
    if not np.all(np.isfinite(y)):
        raise ParameterError("series must be finite")

    _, tie_counts = np.unique(y, return_counts=True)
    n0 = n * (n - 1) / 2
    n2 = float((tie_counts * (tie_counts - 1) / 2).sum())
    if n0 == n2:
        return 0.0, 1.0

    s = _s_statistic(y)
    tau = float(np.clip(s / math.sqrt(n0 * (n0 - n2)), -1.0, 1.0))

    if n <= EXACT_MAX_N:
        null = _null_abs_s(tuple(sorted(y.tolist())))
        p_value = float(np.count_nonzero(null >= abs(s)) / len(null))
    elif s == 0:
        p_value = 1.0
    else:
        var_s = (n * (n - 1) * (2 * n + 5) - float((tie_counts * (tie_counts - 1) * (2 * tie_counts + 5)).sum())) / 18
        z = (abs(s) - 1) / math.sqrt(var_s)
        p_value = float(2 * norm.sf(z))

    return tau, float(min(max(p_value, 0.0), 1.0))


def loess_smooth(points: Sequence[Tuple[float, float]], span: float = 0.5, degree: int = 1) -> List[Tuple[float, float]]:
    """
    Locally weighted regression evaluated at every x

    Each fit uses the ceil(span * n) nearest neighbours with tricube
    weights scaled by the farthest of them. A window whose points all sit
    at distance zero, or that leaves fewer than two positively weighted
    points, falls back to the (weighted) mean.
    """
    if len(points) < 2:
        raise ParameterError("loess_smooth needs at least 2 points")
    if not 0 < span <= 1:
        raise ParameterError("span must be in (0, 1]")
    if degree not in (0, 1):
        raise ParameterError("degree must be 0 or 1")

    x = np.asarray([p[0] for p in points], dtype=float)
    y = np.asarray([p[1] for p in points], dtype=float)
    if np.any(np.diff(x) <= 0):
        raise ParameterError("x must be strictly increasing")

    n = len(x)
    q = min(n, math.ceil(round(span * n, 9)))
    if q < degree + 1:
        raise ParameterError(f"span {span} keeps {q} points; degree {degree} needs {degree + 1}")

    smoothed = []
    for xi in x:
        distances = np.abs(x - xi)
        window = np.argsort(distances, kind="stable")[:q]
        d = distances[window]
        d_max = d.max()
        if d_max == 0:
            smoothed.append((float(xi), float(y[window].mean())))
            continue

        w = (1 - (d / d_max) ** 3) ** 3
        if degree == 0 or np.count_nonzero(w > 0) < 2:
            fitted = float(np.dot(w, y[window]) / w.sum())
        else:
            sqrt_w = np.sqrt(w)
            design = np.column_stack([np.ones(q), x[window] - xi])
            beta, *_ = np.linalg.lstsq(design * sqrt_w[:, None], y[window] * sqrt_w, rcond=None)
            fitted = float(beta[0])
        smoothed.append((float(xi), fitted))

    return smoothed
