"""Independent brute-force oracles.

Nothing here imports package code.  Each function recomputes a quantity
from its definition with plain loops over actors, values or sample points.
"""
from __future__ import annotations

import math
from fractions import Fraction

import numpy as np


def outdegrees(x):
    n = len(x)
    return [sum(int(x[i][j]) for j in range(n)) for i in range(n)]


def census(kind: str, x, cov=None) -> float:
    """Count of the effect's configurations in ``x`` by exhaustive enumeration.

    ``cov`` is an ``n x n`` nested list of tie weights for the covariate
    kinds (already broadcast for ego / alter covariates).
    """
    n = len(x)
    d = outdegrees(x)
    terms = []
    for i in range(n):
        for j in range(n):
            if i == j or not x[i][j]:
                continue
            if kind == "density":
                terms.append(1)
            elif kind == "reciprocity":
                terms.append(int(x[j][i]))
            elif kind in ("transitive_mediated_triads", "transitive_triads", "three_cycles"):
                for h in range(n):
                    if h in (i, j):
                        continue
                    if kind == "transitive_mediated_triads":
                        terms.append(int(x[h][i] and x[h][j]))
                    elif kind == "transitive_triads":
                        terms.append(int(x[i][h] and x[h][j]))
                    else:
                        terms.append(int(x[j][h] and x[h][i]))
            elif kind == "outdeg_assortativity":
                terms.append(d[i] * d[j])
            elif kind == "outdeg_assortativity_sqrt":
                terms.append(math.sqrt(d[i]) * math.sqrt(d[j]))
            elif kind == "outdeg_activity":
                terms.append(d[i])
            else:
                terms.append(cov[i][j])
    return math.fsum(terms)


def tie_contribution(kind: str, x, i, j, cov=None) -> float:
    """Configurations counted at the tie ``i -> j``, by loops over third actors."""
    n = len(x)
    d = outdegrees(x)
    others = [h for h in range(n) if h not in (i, j)]
    if kind == "density":
        return 1
    if kind == "reciprocity":
        return int(x[j][i])
    if kind == "transitive_mediated_triads":
        return sum(int(x[h][i] and x[h][j]) for h in others)
    if kind == "transitive_triads":
        return sum(int(x[i][h] and x[h][j]) for h in others)
    if kind == "three_cycles":
        return sum(int(x[j][h] and x[h][i]) for h in others)
    if kind == "outdeg_assortativity":
        return d[i] * d[j]
    if kind == "outdeg_assortativity_sqrt":
        return math.sqrt(d[i]) * math.sqrt(d[j])
    if kind == "outdeg_activity":
        return d[i]
    return cov[i][j]


def ecdf_gap(a, b) -> Fraction:
    """Largest |F_a - F_b| over all observed values, in exact arithmetic."""
    best = Fraction(0)
    for v in sorted(set(a) | set(b)):
        fa = Fraction(sum(1 for u in a if u <= v), len(a))
        fb = Fraction(sum(1 for u in b if u <= v), len(b))
        best = max(best, abs(fa - fb))
    return best


def ols_normal_equations(y, X):
    """Coefficients from ``(X'X) b = X'y`` and adjusted R-squared."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    b = np.linalg.solve(X.T @ X, X.T @ y)
    resid = y - X @ b
    n, k = X.shape
    r2 = 1 - (resid @ resid) / ((y - y.mean()) @ (y - y.mean()))
    return b, 1 - (1 - r2) * (n - 1) / (n - k)


def common_senders(adjacency, labels, i, j, t):
    """Per-sender years of common influence on (i, j) before wave ``t``."""
    n = len(adjacency[0])
    out = {}
    for h in range(n):
        if h in (i, j):
            continue
        years = 0
        for tp in range(t):
            if adjacency[tp][h][i] and adjacency[tp][h][j]:
                years += labels[tp + 1] - labels[tp]
        if years:
            out[h] = years
    return out
