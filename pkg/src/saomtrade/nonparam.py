"""Tie-history categories, common influences and discrete two-sample KS tests.

A common influence on the ordered dyad ``(i, j)`` is a third country ``h``
exporting to both ``i`` and ``j``.  Looking back from wave ``t``, every earlier
wave ``t'`` in which ``h -> i`` and ``h -> j`` both held contributes the gap
``label[t'+1] - label[t']`` in years to ``h``'s duration.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import kolmogorov

from .netpanel import NetworkPanel

CATEGORIES = ("maintained", "lost", "new", "none")
# (x_{t-1}, x_t) -> category
_TRUTH = {(1, 1): "maintained", (1, 0): "lost", (0, 1): "new", (0, 0): "none"}
COMPARISONS = (("maintained", "lost"), ("new", "none"))
MEASURES = ("total_years", "duration", "count")


class NonparamError(ValueError):
    pass


@dataclass(frozen=True)
class DyadCategory:
    category: str
    dyad: tuple[int, int]
    period: int


@dataclass(frozen=True)
class CommonInfluenceSummary:
    total_years: int
    durations: tuple[int, ...]
    count: int


def classify_dyads(panel: NetworkPanel, t: int) -> list[DyadCategory]:
    """Category of every ordered dyad for the transition into wave ``t``.

    Dyads that are structural zeros at either wave are left out.
    """
    if t < 1 or t >= panel.n_waves:
        raise NonparamError(f"wave {t} has no observed history (need 1 <= t < {panel.n_waves})")
    x0, x1 = panel.adjacency[t - 1], panel.adjacency[t]
    mask = panel.period_mask(t - 1)
    out = []
    for i in range(panel.n):
        for j in range(panel.n):
            if i != j and not mask[i, j]:
                out.append(DyadCategory(_TRUTH[int(x0[i, j]), int(x1[i, j])], (i, j), t))
    return out


def _durations_tensor(panel: NetworkPanel, t: int) -> np.ndarray:
    """``W[h, i, j]``: years before wave ``t`` in which ``h`` sent to both ``i`` and ``j``."""
    gaps = np.diff(np.asarray(panel.labels, dtype=np.int64))
    n = panel.n
    w = np.zeros((n, n, n), dtype=np.int64)
    for tp in range(t):
        x = panel.adjacency[tp].astype(np.int64)
        w += gaps[tp] * (x[:, :, None] * x[:, None, :])
    idx = np.arange(n)
    # h must differ from both endpoints
    w[idx, idx, :] = 0
    w[idx, :, idx] = 0
    return w


def common_influences(panel: NetworkPanel, i: int, j: int, t: int) -> CommonInfluenceSummary:
    if t < 1:
        raise NonparamError("common influences need t >= 1")
    w = _durations_tensor(panel, t)[:, i, j]
    durations = tuple(int(v) for v in w if v > 0)
    return CommonInfluenceSummary(int(sum(durations)), durations, len(durations))


def _d_numerators(sorted_pool: np.ndarray, labels: np.ndarray, n_a: int, n_b: int) -> np.ndarray:
    """``max |F_a - F_b| * n_a * n_b`` for each row of boolean ``labels`` (True = sample a)."""
    last = np.r_[np.flatnonzero(np.diff(sorted_pool)), sorted_pool.size - 1]
    ca = np.cumsum(labels, axis=-1)[..., last]
    cb = (last + 1) - ca
    return np.abs(ca * n_b - cb * n_a).max(axis=-1)


def ks_two_sample(sample_a: Sequence[float], sample_b: Sequence[float],
                  p_method: str = "permutation", resamples: int = 10_000,
                  seed: int = 0) -> tuple[float, float]:
    """Two-sample Kolmogorov-Smirnov statistic and p-value.

    ``D`` is the largest ECDF gap over the pooled values.  ``p_method`` is
    ``"permutation"`` (default; valid for tied, discrete data) with
    ``p = (1 + #{D* >= D}) / (1 + resamples)``, or ``"asymptotic"``.
    """
    a = np.asarray(sample_a, dtype=float).ravel()
    b = np.asarray(sample_b, dtype=float).ravel()
    if a.size == 0 or b.size == 0:
        raise NonparamError("both samples must be non-empty")
    n_a, n_b = a.size, b.size
    pool = np.concatenate([a, b])
    order = np.argsort(pool, kind="stable")
    sp = pool[order]
    is_a = (order < n_a).astype(np.int64)
    num = int(_d_numerators(sp, is_a, n_a, n_b))
    d = num / (n_a * n_b)
    if p_method == "asymptotic":
        en = n_a * n_b / (n_a + n_b)
        return d, float(kolmogorov(math.sqrt(en) * d))
    if p_method != "permutation":
        raise NonparamError(f"unknown p_method {p_method!r}")
    if resamples < 1:
        raise NonparamError("resamples must be positive")
    rng = np.random.default_rng(seed)
    base = np.zeros(n_a + n_b, dtype=np.int64)
    base[:n_a] = 1
    hits = 0
    chunk = max(1, min(resamples, 2_000_000 // (n_a + n_b)))
    done = 0
    while done < resamples:
        m = min(chunk, resamples - done)
        labels = rng.permuted(np.broadcast_to(base, (m, base.size)), axis=1)
        hits += int((_d_numerators(sp, labels, n_a, n_b) >= num).sum())
        done += m
    return d, (hits + 1) / (resamples + 1)


@dataclass
class CategorySummary:
    category: str
    n: int
    mean_total_years: float
    mean_duration: float
    mean_count: float


@dataclass
class Comparison:
    groups: tuple[str, str]
    measure: str
    statistic: float | None
    p_value: float | None

    @property
    def applicable(self) -> bool:
        return self.statistic is not None


@dataclass
class InfluenceTable:
    categories: list[CategorySummary]
    comparisons: list[Comparison]
    samples: dict = field(default_factory=dict, repr=False)
    metadata: dict = field(default_factory=dict)

    def category(self, name: str) -> CategorySummary:
        return next(c for c in self.categories if c.category == name)

    def comparison(self, a: str, b: str, measure: str) -> Comparison:
        return next(c for c in self.comparisons if c.groups == (a, b) and c.measure == measure)


def influence_table(panel: NetworkPanel, p_method: str = "permutation",
                    resamples: int = 10_000, seed: int = 0) -> InfluenceTable:
    """Common-history summaries per tie category, pooled over all transitions.

    Mean duration of a category is its total years over its total number
    of influencers; the duration KS test compares the pooled per-influencer
    durations.
    """
    if panel.n_waves < 2:
        raise NonparamError("influence table needs at least two waves")
    samples = {c: {"total_years": [], "count": [], "duration": []} for c in CATEGORIES}
    n = panel.n
    off = ~np.eye(n, dtype=bool)
    for t in range(1, panel.n_waves):
        w = _durations_tensor(panel, t)
        total = w.sum(axis=0)
        count = (w > 0).sum(axis=0)
        x0, x1 = panel.adjacency[t - 1], panel.adjacency[t]
        eligible = off & ~panel.period_mask(t - 1)
        for (a, b), cat in _TRUTH.items():
            sel = eligible & (x0 == a) & (x1 == b)
            samples[cat]["total_years"].extend(total[sel].tolist())
            samples[cat]["count"].extend(count[sel].tolist())
            ws = w[:, sel]
            samples[cat]["duration"].extend(ws[ws > 0].tolist())
    cats = []
    for c in CATEGORIES:
        s = samples[c]
        m = len(s["total_years"])
        tot, cnt = sum(s["total_years"]), sum(s["count"])
        nan = float("nan")
        cats.append(CategorySummary(c, m, tot / m if m else nan,
                                    tot / cnt if cnt else (0.0 if m else nan), cnt / m if m else nan))
    comps = []
    for k, (ga, gb) in enumerate(COMPARISONS):
        for q, measure in enumerate(MEASURES):
            sa, sb = samples[ga][measure], samples[gb][measure]
            if sa and sb:
                d, p = ks_two_sample(sa, sb, p_method, resamples, seed + 10 * k + q)
                comps.append(Comparison((ga, gb), measure, d, p))
            else:
                comps.append(Comparison((ga, gb), measure, None, None))
    return InfluenceTable(cats, comps, samples,
                          {"p_method": p_method, "resamples": resamples, "seed": seed})
