"""Model effects: per-dyad contributions, actor objectives, period statistics.

Every effect is defined through its contribution ``c_ij(x)`` for a tie
``i -> j``.  The actor-level statistic is ``s_ki(x) = sum_j x_ij c_ij(x)`` and
the objective of actor ``i`` is ``f_i = sum_k beta_k s_ki(x)``.

Contributions (``h`` ranges over third actors):

=============================  ========================================
density                        1
reciprocity                    x_ji
transitive_mediated_triads     sum_h x_hi x_hj   (common senders)
transitive_triads              sum_h x_ih x_hj   (two-paths i->h->j)
three_cycles                   sum_h x_jh x_hi
outdeg_assortativity           outdeg(i) * outdeg(j)
outdeg_assortativity_sqrt      sqrt(outdeg(i)) * sqrt(outdeg(j))
outdeg_activity                outdeg(i)
dyadic_covariate               cov[i, j]
covariate_ego                  cov[i, wave]
covariate_alter                cov[j, wave]
=============================  ========================================

Period statistics split each evaluation statistic into a creation part
(dyads that went 0 -> 1) and an endowment part (dyads that were 1 at the
start of the period, whether kept or lost)::

    evaluation = sum x1*C(x1) - sum x0*C(x0)
    creation   = sum (1-x0)*x1*C(x1)
    endowment  = sum x0*(x1*C(x1) - C(x0))

so ``evaluation == creation + endowment`` for every effect.
"""
from __future__ import annotations

import math

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .netpanel import CovariateSet

STRUCTURAL_KINDS = (
    "density",
    "reciprocity",
    "transitive_mediated_triads",
    "transitive_triads",
    "three_cycles",
    "outdeg_assortativity",
    "outdeg_assortativity_sqrt",
    "outdeg_activity",
)
COVARIATE_KINDS = ("dyadic_covariate", "covariate_ego", "covariate_alter")
KINDS = STRUCTURAL_KINDS + COVARIATE_KINDS
PARAMETRIZATIONS = ("evaluation", "creation", "endowment")

# integer codes shared with the simulation kernel; covariate effects are all
# passed to the kernel as code 8 with a prepared n x n matrix
KIND_CODES = {k: c for c, k in enumerate(STRUCTURAL_KINDS)} | {k: 8 for k in COVARIATE_KINDS}
PARAM_CODES = {p: c for c, p in enumerate(PARAMETRIZATIONS)}


class EffectError(ValueError):
    pass


@dataclass(frozen=True)
class EffectSpec:
    kind: str
    parametrization: str = "evaluation"
    beta: float = 0.0
    covariate: str | None = None
    fixed: bool = False

    def __post_init__(self):
        if self.kind not in KINDS:
            raise EffectError(f"unknown effect kind {self.kind!r}")
        if self.parametrization not in PARAMETRIZATIONS:
            raise EffectError(f"unknown parametrization {self.parametrization!r}")
        if (self.kind in COVARIATE_KINDS) != (self.covariate is not None):
            raise EffectError(f"{self.kind}: a covariate name is required for covariate effects only")

    @property
    def key(self) -> tuple:
        return (self.kind, self.parametrization, self.covariate)

    @property
    def name(self) -> str:
        base = self.kind if self.covariate is None else f"{self.kind}[{self.covariate}]"
        return base if self.parametrization == "evaluation" else f"{base} ({self.parametrization})"

    def with_beta(self, beta: float) -> "EffectSpec":
        return replace(self, beta=float(beta))


def check_effects(effects: Sequence[EffectSpec]) -> None:
    seen = set()
    for e in effects:
        if e.key in seen:
            raise EffectError(f"duplicate effect {e.name}")
        seen.add(e.key)


def _covariate_matrix(effect: EffectSpec, covs: CovariateSet | None, n: int, wave: int) -> np.ndarray:
    name = effect.covariate
    if effect.kind == "dyadic_covariate":
        if covs is None or name not in covs.dyadic:
            raise EffectError(f"unknown dyadic covariate {name!r}")
        return np.asarray(covs.dyadic[name], dtype=float)
    if covs is None or name not in covs.actor_by_wave:
        raise EffectError(f"unknown actor covariate {name!r}")
    v = np.asarray(covs.actor_by_wave[name], dtype=float)[:, wave]
    if effect.kind == "covariate_ego":
        return np.repeat(v[:, None], n, axis=1)
    return np.repeat(v[None, :], n, axis=0)


def dyad_statistic(effect: EffectSpec, x: np.ndarray, covs: CovariateSet | None,
                   wave: int, i: int, j: int) -> float:
    """Contribution of the tie ``i -> j`` to ``effect`` in network ``x``."""
    if i == j:
        raise EffectError("dyad_statistic needs i != j")
    n = x.shape[0]
    k = effect.kind
    others = [h for h in range(n) if h != i and h != j]
    if k == "density":
        return 1.0
    if k == "reciprocity":
        return float(x[j, i])
    if k == "transitive_mediated_triads":
        return float(sum(x[h, i] * x[h, j] for h in others))
    if k == "transitive_triads":
        return float(sum(x[i, h] * x[h, j] for h in others))
    if k == "three_cycles":
        return float(sum(x[j, h] * x[h, i] for h in others))
    if k == "outdeg_assortativity":
        return float(x[i].sum() * x[j].sum())
    if k == "outdeg_assortativity_sqrt":
        return float(np.sqrt(x[i].sum()) * np.sqrt(x[j].sum()))
    if k == "outdeg_activity":
        return float(x[i].sum())
    name = effect.covariate
    if k == "dyadic_covariate":
        if covs is None or name not in covs.dyadic:
            raise EffectError(f"unknown dyadic covariate {name!r}")
        return float(covs.dyadic[name][i, j])
    if covs is None or name not in covs.actor_by_wave:
        raise EffectError(f"unknown actor covariate {name!r}")
    v = covs.actor_by_wave[name]
    return float(v[i, wave] if k == "covariate_ego" else v[j, wave])


def contribution_matrix(effect: EffectSpec, x: np.ndarray, covs: CovariateSet | None = None,
                        wave: int = 0) -> np.ndarray:
    """``C[i, j] = dyad_statistic(effect, x, covs, wave, i, j)``, zero diagonal."""
    x = np.asarray(x, dtype=np.int64)
    n = x.shape[0]
    k = effect.kind
    if k == "density":
        c = np.ones((n, n))
    elif k == "reciprocity":
        c = x.T.astype(float)
    elif k == "transitive_mediated_triads":
        c = (x.T @ x).astype(float)
    elif k == "transitive_triads":
        c = (x @ x).astype(float)
    elif k == "three_cycles":
        c = (x @ x).T.astype(float)
    elif k == "outdeg_assortativity":
        d = x.sum(axis=1).astype(float)
        c = np.outer(d, d)
    elif k == "outdeg_assortativity_sqrt":
        d = np.sqrt(x.sum(axis=1).astype(float))
        c = np.outer(d, d)
    elif k == "outdeg_activity":
        c = np.repeat(x.sum(axis=1).astype(float)[:, None], n, axis=1)
    else:
        c = _covariate_matrix(effect, covs, n, wave).copy()
    np.fill_diagonal(c, 0.0)
    return c


def actor_statistics(effect: EffectSpec, x: np.ndarray, covs: CovariateSet | None = None,
                     wave: int = 0) -> np.ndarray:
    """``s_ki(x)`` for every actor ``i``."""
    return (np.asarray(x) * contribution_matrix(effect, x, covs, wave)).sum(axis=1)


def network_statistic(effect: EffectSpec, x: np.ndarray, covs: CovariateSet | None = None,
                      wave: int = 0) -> float:
    # correctly rounded, so the total does not depend on summation order
    terms = np.asarray(x) * contribution_matrix(effect, x, covs, wave)
    return math.fsum(terms.ravel().tolist())


def objective(x: np.ndarray, covs: CovariateSet | None, wave: int, i: int,
              effects: Sequence[EffectSpec]) -> float:
    return float(sum(e.beta * actor_statistics(e, x, covs, wave)[i] for e in effects))


def toggle_deltas(effect: EffectSpec, x: np.ndarray, covs: CovariateSet | None,
                  wave: int, i: int) -> np.ndarray:
    """``s_ki(x with i->j toggled) - s_ki(x)`` for every ``j`` (0 at ``j = i``).

    Closed forms; the simulation kernel uses the same formulas and the tests
    check both against recomputing ``actor_statistics`` from scratch.
    """
    x = np.asarray(x, dtype=np.int64)
    n = x.shape[0]
    sigma = (1 - 2 * x[i]).astype(float)
    k = effect.kind
    if k == "density":
        d = sigma.copy()
    elif k == "reciprocity":
        d = sigma * x[:, i]
    elif k == "transitive_mediated_triads":
        d = sigma * (x[:, i] @ x)
    elif k == "transitive_triads":
        d = sigma * (x[i] @ x + x @ x[i])
    elif k == "three_cycles":
        d = sigma * (x @ x[:, i])
    elif k in ("outdeg_assortativity", "outdeg_assortativity_sqrt"):
        f = np.sqrt if k.endswith("sqrt") else (lambda v: v)
        deg = x.sum(axis=1).astype(float)
        s = float(x[i] @ f(deg))
        d = f(deg[i] + sigma) * (s + sigma * f(deg)) - f(deg[i]) * s
    elif k == "outdeg_activity":
        di = float(x[i].sum())
        d = (di + sigma) ** 2 - di ** 2
    else:
        d = sigma * _covariate_matrix(effect, covs, n, wave)[i]
    d = np.asarray(d, dtype=float)
    d[i] = 0.0
    return d


def period_change_statistics(x_prev: np.ndarray, x_next: np.ndarray, covs: CovariateSet | None,
                             effects: Sequence[EffectSpec], wave: int = 0) -> np.ndarray:
    """Observed-change statistic of each effect between two networks.

    Actor covariates are read at ``wave`` (the start wave of the period) for
    both networks.
    """
    x0 = np.asarray(x_prev, dtype=np.int64)
    x1 = np.asarray(x_next, dtype=np.int64)
    if x0.shape != x1.shape:
        raise EffectError(f"network shapes differ: {x0.shape} vs {x1.shape}")
    out = np.empty(len(effects))
    cache: dict = {}
    for m, e in enumerate(effects):
        ck = (e.kind, e.covariate)
        if ck not in cache:
            cache[ck] = (contribution_matrix(e, x0, covs, wave), contribution_matrix(e, x1, covs, wave))
        c0, c1 = cache[ck]
        if e.parametrization == "evaluation":
            out[m] = (x1 * c1).sum() - (x0 * c0).sum()
        elif e.parametrization == "creation":
            out[m] = ((1 - x0) * x1 * c1).sum()
        else:
            out[m] = (x0 * (x1 * c1 - c0)).sum()
    return out


def kernel_arrays(effects: Sequence[EffectSpec], covs: CovariateSet | None, n: int, wave: int):
    """Pack effects into the flat arrays consumed by the simulation kernel."""
    codes = np.array([KIND_CODES[e.kind] for e in effects], dtype=np.int64)
    ptypes = np.array([PARAM_CODES[e.parametrization] for e in effects], dtype=np.int64)
    betas = np.array([e.beta for e in effects], dtype=float)
    covmats = np.zeros((len(effects), n, n))
    for m, e in enumerate(effects):
        if e.kind in COVARIATE_KINDS:
            covmats[m] = _covariate_matrix(e, covs, n, wave)
    return codes, ptypes, betas, covmats
