"""Method-of-moments estimation by Robbins-Monro stochastic approximation.

The parameter vector is ``theta = (rates..., free betas...)`` and the target
vector is ``(changed dyads per period..., period statistics summed over
periods for every free effect...)``.  Estimation runs in three phases:

1. derivative matrix ``D = d E[target] / d theta`` by common-random-number
   symmetric finite differences, followed by one Newton step;
2. ``theta <- theta - a D^-1 (sim - obs)`` over subphases with the gain
   halved each subphase and iterates averaged within a subphase;
3. with ``theta`` frozen, many chains give the covariance ``Sigma`` of the
   targets, convergence t-ratios and standard errors
   ``sqrt(diag(D^-1 Sigma D^-T))``.
"""
from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np
from scipy import stats as sps

from .effects import EffectSpec, check_effects
from .netpanel import CovariateSet, NetworkPanel
from .simulate import (KEY_PHASE1, KEY_PHASE2, KEY_PHASE3, KEY_SCORE, RNG_ALGORITHM,
                       PanelModel)

log = logging.getLogger(__name__)


class EstimationError(RuntimeError):
    pass


class SingularDerivativeError(EstimationError):
    pass


@dataclass
class EstimationOptions:
    subphases: int = 4
    initial_gain: float = 0.2
    phase1_chains: int = 50
    phase3_chains: int = 1000
    perturbation: float = 0.1
    max_step: float = 5.0
    convergence_bound: float = 0.1
    subphase_extra: int = 200
    max_runs: int = 3


@dataclass
class EstimationResult:
    effects: list[EffectSpec]
    beta_hat: np.ndarray
    standard_errors: np.ndarray
    t_convergence: np.ndarray
    rates_hat: np.ndarray
    rate_standard_errors: np.ndarray
    rate_t_convergence: np.ndarray
    converged: bool
    observed: np.ndarray
    simulated_mean: np.ndarray
    simulated_sd: np.ndarray
    derivative: np.ndarray
    covariance: np.ndarray
    metadata: dict = field(default_factory=dict)

    @property
    def free(self) -> np.ndarray:
        return np.array([not e.fixed for e in self.effects], dtype=bool)

    @property
    def max_abs_t(self) -> float:
        t = np.concatenate([self.rate_t_convergence, self.t_convergence[self.free]])
        return float(np.max(np.abs(t))) if t.size else 0.0

    def table(self) -> list[dict]:
        rows = []
        for e, b, se, t in zip(self.effects, self.beta_hat, self.standard_errors, self.t_convergence):
            rows.append({"effect": e.name, "kind": e.kind, "parametrization": e.parametrization,
                         "covariate": e.covariate or "", "fixed": e.fixed, "estimate": float(b),
                         "se": float(se), "t_convergence": float(t)})
        for p, (r, se, t) in enumerate(zip(self.rates_hat, self.rate_standard_errors,
                                           self.rate_t_convergence)):
            rows.append({"effect": f"rate period {p + 1}", "kind": "rate", "parametrization": "",
                         "covariate": "", "fixed": False, "estimate": float(r), "se": float(se),
                         "t_convergence": float(t)})
        return rows

    def to_dict(self) -> dict:
        return {
            "converged": self.converged,
            "max_abs_t": self.max_abs_t,
            "effects": [asdict(e) for e in self.effects],
            "beta_hat": self.beta_hat.tolist(),
            "standard_errors": _nan_to_none(self.standard_errors),
            "t_convergence": _nan_to_none(self.t_convergence),
            "rates_hat": self.rates_hat.tolist(),
            "rate_standard_errors": _nan_to_none(self.rate_standard_errors),
            "rate_t_convergence": _nan_to_none(self.rate_t_convergence),
            "observed": self.observed.tolist(),
            "simulated_mean": self.simulated_mean.tolist(),
            "simulated_sd": self.simulated_sd.tolist(),
            "derivative": self.derivative.tolist(),
            "covariance": self.covariance.tolist(),
            "metadata": self.metadata,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EstimationResult":
        arr = lambda v: np.array([np.nan if x is None else x for x in v], dtype=float)
        return cls(
            effects=[EffectSpec(**e) for e in d["effects"]],
            beta_hat=arr(d["beta_hat"]), standard_errors=arr(d["standard_errors"]),
            t_convergence=arr(d["t_convergence"]), rates_hat=arr(d["rates_hat"]),
            rate_standard_errors=arr(d["rate_standard_errors"]),
            rate_t_convergence=arr(d["rate_t_convergence"]), converged=d["converged"],
            observed=arr(d["observed"]), simulated_mean=arr(d["simulated_mean"]),
            simulated_sd=arr(d["simulated_sd"]), derivative=np.array(d["derivative"], dtype=float),
            covariance=np.array(d["covariance"], dtype=float), metadata=d.get("metadata", {}),
        )


def _nan_to_none(a) -> list:
    return [None if not np.isfinite(v) else float(v) for v in np.asarray(a, dtype=float)]


def effect_magnitude(beta: float, delta_s: float) -> float:
    """Odds multiplier ``exp(beta * delta_s)`` for a covariate difference."""
    return math.exp(beta * delta_s)


def robbins_monro_step(theta: np.ndarray, d_inv: np.ndarray, deviation: np.ndarray,
                       gain: float, max_step: float = np.inf, n_rates: int = 0) -> np.ndarray:
    """``theta - gain * D^-1 deviation`` with the step clipped to ``max_step``.

    The first ``n_rates`` entries are rates; a step that would make one
    non-positive halves it instead.
    """
    step = gain * (d_inv @ deviation)
    big = np.abs(step) > max_step
    if big.any():
        log.info("clipping update step %s to +-%g", step[big], max_step)
        step = np.clip(step, -max_step, max_step)
    new = theta - step
    for r in range(n_rates):
        if new[r] <= 0:
            new[r] = theta[r] / 2
    return new


def score_statistic(deviation: np.ndarray, covariance: np.ndarray, derivative: np.ndarray,
                    tested: Sequence[int]) -> float:
    """Generalized score statistic for the targets in ``tested``.

    ``deviation`` is simulated-minus-observed targets, ``covariance`` their
    covariance and ``derivative`` the square matrix ``d target / d theta``
    with parameters ordered like targets.  The deviation of the tested
    targets is corrected for its correlation with the estimated ones.
    """
    d = np.asarray(deviation, dtype=float)
    tested = np.asarray(tested)
    est = np.setdiff1d(np.arange(d.size), tested)
    d11 = derivative[np.ix_(est, est)]
    d21 = derivative[np.ix_(tested, est)]
    gamma = np.zeros((tested.size, d.size))
    gamma[:, tested] = np.eye(tested.size)
    if est.size:
        gamma[:, est] = -d21 @ np.linalg.inv(d11)
    z = gamma @ d
    if not np.any(z):
        return 0.0
    v = gamma @ covariance @ gamma.T
    return float(z @ np.linalg.solve(v, z))


@dataclass
class ScoreTestResult:
    tested_effect: str
    statistic: float
    p_value: float
    df: int = 1
    metadata: dict = field(default_factory=dict)


class _Problem:
    """Maps ``theta`` to simulated targets for one model and panel."""

    def __init__(self, panel: NetworkPanel, covs: CovariateSet | None,
                 effects: Sequence[EffectSpec], estimated: np.ndarray):
        self.model = PanelModel(panel, covs, effects)
        self.P = panel.n_periods
        self.base_betas = np.array([e.beta for e in effects], dtype=float)
        self.estimated = np.asarray(estimated, dtype=bool)
        self.observed_full = np.concatenate(
            [self.model.observed_hamming, self.model.observed_statistics.sum(axis=0)])
        self.rows = np.concatenate([np.arange(self.P), self.P + np.flatnonzero(self.estimated)])

    @property
    def observed(self) -> np.ndarray:
        return self.observed_full[self.rows]

    def split(self, theta: np.ndarray):
        betas = self.base_betas.copy()
        betas[self.estimated] = theta[self.P:]
        return betas, theta[:self.P]

    def simulate_full(self, theta: np.ndarray, seed, *key: int) -> np.ndarray:
        betas, rates = self.split(theta)
        stats, hamming = self.model.simulate(betas, rates, seed, *key)
        return np.concatenate([hamming, stats.sum(axis=0)])

    def steps(self, theta: np.ndarray, h: float) -> np.ndarray:
        return np.concatenate([h * theta[:self.P], np.full(theta.size - self.P, h)])

    def derivative_run(self, theta: np.ndarray, chains: int, h: float, seed, *key: int):
        """Base target draws ``(chains, targets)`` and the CRN difference quotient.

        Differences are symmetric (``theta +- step``): the triad statistics
        are strongly convex in their parameters and a one-sided quotient
        overstates the slope, which shrinks the standard errors.
        """
        steps = self.steps(theta, h)
        base = np.empty((chains, self.observed_full.size))
        diffs = np.zeros((self.observed_full.size, theta.size))
        for c in range(chains):
            base[c] = self.simulate_full(theta, seed, *key, c)
            for q in range(theta.size):
                up, down = theta.copy(), theta.copy()
                up[q] += steps[q]
                down[q] -= steps[q]
                diffs[:, q] += (self.simulate_full(up, seed, *key, c)
                                - self.simulate_full(down, seed, *key, c))
        return base, diffs / (2 * chains * steps)


def _check_derivative(d: np.ndarray, names: Sequence[str]) -> np.ndarray:
    if not np.isfinite(d).all():
        raise SingularDerivativeError("derivative matrix has non-finite entries")
    u, s, vt = np.linalg.svd(d)
    if s.size and (s[-1] <= 1e-10 * max(s[0], 1e-300)):
        v = vt[-1]
        involved = [names[q] for q in np.flatnonzero(np.abs(v) > 0.1)]
        raise SingularDerivativeError(
            "derivative matrix is singular; collinear parameters: " + ", ".join(involved))
    return np.linalg.inv(d)


def _initial_theta(problem: _Problem, effects: Sequence[EffectSpec]) -> np.ndarray:
    panel = problem.model.panel
    n = panel.n
    permitted = (~panel.masks).sum(axis=(1, 2)) - (~panel.masks[:, range(n), range(n)]).sum(axis=1)
    dens = panel.adjacency.sum(axis=(1, 2)) / np.maximum(permitted, 1)
    p = float(np.clip(np.mean(dens), 1e-3, 1 - 1e-3))
    rates = np.maximum(2.0 * problem.model.observed_hamming / n, 0.5)
    betas = []
    for e in effects:
        if e.fixed:
            continue
        if e.kind == "density" and e.beta == 0.0 and e.parametrization != "endowment":
            betas.append(math.log(p / (1 - p)))
        else:
            betas.append(e.beta)
    return np.concatenate([rates, betas])


def estimate(panel: NetworkPanel, covs: CovariateSet | None, effects: Sequence[EffectSpec],
             seed: int, options: EstimationOptions | None = None,
             initial_rates: Sequence[float] | None = None) -> EstimationResult:
    """Fit rates and free effect parameters to the observed panel.

    Free effects start at their supplied ``beta``; a free density effect
    left at 0 starts at the logit of the observed density.  Fixed effects
    keep their ``beta`` and get no standard error.  A result whose largest
    absolute t-ratio is not below ``options.convergence_bound`` after
    ``options.max_runs`` runs of phases 2-3 is returned with
    ``converged=False``.  Each rerun starts from the previous run's estimate
    and derivative, with subphases twice as long.
    """
    opts = options or EstimationOptions()
    effects = list(effects)
    check_effects(effects)
    if panel.n_waves < 2:
        raise EstimationError("estimation needs at least two waves")
    if panel.n < 3:
        raise EstimationError(f"estimation needs at least three actors, the panel has {panel.n}")
    estimated = np.array([not e.fixed for e in effects], dtype=bool)
    prob = _Problem(panel, covs, effects, estimated)
    P = prob.P
    names = [f"rate period {t + 1}" for t in range(P)] + [e.name for e in effects if not e.fixed]
    theta = _initial_theta(prob, effects)
    if initial_rates is not None:
        theta[:P] = np.asarray(initial_rates, dtype=float)
    obs = prob.observed
    rows = prob.rows
    meta = {"seed": int(seed), "rng": RNG_ALGORITHM, "options": asdict(opts),
            "initial_theta": theta.tolist(), "runs": []}

    # phase 1
    base, dfull = prob.derivative_run(theta, opts.phase1_chains, opts.perturbation, seed, KEY_PHASE1)
    d = dfull[rows]
    d_inv = _check_derivative(d, names)
    dev = base[:, rows].mean(axis=0) - obs
    theta = robbins_monro_step(theta, d_inv, dev, 1.0, opts.max_step, P)
    log.info("phase 1: deviation %s, theta %s", dev, theta)

    p = theta.size
    for run in range(opts.max_runs):
        # phase 2
        iters = []
        for k in range(opts.subphases):
            gain = opts.initial_gain * 0.5 ** k
            # each rerun doubles the subphase lengths, so its average is more precise
            n_min = math.ceil(2 ** (4 * k / 3) * (7 + p)) * 2 ** run
            acc = np.zeros_like(theta)
            prod = np.zeros_like(theta)
            prev = None
            it = 0
            while it < n_min + opts.subphase_extra * 2 ** run:
                sim = prob.simulate_full(theta, seed, KEY_PHASE2, run, k, it)[rows]
                dev = sim - obs
                theta = robbins_monro_step(theta, d_inv, dev, gain, opts.max_step, P)
                acc += theta
                if prev is not None:
                    prod += dev * prev
                prev = dev
                it += 1
                if it >= n_min and (prod < 0).all():
                    break
            theta = acc / it
            iters.append(it)
            log.info("phase 2 run %d subphase %d: %d iterations, theta %s", run, k + 1, it, theta)

        # phase 3
        base, dfull = prob.derivative_run(theta, opts.phase3_chains, opts.perturbation, seed,
                                          KEY_PHASE3, run)
        sims = base[:, rows]
        mean = sims.mean(axis=0)
        sd = sims.std(axis=0, ddof=1)
        with np.errstate(divide="ignore", invalid="ignore"):
            t_ratio = np.where(sd > 0, (mean - obs) / sd, np.where(mean == obs, 0.0, np.inf))
        max_t = float(np.max(np.abs(t_ratio)))
        meta["runs"].append({"phase2_iterations": iters,
                             "gains": [opts.initial_gain * 0.5 ** k for k in range(opts.subphases)],
                             "max_abs_t": max_t, "theta": theta.tolist()})
        d = dfull[rows]
        try:
            d_inv = _check_derivative(d, names)
        except SingularDerivativeError:
            if run + 1 == opts.max_runs:
                raise
            continue
        if max_t < opts.convergence_bound:
            break
        log.info("run %d not converged (max |t| = %.3f)", run + 1, max_t)

    sigma = np.atleast_2d(np.cov(sims, rowvar=False, ddof=1))
    cov_theta = d_inv @ sigma @ d_inv.T
    se = np.sqrt(np.diag(cov_theta))
    K = len(effects)
    beta_hat = prob.base_betas.copy()
    beta_hat[estimated] = theta[P:]
    se_b = np.full(K, np.nan)
    se_b[estimated] = se[P:]
    # t-ratios of fixed effects are monitored, not used for convergence
    all_sims = base[:, P:]
    all_obs = prob.observed_full[P:]
    all_sd = all_sims.std(axis=0, ddof=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        t_all = np.where(all_sd > 0, (all_sims.mean(axis=0) - all_obs) / all_sd, 0.0)
    t_b = t_all.copy()
    t_b[estimated] = t_ratio[P:]
    fitted = [e.with_beta(b) for e, b in zip(effects, beta_hat)]
    meta["phase1_chains"] = opts.phase1_chains
    meta["phase3_chains"] = opts.phase3_chains
    return EstimationResult(
        effects=fitted, beta_hat=beta_hat, standard_errors=se_b, t_convergence=t_b,
        rates_hat=theta[:P].copy(), rate_standard_errors=se[:P], rate_t_convergence=t_ratio[:P],
        converged=max_t < opts.convergence_bound, observed=obs, simulated_mean=mean,
        simulated_sd=sd, derivative=d, covariance=sigma, metadata=meta,
    )


def score_test(panel: NetworkPanel, covs: CovariateSet | None, restricted_fit: EstimationResult,
               tested_effect: EffectSpec, seed: int, chains: int = 1000,
               perturbation: float = 0.1) -> ScoreTestResult:
    """Score test of ``tested_effect`` (fixed at 0) against a converged restricted fit.

    The tested statistic is simulated alongside the fitted model without
    driving it; its deviation from the observed value is standardized after
    projecting out the estimated parameters.  ``p`` is the chi-square(1)
    upper tail.
    """
    if not restricted_fit.converged:
        raise EstimationError("score test needs a converged restricted fit")
    if tested_effect.beta != 0.0:
        raise EstimationError("the tested effect must be fixed at 0 in the restricted model")
    effects = list(restricted_fit.effects)
    keys = [e.key for e in effects]
    if tested_effect.key in keys:
        t_idx = keys.index(tested_effect.key)
        if not effects[t_idx].fixed or effects[t_idx].beta != 0.0:
            raise EstimationError(f"{tested_effect.name} is not fixed at 0 in the restricted fit")
    else:
        effects.append(EffectSpec(tested_effect.kind, tested_effect.parametrization, 0.0,
                                  tested_effect.covariate, fixed=True))
        t_idx = len(effects) - 1
    estimated = np.array([not e.fixed for e in effects], dtype=bool)
    estimated[t_idx] = True
    prob = _Problem(panel, covs, effects, estimated)
    P = prob.P
    theta = np.concatenate([restricted_fit.rates_hat,
                            [e.beta for e, est in zip(effects, estimated) if est]])
    base, dfull = prob.derivative_run(theta, chains, perturbation, seed, KEY_SCORE)
    rows = prob.rows
    sims = base[:, rows]
    dev = sims.mean(axis=0) - prob.observed
    sigma = np.atleast_2d(np.cov(sims, rowvar=False, ddof=1))
    # position of the tested effect among the estimated-or-tested parameters
    tested_pos = P + int(np.flatnonzero(np.flatnonzero(estimated) == t_idx)[0])
    c = score_statistic(dev, sigma, dfull[rows], [tested_pos])
    p = float(sps.chi2.sf(c, 1)) if c > 0 else 1.0
    return ScoreTestResult(effects[t_idx].name, c, p, 1,
                           {"seed": int(seed), "chains": chains, "rng": RNG_ALGORITHM,
                            "deviation": dev.tolist()})


def magnitude_grid(influence_beta: float, distance_beta: float, distance_mean: float,
                   distance_sd: float, distance_min: float | None = None,
                   distance_max: float | None = None, max_influences: int = 4) -> list[dict]:
    """Odds multipliers by log-distance row and number of common influences.

    Rows are offsets from the mean log distance (max, +1 sd, mean, -1 sd,
    -2 sd, min, where given); each cell is
    ``exp(influence_beta * k + distance_beta * (d - distance_mean))``.
    """
    rows = []
    if distance_max is not None:
        rows.append(("max", distance_max))
    rows += [("+1 sd", distance_mean + distance_sd), ("mean", distance_mean),
             ("-1 sd", distance_mean - distance_sd), ("-2 sd", distance_mean - 2 * distance_sd)]
    if distance_min is not None:
        rows.append(("min", distance_min))
    out = []
    for label, d in rows:
        row = {"distance": label, "ln_distance": d}
        for k in range(max_influences + 1):
            row[str(k)] = effect_magnitude(1.0, influence_beta * k + distance_beta * (d - distance_mean))
        out.append(row)
    return out
