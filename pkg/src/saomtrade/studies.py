"""Seeded Monte Carlo studies of the estimator and the score test.

Each replication generates a panel from a known model, fits it and reports
plain numbers, so the same code backs the acceptance suite and the
experiment scripts.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .effects import EffectSpec
from .estimate import EstimationError, EstimationOptions, estimate, score_test
from .simulate import generate_panel


@dataclass(frozen=True)
class Design:
    """Data-generating process for synthetic panels."""
    n: int = 30
    waves: int = 3
    density: float = -1.2
    reciprocity: float = 1.0
    tmt: float = 0.3
    rate: float = 4.0
    initial_density: float = 0.15
    burn_in_rate: float = 10.0

    def effects(self) -> list[EffectSpec]:
        return [EffectSpec("density", beta=self.density), EffectSpec("reciprocity", beta=self.reciprocity),
                EffectSpec("transitive_mediated_triads", beta=self.tmt)]

    def panel(self, seed: int):
        return generate_panel(self.n, self.waves, self.effects(), [self.rate] * (self.waves - 1),
                              seed=seed, initial_density=self.initial_density,
                              burn_in_rate=self.burn_in_rate)


# panels are generated from seed PANEL_OFFSET + s and fitted with seed s
PANEL_OFFSET = 100


@dataclass
class RecoveryOutcome:
    seed: int
    truth: list[float]
    estimate: list[float]
    se: list[float]
    max_abs_t: float
    converged: bool
    error: str | None = None
    within: list[bool] = field(default_factory=list)

    @property
    def success(self) -> bool:
        return self.error is None and self.converged and all(self.within)


def recovery_replication(seed: int, design: Design = Design(),
                         options: EstimationOptions | None = None, width: float = 2.0) -> RecoveryOutcome:
    truth = [e.beta for e in design.effects()]
    panel = design.panel(PANEL_OFFSET + seed)
    try:
        fit = estimate(panel, None, [EffectSpec(e.kind) for e in design.effects()], seed, options)
    except EstimationError as exc:
        return RecoveryOutcome(seed, truth, [], [], float("nan"), False, f"{type(exc).__name__}: {exc}")
    est, se = fit.beta_hat.tolist(), fit.standard_errors.tolist()
    within = [abs(b - t) <= width * s for b, t, s in zip(est, truth, se)]
    return RecoveryOutcome(seed, truth, est, se, fit.max_abs_t, fit.converged, None, within)


@dataclass
class ScoreOutcome:
    seed: int
    statistic: float
    p_value: float
    converged: bool
    error: str | None = None


def score_replication(seed: int, design: Design, options: EstimationOptions | None = None,
                      chains: int = 1000) -> ScoreOutcome:
    """Fit density and reciprocity only, then score-test the omitted TMT effect."""
    panel = design.panel(PANEL_OFFSET + seed)
    restricted = [EffectSpec("density"), EffectSpec("reciprocity")]
    try:
        fit = estimate(panel, None, restricted, seed, options)
        if not fit.converged:
            return ScoreOutcome(seed, float("nan"), float("nan"), False)
        s = score_test(panel, None, fit, EffectSpec("transitive_mediated_triads"), seed, chains)
    except EstimationError as exc:
        return ScoreOutcome(seed, float("nan"), float("nan"), False, f"{type(exc).__name__}: {exc}")
    return ScoreOutcome(seed, s.statistic, s.p_value, True)


def binomial_band(n: int, p: float, level: float = 0.99) -> tuple[int, int]:
    """Central ``level`` interval for a Binomial(n, p) count."""
    from scipy.stats import binom
    a = (1 - level) / 2
    return int(binom.ppf(a, n, p)), int(binom.ppf(1 - a, n, p))


def rejection_summary(outcomes: list[ScoreOutcome], alpha: float = 0.05) -> dict:
    ok = [o for o in outcomes if o.converged]
    rejections = sum(o.p_value < alpha for o in ok)
    return {"replications": len(outcomes), "usable": len(ok), "rejections": rejections,
            "rate": rejections / len(ok) if ok else float("nan")}


def summarize_recovery(outcomes: list[RecoveryOutcome]) -> dict:
    good = [o for o in outcomes if o.error is None]
    z = np.array([[(b - t) / s for b, t, s in zip(o.estimate, o.truth, o.se)] for o in good])
    return {"replications": len(outcomes), "successes": sum(o.success for o in outcomes),
            "converged": sum(o.converged for o in outcomes),
            "errors": sum(o.error is not None for o in outcomes),
            "mean_z": z.mean(axis=0).round(3).tolist() if len(z) else [],
            "sd_z": z.std(axis=0, ddof=1).round(3).tolist() if len(z) > 1 else []}
