"""Actor-oriented forward simulation between consecutive waves.

In a period with rate ``lam`` the number of micro-steps is
``Poisson(n * lam)``; each step picks an actor uniformly and lets it toggle
one permitted outgoing dyad or keep its ties, with probability proportional
to ``exp`` of the objective gain.  Creation effects only enter alternatives
that add a tie, endowment effects only alternatives that drop one.

Randomness comes from ``numpy.random.Philox`` streams derived from
``SeedSequence(seed, spawn_key=key)``; each period of each chain owns two
streams (event timing and choices), so perturbing a rate or a parameter
reuses the same random numbers.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import _kernel
from .effects import (EffectSpec, check_effects, kernel_arrays, period_change_statistics,
                      toggle_deltas)
from .netpanel import CovariateSet, NetworkPanel

log = logging.getLogger(__name__)

RNG_ALGORITHM = "numpy.random.Philox; SeedSequence(seed, spawn_key=(...))"

# spawn-key prefixes for the independent uses of one master seed
KEY_SIMULATE = 0
KEY_PHASE1 = 1
KEY_PHASE2 = 2
KEY_PHASE3 = 3
KEY_SCORE = 4
KEY_GENERATE = 5


def seed_sequence(seed, *key: int) -> np.random.SeedSequence:
    if isinstance(seed, np.random.SeedSequence):
        return np.random.SeedSequence(seed.entropy, spawn_key=tuple(seed.spawn_key) + key)
    return np.random.SeedSequence(int(seed), spawn_key=key)


def generator(seed, *key: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(seed_sequence(seed, *key)))


def draw_steps(seed, mean_steps: float) -> np.ndarray:
    """Uniform pairs for a Poisson(``mean_steps``) number of micro-steps.

    The count is the number of unit-rate exponential arrivals before
    ``mean_steps``, so it is monotone in ``mean_steps`` for a fixed seed.
    """
    timing = generator(seed, 0)
    count, acc = 0, 0.0
    while True:
        cs = acc + np.cumsum(timing.standard_exponential(256))
        if cs[-1] < mean_steps:
            count += cs.size
            acc = cs[-1]
            continue
        count += int(np.searchsorted(cs, mean_steps, side="left"))
        break
    return generator(seed, 1).random((count, 2))


def choice_probabilities(x: np.ndarray, covs: CovariateSet | None, wave: int,
                         effects: Sequence[EffectSpec], i: int,
                         frozen: np.ndarray | None = None) -> np.ndarray:
    """Probability of each alternative for actor ``i``; entry ``i`` is no change."""
    x = np.asarray(x)
    n = x.shape[0]
    adding = x[i] == 0
    gain = np.zeros(n)
    for e in effects:
        d = toggle_deltas(e, x, covs, wave, i)
        if e.parametrization == "creation":
            d = np.where(adding, d, 0.0)
        elif e.parametrization == "endowment":
            d = np.where(adding, 0.0, d)
        gain += e.beta * d
    gain[i] = 0.0
    if frozen is not None:
        gain[np.asarray(frozen[i], dtype=bool)] = -np.inf
        gain[i] = 0.0
    w = np.exp(gain - gain.max())
    return w / w.sum()


def ministep(state: np.ndarray, covs: CovariateSet | None, wave: int,
             effects: Sequence[EffectSpec], rng: np.random.Generator,
             frozen: np.ndarray | None = None) -> tuple[int, int | None]:
    """One change opportunity, applied to ``state`` in place.

    Returns the chosen actor and the toggled alter (``None`` for no change,
    which is also what an actor with every dyad frozen always gets).
    """
    n = state.shape[0]
    frozen = np.zeros((n, n), dtype=bool) if frozen is None else np.asarray(frozen, dtype=bool)
    u = rng.random(2)
    i = min(int(u[0] * n), n - 1)
    p = choice_probabilities(state, covs, wave, effects, i, frozen)
    j = min(int(np.searchsorted(np.cumsum(p), u[1] * p.sum(), side="right")), n - 1)
    if j == i or p[j] == 0.0:
        return i, None
    state[i, j] = 1 - state[i, j]
    return i, j


@dataclass
class PeriodResult:
    x_end: np.ndarray
    statistics: np.ndarray
    steps: int
    toggles: int


def simulate_period(x_start: np.ndarray, covs: CovariateSet | None, wave: int,
                    effects: Sequence[EffectSpec], rate: float, seed,
                    frozen: np.ndarray | None = None) -> PeriodResult:
    """Simulate one period from ``x_start``; frozen dyads never change."""
    if rate <= 0:
        raise ValueError(f"rate must be positive, got {rate}")
    x0 = np.ascontiguousarray(x_start, dtype=np.int8)
    n = x0.shape[0]
    frozen = np.zeros((n, n), dtype=bool) if frozen is None else np.ascontiguousarray(frozen, dtype=bool)
    codes, ptypes, betas, covmats = kernel_arrays(effects, covs, n, wave)
    uniforms = draw_steps(seed, n * rate)
    x = x0.copy()
    toggles = _kernel.run_ministeps(x, frozen, codes, ptypes, betas, covmats, uniforms)
    stats = period_change_statistics(x0, x, covs, effects, wave)
    return PeriodResult(x, stats, uniforms.shape[0], int(toggles))


class PanelModel:
    """Observed panel prepared for repeated conditional simulation.

    ``simulate(betas, rates, seed, *key)`` returns per-period statistics
    ``(periods, K)`` and changed-dyad counts ``(periods,)`` for a single
    chain; every period starts from the observed earlier wave.
    """

    def __init__(self, panel: NetworkPanel, covs: CovariateSet | None,
                 effects: Sequence[EffectSpec]):
        if panel.n_waves < 2:
            raise ValueError("simulation needs at least two waves")
        check_effects(effects)
        self.panel = panel
        self.covs = covs
        self.effects = list(effects)
        self.periods = []
        for t in range(panel.n_periods):
            x0, x1 = panel.period_endpoints(t)
            frozen = np.ascontiguousarray(panel.period_mask(t))
            codes, ptypes, _, covmats = kernel_arrays(self.effects, covs, panel.n, t)
            self.periods.append((x0, x1, frozen, codes, ptypes, covmats))
        self.observed_statistics = np.array([
            period_change_statistics(x0, x1, covs, self.effects, t)
            for t, (x0, x1, *_) in enumerate(self.periods)])
        self.observed_hamming = np.array(
            [float(np.sum(x0 != x1)) for x0, x1, *_ in self.periods])

    @property
    def n_periods(self) -> int:
        return len(self.periods)

    def simulate(self, betas: np.ndarray, rates: np.ndarray, seed, *key: int):
        n = self.panel.n
        betas = np.asarray(betas, dtype=float)
        stats = np.empty((self.n_periods, len(self.effects)))
        hamming = np.empty(self.n_periods)
        for t, (x0, _, frozen, codes, ptypes, covmats) in enumerate(self.periods):
            uniforms = draw_steps(seed_sequence(seed, *key, t), n * rates[t])
            x = x0.copy()
            _kernel.run_ministeps(x, frozen, codes, ptypes, betas, covmats, uniforms)
            stats[t] = _kernel.period_statistics(x0, x, codes, ptypes, covmats)
            hamming[t] = np.sum(x0 != x)
        return stats, hamming


@dataclass
class PanelSimulation:
    effects: list[EffectSpec]
    per_chain: np.ndarray  # (chains, periods, K)
    hamming: np.ndarray  # (chains, periods)
    mean: np.ndarray  # (periods, K)
    covariance: np.ndarray  # (periods, K, K)
    covariance_defined: bool
    metadata: dict = field(default_factory=dict)


def simulate_panel(panel: NetworkPanel, covs: CovariateSet | None,
                   effects: Sequence[EffectSpec], rates: Sequence[float],
                   chains: int, seed: int) -> PanelSimulation:
    if chains < 1:
        raise ValueError("chains must be >= 1")
    rates = np.asarray(rates, dtype=float)
    if rates.shape != (panel.n_periods,) or (rates <= 0).any():
        raise ValueError(f"need {panel.n_periods} positive rates, got {rates.tolist()}")
    model = PanelModel(panel, covs, effects)
    betas = np.array([e.beta for e in effects], dtype=float)
    per_chain = np.empty((chains, panel.n_periods, len(effects)))
    hamming = np.empty((chains, panel.n_periods))
    for c in range(chains):
        per_chain[c], hamming[c] = model.simulate(betas, rates, seed, KEY_SIMULATE, c)
    mean = per_chain.mean(axis=0)
    k = len(effects)
    if chains > 1:
        cov = np.stack([np.atleast_2d(np.cov(per_chain[:, t, :], rowvar=False, ddof=1)).reshape(k, k)
                        for t in range(panel.n_periods)])
    else:
        cov = np.zeros((panel.n_periods, k, k))
    meta = {"seed": int(seed), "chains": chains, "rates": rates.tolist(), "rng": RNG_ALGORITHM}
    return PanelSimulation(list(effects), per_chain, hamming, mean, cov, chains > 1, meta)


def generate_panel(n: int, n_waves: int, effects: Sequence[EffectSpec], rates: Sequence[float],
                   seed: int, initial_density: float = 0.1, covs: CovariateSet | None = None,
                   labels: Sequence[int] | None = None, countries: Sequence[str] | None = None,
                   burn_in_rate: float | None = None) -> NetworkPanel:
    """Synthetic panel whose waves are successive simulations of the model.

    Wave 0 is Bernoulli(``initial_density``), optionally followed by a
    burn-in period at ``burn_in_rate``; each later wave continues from the
    previous simulated wave.
    """
    from .netpanel import build_panel

    rng = generator(seed, KEY_GENERATE)
    x = (rng.random((n, n)) < initial_density).astype(np.int8)
    np.fill_diagonal(x, 0)
    if burn_in_rate:
        x = simulate_period(x, covs, 0, effects, burn_in_rate, seed_sequence(seed, KEY_GENERATE, 999)).x_end
    waves = [x]
    for t in range(n_waves - 1):
        x = simulate_period(x, covs, t, effects, rates[t], seed_sequence(seed, KEY_GENERATE, t)).x_end
        waves.append(x)
    labels = list(labels) if labels is not None else [5 * t for t in range(n_waves)]
    return build_panel(list(zip(labels, waves)), countries=countries)
