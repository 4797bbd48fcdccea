"""Synthetic raw trade files whose relative dichotomization recovers a given panel.

Tie flows lie between ``TIE_BAND`` percent of the importer's market, non-tie
flows below ``GAP_BAND``; any relative threshold strictly between the two
bands (``SAFE_THRESHOLDS``) reproduces the panel exactly, up to the prepared panel listing countries
in sorted order and leaving out any country with no tie in any wave.
"""
from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .netpanel import NetworkPanel
from .tradeprep import REFERENCE_MARKET_MODEL, MarketSizeModel, predict_market_size

TIE_BAND = (6.0, 40.0)
GAP_BAND = (0.0, 0.5)
SAFE_THRESHOLDS = (0.5, 6.0)


def write_trade_files(panel: NetworkPanel, directory, seed: int,
                      model: MarketSizeModel = REFERENCE_MARKET_MODEL) -> dict[str, Path]:
    """Write ``flows.csv``, ``macro.csv`` and ``dyadic.csv``; return their paths.

    Flows carry re-exports (netted out on preparation) and one indefinite
    ``World`` row per reporter-year (dropped on preparation).
    """
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    names = panel.countries
    n = panel.n
    gdp = np.exp(rng.uniform(7.0, 10.5, n))
    pop = np.exp(rng.uniform(14.0, 19.0, n))
    paths = {k: d / f"{k}.csv" for k in ("flows", "macro", "dyadic")}
    with open(paths["macro"], "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["country", "year", "gdp_per_capita", "population"])
        for t, year in enumerate(panel.labels):
            growth = 1.02 ** t
            for k, c in enumerate(names):
                w.writerow([c, year, repr(float(gdp[k] * growth)), repr(float(pop[k]))])
    with open(paths["flows"], "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["reporter", "partner", "year", "gross_exports", "re_exports"])
        for t, year in enumerate(panel.labels):
            market = predict_market_size(model, gdp * 1.02 ** t, pop)
            mask = panel.masks[t]
            x = panel.adjacency[t]
            for i in range(n):
                if mask[i].all():
                    continue
                total = 0.0
                for j in range(n):
                    if i == j or mask[i, j]:
                        continue
                    band = TIE_BAND if x[i, j] else GAP_BAND
                    net = rng.uniform(*band) / 100 * market[j]
                    re_v = rng.uniform(0, 0.2) * net
                    total += net + re_v
                    w.writerow([names[i], names[j], year, repr(float(net + re_v)), repr(float(re_v))])
                w.writerow([names[i], "World", year, repr(float(total)), "0"])
    with open(paths["dyadic"], "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["origin", "destination", "distance", "contiguity"])
        pos = rng.uniform(0, 10_000, (n, 2))
        for i in range(n):
            for j in range(n):
                if i != j:
                    km = float(np.hypot(*(pos[i] - pos[j]))) + 50.0
                    w.writerow([names[i], names[j], repr(km), int(km < 1500)])
    return paths
