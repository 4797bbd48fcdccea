"""Odds multipliers for common influences across the distance distribution.

Defaults are the creation-effect estimates for TMT and log distance and the
log-distance descriptives of the quinquennial trade panel.
"""
import argparse

from saomtrade.estimate import magnitude_grid
from saomtrade.reports import magnitude_table


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--influence-beta", type=float, default=0.33)
    ap.add_argument("--distance-beta", type=float, default=-0.31)
    ap.add_argument("--mean", type=float, default=8.77)
    ap.add_argument("--sd", type=float, default=0.804)
    ap.add_argument("--min", type=float, default=4.09)
    ap.add_argument("--max", type=float, default=9.90)
    ap.add_argument("--max-influences", type=int, default=4)
    a = ap.parse_args()
    grid = magnitude_grid(a.influence_beta, a.distance_beta, a.mean, a.sd, a.min, a.max, a.max_influences)
    print(magnitude_table(grid).to_text(), end="")


if __name__ == "__main__":
    main()
