"""Write a synthetic raw-data example and a run configuration for it.

    python3 scripts/make_example.py example/
    saomtrade prep -c example/run.yaml
    saomtrade estimate -c example/run.yaml --panel example/out/prep/panel
"""
import argparse
from pathlib import Path

import yaml

from saomtrade.studies import Design
from saomtrade.synthetic import write_trade_files


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("directory")
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--n", type=int, default=20)
    args = ap.parse_args()
    d = Path(args.directory)
    panel = Design(n=args.n).panel(args.seed)
    write_trade_files(panel, d, seed=args.seed)
    config = {
        "seed": args.seed,
        "output_dir": "out",
        "input": {"flows": "flows.csv", "macro": "macro.csv", "dyadic": "dyadic.csv"},
        "dichotomization": {"scheme": "relative", "threshold": 1.0},
        "effects": [{"kind": "density"}, {"kind": "reciprocity"},
                    {"kind": "transitive_mediated_triads"},
                    {"kind": "dyadic_covariate", "covariate": "ln_distance", "parametrization": "creation"}],
        "score_test": {"effect": {"kind": "three_cycles"}},
        "simulation": {"rates": [4.0] * (panel.n_waves - 1), "chains": 100},
        "nonparam": {"resamples": 10000},
        "sweep": {"thresholds": [1.0, 2.0, 4.0], "effect": "transitive_mediated_triads"},
        "magnitude": {"influence_beta": 0.33, "distance_beta": -0.31, "distance_mean": 8.77,
                      "distance_sd": 0.804, "distance_min": 4.09, "distance_max": 9.90},
    }
    (d / "run.yaml").write_text(yaml.safe_dump(config, sort_keys=False))
    print(f"wrote {', '.join(sorted(p.name for p in d.iterdir()))} to {d}")


if __name__ == "__main__":
    main()
