"""Size and power of the score test for an omitted TMT effect.

    python3 scripts/score_calibration.py --null-reps 200 --power-reps 50
"""
import argparse
import json
import time
from dataclasses import asdict

from saomtrade.studies import Design, binomial_band, rejection_summary, score_replication


def run(label, design, reps, first_seed, chains):
    outcomes = []
    for s in range(first_seed, first_seed + reps):
        t0 = time.perf_counter()
        o = score_replication(s, design, chains=chains)
        outcomes.append(o)
        print(f"{label} seed {s:3d}  stat {o.statistic:8.3f}  p {o.p_value:.4f}  "
              f"{'' if o.converged else 'not converged'} {o.error or ''} [{time.perf_counter() - t0:.0f}s]",
              flush=True)
    return outcomes


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--null-reps", type=int, default=200)
    ap.add_argument("--power-reps", type=int, default=50)
    ap.add_argument("--chains", type=int, default=1000)
    ap.add_argument("--out")
    args = ap.parse_args()
    null = run("null", Design(tmt=0.0), args.null_reps, 0, args.chains)
    alt = run("alt", Design(tmt=0.5), args.power_reps, 1000, args.chains)
    size, power = rejection_summary(null), rejection_summary(alt)
    size["band_99"] = binomial_band(size["usable"], 0.05)
    print(json.dumps({"size": size, "power": power}))
    if args.out:
        with open(args.out, "w") as f:
            json.dump({"size": size, "power": power, "null": [asdict(o) for o in null],
                       "alt": [asdict(o) for o in alt]}, f, indent=2)


if __name__ == "__main__":
    main()
