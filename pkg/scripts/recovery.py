"""Parameter recovery: fit synthetic panels generated at known effect values.

    python3 scripts/recovery.py --reps 20 --out results/recovery.json
"""
import argparse
import json
import time
from dataclasses import asdict

from saomtrade.studies import Design, recovery_replication, summarize_recovery


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--reps", type=int, default=20)
    ap.add_argument("--first-seed", type=int, default=0)
    ap.add_argument("--n", type=int, default=Design.n)
    ap.add_argument("--out", help="JSON file for per-replication results")
    args = ap.parse_args()
    design = Design(n=args.n)
    outcomes = []
    for s in range(args.first_seed, args.first_seed + args.reps):
        t0 = time.perf_counter()
        o = recovery_replication(s, design)
        outcomes.append(o)
        est = " ".join(f"{b:+.3f}({e:.3f})" for b, e in zip(o.estimate, o.se))
        print(f"seed {s:3d}  {'ok  ' if o.success else 'MISS'}  {est}  max|t| {o.max_abs_t:.3f}"
              f"  {o.error or ''}  [{time.perf_counter() - t0:.0f}s]", flush=True)
    summary = summarize_recovery(outcomes)
    print(json.dumps(summary))
    if args.out:
        with open(args.out, "w") as f:
            json.dump({"design": asdict(design), "summary": summary,
                       "replications": [asdict(o) for o in outcomes]}, f, indent=2)


if __name__ == "__main__":
    main()
