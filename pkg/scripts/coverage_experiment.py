"""Monte Carlo coverage of the conformal regions on synthetic data.

    python scripts/coverage_experiment.py --seeds 20 --phi 0.0
    python scripts/coverage_experiment.py --seeds 10 --phi 0.6 --json out.json

``--phi`` > 0 makes the response noise AR(1), which is what the whitening
step is meant to handle.
"""
import argparse
import json
import logging
import time

from meltcast.experiments import CoverageSetup, coverage_trial, summarize


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, default=20)
    ap.add_argument("--first-seed", type=int, default=0)
    ap.add_argument("--alpha", type=float, default=0.20)
    ap.add_argument("--phi", type=float, default=0.0)
    ap.add_argument("--n-test", type=int, default=2000)
    ap.add_argument("--json", help="write per-seed results here")
    args = ap.parse_args()
    logging.basicConfig(level=logging.ERROR)

    setup = CoverageSetup(alpha=args.alpha, phi=args.phi, n_test=args.n_test)
    trials = []
    t0 = time.perf_counter()
    print(f"{'seed':>4} {'qrf':>7} {'warm':>7} {'cool':>7} {'marginal':>9} {'phi_hat':>8}")
    for seed in range(args.first_seed, args.first_seed + args.seeds):
        t = coverage_trial(seed, setup)
        trials.append(t)
        q = t["qrf"]
        print(f"{seed:>4} {q['coverage']:7.3f} {q['warm'] or float('nan'):7.3f} "
              f"{q['cool'] or float('nan'):7.3f} {t['marginal']['coverage']:9.3f} "
              f"{t['phi_hat']:8.3f}", flush=True)
    s = summarize(trials)
    print(f"\nnominal {1 - args.alpha:.2f}; {len(trials)} seeds in {time.perf_counter() - t0:.0f}s")
    for mode in ("qrf", "marginal"):
        m = s[mode]
        print(f"  {mode:<8} mean {m['mean_coverage']:.4f}  sd {m['sd']:.4f}  "
              f"range {m['min']:.3f}..{m['max']:.3f}")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump({"setup": {"alpha": args.alpha, "phi": args.phi}, "trials": trials,
                       "summary": s}, fh, indent=2)


if __name__ == "__main__":
    main()
