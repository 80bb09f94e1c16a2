"""Simulate station files and run every CLI stage on them.

    python scripts/run_synthetic_pipeline.py runs/demo --fast

``--fast`` shrinks the boosting and forest sizes so the run takes seconds;
without it the full default settings are used (about a minute).
"""
import argparse
import sys
from pathlib import Path

from meltcast import cli

FAST = {"boost.shrinkage": "0.01", "boost.max_iterations": "2000",
        "qrf.n_trees": "200"}


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("out_dir", type=Path)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--fast", action="store_true")
    args = ap.parse_args()
    out = args.out_dir.resolve()
    if cli.main(["simulate", "--out-dir", str(out), "--seed", str(args.seed)]) != 0:
        return 1
    cfg = out / "config.txt"
    if args.fast:
        lines = []
        for line in cfg.read_text().splitlines():
            key = line.split("=", 1)[0].strip()
            lines.append(f"{key} = {FAST[key]}" if key in FAST else line)
        cfg.write_text("\n".join(lines) + "\n")
    worst = 0
    for stage in ("ingest", "train", "calibrate", "forecast", "evaluate"):
        print(f"\n== {stage}")
        code = cli.main(["--config", str(cfg), stage])
        if code == cli.EXIT_ERROR:
            return code
        worst = max(worst, code)
    print(f"\noutputs in {out} (figures in {out / 'figures'})")
    return worst


if __name__ == "__main__":
    sys.exit(main())
