"""Command-line pipeline: ingest -> train -> calibrate -> forecast -> evaluate.

Every stage reads the previous stage's files from the output directory and
records what it did in ``manifest.json`` there.

Exit codes: 0 success, 1 error (including a refused alpha change), 2 success
with warnings (whiteness failure, degenerate regime, early-stopping warning).
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__, boost, conformal, ingest, report, synthetic
from .config import PipelineConfig, load_config, render_config
from .errors import ConfigurationError
from .svg import Figure, bar_chart

log = logging.getLogger("meltcast")

EXIT_OK, EXIT_ERROR, EXIT_WARN = 0, 1, 2

# reference values quoted for context only (Longyearbyen 2022-2024 analysis)
PUBLISHED_REFERENCE = {
    "warm_mean_half_width": 2.6, "warm_half_width_range": (1.4, 6.2),
    "cool_mean_half_width": 4.7, "cool_half_width_range": (2.0, 8.3),
    "importance_lag_temp_pct": 45.0, "importance_day_counter_pct": 40.0,
    "best_iter": 27000,
}

TABLE_FILES = {"train": "features_train.csv", "calibration": "features_calibration.csv",
               "test": "features_test.csv"}
MODEL_FILE = "model.npz"
LOSS_CURVE_FILE = "loss_curve.csv"
CALIBRATOR_FILE = "calibrator.npz"
WHITENESS_FILE = "whiteness.json"
REGIONS_FILE = "regions.csv"
REGION_COLUMNS = ("date", "forecast", "regime", "lower", "upper", "q_lo", "q_hi",
                  "melting_confidence")


class StageError(RuntimeError):
    pass


def sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


class Manifest:
    def __init__(self, out_dir: Path):
        self.path = out_dir / "manifest.json"
        self.data = json.loads(self.path.read_text()) if self.path.exists() else {}

    def record(self, stage, cfg: PipelineConfig, fragment: dict, inputs=(), outputs=(),
               started=None):
        self.data["software_version"] = __version__
        self.data["config"] = cfg.snapshot()
        frag = dict(fragment)
        frag["inputs"] = {Path(p).name: sha256(p) for p in inputs}
        frag["outputs"] = {Path(p).name: sha256(p) for p in outputs}
        if started is not None:
            frag["timing_seconds"] = round(time.perf_counter() - started, 3)
        self.data.setdefault("stages", {})[stage] = frag
        self.save()

    def save(self):
        self.path.write_text(json.dumps(self.data, indent=2, sort_keys=True) + "\n")


def _require(path: Path, stage: str):
    if not path.exists():
        raise StageError(f"{path.name} not found in {path.parent}; run `meltcast {stage}` first")
    return path


def _guard_alpha(manifest: Manifest, alpha: float, override: bool):
    done = manifest.data.get("evaluated_alpha")
    if done is not None and done != alpha and not override:
        raise StageError(
            f"this test set was already evaluated with alpha={done}; choosing a new "
            f"alpha ({alpha}) after seeing test coverage invalidates the guarantee. "
            "Pass --override-alpha-change to proceed anyway.")


def cmd_ingest(cfg: PipelineConfig, out: Path, manifest: Manifest, **_):
    started = time.perf_counter()
    if not cfg.station_files:
        raise ConfigurationError("config lists no station_files")
    records = []
    for path in cfg.station_files:
        records.extend(ingest.parse_records(path))
    records.sort(key=lambda r: (r.day, r.hour))
    daily = ingest.select_daily(records, cfg.target_hour, cfg.tolerance_hours)
    written, tallies = [], {}
    for role, year in cfg.roles:
        table = ingest.build_features(daily, year, cfg.lag_days, role)
        path = out / TABLE_FILES[role]
        ingest.write_table(table, path)
        written.append(path)
        tallies[role] = {"year": year, "rows": len(table), "excluded": table.excluded,
                         "reasons": table.exclusion_reasons}
        print(f"{role:<12} {year}: {len(table)} rows, {table.excluded} excluded")
    manifest.record("ingest", cfg, {"exclusions": tallies}, cfg.station_files, written,
                    started)
    return EXIT_OK


def cmd_train(cfg: PipelineConfig, out: Path, manifest: Manifest, **_):
    started = time.perf_counter()
    tr_path = _require(out / TABLE_FILES["train"], "ingest")
    ca_path = _require(out / TABLE_FILES["calibration"], "ingest")
    train_table = ingest.read_table(tr_path, "train")
    calib_table = ingest.read_table(ca_path, "calibration")
    model = boost.train(train_table, calib_table, boost.QuantileLossParams(cfg.tau),
                        cfg.boost_params())
    boost.save_booster(model, out / MODEL_FILE)
    with open(out / LOSS_CURVE_FILE, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("iteration", "calibration_loss", "training_loss"))
        for it, c, t in zip(model.eval_iters, model.loss_curve, model.train_loss_curve):
            w.writerow((int(it), repr(float(c)), repr(float(t))))
    print(f"best_iter = {model.best_iter} (calibration pinball loss "
          f"{model.loss_curve.min():.6f}); published run: ~{PUBLISHED_REFERENCE['best_iter']}")
    warnings = []
    if model.still_improving:
        warnings.append("calibration loss still decreasing at max_iterations")
        print("WARNING: " + warnings[-1], file=sys.stderr)
    manifest.record("train", cfg, {"best_iter": model.best_iter, "warnings": warnings},
                    [tr_path, ca_path], [out / MODEL_FILE, out / LOSS_CURVE_FILE], started)
    return EXIT_WARN if warnings else EXIT_OK


def cmd_calibrate(cfg: PipelineConfig, out: Path, manifest: Manifest, override=False, **_):
    started = time.perf_counter()
    _guard_alpha(manifest, cfg.alpha, override)
    model_path = _require(out / MODEL_FILE, "train")
    ca_path = _require(out / TABLE_FILES["calibration"], "ingest")
    model = boost.load_booster(model_path)
    calib_table = ingest.read_table(ca_path, "calibration")
    cal = conformal.calibrate(model, calib_table, cfg.alpha, cfg.qrf_params(),
                              score_level=cfg.score_level, mode=cfg.conformal_mode,
                              ljung_box_lags=cfg.ljung_box_lags,
                              max_gap_days=cfg.max_gap_days)
    conformal.save_calibrator(cal, out / CALIBRATOR_FILE)
    whiteness = {"ar1": {"intercept_c": cal.ar1.intercept_c, "phi": cal.ar1.phi,
                         "n_used": cal.ar1.n_used, "stationary": cal.ar1.stationary},
                 "ljung_box": cal.whiteness.to_dict(), "regime_counts": cal.regime_counts,
                 "pooled_fallback": cal.pooled_fallback}
    (out / WHITENESS_FILE).write_text(json.dumps(whiteness, indent=2, sort_keys=True) + "\n")
    print(f"AR(1): c = {cal.ar1.intercept_c:.4f}, phi = {cal.ar1.phi:.4f}; Ljung-Box "
          f"Q = {cal.whiteness.ljung_box_stat:.2f} on {cal.whiteness.ljung_box_df} df, "
          f"p = {cal.whiteness.ljung_box_pvalue:.4f}")
    print(f"scores per regime: {cal.regime_counts}")
    for w in cal.warnings:
        print("WARNING: " + w, file=sys.stderr)
    manifest.record("calibrate", cfg, {"whiteness": whiteness, "warnings": cal.warnings,
                                       "alpha": cal.alpha},
                    [model_path, ca_path], [out / CALIBRATOR_FILE, out / WHITENESS_FILE],
                    started)
    return EXIT_WARN if cal.warnings else EXIT_OK


def write_regions(regions, alpha, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REGION_COLUMNS)
        for r in regions:
            conf = conformal.melting_confidence(r, alpha)
            w.writerow((str(r.date), repr(r.forecast), r.regime, repr(r.lower), repr(r.upper),
                        repr(r.q_lo), repr(r.q_hi), "" if conf is None else repr(conf)))


def read_regions(path):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [conformal.PredictionRegion(np.datetime64(r["date"], "D"), float(r["forecast"]),
                                       r["regime"], float(r["lower"]), float(r["upper"]),
                                       float(r["q_lo"]), float(r["q_hi"])) for r in rows]


def cmd_forecast(cfg: PipelineConfig, out: Path, manifest: Manifest, override=False, **_):
    started = time.perf_counter()
    _guard_alpha(manifest, cfg.alpha, override)
    model_path = _require(out / MODEL_FILE, "train")
    cal_path = _require(out / CALIBRATOR_FILE, "calibrate")
    te_path = _require(out / TABLE_FILES["test"], "ingest")
    model = boost.load_booster(model_path)
    cal = conformal.load_calibrator(cal_path)
    if cal.alpha != cfg.alpha:
        raise StageError(f"calibrator was built with alpha={cal.alpha} but the config says "
                         f"{cfg.alpha}; rerun `meltcast calibrate`")
    test_table = ingest.read_table(te_path, "test")
    regions = conformal.forecast_with_region(cal, model, test_table)
    write_regions(regions, cal.alpha, out / REGIONS_FILE)
    n_conf = sum(conformal.melting_confidence(r, cal.alpha) is not None for r in regions)
    print(f"{len(regions)} regions written; {n_conf} days with region entirely above 0 degC")
    swapped = sum(r.swapped for r in regions)
    warnings = [f"{swapped} regions had crossed score quantiles"] if swapped else []
    manifest.record("forecast", cfg, {"n_regions": len(regions), "warnings": warnings},
                    [model_path, cal_path, te_path], [out / REGIONS_FILE], started)
    return EXIT_WARN if warnings else EXIT_OK


def _fmt_range(lo, hi):
    return "n/a" if lo is None else f"{lo:.2f}..{hi:.2f}"


def cmd_evaluate(cfg: PipelineConfig, out: Path, manifest: Manifest, override=False, **_):
    started = time.perf_counter()
    _guard_alpha(manifest, cfg.alpha, override)
    reg_path = _require(out / REGIONS_FILE, "forecast")
    te_path = _require(out / TABLE_FILES["test"], "ingest")
    model_path = _require(out / MODEL_FILE, "train")
    cal_path = _require(out / CALIBRATOR_FILE, "calibrate")
    regions = read_regions(reg_path)
    test_table = ingest.read_table(te_path, "test")
    model = boost.load_booster(model_path)
    cal = conformal.load_calibrator(cal_path)
    if cal.alpha != cfg.alpha:
        raise StageError(f"regions were built with alpha={cal.alpha}, config says {cfg.alpha}")
    truth = dict(zip(test_table.dates.astype(str), test_table.y))
    try:
        truths = np.array([truth[str(r.date)] for r in regions])
    except KeyError as exc:
        raise StageError(f"region date {exc} has no labelled test response") from exc

    figdir = out / "figures"
    figdir.mkdir(exist_ok=True)
    written = []

    cov = conformal.empirical_coverage(regions, truths)
    summary = {"alpha": cal.alpha, "nominal_coverage": 1 - cal.alpha, "coverage": cov,
               "whiteness_passed": cal.whiteness.passed,
               "pooled_fallback": cal.pooled_fallback, "published_reference": PUBLISHED_REFERENCE}
    print(f"coverage (nominal {1 - cal.alpha:.2f}): overall {cov['overall']['coverage']:.3f} "
          f"over {cov['overall']['n']} days")
    for reg in (conformal.WARM, conformal.COOL):
        s = cov[reg]
        ref_mean = PUBLISHED_REFERENCE[f"{reg}_mean_half_width"]
        ref_lo, ref_hi = PUBLISHED_REFERENCE[f"{reg}_half_width_range"]
        if s["n"]:
            print(f"  {reg:<5} n={s['n']:<4} coverage {s['coverage']:.3f}  half-width mean "
                  f"{s['mean_half_width']:.2f} range "
                  f"{_fmt_range(s['min_half_width'], s['max_half_width'])}  "
                  f"(published: {ref_mean}, {ref_lo}..{ref_hi})")
        else:
            print(f"  {reg:<5} n=0")

    bins, degenerate = report.bin_exceedance([r.forecast for r in regions], truths)
    summary["bins_degenerate"] = degenerate
    bins_path = out / "bins.csv"
    with open(bins_path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("bin", "lower_edge", "upper_edge", "mean_forecast", "count",
                    "pct_exceeding", "filled"))
        for b in bins:
            w.writerow((b.index, repr(b.lower_edge), repr(b.upper_edge),
                        "" if b.mean_forecast is None else repr(b.mean_forecast), b.count,
                        "" if b.pct_exceeding is None else repr(b.pct_exceeding),
                        int(b.filled)))
    written.append(bins_path)

    imp = report.variable_importance(model)
    imp_path = out / "importance.csv"
    with open(imp_path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("predictor", "percent"))
        for name, pct in imp.ranked():
            w.writerow((name, repr(pct)))
    written.append(imp_path)
    shares = dict(imp.ranked())
    print("importance: " + ", ".join(f"{k} {v:.1f}%" for k, v in imp.ranked()))
    print(f"  (published: lag_temp ~{PUBLISHED_REFERENCE['importance_lag_temp_pct']:.0f}%, "
          f"day_counter ~{PUBLISHED_REFERENCE['importance_day_counter_pct']:.0f}%; "
          f"here {shares.get('lag_temp', float('nan')):.1f}% / "
          f"{shares.get('day_counter', float('nan')):.1f}%)")
    print(f"best_iter {model.best_iter} (published: ~{PUBLISHED_REFERENCE['best_iter']})")

    pd_path = out / "partial_dependence.csv"
    with open(pd_path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("predictor", "grid", "value"))
        for name in model.feature_names:
            curve = report.partial_dependence(model, name)
            for g, v in zip(curve.grid, curve.values):
                w.writerow((name, repr(float(g)), repr(float(v))))
            fig = Figure(f"Partial dependence: {name}", name, "fitted 2 p.m. temperature (degC)")
            fig.line(curve.grid, curve.values).save(figdir / f"pd_{name}.svg")
            written.append(figdir / f"pd_{name}.svg")
    written.append(pd_path)

    (figdir / "importance.svg").write_text(bar_chart(
        "Relative influence (percent of loss reduction)",
        [k for k, _ in imp.ranked()], [v for _, v in imp.ranked()]))
    written.append(figdir / "importance.svg")

    full = [b for b in bins if b.count]
    if full:
        fig = Figure("Share of future temperatures above 0 degC by forecast bin",
                     "mean forecast in bin (degC)", "percent above 0 degC", ylim=(0, 100))
        xs = np.array([b.mean_forecast for b in full])
        ys = np.array([b.pct_exceeding for b in full])
        fig.scatter(xs, ys, filled=np.array([b.filled for b in full]))
        if len(full) >= 5:
            fig.line(xs, np.clip(report.loess_smooth(xs, ys), 0, 100), color=1)
        fig.save(figdir / "bins.svg")
        written.append(figdir / "bins.svg")

    order = np.argsort([r.forecast for r in regions], kind="mergesort")
    fc = np.array([r.forecast for r in regions])[order]
    fig = Figure(f"Observed vs forecast with {1 - cal.alpha:.0%} regions",
                 "forecast (degC)", "observed (degC)")
    fig.segments(fc, np.array([r.lower for r in regions])[order],
                 np.array([r.upper for r in regions])[order], color=2)
    fig.scatter(fc, truths[order], filled=fc > 0)
    fig.hline(0.0)
    fig.save(figdir / "regions.svg")
    written.append(figdir / "regions.svg")

    cov_path = out / "coverage.json"
    cov_path.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    written.insert(0, cov_path)

    manifest.data["evaluated_alpha"] = cal.alpha
    manifest.record("evaluate", cfg, {"coverage": cov["overall"]["coverage"]},
                    [reg_path, te_path, model_path, cal_path], written, started)
    warnings = cal.warnings
    return EXIT_WARN if warnings else EXIT_OK


def cmd_simulate(cfg: PipelineConfig, out: Path, manifest: Manifest, **_):
    """Write four years of synthetic hourly station data plus a config using them."""
    years = range(cfg.calibration_year - 1, cfg.test_year + 1)
    rows = synthetic.station_rows(list(years), seed=cfg.seed)
    files = []
    for year in years:
        path = out / f"station_{year}.csv"
        synthetic.write_station_csv([r for r in rows if r["date"].startswith(str(year))], path)
        files.append(path.name)
    sim_cfg = replace(cfg, station_files=tuple(files), out_dir=".")
    (out / "config.txt").write_text(render_config(sim_cfg))
    print(f"wrote {', '.join(files)} and config.txt to {out}")
    return EXIT_OK


COMMANDS = {"ingest": cmd_ingest, "train": cmd_train, "calibrate": cmd_calibrate,
            "forecast": cmd_forecast, "evaluate": cmd_evaluate, "simulate": cmd_simulate}


def _global_flags(parser, suppress):
    default = argparse.SUPPRESS if suppress else None
    parser.add_argument("--config", default=default,
                        help="flat key = value config file (or a run manifest .json)")
    parser.add_argument("--seed", type=int, default=default, help="override the config seed")
    parser.add_argument("--out-dir", default=default, help="override the output directory")
    parser.add_argument("--override-alpha-change", action="store_true",
                        default=argparse.SUPPRESS if suppress else False,
                        help="allow a new alpha on an already evaluated test set")
    parser.add_argument("-v", "--verbose", action="store_true",
                        default=argparse.SUPPRESS if suppress else False)


def build_parser():
    parser = argparse.ArgumentParser(prog="meltcast", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    _global_flags(parser, suppress=False)
    common = argparse.ArgumentParser(add_help=False)
    _global_flags(common, suppress=True)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in COMMANDS.items():
        sub.add_parser(name, parents=[common], help=(fn.__doc__ or name).splitlines()[0])
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config) if args.config else PipelineConfig()
        cfg = cfg.with_overrides(seed=args.seed, out_dir=args.out_dir)
        out = Path(cfg.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        manifest = Manifest(out)
        return COMMANDS[args.command](cfg, out, manifest,
                                      override=args.override_alpha_change)
    except ingest.BoundaryDataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        print("dates that cannot be lagged: " + ", ".join(str(d) for d in exc.dates),
              file=sys.stderr)
        return EXIT_ERROR
    except (StageError, ConfigurationError, ingest.FormatError, ingest.EmptyInputError,
            ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
