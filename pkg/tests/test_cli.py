import csv
import json
import shutil

import numpy as np
import pytest

from meltcast import cli, ingest, synthetic
from meltcast.config import PipelineConfig, load_config, parse_config, render_config
from meltcast.errors import ConfigurationError

SMALL = {"boost.max_iterations": "200", "boost.shrinkage": "0.05", "boost.eval_stride": "20",
         "qrf.n_trees": "30"}
STAGES = ("ingest", "train", "calibrate", "forecast", "evaluate")


def run(capsys, *argv):
    code = cli.main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def edit_config(path, **changes):
    lines = []
    for line in path.read_text().splitlines():
        key = line.split("=", 1)[0].strip()
        lines.append(f"{key} = {changes.pop(key)}" if key in changes else line)
    lines += [f"{k} = {v}" for k, v in changes.items()]
    path.write_text("\n".join(lines) + "\n")


@pytest.fixture(scope="module")
def sim_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("sim")
    assert cli.main(["simulate", "--out-dir", str(d)]) == 0
    edit_config(d / "config.txt", **SMALL)
    return d


@pytest.fixture(scope="module")
def pipeline(sim_dir):
    codes = {s: cli.main(["--config", str(sim_dir / "config.txt"), s]) for s in STAGES}
    return sim_dir, codes


def manifest(d):
    return json.loads((d / "manifest.json").read_text())


def test_full_pipeline(pipeline):
    d, codes = pipeline
    assert codes["ingest"] == 0 and codes["forecast"] == 0
    assert all(c in (0, 2) for c in codes.values())
    for name in ("features_train.csv", "model.npz", "loss_curve.csv", "calibrator.npz",
                 "whiteness.json", "regions.csv", "coverage.json", "bins.csv",
                 "importance.csv", "partial_dependence.csv", "figures/regions.svg",
                 "figures/importance.svg", "figures/pd_lag_temp.svg"):
        assert (d / name).exists(), name
    m = manifest(d)
    assert set(m["stages"]) == set(STAGES)
    assert m["evaluated_alpha"] == 0.2
    assert m["stages"]["ingest"]["exclusions"]["test"]["year"] == 2024
    calib = ingest.read_table(d / "features_calibration.csv")
    assert str(calib.dates[0]) == "2022-01-01"
    with open(d / "loss_curve.csv") as fh:
        assert len(list(csv.reader(fh))) == 1 + 10


def test_regions_file_contract(pipeline):
    d, _ = pipeline
    test = ingest.read_table(d / "features_test.csv")
    with open(d / "regions.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == len(test)
    assert tuple(rows[0]) == cli.REGION_COLUMNS
    for r in rows:
        f, lo, hi = float(r["forecast"]), float(r["lower"]), float(r["upper"])
        assert lo == f + float(r["q_lo"]) and hi == f + float(r["q_hi"])
        assert r["regime"] == ("warm" if f > 0 else "cool")
        assert (r["melting_confidence"] != "") == (lo > 0)
        if lo > 0:
            assert float(r["melting_confidence"]) == pytest.approx(0.9)


def test_rerun_is_byte_identical(pipeline, tmp_path):
    d, _ = pipeline
    other = tmp_path / "again"
    for s in STAGES:
        assert cli.main(["--config", str(d / "config.txt"), "--out-dir", str(other), s]) in (0, 2)
    a, b = manifest(d)["stages"], manifest(other)["stages"]
    for s in STAGES:
        assert a[s]["outputs"] == b[s]["outputs"], s
    # reproduce from the manifest itself
    third = tmp_path / "third"
    assert cli.main(["--config", str(other / "manifest.json"), "--out-dir", str(third),
                     "ingest"]) == 0
    assert manifest(third)["stages"]["ingest"]["outputs"] == a["ingest"]["outputs"]


def test_inputs_not_mutated(pipeline):
    d, _ = pipeline
    m = manifest(d)
    for name, digest in m["stages"]["ingest"]["inputs"].items():
        assert cli.sha256(d / name) == digest


def test_alpha_guard(pipeline, tmp_path, capsys):
    d, _ = pipeline
    work = tmp_path / "w"
    shutil.copytree(d, work)
    cfg = work / "config.txt"
    edit_config(cfg, alpha="0.1")
    code, _, err = run(capsys, "--config", cfg, "calibrate")
    assert code == cli.EXIT_ERROR and "--override-alpha-change" in err
    code, _, err = run(capsys, "--config", cfg, "evaluate")
    assert code == cli.EXIT_ERROR
    for s in ("calibrate", "forecast", "evaluate"):
        code, _, _ = run(capsys, "--config", cfg, s, "--override-alpha-change")
        assert code in (0, 2), s
    assert manifest(work)["evaluated_alpha"] == 0.1


def test_forecast_refuses_stale_calibrator(pipeline, tmp_path, capsys):
    d, _ = pipeline
    work = tmp_path / "w"
    shutil.copytree(d, work)
    m = manifest(work)
    del m["evaluated_alpha"]
    (work / "manifest.json").write_text(json.dumps(m))
    edit_config(work / "config.txt", alpha="0.3")
    code, _, err = run(capsys, "--config", work / "config.txt", "forecast")
    assert code == cli.EXIT_ERROR and "rerun" in err


def test_thirty_row_test_table(pipeline, tmp_path, capsys):
    d, _ = pipeline
    work = tmp_path / "w"
    shutil.copytree(d, work)
    test = ingest.read_table(work / "features_test.csv", "test")
    ingest.write_table(test.subset(np.arange(30)), work / "features_test.csv")
    code, out, _ = run(capsys, "--config", work / "config.txt", "forecast")
    assert code == 0 and out.startswith("30 regions")
    with open(work / "regions.csv") as fh:
        assert len(fh.read().splitlines()) == 31


def test_missing_prior_year_tail(sim_dir, tmp_path, capsys):
    cfg = tmp_path / "config.txt"
    files = ", ".join(str(sim_dir / f"station_{y}.csv") for y in (2022, 2023, 2024))
    cfg.write_text(f"schema_version = 1\nstation_files = {files}\nout_dir = out\n")
    code, _, err = run(capsys, "--config", cfg, "ingest")
    assert code == cli.EXIT_ERROR
    for day in range(1, 15):
        assert f"2022-01-{day:02d}" in err
    assert "2022-01-15" not in err


def test_alpha_out_of_range(sim_dir, tmp_path, capsys):
    cfg = tmp_path / "config.txt"
    shutil.copy(sim_dir / "config.txt", cfg)
    for bad in ("0.5", "0", "0.75"):
        edit_config(cfg, alpha=bad)
        code, _, err = run(capsys, "--config", cfg, "calibrate")
        assert code == cli.EXIT_ERROR and "alpha" in err


def test_later_stage_without_inputs(tmp_path, capsys):
    code, _, err = run(capsys, "--out-dir", tmp_path, "train")
    assert code == cli.EXIT_ERROR and "meltcast ingest" in err
    code, _, err = run(capsys, "forecast", "--out-dir", tmp_path)
    assert code == cli.EXIT_ERROR and "not found" in err


def write_tables(out, tables):
    out.mkdir(parents=True, exist_ok=True)
    for t in tables:
        ingest.write_table(t, out / cli.TABLE_FILES[t.role])


def small_config(path, **extra):
    body = "schema_version = 1\nout_dir = .\n" + "".join(f"{k} = {v}\n" for k, v in
                                                         {**SMALL, **extra}.items())
    path.write_text(body)
    return path


def test_all_warm_fixture_records_pooled_fallback(tmp_path, capsys):
    rng = np.random.default_rng(0)
    tables = [synthetic.make_table(rng, 120, role, np.datetime64(f"{y}-01-01"))
              for role, y in (("train", 2023), ("calibration", 2022), ("test", 2024))]
    tables[0] = ingest.FeatureTable(tables[0].dates, tables[0].X, np.full(120, 5.0), "train",
                                    tables[0].feature_names)
    tables[1] = ingest.FeatureTable(tables[1].dates, tables[1].X,
                                    5.0 + rng.normal(size=120), "calibration",
                                    tables[1].feature_names)
    write_tables(tmp_path, tables)
    cfg = small_config(tmp_path / "config.txt")
    assert run(capsys, "--config", cfg, "train")[0] in (0, 2)
    code, _, err = run(capsys, "--config", cfg, "calibrate")
    assert code == cli.EXIT_WARN and "pooled" in err
    assert manifest(tmp_path)["stages"]["calibrate"]["whiteness"]["pooled_fallback"] is True


def ar1_tables(seed, phi=0.5):
    rng = np.random.default_rng(seed)
    out = []
    for role, year in (("train", 2023), ("calibration", 2022), ("test", 2024)):
        base = synthetic.make_table(rng, 365, role, np.datetime64(f"{year}-01-01"))
        e = np.empty(365)
        e[0] = rng.normal()
        for i in range(1, 365):
            e[i] = phi * e[i - 1] + rng.normal()
        out.append(ingest.FeatureTable(base.dates, base.X, e - 0.3, role,
                                       base.feature_names))
    return out


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_ar1_fixture_records_whiteness_pass(tmp_path, capsys, seed):
    write_tables(tmp_path, ar1_tables(seed))
    cfg = small_config(tmp_path / "config.txt")
    assert run(capsys, "--config", cfg, "train")[0] in (0, 2)
    code, out, _ = run(capsys, "--config", cfg, "calibrate")
    report = json.loads((tmp_path / "whiteness.json").read_text())
    assert code == cli.EXIT_OK and report["ljung_box"]["passed"] is True
    assert 0.35 < report["ar1"]["phi"] < 0.65
    assert manifest(tmp_path)["stages"]["calibrate"]["whiteness"]["ljung_box"]["passed"]


def test_config_round_trip(tmp_path):
    cfg = parse_config("schema_version = 1\nalpha = 0.1\nqrf.bootstrap = false\n"
                       "station_files = a.csv, /abs/b.csv\n", base_dir=tmp_path)
    assert cfg.alpha == 0.1 and cfg.qrf.bootstrap is False
    assert cfg.station_files == (str((tmp_path / "a.csv").resolve()), "/abs/b.csv")
    assert parse_config(render_config(cfg)) == cfg
    defaults = parse_config("schema_version = 1")
    assert defaults.tau == 0.60 and defaults.alpha == 0.20 and defaults.lag_days == 14
    assert defaults.boost.shrinkage == 0.0001 and defaults.qrf.n_trees == 500
    assert [r for r, _ in defaults.roles] == ["calibration", "train", "test"]


@pytest.mark.parametrize("text", ["alpha = 0.2", "schema_version = 2",
                                  "schema_version = 1\nbogus = 3",
                                  "schema_version = 1\nalpha = x",
                                  "schema_version = 1\ntest_year = 2023"])
def test_config_errors(text):
    with pytest.raises(ConfigurationError):
        parse_config(text)


def test_manifest_config_loads(pipeline):
    d, _ = pipeline
    assert load_config(d / "manifest.json") == load_config(d / "config.txt")
    assert isinstance(PipelineConfig().with_overrides(seed=3), PipelineConfig)
