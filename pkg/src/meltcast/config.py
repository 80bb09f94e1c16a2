"""Pipeline configuration: a flat ``key = value`` text file.

Example (every value shown is the default)::

    schema_version = 1
    station_files = station_2021.csv, station_2022.csv, station_2023.csv, station_2024.csv
    train_year = 2023
    calibration_year = 2022
    test_year = 2024
    tau = 0.60
    alpha = 0.20
    lag_days = 14
    target_hour = 14
    tolerance_hours = 1
    seed = 0
    out_dir = out
    boost.shrinkage = 0.0001
    boost.interaction_depth = 6
    boost.min_obs_in_node = 6
    boost.max_iterations = 40000
    boost.eval_stride = 100
    qrf.n_trees = 500
    qrf.min_node_size = 5
    qrf.features_per_split = auto
    qrf.bootstrap = true
    qrf.leaf_membership = all
    conformal.mode = qrf
    conformal.score_level = level
    whiten.ljung_box_lags = 20
    whiten.max_gap_days = 3

``#`` starts a comment. Relative paths resolve against the config file's
directory. A run manifest (JSON) is also accepted; its config snapshot is used.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from .boost import BoostParams
from .errors import ConfigurationError
from .qrf import QRFParams

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class PipelineConfig:
    station_files: tuple = ()
    train_year: int = 2023
    calibration_year: int = 2022
    test_year: int = 2024
    tau: float = 0.60
    alpha: float = 0.20
    lag_days: int = 14
    target_hour: int = 14
    tolerance_hours: int = 1
    seed: int = 0
    out_dir: str = "out"
    boost: BoostParams = field(default_factory=BoostParams)
    qrf: QRFParams = field(default_factory=QRFParams)
    conformal_mode: str = "qrf"
    score_level: str = "level"
    ljung_box_lags: int = 20
    max_gap_days: int = 3

    def __post_init__(self):
        years = (self.train_year, self.calibration_year, self.test_year)
        if len(set(years)) != 3:
            raise ConfigurationError(f"train/calibration/test years must differ: {years}")
        if not 0.0 < self.tau < 1.0:
            raise ConfigurationError("tau must lie in (0, 1)")
        if not 0.0 < self.alpha < 0.5:
            raise ConfigurationError(f"alpha must lie in (0, 0.5), got {self.alpha}")
        if self.lag_days < 1:
            raise ConfigurationError("lag_days must be positive")

    @property
    def roles(self):
        """(role, year) pairs in chronological order."""
        pairs = [("train", self.train_year), ("calibration", self.calibration_year),
                 ("test", self.test_year)]
        return sorted(pairs, key=lambda rp: rp[1])

    def with_overrides(self, seed=None, out_dir=None):
        cfg = self
        if seed is not None:
            cfg = replace(cfg, seed=seed)
        if out_dir is not None:
            cfg = replace(cfg, out_dir=str(out_dir))
        return cfg

    def boost_params(self):
        return replace(self.boost, seed=self.seed)

    def qrf_params(self):
        return replace(self.qrf, seed=self.seed)

    def snapshot(self):
        d = asdict(self)
        d["station_files"] = list(self.station_files)
        d["schema_version"] = SCHEMA_VERSION
        return d


_TOP = {"train_year": int, "calibration_year": int, "test_year": int, "tau": float,
        "alpha": float, "lag_days": int, "target_hour": int, "tolerance_hours": int,
        "seed": int, "out_dir": str, "conformal.mode": str, "conformal.score_level": str,
        "whiten.ljung_box_lags": int, "whiten.max_gap_days": int}
_RENAMED = {"conformal.mode": "conformal_mode", "conformal.score_level": "score_level",
            "whiten.ljung_box_lags": "ljung_box_lags", "whiten.max_gap_days": "max_gap_days"}


def _coerce(kind, text, key):
    try:
        if kind is bool:
            low = text.lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(text)
            return low in ("true", "1", "yes")
        if kind is int:
            return int(text)
        if kind is float:
            return float(text)
        return text
    except ValueError as exc:
        raise ConfigurationError(f"bad value for {key}: {text!r}") from exc


def _param_types(cls):
    out = {}
    for f in fields(cls):
        t = str(f.type)
        out[f.name] = bool if "bool" in t else int if "int" in t else float if "float" in t else str
    return out


def parse_config(text: str, base_dir=".") -> PipelineConfig:
    values: dict = {}
    boost_kw: dict = {}
    qrf_kw: dict = {}
    version = None
    boost_types, qrf_types = _param_types(BoostParams), _param_types(QRFParams)
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"config line {lineno}: expected key = value")
        key, val = (s.strip() for s in line.split("=", 1))
        if key == "schema_version":
            version = _coerce(int, val, key)
        elif key == "station_files":
            values["station_files"] = tuple(
                str((Path(base_dir) / p.strip()).resolve()) if not Path(p.strip()).is_absolute()
                else p.strip() for p in val.split(",") if p.strip())
        elif key in _TOP:
            values[_RENAMED.get(key, key)] = _coerce(_TOP[key], val, key)
        elif key.startswith("boost.") and key[6:] in boost_types:
            boost_kw[key[6:]] = _coerce(boost_types[key[6:]], val, key)
        elif key.startswith("qrf.") and key[4:] in qrf_types:
            name = key[4:]
            if name == "features_per_split" and val.lower() == "auto":
                qrf_kw[name] = None
            else:
                qrf_kw[name] = _coerce(int if name == "features_per_split" else qrf_types[name],
                                       val, key)
        else:
            raise ConfigurationError(f"config line {lineno}: unknown key {key!r}")
    if version is None:
        raise ConfigurationError("config is missing schema_version")
    if version != SCHEMA_VERSION:
        raise ConfigurationError(f"unsupported config schema_version {version}")
    out_dir = values.get("out_dir", PipelineConfig.out_dir)
    if not Path(out_dir).is_absolute():
        values["out_dir"] = str((Path(base_dir) / out_dir).resolve())
    return PipelineConfig(boost=BoostParams(**boost_kw), qrf=QRFParams(**qrf_kw), **values)


def from_snapshot(d: dict) -> PipelineConfig:
    d = dict(d)
    if d.pop("schema_version", None) != SCHEMA_VERSION:
        raise ConfigurationError("manifest config has an unsupported schema_version")
    d["station_files"] = tuple(d["station_files"])
    d["boost"] = BoostParams(**d["boost"])
    d["qrf"] = QRFParams(**d["qrf"])
    return PipelineConfig(**d)


def load_config(path) -> PipelineConfig:
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    if path.suffix == ".json":
        return from_snapshot(json.loads(text)["config"])
    return parse_config(text, base_dir=path.parent)


def render_config(cfg: PipelineConfig) -> str:
    """Inverse of :func:`parse_config` (paths written as given)."""
    lines = [f"schema_version = {SCHEMA_VERSION}",
             f"station_files = {', '.join(cfg.station_files)}"]
    for key in _TOP:
        val = getattr(cfg, _RENAMED.get(key, key))
        lines.append(f"{key} = {val}")
    for name, val in asdict(cfg.boost).items():
        if name not in ("seed", "keep_all_trees"):
            lines.append(f"boost.{name} = {val}")
    for name, val in asdict(cfg.qrf).items():
        if name == "seed":
            continue
        if val is None:
            val = "auto"
        lines.append(f"qrf.{name} = {str(val).lower() if isinstance(val, bool) else val}")
    return "\n".join(lines) + "\n"
