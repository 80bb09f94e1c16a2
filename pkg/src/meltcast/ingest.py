"""Station CSV parsing, 2 p.m. snapshot selection and lagged feature tables.

Station CSV (UTF-8) must carry the columns::

    date,hour,air_temp,wind_dir,wind_speed,dew_point,rel_humidity,pressure,visibility

``date`` is ISO-8601, ``hour`` an integer 0-23 in local solar time. An empty
cell or ``M`` marks a missing value. Extra columns are ignored.
"""
from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass, field, replace
from datetime import date, timedelta
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

log = logging.getLogger(__name__)

REQUIRED_COLUMNS = ("date", "hour", "air_temp", "wind_dir", "wind_speed",
                    "dew_point", "rel_humidity", "pressure", "visibility")
MISSING_SENTINELS = ("", "M")

# column order of the FeatureTable CSV export (and of the model inputs,
# minus the first and last entries)
TABLE_COLUMNS = ("date", "day_counter", "lag_temp", "lag_wind_cos",
                 "lag_wind_sin", "lag_wind_speed", "lag_dew_point",
                 "lag_rel_humidity", "response")
FEATURE_NAMES = TABLE_COLUMNS[1:-1]

DEW_POINT_SLACK = 0.5


class FormatError(ValueError):
    pass


class EmptyInputError(ValueError):
    pass


class BoundaryDataError(ValueError):
    def __init__(self, message, dates):
        super().__init__(message)
        self.dates = list(dates)


@dataclass(frozen=True)
class WeatherRecord:
    day: date
    hour: int
    air_temp: float | None
    wind_dir: float | None
    wind_speed: float | None
    dew_point: float | None
    rel_humidity: float | None
    pressure: float | None = None
    visibility: float | None = None


@dataclass(frozen=True)
class DailyObservation:
    """The selected 2 p.m. snapshot for one date; ``missing`` when none qualified."""

    day: date
    response_temp: float | None
    wind_dir: float | None = None
    wind_speed: float | None = None
    dew_point: float | None = None
    rel_humidity: float | None = None
    air_temp: float | None = None
    missing: bool = False

    @property
    def day_of_year(self):
        return self.day.timetuple().tm_yday


def _number(cell):
    cell = cell.strip()
    if cell in MISSING_SENTINELS:
        return None
    # tolerate a typographic minus sign
    cell = cell.replace("−", "-")
    try:
        value = float(cell)
    except ValueError:
        return None
    return value if math.isfinite(value) else None


def _sanitize(rec: WeatherRecord) -> WeatherRecord:
    changes = {}
    if rec.wind_dir is not None:
        if rec.wind_dir == 360.0:
            changes["wind_dir"] = 0.0
        elif not 0.0 <= rec.wind_dir < 360.0:
            changes["wind_dir"] = None
    if rec.rel_humidity is not None and not 0.0 <= rec.rel_humidity <= 100.0:
        changes["rel_humidity"] = None
    if rec.wind_speed is not None and rec.wind_speed < 0:
        changes["wind_speed"] = None
    if (rec.dew_point is not None and rec.air_temp is not None
            and rec.dew_point > rec.air_temp + DEW_POINT_SLACK):
        changes["dew_point"] = None
    if changes:
        log.debug("sanitized %s %02d: %s", rec.day, rec.hour, sorted(changes))
        return replace(rec, **changes)
    return rec


def parse_records(source) -> list[WeatherRecord]:
    """Read station rows from a path, a text/byte stream or raw bytes.

    Unparseable numbers become ``None``; physically impossible values
    (wind direction outside [0, 360), humidity outside [0, 100], dew point
    above air temperature + 0.5) are also blanked. 360 degrees maps to 0.
    """
    if isinstance(source, (str, Path)):
        text = Path(source).read_text(encoding="utf-8")
    elif isinstance(source, bytes):
        text = source.decode("utf-8")
    else:
        raw = source.read()
        text = raw.decode("utf-8") if isinstance(raw, bytes) else raw
    text = text.lstrip("﻿")
    if not text.strip():
        raise EmptyInputError("station file is empty")
    reader = csv.DictReader(io.StringIO(text))
    header = [h.strip() for h in (reader.fieldnames or [])]
    reader.fieldnames = header
    for col in REQUIRED_COLUMNS:
        if col not in header:
            raise FormatError(f"station file is missing required column {col!r}")
    records = []
    for lineno, row in enumerate(reader, start=2):
        try:
            day = date.fromisoformat(row["date"].strip())
            hour = int(float(row["hour"]))
        except (ValueError, AttributeError) as exc:
            raise FormatError(f"line {lineno}: bad date/hour ({exc})") from exc
        rec = WeatherRecord(
            day=day, hour=hour,
            air_temp=_number(row["air_temp"]),
            wind_dir=_number(row["wind_dir"]),
            wind_speed=_number(row["wind_speed"]),
            dew_point=_number(row["dew_point"]),
            rel_humidity=_number(row["rel_humidity"]),
            pressure=_number(row["pressure"]),
            visibility=_number(row["visibility"]),
        )
        records.append(_sanitize(rec))
    return records


def select_daily(records: Iterable[WeatherRecord], target_hour: int = 14,
                 tolerance_hours: int = 1) -> list[DailyObservation]:
    """One observation per date: the record nearest ``target_hour``.

    Only records within ``tolerance_hours`` qualify and ties go to the
    earlier hour. Dates present in ``records`` without a qualifying record
    come back with ``missing=True``.
    """
    best: dict[date, WeatherRecord | None] = {}
    for rec in records:
        current = best.setdefault(rec.day, None)
        dist = abs(rec.hour - target_hour)
        if dist > tolerance_hours:
            continue
        if current is None:
            best[rec.day] = rec
            continue
        cur_dist = abs(current.hour - target_hour)
        if dist < cur_dist or (dist == cur_dist and rec.hour < current.hour):
            best[rec.day] = rec
    out = []
    for day in sorted(best):
        rec = best[day]
        if rec is None:
            out.append(DailyObservation(day=day, response_temp=None, missing=True))
            continue
        out.append(DailyObservation(
            day=day, response_temp=rec.air_temp, wind_dir=rec.wind_dir,
            wind_speed=rec.wind_speed, dew_point=rec.dew_point,
            rel_humidity=rec.rel_humidity, air_temp=rec.air_temp,
            missing=rec.air_temp is None))
    return out


def encode_wind(theta):
    """Direction in degrees -> (cos, sin) of the angle in radians."""
    if theta is None or (isinstance(theta, float) and math.isnan(theta)):
        return None, None
    rad = math.radians(theta)
    return math.cos(rad), math.sin(rad)


@dataclass
class FeatureTable:
    """Response plus lagged predictors for one year role, dates ascending."""

    dates: np.ndarray  # datetime64[D]
    X: np.ndarray
    y: np.ndarray
    role: str = "train"
    feature_names: tuple = FEATURE_NAMES
    excluded: int = 0
    exclusion_reasons: dict = field(default_factory=dict)

    def __post_init__(self):
        self.dates = np.asarray(self.dates, dtype="datetime64[D]")
        self.X = np.asarray(self.X, dtype=np.float64).reshape(len(self.dates), -1)
        self.y = np.asarray(self.y, dtype=np.float64)
        self.feature_names = tuple(self.feature_names)
        if self.X.shape[1] != len(self.feature_names):
            raise ValueError("feature matrix width does not match feature_names")
        if len(self.y) != len(self.dates):
            raise ValueError("response length does not match dates")
        if len(self.dates) > 1 and not np.all(np.diff(self.dates).astype(int) > 0):
            raise ValueError("feature table dates must be strictly increasing")

    def __len__(self):
        return len(self.dates)

    def subset(self, mask):
        return FeatureTable(self.dates[mask], self.X[mask], self.y[mask],
                            self.role, self.feature_names)


def _lag_row(obs: DailyObservation):
    if obs is None or obs.missing:
        return None
    cos_c, sin_c = encode_wind(obs.wind_dir)
    row = (obs.air_temp, cos_c, sin_c, obs.wind_speed, obs.dew_point,
           obs.rel_humidity)
    if any(v is None for v in row):
        return None
    return row


def build_features(daily: Sequence[DailyObservation], target_year: int,
                   lag_days: int = 14, role: str = "train") -> FeatureTable:
    """Pair each date of ``target_year`` with predictors from ``lag_days`` earlier.

    ``daily`` may hold several years in any order; the first ``lag_days``
    dates of the target year draw on the end of the previous year, which
    therefore has to be present (observed or marked missing). Rows with a
    missing response or any missing lagged predictor are dropped and tallied
    in ``excluded``. Pressure and visibility are never used.
    """
    by_day = {}
    for obs in daily:
        if obs.day in by_day:
            raise ValueError(f"duplicate daily observation for {obs.day}")
        by_day[obs.day] = obs

    first = date(target_year, 1, 1)
    last = date(target_year, 12, 31)
    boundary = [first + timedelta(days=i) for i in range(lag_days)]
    tail = [d - timedelta(days=lag_days) for d in boundary]
    if lag_days > 0 and not any(d in by_day for d in tail):
        raise BoundaryDataError(
            f"no {target_year - 1} data for the final {lag_days} days; cannot "
            f"lag {boundary[0]}..{boundary[-1]}", boundary)

    dates, rows, ys = [], [], []
    reasons = {"missing_response": 0, "missing_lagged_predictor": 0}
    day = first
    while day <= last:
        obs = by_day.get(day)
        if obs is None or obs.missing or obs.response_temp is None:
            reasons["missing_response"] += 1
        else:
            lagged = _lag_row(by_day.get(day - timedelta(days=lag_days)))
            if lagged is None:
                reasons["missing_lagged_predictor"] += 1
            else:
                dates.append(np.datetime64(day, "D"))
                rows.append((float(obs.day_of_year),) + lagged)
                ys.append(obs.response_temp)
        day += timedelta(days=1)
    excluded = sum(reasons.values())
    if excluded:
        log.info("%s %d: %d rows kept, %d excluded %s", role, target_year,
                 len(rows), excluded, reasons)
    X = np.array(rows, dtype=np.float64).reshape(len(rows), len(FEATURE_NAMES))
    return FeatureTable(np.array(dates, dtype="datetime64[D]"), X,
                        np.array(ys, dtype=np.float64), role, FEATURE_NAMES,
                        excluded, reasons)


def write_table(table: FeatureTable, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("date",) + table.feature_names + ("response",))
        for d, x, y in zip(table.dates, table.X, table.y):
            w.writerow([str(d)] + [repr(float(v)) for v in x] + [repr(float(y))])


def read_table(path, role: str = "train") -> FeatureTable:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or header[0] != "date" or header[-1] != "response":
            raise FormatError(f"{path}: not a feature table (bad header)")
        names = tuple(header[1:-1])
        dates, X, y = [], [], []
        for row in reader:
            dates.append(row[0])
            X.append([float(v) for v in row[1:-1]])
            y.append(float(row[-1]))
    return FeatureTable(np.array(dates, dtype="datetime64[D]"),
                        np.array(X, dtype=np.float64).reshape(len(dates), len(names)),
                        np.array(y), role, names)
