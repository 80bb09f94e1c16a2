"""Synthetic station data and feature tables for tests and experiments."""
from __future__ import annotations

import csv
from datetime import date, timedelta

import numpy as np
from scipy.stats import norm

from .ingest import FEATURE_NAMES, REQUIRED_COLUMNS, FeatureTable


def seasonal_mean(day_of_year):
    """Arctic-like annual cycle of 2 p.m. temperature, degC."""
    return -6.0 + 10.0 * np.sin(2 * np.pi * (np.asarray(day_of_year) - 110) / 365.0)


def station_rows(years, seed=0, hours=range(24), missing_rate=0.01):
    """Hourly station rows for consecutive ``years`` as CSV-ready dicts.

    Daily temperature anomalies follow an AR(1) with phi = 0.93 so the
    14-day lagged temperature still carries signal. Pressure and visibility
    are mostly missing.
    """
    rng = np.random.default_rng(seed)
    start = date(min(years), 1, 1)
    end = date(max(years), 12, 31)
    n_days = (end - start).days + 1
    anomaly = np.empty(n_days)
    anomaly[0] = rng.normal(0, 3)
    for i in range(1, n_days):
        anomaly[i] = 0.93 * anomaly[i - 1] + rng.normal(0, 3 * np.sqrt(1 - 0.93 ** 2))
    wind_base = rng.uniform(0, 360)
    rows = []
    for i in range(n_days):
        day = start + timedelta(days=i)
        doy = day.timetuple().tm_yday
        daily = float(seasonal_mean(doy) + anomaly[i])
        wind_base = (wind_base + rng.normal(0, 40)) % 360
        for hour in hours:
            temp = daily - 1.5 * np.cos(2 * np.pi * (hour - 14) / 24) + 1.5 + rng.normal(0, 0.3)
            dew = temp - rng.gamma(2.0, 1.2)
            rh = float(np.clip(100 * np.exp(17.6 * dew / (243 + dew) - 17.6 * temp / (243 + temp)), 0, 100))
            row = {
                "date": day.isoformat(), "hour": hour,
                "air_temp": f"{temp:.1f}",
                "wind_dir": f"{(wind_base + rng.normal(0, 10)) % 360:.0f}",
                "wind_speed": f"{rng.gamma(2.5, 2.0):.1f}",
                "dew_point": f"{min(dew, temp):.1f}",
                "rel_humidity": f"{rh:.0f}",
                "pressure": f"{1010 + rng.normal(0, 8):.1f}" if rng.random() < 0.3 else "M",
                "visibility": f"{rng.uniform(1000, 50000):.0f}" if rng.random() < 0.2 else "",
            }
            for key in ("air_temp", "wind_dir", "wind_speed", "dew_point", "rel_humidity"):
                if rng.random() < missing_rate:
                    row[key] = "M"
            rows.append(row)
    return rows


def write_station_csv(rows, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=REQUIRED_COLUMNS, lineterminator="\n")
        w.writeheader()
        w.writerows(rows)


def _signal(X):
    day, lag_temp = X[:, 0], X[:, 1]
    return 0.5 * seasonal_mean(day) + 0.5 * lag_temp + 0.3 * X[:, 4] - 0.2 * X[:, 5]


def _noise_scale(X):
    # cool days are noisier, as on the real station
    return np.where(_signal(X) > 0, 1.5, 3.0)


def _draw_X(rng, n, start_doy=1):
    day = (np.arange(n) + start_doy - 1) % 365 + 1.0
    lag_temp = seasonal_mean(day - 14) + rng.normal(0, 3, n)
    theta = rng.uniform(0, 2 * np.pi, n)
    return np.column_stack([day, lag_temp, np.cos(theta), np.sin(theta),
                            rng.gamma(2.5, 2.0, n), lag_temp - rng.gamma(2.0, 1.2, n),
                            rng.uniform(50, 100, n)])


def conditional_quantile(X, tau):
    """True conditional tau-quantile of the synthetic response given X."""
    return _signal(X) + _noise_scale(X) * norm.ppf(tau)


def make_table(rng, n, role, start=np.datetime64("2022-01-01"), phi=0.0):
    """FeatureTable with Gaussian noise; ``phi`` > 0 makes the noise AR(1)."""
    X = _draw_X(rng, n)
    e = rng.normal(size=n)
    if phi:
        for i in range(1, n):
            e[i] = phi * e[i - 1] + np.sqrt(1 - phi ** 2) * e[i]
    y = _signal(X) + _noise_scale(X) * e
    dates = start + np.arange(n)
    return FeatureTable(dates, X, y, role, FEATURE_NAMES)


def make_tables(seed, n_train=365, n_calib=365, n_test=2000, phi=0.0):
    """Train, calibration and test tables drawn from one generator."""
    rng = np.random.default_rng(seed)
    return (make_table(rng, n_train, "train", np.datetime64("2023-01-01"), phi),
            make_table(rng, n_calib, "calibration", np.datetime64("2022-01-01"), phi),
            make_table(rng, n_test, "test", np.datetime64("2024-01-01"), phi))
