"""Diagnostics: relative influence, partial dependence, binned exceedance, loess."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import boost
from .errors import ConfigurationError, InsufficientDataError


@dataclass
class ImportanceTable:
    names: tuple
    percent: np.ndarray

    def ranked(self):
        order = np.argsort(-self.percent, kind="mergesort")
        return [(self.names[i], float(self.percent[i])) for i in order]


def variable_importance(booster: boost.TrainedBooster) -> ImportanceTable:
    """Share of split gain per predictor over the first ``best_iter`` trees, in percent."""
    end = booster.tree_ptr[booster.best_iter]
    feat = booster.feature[:end]
    gain = booster.gain[:end]
    split = feat >= 0
    p = len(booster.feature_names)
    totals = np.bincount(feat[split], weights=gain[split], minlength=p)
    s = totals.sum()
    percent = 100.0 * totals / s if s > 0 else np.full(p, 100.0 / p)
    return ImportanceTable(tuple(booster.feature_names), percent)


@dataclass
class PartialDependenceCurve:
    predictor: str
    grid: np.ndarray
    values: np.ndarray


def partial_dependence(booster: boost.TrainedBooster, predictor: str,
                       grid_size: int = 50) -> PartialDependenceCurve:
    """Model output along ``predictor``'s training range, others held at training means."""
    names = list(booster.feature_names)
    if predictor not in names:
        raise ConfigurationError(f"unknown predictor {predictor!r}; have {names}")
    j = names.index(predictor)
    lo, hi = booster.feature_mins[j], booster.feature_maxs[j]
    grid = np.linspace(lo, hi, grid_size) if hi > lo else np.array([lo])
    rows = np.tile(booster.feature_means, (grid.size, 1))
    rows[:, j] = grid
    return PartialDependenceCurve(predictor, grid, boost.predict(booster, rows))


@dataclass
class BinSummary:
    index: int
    lower_edge: float
    upper_edge: float
    mean_forecast: float | None
    count: int
    pct_exceeding: float | None

    @property
    def filled(self):
        return self.mean_forecast is not None and self.mean_forecast > 0


def bin_edges(forecasts, n_bins):
    lo, hi = float(np.min(forecasts)), float(np.max(forecasts))
    width = (hi - lo) / n_bins
    return lo + width * np.arange(n_bins + 1), width


def bin_exceedance(forecasts, truths, n_bins: int = 20, threshold: float = 0.0):
    """Equal-width bins over the forecast range; per bin the share of truths above
    ``threshold``. Returns (bins, degenerate) where ``degenerate`` flags identical
    forecasts (then a single bin holds everything)."""
    f = np.asarray(forecasts, dtype=np.float64)
    t = np.asarray(truths, dtype=np.float64)
    if f.size != t.size:
        raise ConfigurationError("forecasts and truths differ in length")
    if n_bins < 2:
        raise ConfigurationError("need at least two bins")
    if f.size == 0:
        return [], False
    if np.ptp(f) == 0:
        pct = 100.0 * float(np.mean(t > threshold))
        return [BinSummary(1, float(f[0]), float(f[0]), float(f[0]), f.size, pct)], True
    edges, width = bin_edges(f, n_bins)
    idx = np.clip(np.floor((f - edges[0]) / width).astype(int), 0, n_bins - 1)
    bins = []
    for b in range(n_bins):
        m = idx == b
        n = int(m.sum())
        bins.append(BinSummary(
            b + 1, float(edges[b]), float(edges[b + 1]),
            float(f[m].mean()) if n else None, n,
            100.0 * float(np.mean(t[m] > threshold)) if n else None))
    return bins, False


def loess_smooth(x, y, span: float = 0.75):
    """Local linear fit with tricube weights over the ceil(span * n) nearest points,
    evaluated at every x. No robustness iterations."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n = x.size
    if n < 5:
        raise InsufficientDataError("loess needs at least 5 points")
    if not 0.0 < span <= 1.0:
        raise ConfigurationError("span must lie in (0, 1]")
    k = max(3, int(math.ceil(span * n)))
    out = np.empty(n)
    for i, x0 in enumerate(x):
        d = np.abs(x - x0)
        h = np.partition(d, k - 1)[k - 1]
        if h <= 0:
            out[i] = y[d == 0].mean()
            continue
        # widen slightly so the k-th neighbour keeps a positive weight
        u = d / (h * (1.0 + 1e-10))
        w = np.where(u < 1.0, (1.0 - u ** 3) ** 3, 0.0)
        sw = w.sum()
        xm = (w @ x) / sw
        ym = (w @ y) / sw
        sxx = w @ (x - xm) ** 2
        if sxx <= 1e-300:
            out[i] = ym
        else:
            out[i] = ym + (w @ ((x - xm) * (y - ym))) / sxx * (x0 - xm)
    return out
