"""Regime-split adaptive conformal regions.

Calibration: residuals of the calibration year are whitened by one AR(1)
fit over the whole sequence; the resulting scores are split by the sign of
the fitted value (Warm > 0, Cool <= 0) and a quantile regression forest per
regime learns the score distribution from (fitted value, lagged predictors).
A forecast's region is [forecast + q(alpha/2), forecast + q(1 - alpha/2)].
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import boost, qrf
from .boost import _read_npz, _write_npz
from .errors import ConfigurationError
from .quantiles import ceil_rank
from .whiten import AR1Model, WhitenessReport, fit_ar1, ljung_box

log = logging.getLogger(__name__)

WARM, COOL, POOLED = "warm", "cool", "pooled"
MIN_REGIME_SCORES = 15
SCORE_LEVELS = ("level", "innovation")
MODES = ("qrf", "marginal")


def regime_of(forecast):
    """'warm' when the model output is above 0 degC, else 'cool'."""
    f = np.asarray(forecast, dtype=np.float64)
    out = np.where(f > 0.0, WARM, COOL)
    return str(out) if out.ndim == 0 else out


@dataclass
class RegimeModel:
    forest: qrf.QRFModel
    n_scores: int
    # rank-corrected half-width of |score| for the marginal mode
    marginal_halfwidth: float


@dataclass
class ConformalCalibrator:
    booster_id: str
    feature_names: tuple
    ar1: AR1Model
    alpha: float
    per_regime: dict
    whiteness: WhitenessReport
    pooled_fallback: bool = False
    score_level: str = "level"
    mode: str = "qrf"
    regime_counts: dict = field(default_factory=dict)

    @property
    def levels(self):
        return self.alpha / 2.0, 1.0 - self.alpha / 2.0

    def model_for(self, regime):
        return self.per_regime[POOLED if self.pooled_fallback else regime]

    @property
    def warnings(self):
        out = []
        if not self.whiteness.passed:
            out.append(f"whiteness test failed (Ljung-Box p={self.whiteness.ljung_box_pvalue:.4g})")
        if self.pooled_fallback:
            out.append(f"degenerate regime (counts {self.regime_counts}); pooled QRF used")
        return out


def _check_alpha(alpha):
    if not 0.0 < alpha < 0.5:
        raise ConfigurationError(f"alpha must lie in (0, 0.5), got {alpha}")


def marginal_halfwidth(scores, alpha):
    """Split-conformal quantile of |scores|: the ceil((n+1)(1-alpha))-th smallest."""
    a = np.sort(np.abs(np.asarray(scores, dtype=np.float64)))
    k = ceil_rank(1.0 - alpha, a.size + 1)
    return float(a[k - 1]) if k <= a.size else float("inf")


def covariates(forecast, X):
    return np.column_stack([np.asarray(forecast, dtype=np.float64), X])


def calibrate(booster: boost.TrainedBooster, calib_table, alpha: float = 0.20,
              qrf_params: qrf.QRFParams = qrf.QRFParams(), *, score_level: str = "level",
              mode: str = "qrf", ljung_box_lags: int = 20,
              max_gap_days: int = 3) -> ConformalCalibrator:
    """Build the per-regime score models from the calibration year.

    ``score_level="level"`` shifts the innovations (which average 0) by the
    mean calibration residual so the scores sit at the residual level;
    ``"innovation"`` uses the bare innovations r_t - c - phi * r_prev.
    """
    _check_alpha(alpha)
    if score_level not in SCORE_LEVELS:
        raise ConfigurationError(f"score_level must be one of {SCORE_LEVELS}")
    if mode not in MODES:
        raise ConfigurationError(f"mode must be one of {MODES}")
    if tuple(calib_table.feature_names) != tuple(booster.feature_names):
        raise ConfigurationError("calibration table schema differs from the booster's")
    fitted = boost.predict(booster, calib_table.X)
    resid = calib_table.y - fitted
    ar1 = fit_ar1(resid, calib_table.dates, max_gap_days=max_gap_days)
    scores = ar1.innovations + (float(resid.mean()) if score_level == "level" else 0.0)
    pos = ar1.innovation_index
    lags = min(ljung_box_lags, (scores.size - 1) // 2)
    whiteness = ljung_box(ar1.innovations, lags=lags, fitted_params=1)
    if not whiteness.passed:
        log.warning("AR(1) innovations fail the Ljung-Box test (p=%.4g); "
                    "scores may not be exchangeable", whiteness.ljung_box_pvalue)

    cov = covariates(fitted[pos], calib_table.X[pos])
    names = ("forecast",) + tuple(booster.feature_names)
    regimes = regime_of(fitted[pos])
    counts = {WARM: int(np.sum(regimes == WARM)), COOL: int(np.sum(regimes == COOL))}
    pooled = min(counts.values()) < MIN_REGIME_SCORES
    per_regime = {}
    if pooled:
        log.warning("regime counts %s below %d; falling back to a pooled QRF",
                    counts, MIN_REGIME_SCORES)
        per_regime[POOLED] = RegimeModel(qrf.fit_qrf(cov, scores, qrf_params, names),
                                         int(scores.size), marginal_halfwidth(scores, alpha))
    else:
        for reg in (WARM, COOL):
            m = regimes == reg
            per_regime[reg] = RegimeModel(qrf.fit_qrf(cov[m], scores[m], qrf_params, names),
                                          int(m.sum()), marginal_halfwidth(scores[m], alpha))
    return ConformalCalibrator(booster.identity(), tuple(booster.feature_names), ar1,
                               float(alpha), per_regime, whiteness, pooled, score_level,
                               mode, counts)


@dataclass(frozen=True)
class PredictionRegion:
    date: np.datetime64 | None
    forecast: float
    regime: str
    lower: float
    upper: float
    q_lo: float
    q_hi: float
    swapped: bool = False

    @property
    def half_width(self):
        return 0.5 * (self.upper - self.lower)


def forecast_with_region(calibrator: ConformalCalibrator, booster: boost.TrainedBooster,
                         table, mode: str | None = None) -> list[PredictionRegion]:
    """Forecast and region for every row of ``table`` (a FeatureTable or a matrix)."""
    mode = mode or calibrator.mode
    if mode not in MODES:
        raise ConfigurationError(f"mode must be one of {MODES}")
    if calibrator.booster_id != booster.identity():
        raise ConfigurationError("calibrator was built for a different booster")
    X = getattr(table, "X", table)
    dates = getattr(table, "dates", [None] * len(X))
    names = getattr(table, "feature_names", booster.feature_names)
    if tuple(names) != tuple(calibrator.feature_names):
        raise ConfigurationError("forecast rows do not match the calibrated schema")
    yhat = boost.predict(booster, X)
    regimes = regime_of(yhat)
    q = np.empty((len(yhat), 2))
    for reg in (WARM, COOL):
        m = regimes == reg
        if not np.any(m):
            continue
        model = calibrator.model_for(reg)
        if mode == "qrf":
            q[m] = qrf.predict_quantile(model.forest, covariates(yhat[m], X[m]),
                                        list(calibrator.levels))
        else:
            q[m, 0] = -model.marginal_halfwidth
            q[m, 1] = model.marginal_halfwidth
    out = []
    for d, f, reg, (lo, hi) in zip(dates, yhat, regimes, q):
        swapped = bool(lo > hi)
        if swapped:
            log.warning("score quantiles crossed at %s; swapped", d)
            lo, hi = hi, lo
        out.append(PredictionRegion(d, float(f), str(reg), float(f + lo), float(f + hi),
                                    float(lo), float(hi), swapped))
    return out


def empirical_coverage(regions, truths) -> dict:
    """Coverage and half-width summaries, overall and per regime."""
    truths = np.asarray(truths, dtype=np.float64)
    if len(regions) != truths.size:
        raise ConfigurationError("regions and truths differ in length")
    lower = np.array([r.lower for r in regions])
    upper = np.array([r.upper for r in regions])
    regimes = np.array([r.regime for r in regions])
    covered = (lower <= truths) & (truths <= upper)
    half = (upper - lower) / 2.0

    def summary(mask):
        n = int(mask.sum())
        if n == 0:
            return {"n": 0, "coverage": None, "mean_half_width": None,
                    "min_half_width": None, "max_half_width": None}
        return {"n": n, "coverage": float(covered[mask].mean()),
                "mean_half_width": float(half[mask].mean()),
                "min_half_width": float(half[mask].min()),
                "max_half_width": float(half[mask].max())}

    everything = np.ones(truths.size, dtype=bool)
    return {"overall": summary(everything), WARM: summary(regimes == WARM),
            COOL: summary(regimes == COOL)}


def melting_confidence(region: PredictionRegion, alpha: float):
    """Probability bound that the future temperature is above 0 degC, or None.

    When the whole region lies above 0 only the lower tail (mass alpha/2)
    can fall below freezing.
    """
    if region.lower > 0.0:
        return 1.0 - alpha / 2.0
    return None


def melting_statement(region, alpha):
    p = melting_confidence(region, alpha)
    if p is None:
        return None
    return f"future temperature > 0 degC with probability >= {p:.2f}"


KIND = "meltcast.ConformalCalibrator"


def save_calibrator(cal: ConformalCalibrator, path) -> None:
    meta = {"kind": KIND, "format_version": boost.FORMAT_VERSION,
            "booster_id": cal.booster_id, "feature_names": list(cal.feature_names),
            "alpha": cal.alpha, "pooled_fallback": cal.pooled_fallback,
            "score_level": cal.score_level, "mode": cal.mode,
            "regime_counts": cal.regime_counts,
            "ar1": {"intercept_c": cal.ar1.intercept_c, "phi": cal.ar1.phi,
                    "n_used": cal.ar1.n_used},
            "whiteness": cal.whiteness.to_dict(), "regimes": {}}
    arrays = {"ar1_innovations": cal.ar1.innovations,
              "ar1_innovation_index": cal.ar1.innovation_index}
    for name, rm in cal.per_regime.items():
        qmeta, qarrays = qrf.to_arrays(rm.forest, f"{name}__")
        meta["regimes"][name] = {"qrf": qmeta, "n_scores": rm.n_scores,
                                 "marginal_halfwidth": rm.marginal_halfwidth}
        arrays.update(qarrays)
    _write_npz(path, meta, arrays)


def load_calibrator(path) -> ConformalCalibrator:
    meta, arrays = _read_npz(path, KIND)
    a = meta["ar1"]
    ar1 = AR1Model(a["intercept_c"], a["phi"], arrays["ar1_innovations"],
                   arrays["ar1_innovation_index"], a["n_used"])
    per_regime = {
        name: RegimeModel(qrf.from_arrays(r["qrf"], arrays, f"{name}__"), r["n_scores"],
                          r["marginal_halfwidth"])
        for name, r in meta["regimes"].items()}
    return ConformalCalibrator(meta["booster_id"], tuple(meta["feature_names"]), ar1,
                               meta["alpha"], per_regime,
                               WhitenessReport.from_dict(meta["whiteness"]),
                               meta["pooled_fallback"], meta["score_level"], meta["mode"],
                               meta["regime_counts"])

