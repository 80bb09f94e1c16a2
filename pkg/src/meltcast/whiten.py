"""AR(1) whitening of calibration residuals and the Ljung-Box whiteness check."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import gammaincc

from .errors import InsufficientDataError


class DegenerateRegressorError(ValueError):
    pass


class UndefinedCorrelationError(ValueError):
    pass


@dataclass
class AR1Model:
    """r_t = intercept_c + phi * r_prev + innovation.

    ``innovation_index`` gives, for each innovation, the position in the
    residual sequence it belongs to.
    """

    intercept_c: float
    phi: float
    innovations: np.ndarray
    innovation_index: np.ndarray
    n_used: int

    @property
    def stationary(self):
        return abs(self.phi) < 1.0


def fit_ar1(residuals, dates=None, max_gap_days: int = 3) -> AR1Model:
    """Conditional least squares of r_t on (1, r_{t-1}).

    With ``dates``, the predecessor of a point is the previous available
    residual; if the two are more than ``max_gap_days`` apart the chain
    breaks and the later point gets no innovation.
    """
    r = np.asarray(residuals, dtype=np.float64)
    if r.size < 10:
        raise InsufficientDataError(f"AR(1) needs at least 10 residuals, got {r.size}")
    idx = np.arange(1, r.size)
    if dates is not None:
        gaps = np.diff(np.asarray(dates, dtype="datetime64[D]")).astype(np.int64)
        idx = idx[gaps <= max_gap_days]
    if idx.size < 3:
        raise InsufficientDataError("too few consecutive residual pairs for AR(1)")
    prev, cur = r[idx - 1], r[idx]
    prev_c = prev - prev.mean()
    sxx = float(prev_c @ prev_c)
    if sxx <= 1e-12 * max(1.0, float(prev @ prev)):
        raise DegenerateRegressorError("lagged residuals have zero variance")
    phi = float(prev_c @ (cur - cur.mean())) / sxx
    c = float(cur.mean() - phi * prev.mean())
    innovations = cur - c - phi * prev
    return AR1Model(c, phi, innovations, idx, int(idx.size))


def acf(series, max_lag: int) -> np.ndarray:
    """Sample autocorrelations at lags 1..max_lag (denominator n)."""
    x = np.asarray(series, dtype=np.float64)
    n = x.size
    if not 0 < max_lag < n:
        raise ValueError(f"max_lag must lie in 1..{n - 1}")
    xc = x - x.mean()
    denom = float(xc @ xc)
    if denom <= 1e-300 or np.ptp(x) == 0:
        raise UndefinedCorrelationError("autocorrelation of a constant series")
    return np.array([float(xc[:-k] @ xc[k:]) / denom for k in range(1, max_lag + 1)])


@dataclass
class WhitenessReport:
    acf_values: np.ndarray
    ljung_box_stat: float
    ljung_box_df: int
    ljung_box_pvalue: float
    passed: bool
    level: float = 0.05

    def to_dict(self):
        return {"acf_values": [float(v) for v in self.acf_values],
                "ljung_box_stat": self.ljung_box_stat,
                "ljung_box_df": self.ljung_box_df,
                "ljung_box_pvalue": self.ljung_box_pvalue,
                "passed": self.passed, "level": self.level}

    @classmethod
    def from_dict(cls, d):
        return cls(np.array(d["acf_values"]), d["ljung_box_stat"], d["ljung_box_df"],
                   d["ljung_box_pvalue"], d["passed"], d.get("level", 0.05))


def ljung_box(series, lags: int = 20, fitted_params: int = 0,
              level: float = 0.05) -> WhitenessReport:
    """Q = n(n+2) sum acf(k)^2/(n-k), referred to chi-squared(lags - fitted_params).

    Pass ``fitted_params=1`` for AR(1) innovations.
    """
    x = np.asarray(series, dtype=np.float64)
    n = x.size
    if not lags < n / 2:
        raise ValueError(f"lags={lags} must be below half the series length {n}")
    rho = acf(x, lags)
    k = np.arange(1, lags + 1)
    q = float(n * (n + 2) * np.sum(rho ** 2 / (n - k)))
    df = lags - fitted_params
    if df < 1:
        raise ValueError("Ljung-Box degrees of freedom must be positive")
    # chi-squared survival function via the regularized upper incomplete gamma
    pvalue = float(min(1.0, max(0.0, gammaincc(df / 2.0, q / 2.0))))
    return WhitenessReport(rho, q, df, pvalue, pvalue >= level, level)
