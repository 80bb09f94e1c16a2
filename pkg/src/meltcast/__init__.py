"""Two-week-lead temperature forecasting with quantile boosting and
regime-split adaptive conformal regions."""

__version__ = "0.1.0"
