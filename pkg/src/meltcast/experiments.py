"""Monte Carlo experiments on synthetic data, shared by scripts/ and the acceptance suite."""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import boost, conformal, synthetic
from .qrf import QRFParams


@dataclass(frozen=True)
class CoverageSetup:
    alpha: float = 0.20
    n_train: int = 365
    n_calib: int = 365
    n_test: int = 2000
    phi: float = 0.0
    boost: boost.BoostParams = field(default_factory=lambda: boost.BoostParams(
        shrinkage=0.01, max_iterations=2000, eval_stride=100))
    qrf: QRFParams = field(default_factory=QRFParams)


def coverage_trial(seed: int, setup: CoverageSetup = CoverageSetup()) -> dict:
    """Train, calibrate and score one synthetic replicate; coverage per conformal mode."""
    tr, ca, te = synthetic.make_tables(seed, setup.n_train, setup.n_calib, setup.n_test,
                                       setup.phi)
    booster = boost.train(tr, ca, params=replace(setup.boost, seed=seed))
    cal = conformal.calibrate(booster, ca, setup.alpha, replace(setup.qrf, seed=seed))
    out = {"seed": seed, "best_iter": booster.best_iter, "phi_hat": cal.ar1.phi,
           "whiteness_passed": cal.whiteness.passed}
    for mode in conformal.MODES:
        regions = conformal.forecast_with_region(cal, booster, te, mode=mode)
        cov = conformal.empirical_coverage(regions, te.y)
        out[mode] = {"coverage": cov["overall"]["coverage"],
                     "warm": cov[conformal.WARM]["coverage"],
                     "cool": cov[conformal.COOL]["coverage"],
                     "mean_half_width": cov["overall"]["mean_half_width"]}
    return out


def summarize(trials) -> dict:
    out = {"n_trials": len(trials)}
    for mode in conformal.MODES:
        c = np.array([t[mode]["coverage"] for t in trials])
        out[mode] = {"mean_coverage": float(c.mean()), "sd": float(c.std(ddof=1)) if c.size > 1
                     else 0.0, "min": float(c.min()), "max": float(c.max())}
    return out
