import numpy as np
import pytest
from scipy.stats import chi2

from meltcast.errors import InsufficientDataError
from meltcast.whiten import (DegenerateRegressorError, UndefinedCorrelationError, acf,
                             fit_ar1, ljung_box)


def simulate_ar1(rng, phi, n, c=0.0, burn=100):
    e = rng.normal(size=n + burn)
    x = np.zeros(n + burn)
    for t in range(1, n + burn):
        x[t] = c + phi * x[t - 1] + e[t]
    return x[burn:]


def test_exact_recurrence_has_zero_innovations():
    # starts far from the fixed point 4 so the lagged values still vary
    r = np.array([-10.0])
    for _ in range(20):
        r = np.append(r, 2 + 0.5 * r[-1])
    m = fit_ar1(r)
    assert m.intercept_c == pytest.approx(2, abs=1e-9)
    assert m.phi == pytest.approx(0.5, abs=1e-9)
    assert np.allclose(m.innovations, 0, atol=1e-9)
    assert len(m.innovations) == len(r) - 1


def test_matches_least_squares_oracle():
    rng = np.random.default_rng(0)
    r = simulate_ar1(rng, 0.4, 200, c=0.3)
    A = np.column_stack([np.ones(199), r[:-1]])
    coef, *_ = np.linalg.lstsq(A, r[1:], rcond=None)
    m = fit_ar1(r)
    assert m.intercept_c == pytest.approx(coef[0], abs=1e-10)
    assert m.phi == pytest.approx(coef[1], abs=1e-10)


def test_white_noise_gives_small_phi():
    rng = np.random.default_rng(1)
    r = rng.normal(size=1000)
    m = fit_ar1(r)
    assert abs(m.phi) < 4 / np.sqrt(1000)
    assert np.allclose(m.innovations, r[1:] - m.intercept_c - m.phi * r[:-1])


def test_phi_recovery_band():
    rng = np.random.default_rng(2)
    phis = [fit_ar1(simulate_ar1(rng, 0.7, 365)).phi for _ in range(50)]
    assert all(0.55 < p < 0.85 for p in phis)
    assert 0.62 <= np.median(phis) <= 0.78


def test_shift_identity():
    rng = np.random.default_rng(3)
    r = simulate_ar1(rng, 0.6, 120)
    k = 7.5
    a, b = fit_ar1(r), fit_ar1(r + k)
    assert b.phi == pytest.approx(a.phi, abs=1e-9)
    assert b.intercept_c - a.intercept_c == pytest.approx(k * (1 - a.phi), abs=1e-9)
    assert np.allclose(a.innovations, b.innovations, atol=1e-9)


def test_refitting_innovations_reduces_dependence():
    rng = np.random.default_rng(4)
    for _ in range(100):
        m = fit_ar1(simulate_ar1(rng, 0.7, 365))
        assert abs(fit_ar1(m.innovations).phi) < abs(m.phi)


def test_gap_handling():
    rng = np.random.default_rng(5)
    r = rng.normal(size=40)
    dates = np.datetime64("2022-01-01") + np.arange(40)
    dates[20:] += 2   # 3-day gap: bridged
    m = fit_ar1(r, dates)
    assert len(m.innovations) == 39
    dates[30:] += 5   # 8-day gap: breaks the chain
    m = fit_ar1(r, dates)
    assert len(m.innovations) == 38 and 30 not in m.innovation_index


def test_errors():
    with pytest.raises(InsufficientDataError):
        fit_ar1(np.arange(9.0))
    with pytest.raises(DegenerateRegressorError):
        fit_ar1(np.full(20, 1.0))


def test_acf_alternating_hand_value():
    x = np.array([1.0, -1] * 5)
    # mean 0, denominator 10, lag-1 products all -1: -9/10
    assert acf(x, 1)[0] == pytest.approx(-0.9)


def test_acf_white_noise_and_ar1():
    rng = np.random.default_rng(6)
    assert np.all(np.abs(acf(rng.normal(size=1000), 10)) < 0.1)
    x = simulate_ar1(rng, 0.7, 5000)
    assert acf(x, 1)[0] == pytest.approx(0.7, abs=0.05)
    with pytest.raises(UndefinedCorrelationError):
        acf(np.zeros(50), 3)


def test_ljung_box_against_independent_formula():
    rng = np.random.default_rng(7)
    x = rng.normal(size=300)
    rep = ljung_box(x, lags=20, fitted_params=1)
    xc = x - x.mean()
    rho = np.array([np.sum(xc[k:] * xc[:-k]) for k in range(1, 21)]) / np.sum(xc ** 2)
    q = 300 * 302 * np.sum(rho ** 2 / (300 - np.arange(1, 21)))
    assert rep.ljung_box_stat == pytest.approx(q, rel=1e-12)
    assert rep.ljung_box_df == 19
    assert rep.ljung_box_pvalue == pytest.approx(chi2.sf(q, 19), abs=1e-8)


def test_ljung_box_matches_statsmodels():
    sm = pytest.importorskip("statsmodels.stats.diagnostic")
    rng = np.random.default_rng(8)
    x = simulate_ar1(rng, 0.3, 250)
    ours = ljung_box(x, lags=12)
    ref = sm.acorr_ljungbox(x, lags=[12], return_df=True)
    assert ours.ljung_box_stat == pytest.approx(float(ref["lb_stat"].iloc[0]), rel=1e-10)
    assert ours.ljung_box_pvalue == pytest.approx(float(ref["lb_pvalue"].iloc[0]), abs=1e-8)


def test_ljung_box_preconditions():
    with pytest.raises(ValueError):
        ljung_box(np.random.default_rng(0).normal(size=30), lags=15)
    with pytest.raises(UndefinedCorrelationError):
        ljung_box(np.zeros(100), lags=5)
