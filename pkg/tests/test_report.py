import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import table_from
from meltcast import boost, report, svg
from meltcast.boost import BoostParams
from meltcast.errors import ConfigurationError, InsufficientDataError

FAST = BoostParams(shrinkage=0.1, max_iterations=150, eval_stride=10, interaction_depth=3)


def fit(X, y, params=FAST, seed=0):
    tr = table_from(X, y)
    return boost.train(tr, tr, params=params)


def test_importance_sums_to_100_and_finds_signal():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(300, 4))
    y = 3 * X[:, 2] + 0.1 * rng.normal(size=300)
    imp = report.variable_importance(fit(X, y))
    assert imp.percent.sum() == pytest.approx(100.0, abs=1e-9)
    assert imp.ranked()[0][0] == "x2"
    assert imp.percent[2] > 2 * sum(np.delete(imp.percent, 2))


def test_importance_under_pure_noise_is_spread():
    worst = []
    for seed in range(20):
        rng = np.random.default_rng(100 + seed)
        X = rng.normal(size=(200, 5))
        imp = report.variable_importance(fit(X, rng.normal(size=200)))
        worst.append(imp.percent.max())
    assert np.mean(worst) < 40


def test_partial_dependence_constant_model():
    X = np.random.default_rng(1).normal(size=(50, 3))
    b = fit(X, np.full(50, 2.0))
    pd = report.partial_dependence(b, "x1", grid_size=25)
    assert pd.grid.size == 25
    assert np.all(pd.values == 2.0)
    assert pd.grid[0] == X[:, 1].min() and pd.grid[-1] == X[:, 1].max()


def test_partial_dependence_recovers_square():
    rng = np.random.default_rng(2)
    X = rng.uniform(-2, 2, size=(800, 2))
    y = X[:, 0] ** 2 + 0.05 * rng.normal(size=800)
    b = fit(X, y, BoostParams(shrinkage=0.1, max_iterations=400, eval_stride=20,
                              interaction_depth=2))
    pd = report.partial_dependence(b, "x0", grid_size=41)
    inner = np.abs(pd.grid) < 1.8
    assert np.max(np.abs(pd.values[inner] - pd.grid[inner] ** 2)) < 0.6
    assert pd.values[20] < pd.values[0] and pd.values[20] < pd.values[-1]


def test_partial_dependence_holds_others_at_means():
    rng = np.random.default_rng(3)
    X = rng.normal(size=(120, 3))
    b = fit(X, X[:, 0] - X[:, 2] + rng.normal(size=120))
    pd = report.partial_dependence(b, "x2", grid_size=7)
    rows = np.tile(X.mean(axis=0), (7, 1))
    rows[:, 2] = np.linspace(X[:, 2].min(), X[:, 2].max(), 7)
    np.testing.assert_allclose(b.feature_means, X.mean(axis=0), rtol=0, atol=1e-12)
    np.testing.assert_allclose(pd.values, boost.predict(b, rows), atol=1e-9)


def test_partial_dependence_unknown_predictor(small_booster):
    with pytest.raises(ConfigurationError):
        report.partial_dependence(small_booster, "pressure")


def test_bins_perfect_forecast():
    f = np.linspace(-10, 10, 400)
    bins, degenerate = report.bin_exceedance(f, f, n_bins=20)
    assert not degenerate and len(bins) == 20
    for b in bins:
        if b.count:
            expect = 100.0 if b.lower_edge >= 0 else 0.0 if b.upper_edge <= 0 else None
            if expect is not None:
                assert b.pct_exceeding == expect


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-50, 50), min_size=2, max_size=200), st.integers(2, 30))
def test_bins_partition(values, n_bins):
    f = np.array(values)
    bins, degenerate = report.bin_exceedance(f, f + 1.0, n_bins=n_bins)
    assert sum(b.count for b in bins) == f.size
    if not degenerate:
        widths = [b.upper_edge - b.lower_edge for b in bins]
        np.testing.assert_allclose(widths, widths[0], rtol=1e-9, atol=1e-12)
        for b in bins:
            if b.count:
                assert b.lower_edge - 1e-9 <= b.mean_forecast <= b.upper_edge + 1e-9
            else:
                assert b.mean_forecast is None and b.pct_exceeding is None


def test_bins_degenerate_and_errors():
    bins, degenerate = report.bin_exceedance([1.0] * 5, [0.5, -1, 2, 3, -4])
    assert degenerate and len(bins) == 1 and bins[0].pct_exceeding == 60.0
    assert report.bin_exceedance([], []) == ([], False)
    with pytest.raises(ConfigurationError):
        report.bin_exceedance([1.0], [1.0, 2.0])


def test_bins_random_forecast_is_flat():
    rng = np.random.default_rng(4)
    bins, _ = report.bin_exceedance(rng.normal(size=20000), rng.normal(size=20000))
    full = [b.pct_exceeding for b in bins if b.count >= 500]
    assert max(abs(p - 50.0) for p in full) < 8


def test_filled_marker_follows_sign():
    bins, _ = report.bin_exceedance(np.linspace(-1, 1, 100), np.zeros(100), n_bins=4)
    assert [b.filled for b in bins] == [False, False, True, True]


def test_loess_reproduces_a_line():
    x = np.random.default_rng(5).uniform(0, 10, 60)
    y = 1.5 - 0.7 * x
    np.testing.assert_allclose(report.loess_smooth(x, y), y, atol=1e-8)
    np.testing.assert_allclose(report.loess_smooth(x, np.full(60, 4.0)), 4.0, atol=1e-12)


def test_loess_smooths_noise():
    rng = np.random.default_rng(6)
    x = np.sort(rng.uniform(0, 2 * np.pi, 400))
    y = np.sin(x) + 0.3 * rng.normal(size=400)
    fit_ = report.loess_smooth(x, y, span=0.2)
    assert np.mean((fit_ - np.sin(x)) ** 2) < np.mean((y - np.sin(x)) ** 2) / 4


def test_loess_matches_statsmodels():
    sm = pytest.importorskip("statsmodels.nonparametric.smoothers_lowess")
    rng = np.random.default_rng(7)
    x = np.sort(rng.uniform(0, 10, 40))
    y = np.sin(x) + 0.2 * rng.normal(size=40)
    ref = sm.lowess(y, x, frac=0.75, it=0, delta=0.0, return_sorted=False)
    np.testing.assert_allclose(report.loess_smooth(x, y, span=0.75), ref, atol=1e-6)


def test_loess_errors():
    with pytest.raises(InsufficientDataError):
        report.loess_smooth([1, 2, 3], [1, 2, 3])
    with pytest.raises(ConfigurationError):
        report.loess_smooth(np.arange(10.0), np.arange(10.0), span=0)


def test_svg_uses_generic_font_only():
    fig = svg.Figure("t <&>", "x", "y").scatter([0, 1], [1, 2], filled=[True, False])
    fig.line([0, 1], [0, 1]).segments([0.5], [0.0], [1.0]).hline(0.5)
    text = fig.render()
    assert text.startswith("<svg") and text.rstrip().endswith("</svg>")
    assert "&lt;&amp;&gt;" in text
    assert 'font-family="sans-serif"' in text and text.count("font-family") == 1
    bars = svg.bar_chart("imp", ["a", "b"], [70.0, 30.0])
    assert bars.count("<rect") == 3 and bars.count("font-family") == 1
