import sys

import numpy as np
import pytest

from meltcast import boost, synthetic
from meltcast.ingest import FeatureTable


def table_from(X, y, start="2022-01-01", names=None, role="train"):
    X = np.asarray(X, dtype=float).reshape(len(y), -1)
    dates = np.datetime64(start) + np.arange(len(y))
    names = names or tuple(f"x{i}" for i in range(X.shape[1]))
    return FeatureTable(dates, X, np.asarray(y, dtype=float), role, names)


@pytest.fixture(scope="session")
def small_tables():
    return synthetic.make_tables(11, n_train=240, n_calib=240, n_test=300)


@pytest.fixture(scope="session")
def small_booster(small_tables):
    tr, ca, _ = small_tables
    return boost.train(tr, ca, params=boost.BoostParams(shrinkage=0.05, max_iterations=400,
                                                        eval_stride=20))


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is not None and mod.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(mod.RESULTS):
            terminalreporter.write_line(line)
