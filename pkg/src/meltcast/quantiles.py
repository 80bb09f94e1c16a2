"""Pinball loss and the empirical quantile convention shared by every module.

Convention: the p-quantile of n values is the k-th order statistic with
k = ceil(p * n) (inverse empirical CDF, lower interpolation), k >= 1.
"""
import math

import numpy as np
from numba import njit

from .errors import DomainError


@njit(cache=True)
def order_rank(p, n):
    """1-based rank ceil(p * n), snapping products within 1e-9 of an integer."""
    x = p * n
    r = np.floor(x + 0.5)
    if abs(x - r) < 1e-9:
        k = int(r)
    else:
        k = int(np.ceil(x))
    if k < 1:
        k = 1
    if k > n:
        k = n
    return k


def empirical_quantile(values, p):
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        raise DomainError("empirical quantile of an empty sample")
    if not 0.0 < p < 1.0:
        raise DomainError(f"quantile level must lie in (0, 1), got {p}")
    k = order_rank(p, values.size)
    return float(np.partition(values, k - 1)[k - 1])


def _check_tau(tau):
    if not 0.0 < tau < 1.0:
        raise DomainError(f"tau must lie in (0, 1), got {tau}")


def quantile_loss(y, y_hat, tau=0.60):
    """Pinball loss tau*(y - y_hat) if y >= y_hat else (1 - tau)*(y_hat - y).

    Works elementwise on arrays; scalars in give a float back.
    """
    _check_tau(tau)
    y = np.asarray(y, dtype=np.float64)
    y_hat = np.asarray(y_hat, dtype=np.float64)
    if not (np.all(np.isfinite(y)) and np.all(np.isfinite(y_hat))):
        raise DomainError("quantile_loss needs finite inputs")
    diff = y - y_hat
    loss = np.where(diff >= 0, tau * diff, (1.0 - tau) * (-diff))
    return float(loss) if loss.ndim == 0 else loss


def negative_gradient(y, y_hat, tau=0.60):
    """Subgradient of the pinball loss in y_hat, negated (0 at the kink)."""
    _check_tau(tau)
    y = np.asarray(y, dtype=np.float64)
    y_hat = np.asarray(y_hat, dtype=np.float64)
    if not (np.all(np.isfinite(y)) and np.all(np.isfinite(y_hat))):
        raise DomainError("negative_gradient needs finite inputs")
    g = np.where(y > y_hat, tau, np.where(y < y_hat, tau - 1.0, 0.0))
    return float(g) if g.ndim == 0 else g


def mean_quantile_loss(y, y_hat, tau):
    return float(np.mean(quantile_loss(y, y_hat, tau)))


def ceil_rank(p, n):
    """Python-side twin of :func:`order_rank` without the clamp to n."""
    x = p * n
    r = math.floor(x + 0.5)
    return r if abs(x - r) < 1e-9 else math.ceil(x)
