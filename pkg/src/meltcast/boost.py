"""Quantile gradient boosting with calibration-year early stopping."""
from __future__ import annotations

import hashlib
import io
import json
import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from . import _trees
from .errors import ConfigurationError, DomainError
from .quantiles import (empirical_quantile, mean_quantile_loss, negative_gradient,
                        quantile_loss)

log = logging.getLogger(__name__)

FORMAT_VERSION = 1


@dataclass(frozen=True)
class QuantileLossParams:
    tau: float = 0.60

    def __post_init__(self):
        if not 0.0 < self.tau < 1.0:
            raise DomainError(f"tau must lie in (0, 1), got {self.tau}")


@dataclass(frozen=True)
class BoostParams:
    shrinkage: float = 0.0001
    interaction_depth: int = 6
    min_obs_in_node: int = 6
    max_iterations: int = 40000
    eval_stride: int = 100
    seed: int = 0
    keep_all_trees: bool = False

    def __post_init__(self):
        if not 0.0 < self.shrinkage <= 1.0:
            raise ConfigurationError("shrinkage must lie in (0, 1]")
        if self.interaction_depth < 1 or self.min_obs_in_node < 1:
            raise ConfigurationError("interaction_depth and min_obs_in_node must be >= 1")
        if self.max_iterations < 1 or self.eval_stride < 1:
            raise ConfigurationError("max_iterations and eval_stride must be >= 1")


@dataclass
class RegressionTree:
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    gain: np.ndarray

    @property
    def n_leaves(self):
        return int(np.sum(self.feature < 0))

    @property
    def depth(self):
        depth = np.zeros(len(self.feature), dtype=int)
        for node in range(len(self.feature)):
            if self.feature[node] >= 0:
                depth[self.left[node]] = depth[node] + 1
                depth[self.right[node]] = depth[node] + 1
        return int(depth.max())

    def apply(self, X):
        X = np.ascontiguousarray(X, dtype=np.float64)
        return _trees.apply_tree(self.feature, self.threshold, self.left,
                                 self.right, X, 0)

    def predict(self, X):
        return self.value[self.apply(X)]


def fit_tree(X, targets, params: BoostParams, residuals=None, tau=None):
    """Least-squares tree on ``targets``.

    Leaf values are the leaf means of ``targets`` unless ``residuals`` and
    ``tau`` are given, in which case they are the leaf tau-quantiles of
    ``residuals`` (the boosting terminal update).
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    targets = np.ascontiguousarray(targets, dtype=np.float64)
    sample = np.arange(len(targets), dtype=np.int64)
    feature, threshold, left, right, gain, leaf_of = _trees.grow_tree(
        X, targets, sample, params.interaction_depth, params.min_obs_in_node,
        X.shape[1], -1)
    if residuals is None:
        sums = np.bincount(leaf_of, weights=targets, minlength=len(feature))
        counts = np.bincount(leaf_of, minlength=len(feature))
        with np.errstate(invalid="ignore", divide="ignore"):
            value = np.where(feature < 0, sums / np.maximum(counts, 1), np.nan)
    else:
        value = _trees.leaf_quantiles(np.ascontiguousarray(residuals, dtype=np.float64),
                                      leaf_of, len(feature), tau)
    return RegressionTree(feature, threshold, left, right, value, gain)


def terminal_update(residuals_in_leaf, tau):
    """Constant minimising the pinball loss over a leaf: its tau-quantile."""
    residuals_in_leaf = np.asarray(residuals_in_leaf, dtype=np.float64)
    if residuals_in_leaf.size == 0:
        raise RuntimeError("terminal update on an empty leaf")
    return empirical_quantile(residuals_in_leaf, tau)


@dataclass
class TrainedBooster:
    base_value: float
    shrinkage: float
    tau: float
    best_iter: int
    feature_names: tuple
    # concatenated preorder node arrays; tree t occupies tree_ptr[t]:tree_ptr[t+1]
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    gain: np.ndarray
    tree_ptr: np.ndarray
    eval_iters: np.ndarray
    loss_curve: np.ndarray
    train_loss_curve: np.ndarray
    feature_means: np.ndarray
    feature_mins: np.ndarray
    feature_maxs: np.ndarray
    params: dict = field(default_factory=dict)
    still_improving: bool = False

    @property
    def n_trees(self):
        return len(self.tree_ptr) - 1

    def tree(self, t) -> RegressionTree:
        a, b = self.tree_ptr[t], self.tree_ptr[t + 1]
        return RegressionTree(self.feature[a:b], self.threshold[a:b], self.left[a:b],
                              self.right[a:b], self.value[a:b], self.gain[a:b])

    def identity(self) -> str:
        """Content hash used to tie a calibrator to this exact model."""
        h = hashlib.sha256()
        for arr in (self.feature, self.threshold, self.left, self.right,
                    self.value, self.tree_ptr):
            h.update(np.ascontiguousarray(arr).tobytes())
        h.update(json.dumps([self.base_value, self.shrinkage, self.tau,
                             self.best_iter, list(self.feature_names)]).encode())
        return h.hexdigest()


def _check_schema(train_table, calib_table):
    if tuple(train_table.feature_names) != tuple(calib_table.feature_names):
        raise ConfigurationError(
            f"feature schema mismatch: {train_table.feature_names} vs "
            f"{calib_table.feature_names}")
    if len(train_table) == 0 or len(calib_table) == 0:
        raise ConfigurationError("training and calibration tables must be nonempty")


def train(train_table, calib_table, loss: QuantileLossParams = QuantileLossParams(),
          params: BoostParams = BoostParams()) -> TrainedBooster:
    """Fit the quantile booster on ``train_table`` and pick the iteration count
    minimising the calibration pinball loss (evaluated every ``eval_stride``)."""
    _check_schema(train_table, calib_table)
    tau = loss.tau
    X = np.ascontiguousarray(train_table.X, dtype=np.float64)
    y = np.asarray(train_table.y, dtype=np.float64)
    Xc = np.ascontiguousarray(calib_table.X, dtype=np.float64)
    yc = np.asarray(calib_table.y, dtype=np.float64)
    n, p = X.shape
    nu = params.shrinkage

    base = empirical_quantile(y, tau)
    F = np.full(n, base)
    Fc = np.full(len(yc), base)
    sample = np.arange(n, dtype=np.int64)

    nodes = {k: [] for k in ("feature", "threshold", "left", "right", "value", "gain")}
    sizes = []
    eval_iters, calib_curve, train_curve = [], [], []
    for it in range(1, params.max_iterations + 1):
        resid = y - F
        g = negative_gradient(y, F, tau)
        feature, threshold, left, right, gain, leaf_of = _trees.grow_tree(
            X, g, sample, params.interaction_depth, params.min_obs_in_node, p, -1)
        value = _trees.leaf_quantiles(resid, leaf_of, len(feature), tau)
        F += nu * value[leaf_of]
        Fc += nu * value[_trees.apply_tree(feature, threshold, left, right, Xc, 0)]
        for k, arr in zip(nodes, (feature, threshold, left, right, value, gain)):
            nodes[k].append(arr)
        sizes.append(len(feature))
        if it % params.eval_stride == 0 or it == params.max_iterations:
            eval_iters.append(it)
            calib_curve.append(mean_quantile_loss(yc, Fc, tau))
            train_curve.append(mean_quantile_loss(y, F, tau))

    calib_curve = np.array(calib_curve)
    best_pos = int(np.argmin(calib_curve))
    best_iter = int(eval_iters[best_pos])
    tail = calib_curve[-11:]
    still_improving = len(tail) >= 11 and bool(np.all(np.diff(tail) < 0))
    if still_improving:
        log.warning("calibration loss still decreasing at max_iterations=%d; "
                    "consider more iterations", params.max_iterations)

    n_keep = params.max_iterations if params.keep_all_trees else best_iter
    tree_ptr = np.zeros(n_keep + 1, dtype=np.int64)
    tree_ptr[1:] = np.cumsum(sizes[:n_keep])
    cat = {k: np.concatenate(v[:n_keep]) for k, v in nodes.items()}
    log.info("trained %d iterations, best_iter=%d, calibration loss %.6f",
             params.max_iterations, best_iter, calib_curve[best_pos])
    return TrainedBooster(
        base_value=float(base), shrinkage=float(nu), tau=float(tau),
        best_iter=best_iter, feature_names=tuple(train_table.feature_names),
        feature=cat["feature"].astype(np.int64), threshold=cat["threshold"],
        left=cat["left"].astype(np.int64), right=cat["right"].astype(np.int64),
        value=cat["value"], gain=cat["gain"], tree_ptr=tree_ptr,
        eval_iters=np.array(eval_iters, dtype=np.int64), loss_curve=calib_curve,
        train_loss_curve=np.array(train_curve),
        feature_means=X.mean(axis=0), feature_mins=X.min(axis=0),
        feature_maxs=X.max(axis=0), params=asdict(params),
        still_improving=still_improving)


def predict(booster: TrainedBooster, X, n_iter=None):
    """Ensemble output after ``n_iter`` trees (default ``best_iter``)."""
    if n_iter is None:
        n_iter = booster.best_iter
    if not 0 <= n_iter <= booster.n_trees:
        raise IndexError(f"n_iter={n_iter} outside 0..{booster.n_trees}")
    X = np.ascontiguousarray(getattr(X, "X", X), dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != len(booster.feature_names):
        raise ConfigurationError("rows do not match the booster's feature schema")
    return _trees.ensemble_predict(booster.base_value, booster.shrinkage,
                                   booster.feature, booster.threshold, booster.left,
                                   booster.right, booster.value, booster.tree_ptr,
                                   int(n_iter), X)


_ARRAYS = ("feature", "threshold", "left", "right", "value", "gain", "tree_ptr",
           "eval_iters", "loss_curve", "train_loss_curve", "feature_means",
           "feature_mins", "feature_maxs")


def save_booster(booster: TrainedBooster, path) -> None:
    """npz container: node arrays plus a JSON ``meta`` entry carrying the format version."""
    meta = {"kind": "meltcast.TrainedBooster", "format_version": FORMAT_VERSION,
            "base_value": booster.base_value, "shrinkage": booster.shrinkage,
            "tau": booster.tau, "best_iter": booster.best_iter,
            "feature_names": list(booster.feature_names), "params": booster.params,
            "still_improving": booster.still_improving}
    arrays = {k: getattr(booster, k) for k in _ARRAYS}
    _write_npz(path, meta, arrays)


def load_booster(path) -> TrainedBooster:
    meta, arrays = _read_npz(path, "meltcast.TrainedBooster")
    return TrainedBooster(
        base_value=meta["base_value"], shrinkage=meta["shrinkage"], tau=meta["tau"],
        best_iter=meta["best_iter"], feature_names=tuple(meta["feature_names"]),
        params=meta["params"], still_improving=meta["still_improving"],
        **{k: arrays[k] for k in _ARRAYS})


def _write_npz(path, meta, arrays):
    buf = io.BytesIO()
    np.savez(buf, meta=np.frombuffer(json.dumps(meta, sort_keys=True).encode(),
                                     dtype=np.uint8), **dict(sorted(arrays.items())))
    with open(path, "wb") as fh:
        fh.write(buf.getvalue())


def _read_npz(path, kind):
    with np.load(path, allow_pickle=False) as npz:
        meta = json.loads(bytes(npz["meta"]).decode())
        if meta.get("kind") != kind:
            raise ConfigurationError(f"{path}: expected a {kind} container")
        if meta.get("format_version") != FORMAT_VERSION:
            raise ConfigurationError(
                f"{path}: unsupported format version {meta.get('format_version')}")
        arrays = {k: npz[k] for k in npz.files if k != "meta"}
    return meta, arrays


__all__ = ["BoostParams", "QuantileLossParams", "RegressionTree", "TrainedBooster",
           "fit_tree", "terminal_update", "train", "predict", "quantile_loss",
           "negative_gradient", "save_booster", "load_booster"]
