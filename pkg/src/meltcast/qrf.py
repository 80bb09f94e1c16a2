"""Quantile regression forest over nonconformity scores.

Trees are ordinary least-squares regression trees grown on bootstrap
samples. Each leaf then keeps the indices of the training scores routed to
it: all of them by default (Meinshausen's weighting), or only the in-bag ones.
A query's conditional distribution weights each training score by
1/(leaf size * n_trees) for every tree whose leaf it shares with the query.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from numba import njit

from . import _trees
from .errors import ConfigurationError, DomainError

# slack when comparing a cumulative weight against p (weights are sums of
# reciprocals and carry rounding)
CDF_TOL = 1e-12


@dataclass(frozen=True)
class QRFParams:
    n_trees: int = 500
    min_node_size: int = 5
    features_per_split: int | None = None  # None -> ceil(p / 3)
    bootstrap: bool = True
    seed: int = 0
    leaf_membership: str = "all"  # or "inbag"

    def __post_init__(self):
        if self.leaf_membership not in ("all", "inbag"):
            raise ConfigurationError("leaf_membership must be 'all' or 'inbag'")
        if self.n_trees < 1 or self.min_node_size < 1:
            raise ConfigurationError("n_trees and min_node_size must be >= 1")
        if self.features_per_split is not None and self.features_per_split < 1:
            raise ConfigurationError("features_per_split must be >= 1")

    def mtry(self, p):
        m = math.ceil(p / 3) if self.features_per_split is None else self.features_per_split
        if m > p:
            raise ConfigurationError(f"features_per_split={m} exceeds {p} covariates")
        return m


@dataclass
class QRFModel:
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    tree_ptr: np.ndarray
    # members of node j (global id) are leaf_members[leaf_ptr[j]:leaf_ptr[j+1]]
    leaf_ptr: np.ndarray
    leaf_members: np.ndarray
    training_scores: np.ndarray
    covariate_names: tuple
    params: dict

    @property
    def n_trees(self):
        return len(self.tree_ptr) - 1

    def leaf_indices(self, tree, x):
        """Training indices sharing a leaf with covariate row ``x`` in ``tree``."""
        off = self.tree_ptr[tree]
        leaf = _trees.apply_tree(self.feature, self.threshold, self.left, self.right,
                                 np.atleast_2d(np.asarray(x, dtype=np.float64)), off)[0]
        j = off + leaf
        return self.leaf_members[self.leaf_ptr[j]:self.leaf_ptr[j + 1]]


def fit_qrf(covariates, scores, params: QRFParams = QRFParams(),
            covariate_names=None) -> QRFModel:
    X = np.ascontiguousarray(covariates, dtype=np.float64)
    s = np.ascontiguousarray(scores, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] != s.size:
        raise ConfigurationError(
            f"covariates ({X.shape[0]} rows) and scores ({s.size}) differ in length")
    if s.size < params.min_node_size:
        raise ConfigurationError("fewer scores than min_node_size")
    if not np.all(np.isfinite(s)):
        raise ConfigurationError("scores must be finite")
    n, p = X.shape
    mtry = params.mtry(p)
    seeds = np.random.SeedSequence(params.seed).generate_state(params.n_trees, dtype=np.uint32)

    feats, thrs, lefts, rights, sizes = [], [], [], [], []
    leaf_ptr_parts, members_parts = [], []
    member_total = 0
    for t in range(params.n_trees):
        tree_seed = int(seeds[t])
        if params.bootstrap:
            sample = np.random.default_rng(tree_seed).integers(0, n, size=n).astype(np.int64)
        else:
            sample = np.arange(n, dtype=np.int64)
        feature, threshold, left, right, _gain, leaf_of = _trees.grow_tree(
            X, s, sample, n, params.min_node_size, mtry, tree_seed % (2 ** 31))
        n_nodes = len(feature)
        if params.leaf_membership == "all":
            sample = np.arange(n, dtype=np.int64)
            leaf_of = _trees.apply_tree(feature, threshold, left, right, X, 0)
        # unique indices per leaf, ascending within each leaf
        pairs = np.unique(leaf_of * n + sample)
        node_of, member = np.divmod(pairs, n)
        counts = np.bincount(node_of, minlength=n_nodes)
        ptr = np.empty(n_nodes, dtype=np.int64)
        ptr[0] = 0
        ptr[1:] = np.cumsum(counts)[:-1]
        leaf_ptr_parts.append(ptr + member_total)
        members_parts.append(member)
        member_total += member.size
        feats.append(feature)
        thrs.append(threshold)
        lefts.append(left)
        rights.append(right)
        sizes.append(n_nodes)
    tree_ptr = np.zeros(params.n_trees + 1, dtype=np.int64)
    tree_ptr[1:] = np.cumsum(sizes)
    leaf_ptr = np.append(np.concatenate(leaf_ptr_parts), member_total).astype(np.int64)
    names = tuple(covariate_names) if covariate_names is not None else tuple(
        f"x{i}" for i in range(p))
    return QRFModel(np.concatenate(feats), np.concatenate(thrs), np.concatenate(lefts),
                    np.concatenate(rights), tree_ptr, leaf_ptr,
                    np.concatenate(members_parts).astype(np.int64), s.copy(), names,
                    asdict(params))


@njit(cache=True)
def _forest_weights(feature, threshold, left, right, tree_ptr, leaf_ptr,
                    leaf_members, X, n_train):
    m = X.shape[0]
    n_trees = tree_ptr.shape[0] - 1
    w = np.zeros((m, n_train))
    for i in range(m):
        for t in range(n_trees):
            off = tree_ptr[t]
            node = 0
            while feature[off + node] >= 0:
                if X[i, feature[off + node]] <= threshold[off + node]:
                    node = left[off + node]
                else:
                    node = right[off + node]
            a = leaf_ptr[off + node]
            b = leaf_ptr[off + node + 1]
            inc = 1.0 / ((b - a) * n_trees)
            for k in range(a, b):
                w[i, leaf_members[k]] += inc
    return w


def forest_weights(model: QRFModel, X):
    X = np.ascontiguousarray(np.atleast_2d(X), dtype=np.float64)
    if X.shape[1] != len(model.covariate_names):
        raise ConfigurationError("query rows do not match the covariate schema")
    return _forest_weights(model.feature, model.threshold, model.left, model.right,
                           model.tree_ptr, model.leaf_ptr, model.leaf_members, X,
                           model.training_scores.size)


def predict_quantile(model: QRFModel, X, p):
    """Lower-interpolation p-quantile(s) of the forest-weighted score distribution.

    ``X`` may be a single row or a matrix; ``p`` a scalar or a sequence of
    levels. Returns an array shaped (rows, levels) squeezed like the inputs.
    Results are always stored training scores.
    """
    levels = np.atleast_1d(np.asarray(p, dtype=np.float64))
    if np.any((levels <= 0) | (levels >= 1)):
        raise DomainError("quantile level must lie in (0, 1)")
    single_row = np.ndim(X) == 1
    w = forest_weights(model, X)
    order = np.argsort(model.training_scores, kind="mergesort")
    sorted_scores = model.training_scores[order]
    cdf = np.cumsum(w[:, order], axis=1)
    total = cdf[:, -1:]
    out = np.empty((w.shape[0], levels.size))
    for j, lev in enumerate(levels):
        hit = cdf >= lev * total - CDF_TOL
        out[:, j] = sorted_scores[np.argmax(hit, axis=1)]
    if single_row:
        out = out[0]
    if np.ndim(p) == 0:
        out = out[..., 0]
    return out


_ARRAYS = ("feature", "threshold", "left", "right", "tree_ptr", "leaf_ptr",
           "leaf_members", "training_scores")


def to_arrays(model: QRFModel, prefix: str):
    meta = {"covariate_names": list(model.covariate_names), "params": model.params}
    return meta, {f"{prefix}{k}": getattr(model, k) for k in _ARRAYS}


def from_arrays(meta, arrays, prefix: str) -> QRFModel:
    return QRFModel(**{k: arrays[f"{prefix}{k}"] for k in _ARRAYS},
                    covariate_names=tuple(meta["covariate_names"]), params=meta["params"])
