"""Bayesian Additive Regression Trees binary classifier (probit augmentation).

Trees are updated one at a time by a Metropolis-Hastings move chosen among
grow (0.28), prune (0.28) and change (0.44, at nodes whose children are both
leaves).  Leaf values are conjugate Normal draws with prior sd 3/(k*sqrt(m)).
Rows with a missing value at a split feature follow the node's sampled
missing-direction, so missingness itself is usable as a feature.
"""

from __future__ import annotations

import pickle
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr, ndtri
from sklearn.base import BaseEstimator

__all__ = ["BartConfig", "BartModel", "BartClassifier", "fit_bart"]

MODEL_FORMAT_VERSION = 1

P_GROW = 0.28
P_PRUNE = 0.28
P_CHANGE = 0.44

_PROB_EPS = 1e-12


@dataclass
class BartConfig:
    n_trees: int = 50
    n_iterations: int = 2000
    n_burnin: int = 250
    k: float = 2.0
    split_prior_alpha: float = 0.95
    split_prior_beta: float = 2.0
    seed: int = 0

    def __post_init__(self):
        if self.n_trees < 1:
            raise ValueError("n_trees must be >= 1")
        if not 0 <= self.n_burnin < self.n_iterations:
            raise ValueError("n_burnin must be < n_iterations")
        if self.k <= 0:
            raise ValueError("k must be > 0")

    @property
    def n_kept(self) -> int:
        return self.n_iterations - self.n_burnin

    @property
    def leaf_prior_sd(self) -> float:
        return 3.0 / (self.k * np.sqrt(self.n_trees))


class _Node:
    __slots__ = ("is_leaf", "feature", "cut", "missing_right",
                 "left", "right", "value", "rows", "col_sums", "depth", "parent")

    def __init__(self, rows: np.ndarray, col_sums: np.ndarray, depth: int,
                 parent: "_Node | None"):
        self.is_leaf = True
        self.feature = -1
        self.cut = 0.0
        self.missing_right = False
        self.left: _Node | None = None
        self.right: _Node | None = None
        self.value = 0.0
        self.rows = rows
        self.col_sums = col_sums
        self.depth = depth
        self.parent = parent


class _Tree:
    def __init__(self, root: _Node):
        self.root = root

    def leaves(self) -> list[_Node]:
        out = []
        stack = [self.root]
        while stack:
            node = stack.pop()
            if node.is_leaf:
                out.append(node)
            else:
                stack.extend((node.right, node.left))
        return out

    def nog_nodes(self) -> list[_Node]:
        """Internal nodes whose children are both leaves."""
        out = []
        stack = [self.root]
        while stack:
            node = stack.pop()
            if node.is_leaf:
                continue
            if node.left.is_leaf and node.right.is_leaf:
                out.append(node)
            stack.extend((node.right, node.left))
        return out


def _route(x_col: np.ndarray, cut: float, missing_right: bool) -> np.ndarray:
    """Boolean mask of rows going left under (cut, missing-direction)."""
    missing = np.isnan(x_col)
    left = x_col <= cut
    left[missing] = not missing_right
    return left


class _Sampler:
    def __init__(self, X: np.ndarray, y: np.ndarray, config: BartConfig):
        self.X = X
        self.y = y
        self.config = config
        self.n, self.F = X.shape
        self.rng = np.random.default_rng(config.seed)
        self.sig2 = config.leaf_prior_sd ** 2
        has_nan = np.isnan(X).any(axis=0)
        vals_01 = np.all(np.isin(np.nan_to_num(X, nan=0.0), (0.0, 1.0)), axis=0)
        self.binary = vals_01 & ~has_nan
        self.generic_cols = np.nonzero(~self.binary)[0]
        base = float(np.clip(y.mean(), 0.01, 0.99))
        self.offset = float(ndtri(base))
        root_sums = np.nansum(X, axis=0)
        all_rows = np.arange(self.n)
        self.trees = [_Tree(_Node(all_rows, root_sums.copy(), 0, None))
                      for _ in range(config.n_trees)]
        self.contrib = np.zeros((config.n_trees, self.n))
        self.fit_total = np.zeros(self.n)
        self.z = np.zeros(self.n)

    # -- split availability ------------------------------------------------

    def _available_features(self, node: _Node) -> list[int]:
        n_rows = len(node.rows)
        avail = np.nonzero(self.binary & (node.col_sums > 0)
                           & (node.col_sums < n_rows))[0].tolist()
        for col in self.generic_cols:
            vals = self.X[node.rows, col]
            vals = vals[~np.isnan(vals)]
            if len(np.unique(vals)) >= 2:
                avail.append(int(col))
        return sorted(avail)

    def _sample_rule(self, node: _Node, feature: int) -> tuple[float, int]:
        """Uniform cutpoint among distinct non-missing values; returns
        (cut, number of candidate cuts)."""
        if self.binary[feature]:
            return 0.0, 1
        vals = self.X[node.rows, feature]
        vals = np.unique(vals[~np.isnan(vals)])
        cuts = vals[:-1]
        return float(self.rng.choice(cuts)), len(cuts)

    # -- tree prior ---------------------------------------------------------

    def _p_split(self, depth: int) -> float:
        cfg = self.config
        return cfg.split_prior_alpha * (1.0 + depth) ** (-cfg.split_prior_beta)

    # -- marginal likelihood pieces ------------------------------------------

    def _log_node_lik(self, n: int, s: float) -> float:
        """Non-constant part of the leaf marginal likelihood given residual
        count n and residual sum s (sigma = 1)."""
        denom = 1.0 + n * self.sig2
        return -0.5 * np.log(denom) + 0.5 * self.sig2 * s * s / denom

    # -- structural edits ----------------------------------------------------

    def _grow_at(self, node: _Node, feature: int, cut: float, missing_right: bool):
        left_mask = _route(self.X[node.rows, feature], cut, missing_right)
        rows_l = node.rows[left_mask]
        rows_r = node.rows[~left_mask]
        sums_l = np.nansum(self.X[rows_l], axis=0)
        node.is_leaf = False
        node.feature = feature
        node.cut = cut
        node.missing_right = missing_right
        node.left = _Node(rows_l, sums_l, node.depth + 1, node)
        node.right = _Node(rows_r, node.col_sums - sums_l, node.depth + 1, node)

    @staticmethod
    def _prune_at(node: _Node):
        node.is_leaf = True
        node.feature = -1
        node.left = None
        node.right = None

    # -- MH moves -----------------------------------------------------------

    def _try_grow(self, tree: _Tree, r: np.ndarray) -> None:
        growable = [leaf for leaf in tree.leaves() if self._available_features(leaf)]
        if not growable:
            return
        leaf = growable[self.rng.integers(len(growable))]
        features = self._available_features(leaf)
        feature = int(features[self.rng.integers(len(features))])
        cut, _ = self._sample_rule(leaf, feature)
        missing_right = bool(self.rng.integers(2))

        left_mask = _route(self.X[leaf.rows, feature], cut, missing_right)
        rows_l = leaf.rows[left_mask]
        rows_r = leaf.rows[~left_mask]
        if len(rows_l) == 0 or len(rows_r) == 0:
            return
        r_leaf = r[leaf.rows]
        s_l = float(r_leaf[left_mask].sum())
        s_p = float(r_leaf.sum())
        log_lik = (self._log_node_lik(len(rows_l), s_l)
                   + self._log_node_lik(len(rows_r), s_p - s_l)
                   - self._log_node_lik(len(leaf.rows), s_p))

        p_d = self._p_split(leaf.depth)
        p_d1 = self._p_split(leaf.depth + 1)
        log_prior = np.log(p_d) + 2.0 * np.log1p(-p_d1) - np.log1p(-p_d)

        n_nog_after = len(tree.nog_nodes())
        if not (leaf.parent is not None and leaf.parent.left.is_leaf
                and leaf.parent.right.is_leaf):
            n_nog_after += 1
        log_trans = (np.log(P_PRUNE) + np.log(len(growable))
                     - np.log(P_GROW) - np.log(n_nog_after))

        if np.log(self.rng.random()) < log_lik + log_prior + log_trans:
            self._grow_at(leaf, feature, cut, missing_right)

    def _try_prune(self, tree: _Tree, r: np.ndarray) -> None:
        nogs = tree.nog_nodes()
        if not nogs:
            return
        node = nogs[self.rng.integers(len(nogs))]
        r_node = r[node.rows]
        s_p = float(r_node.sum())
        s_l = float(r[node.left.rows].sum())
        log_lik = (self._log_node_lik(len(node.rows), s_p)
                   - self._log_node_lik(len(node.left.rows), s_l)
                   - self._log_node_lik(len(node.right.rows), s_p - s_l))

        p_d = self._p_split(node.depth)
        p_d1 = self._p_split(node.depth + 1)
        log_prior = np.log1p(-p_d) - np.log(p_d) - 2.0 * np.log1p(-p_d1)

        # growable leaves of the pruned tree: current ones minus the two
        # children plus the merged leaf (which certainly has a valid split)
        saved = (node.is_leaf, node.feature, node.left, node.right)
        self._prune_at(node)
        n_growable_after = sum(1 for leaf in tree.leaves()
                               if self._available_features(leaf))
        node.is_leaf, node.feature, node.left, node.right = saved

        log_trans = (np.log(P_GROW) - np.log(n_growable_after)
                     - np.log(P_PRUNE) + np.log(len(nogs)))

        if np.log(self.rng.random()) < log_lik + log_prior + log_trans:
            self._prune_at(node)

    def _try_change(self, tree: _Tree, r: np.ndarray) -> None:
        nogs = tree.nog_nodes()
        if not nogs:
            return
        node = nogs[self.rng.integers(len(nogs))]
        features = self._available_features(node)
        if not features:
            return
        feature = int(features[self.rng.integers(len(features))])
        cut, _ = self._sample_rule(node, feature)
        missing_right = bool(self.rng.integers(2))

        new_left = _route(self.X[node.rows, feature], cut, missing_right)
        n_l = int(new_left.sum())
        if n_l == 0 or n_l == len(node.rows):
            return
        r_node = r[node.rows]
        s_total = float(r_node.sum())
        s_new_l = float(r_node[new_left].sum())
        s_old_l = float(r[node.left.rows].sum())
        log_lik = (self._log_node_lik(n_l, s_new_l)
                   + self._log_node_lik(len(node.rows) - n_l, s_total - s_new_l)
                   - self._log_node_lik(len(node.left.rows), s_old_l)
                   - self._log_node_lik(len(node.right.rows), s_total - s_old_l))

        if np.log(self.rng.random()) < log_lik:
            rows_l = node.rows[new_left]
            sums_l = np.nansum(self.X[rows_l], axis=0)
            node.feature = feature
            node.cut = cut
            node.missing_right = missing_right
            node.left.rows = rows_l
            node.left.col_sums = sums_l
            node.right.rows = node.rows[~new_left]
            node.right.col_sums = node.col_sums - sums_l

    # -- per-iteration updates -----------------------------------------------

    def _update_latent(self):
        mu = self.offset + self.fit_total
        u = self.rng.random(self.n)
        p_neg = ndtr(-mu)
        pos = self.y == 1
        arg = np.empty(self.n)
        arg[pos] = p_neg[pos] + u[pos] * (1.0 - p_neg[pos])
        arg[~pos] = u[~pos] * p_neg[~pos]
        arg = np.clip(arg, 1e-300, 1.0 - 1e-16)
        self.z = mu + ndtri(arg)

    def _update_tree(self, j: int):
        tree = self.trees[j]
        r = self.z - self.offset - self.fit_total + self.contrib[j]
        u = self.rng.random()
        if u < P_GROW:
            self._try_grow(tree, r)
        elif u < P_GROW + P_PRUNE:
            self._try_prune(tree, r)
        else:
            self._try_change(tree, r)

        new_contrib = np.empty(self.n)
        for leaf in tree.leaves():
            n_l = len(leaf.rows)
            s_l = float(r[leaf.rows].sum())
            var = 1.0 / (n_l + 1.0 / self.sig2)
            leaf.value = var * s_l + np.sqrt(var) * self.rng.standard_normal()
            new_contrib[leaf.rows] = leaf.value
        self.fit_total += new_contrib - self.contrib[j]
        self.contrib[j] = new_contrib

    def run(self):
        cfg = self.config
        forests = []
        inclusion = np.zeros(self.F, dtype=np.int64)
        for it in range(cfg.n_iterations):
            self._update_latent()
            for j in range(cfg.n_trees):
                self._update_tree(j)
            if it >= cfg.n_burnin:
                snapshot = [_snapshot_tree(t.root) for t in self.trees]
                forests.append(snapshot)
                for tree_arrays in snapshot:
                    feats = tree_arrays[0]
                    np.add.at(inclusion, feats[feats >= 0], 1)
        return forests, inclusion


def _snapshot_tree(root: _Node):
    """Flatten a tree into parallel arrays (feature, cut, missing_right,
    left, right, value); feature == -1 marks leaves."""
    feats, cuts, miss, lefts, rights, values = [], [], [], [], [], []

    def visit(node: _Node) -> int:
        idx = len(feats)
        feats.append(node.feature if not node.is_leaf else -1)
        cuts.append(node.cut)
        miss.append(node.missing_right)
        lefts.append(-1)
        rights.append(-1)
        values.append(node.value)
        if not node.is_leaf:
            lefts[idx] = visit(node.left)
            rights[idx] = visit(node.right)
        return idx

    visit(root)
    return (np.array(feats, dtype=np.int32), np.array(cuts, dtype=np.float64),
            np.array(miss, dtype=bool), np.array(lefts, dtype=np.int32),
            np.array(rights, dtype=np.int32), np.array(values, dtype=np.float64))


def _eval_tree(tree_arrays, X: np.ndarray) -> np.ndarray:
    feats, cuts, miss, lefts, rights, values = tree_arrays
    n = X.shape[0]
    out = np.empty(n)
    stack = [(0, np.arange(n))]
    while stack:
        idx, rows = stack.pop()
        if feats[idx] < 0:
            out[rows] = values[idx]
            continue
        col = X[rows, feats[idx]]
        left = _route(col, cuts[idx], bool(miss[idx]))
        stack.append((int(lefts[idx]), rows[left]))
        stack.append((int(rights[idx]), rows[~left]))
    return out


class BartModel:
    """Immutable fitted model: one forest snapshot per kept iteration."""

    def __init__(self, forests, inclusion, offset: float, config: BartConfig,
                 n_features: int):
        self.forests = forests
        self._inclusion = inclusion
        self.offset = offset
        self.config = config
        self.n_features = n_features

    def predict_ppd(self, X: np.ndarray, chunk_size: int = 5000) -> np.ndarray:
        """Posterior predictive probabilities, shape (n_rows, n_kept_draws)."""
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise ValueError(
                f"feature mismatch: expected {self.n_features}, got {X.shape}")
        chunks = []
        for start in range(0, X.shape[0], chunk_size):
            chunk = X[start:start + chunk_size]
            latent = np.full((chunk.shape[0], len(self.forests)), self.offset)
            for d, forest in enumerate(self.forests):
                for tree_arrays in forest:
                    latent[:, d] += _eval_tree(tree_arrays, chunk)
            chunks.append(ndtr(latent))
        probs = np.vstack(chunks) if chunks else np.zeros((0, len(self.forests)))
        return np.clip(probs, _PROB_EPS, 1.0 - _PROB_EPS)

    def inclusion_counts(self) -> np.ndarray:
        """Internal-node split counts per feature over all kept forests."""
        return self._inclusion.copy()

    def inclusion_rates(self) -> np.ndarray:
        """Normalized inclusion rate per 10,000 total inclusions."""
        total = self._inclusion.sum()
        if total == 0:
            return np.zeros_like(self._inclusion, dtype=float)
        return self._inclusion / total * 10_000.0

    def save(self, path):
        payload = {
            "version": MODEL_FORMAT_VERSION,
            "offset": self.offset,
            "config": self.config,
            "n_features": self.n_features,
            "forests": self.forests,
            "inclusion": self._inclusion,
        }
        with open(path, "wb") as fh:
            pickle.dump(payload, fh)

    @classmethod
    def load(cls, path) -> "BartModel":
        with open(path, "rb") as fh:
            payload = pickle.load(fh)
        if payload.get("version") != MODEL_FORMAT_VERSION:
            raise ValueError(f"unsupported model format: {payload.get('version')}")
        return cls(payload["forests"], payload["inclusion"], payload["offset"],
                   payload["config"], payload["n_features"])


def fit_bart(X: np.ndarray, y: np.ndarray, config: BartConfig) -> BartModel:
    """Fit the sampler; deterministic given config.seed."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    if X.ndim != 2 or X.shape[0] == 0 or X.shape[1] == 0:
        raise ValueError("empty design matrix")
    if X.shape[0] != len(y):
        raise ValueError("X and y must align")
    if y.min() == y.max():
        raise ValueError("labels must include both classes")
    sampler = _Sampler(X, y.astype(np.int8), config)
    forests, inclusion = sampler.run()
    return BartModel(forests, inclusion, sampler.offset, config, X.shape[1])


class BartClassifier(BaseEstimator):
    """sklearn-style wrapper around the sampler."""

    def __init__(self, n_trees: int = 50, n_iterations: int = 2000,
                 n_burnin: int = 250, k: float = 2.0,
                 split_prior_alpha: float = 0.95, split_prior_beta: float = 2.0,
                 seed: int = 0):
        self.n_trees = n_trees
        self.n_iterations = n_iterations
        self.n_burnin = n_burnin
        self.k = k
        self.split_prior_alpha = split_prior_alpha
        self.split_prior_beta = split_prior_beta
        self.seed = seed

    def _config(self) -> BartConfig:
        return BartConfig(self.n_trees, self.n_iterations, self.n_burnin, self.k,
                          self.split_prior_alpha, self.split_prior_beta, self.seed)

    def fit(self, X, y):
        self.model_ = fit_bart(X, y, self._config())
        return self

    def predict_ppd(self, X, chunk_size: int = 5000) -> np.ndarray:
        return self.model_.predict_ppd(X, chunk_size=chunk_size)

    def predict_proba(self, X):
        mean = self.predict_ppd(X).mean(axis=1)
        return np.column_stack([1.0 - mean, mean])

    def predict(self, X):
        return (self.predict_proba(X)[:, 1] >= 0.5).astype(int)
