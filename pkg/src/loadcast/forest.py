"""Random forest regression with impurity-based feature importances.

Trees split on exact thresholds by scanning sorted feature values with
cumulative sums, using variance as the impurity. Importance of a
feature in one tree is its summed weighted impurity decrease,
normalised per tree; the forest importance is the average over trees,
renormalised to sum to one. A forest that never splits (for example
max_depth 0) reports all-zero importances rather than dividing by
zero.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class _Node:
    feature: int = -1
    threshold: float = 0.0
    left: int = -1
    right: int = -1
    value: float = 0.0


class DecisionTreeRegressor:
    def __init__(self, max_depth: int = 12, min_samples_split: int = 2,
                 min_samples_leaf: int = 1, max_features: int | None = None) -> None:
        self.max_depth = max_depth
        self.min_samples_split = min_samples_split
        self.min_samples_leaf = min_samples_leaf
        self.max_features = max_features
        self.nodes: list[_Node] = []
        self.importances_: np.ndarray | None = None

    def _best_split(self, x_col: np.ndarray, y: np.ndarray):
        """Best (threshold, sse) for one feature, or None."""
        n = len(y)
        order = np.argsort(x_col, kind="stable")
        xs = x_col[order]
        ys = y[order]
        cum = np.cumsum(ys)
        cum_sq = np.cumsum(ys * ys)
        total = cum[-1]
        total_sq = cum_sq[-1]

        lo = self.min_samples_leaf - 1
        hi = n - self.min_samples_leaf
        if hi <= lo:
            return None
        idx = np.arange(lo, hi)
        distinct = xs[idx] < xs[idx + 1]
        if not distinct.any():
            return None
        idx = idx[distinct]
        n_left = (idx + 1).astype(np.float64)
        n_right = n - n_left
        sse = (
            cum_sq[idx] - cum[idx] ** 2 / n_left
            + (total_sq - cum_sq[idx]) - (total - cum[idx]) ** 2 / n_right
        )
        best = int(np.argmin(sse))
        pos = idx[best]
        threshold = 0.5 * (xs[pos] + xs[pos + 1])
        if threshold >= xs[pos + 1]:  # midpoint rounded up between adjacent floats
            threshold = xs[pos]
        return threshold, float(sse[best])

    def fit(self, X: np.ndarray, y: np.ndarray, rng: np.random.Generator) -> "DecisionTreeRegressor":
        n, n_features = X.shape
        mtry = self.max_features or n_features
        self.nodes = []
        importance = np.zeros(n_features)

        def node_sse(target):
            return float(np.sum(target * target) - target.sum() ** 2 / len(target))

        # (sample indices, depth, parent node slot, is_left)
        stack: list[tuple[np.ndarray, int, int, bool]] = [(np.arange(n), 0, -1, False)]
        while stack:
            rows, depth, parent, is_left = stack.pop()
            target = y[rows]
            node_id = len(self.nodes)
            node = _Node(value=float(target.mean()))
            self.nodes.append(node)
            if parent >= 0:
                if is_left:
                    self.nodes[parent].left = node_id
                else:
                    self.nodes[parent].right = node_id

            parent_sse = node_sse(target)
            if (
                depth >= self.max_depth
                or len(rows) < self.min_samples_split
                or parent_sse <= 1e-12
            ):
                continue

            feats = rng.choice(n_features, size=min(mtry, n_features), replace=False)
            best_feature = -1
            best_threshold = 0.0
            best_sse = np.inf
            for feat in feats:
                found = self._best_split(X[rows, feat], target)
                if found is not None and found[1] < best_sse:
                    best_threshold, best_sse = found
                    best_feature = int(feat)
            if best_feature < 0 or parent_sse - best_sse <= 1e-12:
                continue

            node.feature = best_feature
            node.threshold = best_threshold
            importance[best_feature] += parent_sse - best_sse
            mask = X[rows, best_feature] <= best_threshold
            # Right pushed first so the left child is materialised next,
            # keeping node numbering deterministic.
            stack.append((rows[~mask], depth + 1, node_id, False))
            stack.append((rows[mask], depth + 1, node_id, True))

        total = importance.sum()
        self.importances_ = importance / total if total > 0 else importance
        return self

    def predict(self, X: np.ndarray) -> np.ndarray:
        out = np.empty(len(X))
        stack = [(0, np.arange(len(X)))]
        while stack:
            node_id, rows = stack.pop()
            if len(rows) == 0:
                continue
            node = self.nodes[node_id]
            if node.feature < 0:
                out[rows] = node.value
                continue
            mask = X[rows, node.feature] <= node.threshold
            stack.append((node.left, rows[mask]))
            stack.append((node.right, rows[~mask]))
        return out


@dataclass
class ForestConfig:
    n_trees: int = 100
    max_depth: int = 12
    min_samples_split: int = 10
    min_samples_leaf: int = 5
    bootstrap: bool = True
    max_rows: int | None = 8000  # seeded row cap keeping fits desk-scale
    seed: int = 0


class RandomForestRegressor:
    """Bagged regression trees with sqrt-of-features split candidates."""

    def __init__(self, config: ForestConfig | None = None) -> None:
        self.config = config or ForestConfig()
        self.trees: list[DecisionTreeRegressor] = []
        self.importances_: np.ndarray | None = None

    def fit(self, X: np.ndarray, y: np.ndarray) -> "RandomForestRegressor":
        cfg = self.config
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        rng = np.random.default_rng(cfg.seed)
        if cfg.max_rows is not None and len(X) > cfg.max_rows:
            keep = rng.choice(len(X), size=cfg.max_rows, replace=False)
            X, y = X[keep], y[keep]

        n, n_features = X.shape
        mtry = max(1, int(np.sqrt(n_features)))
        self.trees = []
        stacked = np.zeros(n_features)
        split_trees = 0
        for _ in range(cfg.n_trees):
            rows = rng.integers(0, n, size=n) if cfg.bootstrap else np.arange(n)
            tree = DecisionTreeRegressor(
                max_depth=cfg.max_depth,
                min_samples_split=cfg.min_samples_split,
                min_samples_leaf=cfg.min_samples_leaf,
                max_features=mtry,
            )
            tree.fit(X[rows], y[rows], rng)
            self.trees.append(tree)
            if tree.importances_.sum() > 0:
                stacked += tree.importances_
                split_trees += 1
        self.importances_ = stacked / stacked.sum() if stacked.sum() > 0 else stacked
        return self

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        preds = np.zeros(len(X))
        for tree in self.trees:
            preds += tree.predict(X)
        return preds / len(self.trees)
