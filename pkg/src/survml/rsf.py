"""Random survival forest: bagged log-rank trees with Nelson-Aalen leaves."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import SurvivalDataset
from .errors import DimensionMismatch, InvalidHyperparameter, NoEvents
from .estimators import CumulativeHazardCurve, nelson_aalen

# Relative slack under which two split scores count as tied.
TIE_RTOL = 1e-10


@dataclass(frozen=True)
class Split:
    feature: int
    threshold: float
    statistic: float


@dataclass(frozen=True, eq=False)
class SurvivalTree:
    """Array-encoded binary tree; ``feature[i] == -1`` marks a leaf.

    Rows with ``x[feature] <= threshold`` go left. ``leaf[i]`` indexes
    ``curves`` for leaf nodes; ``mortality[l]`` is the mean of leaf ``l``'s
    curve over the forest's training event times.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    leaf: np.ndarray
    curves: tuple
    leaf_sizes: tuple
    mortality: np.ndarray

    @property
    def n_leaves(self) -> int:
        return len(self.curves)

    def apply(self, x: np.ndarray) -> np.ndarray:
        """Leaf index (into ``curves``) reached by each row of ``x``."""
        node = np.zeros(x.shape[0], dtype=np.intp)
        while True:
            f = self.feature[node]
            inner = f >= 0
            if not inner.any():
                return self.leaf[node]
            rows = np.flatnonzero(inner)
            go_left = x[rows, f[rows]] <= self.threshold[node[rows]]
            node[rows] = np.where(go_left, self.left[node[rows]], self.right[node[rows]])

    def cumhaz(self, x: np.ndarray, t: np.ndarray) -> np.ndarray:
        leaves = self.apply(x)
        out = np.empty(x.shape[0])
        for lf in np.unique(leaves):
            rows = leaves == lf
            out[rows] = self.curves[lf](t[rows])
        return out

    def to_dict(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "leaf": self.leaf.tolist(),
            "curves": [c.to_dict() for c in self.curves],
            "leaf_sizes": list(self.leaf_sizes),
            "mortality": self.mortality.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SurvivalTree":
        return cls(
            np.asarray(d["feature"], np.intp),
            np.asarray(d["threshold"], float),
            np.asarray(d["left"], np.intp),
            np.asarray(d["right"], np.intp),
            np.asarray(d["leaf"], np.intp),
            tuple(CumulativeHazardCurve.from_dict(c) for c in d["curves"]),
            tuple(d["leaf_sizes"]),
            np.asarray(d["mortality"], float),
        )


@dataclass(frozen=True, eq=False)
class SurvivalForest:
    trees: tuple
    mtry: int
    min_node_size: int
    seed: int
    p: int
    horizon: float

    kind = "rsf"

    @property
    def n_trees(self) -> int:
        return len(self.trees)

    def _rows(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        rows = x.reshape(1, -1) if x.ndim == 1 else x
        if rows.ndim != 2 or rows.shape[1] != self.p:
            raise DimensionMismatch(f"expected rows of length {self.p}, got shape {x.shape}")
        return rows

    def predict_cumhaz(self, x, t) -> np.ndarray:
        """Mean over trees of the leaf cumulative hazard at ``t`` (scalar or per row)."""
        rows = self._rows(x)
        t = np.broadcast_to(np.asarray(t, dtype=float), (rows.shape[0],))
        total = np.zeros(rows.shape[0])
        for tree in self.trees:
            total += tree.cumhaz(rows, t)
        return total / self.n_trees

    def predict_risk(self, x, horizon: float | None = None) -> np.ndarray:
        """Ensemble mortality, or the ensemble cumulative hazard at ``horizon`` if given.

        Mortality is the ensemble cumulative hazard averaged over the distinct
        training event times.
        """
        if horizon is not None:
            if not horizon > 0:
                raise ValueError("horizon must be positive")
            return self.predict_cumhaz(x, horizon)
        rows = self._rows(x)
        total = np.zeros(rows.shape[0])
        for tree in self.trees:
            total += tree.mortality[tree.apply(rows)]
        return total / self.n_trees

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "mtry": self.mtry,
            "min_node_size": self.min_node_size,
            "seed": self.seed,
            "p": self.p,
            "horizon": self.horizon,
            "trees": [t.to_dict() for t in self.trees],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SurvivalForest":
        return cls(
            tuple(SurvivalTree.from_dict(t) for t in d["trees"]),
            int(d["mtry"]),
            int(d["min_node_size"]),
            int(d["seed"]),
            int(d["p"]),
            float(d["horizon"]),
        )


def best_split(x, time, event, features, min_node_size) -> Split | None:
    """Highest log-rank (feature, midpoint threshold) over ``features``.

    Every candidate leaves at least ``min_node_size`` subjects on each side.
    Ties go to the lowest feature index, then the lowest threshold.
    """
    m = time.size
    event = event.astype(bool)
    u = np.unique(time[event])
    if u.size == 0:
        return None
    at_risk = time[:, None] >= u[None, :]
    dies = (time[:, None] == u[None, :]) & event[:, None]
    y = at_risk.sum(axis=0).astype(float)
    d = dies.sum(axis=0).astype(float)
    keep = y > 1
    if not keep.any():
        return None
    at_risk, dies, y, d = at_risk[:, keep], dies[:, keep], y[keep], d[keep]
    expected_rate = d / y
    var_scale = d * (y - d) / (y - 1.0)

    best = None
    lo, hi = min_node_size, m - min_node_size  # allowed left-child sizes
    if lo > hi:
        return None
    for f in sorted(features):
        xf = x[:, f]
        order = np.argsort(xf, kind="stable")
        xs = xf[order]
        sizes = np.arange(lo, hi + 1)
        sizes = sizes[xs[sizes - 1] < xs[sizes]]
        if sizes.size == 0:
            continue
        y1 = np.cumsum(at_risk[order[: sizes[-1]]], axis=0, dtype=float)[sizes - 1]
        d1 = np.cumsum(dies[order[: sizes[-1]]], axis=0, dtype=float)[sizes - 1]
        frac = y1 / y
        var = (var_scale * frac * (1.0 - frac)).sum(axis=1)
        diff = (d1 - y1 * expected_rate).sum(axis=1)
        ok = var > 0
        if not ok.any():
            continue
        stat = np.zeros(sizes.size)
        stat[ok] = np.abs(diff[ok]) / np.sqrt(var[ok])
        top = stat[ok].max()
        k = int(np.flatnonzero(ok & (stat >= top - TIE_RTOL * max(top, 1.0)))[0])
        if best is None or top > best.statistic + TIE_RTOL * max(best.statistic, 1.0):
            s = sizes[k]
            best = Split(int(f), float(0.5 * (xs[s - 1] + xs[s])), float(stat[k]))
    return best


def _leaf_curve(time, event) -> CumulativeHazardCurve:
    if not event.any():
        return CumulativeHazardCurve.zero()
    return nelson_aalen(time, event)


def grow_tree(x, time, event, mtry, min_node_size, rng, mortality_grid=None) -> SurvivalTree:
    """Grow one tree depth-first on the given (already bootstrapped) sample."""
    p = x.shape[1]
    grid = np.unique(time[event.astype(bool)]) if mortality_grid is None else mortality_grid
    if grid.size == 0:
        grid = np.array([time.max()])
    feature, threshold, left, right, leaf = [], [], [], [], []
    curves, sizes = [], []

    def new_node():
        feature.append(-1)
        threshold.append(np.nan)
        left.append(-1)
        right.append(-1)
        leaf.append(-1)
        return len(feature) - 1

    stack = [(new_node(), np.arange(time.size))]
    while stack:
        node, idx = stack.pop()
        t, e = time[idx], event[idx]
        split = None
        if idx.size >= 2 * min_node_size and e.sum() >= 2:
            feats = rng.choice(p, size=mtry, replace=False)
            split = best_split(x[idx], t, e, feats, min_node_size)
        if split is None:
            leaf[node] = len(curves)
            curves.append(_leaf_curve(t, e.astype(bool)))
            sizes.append(int(idx.size))
            continue
        go_left = x[idx, split.feature] <= split.threshold
        feature[node] = split.feature
        threshold[node] = split.threshold
        left[node], right[node] = new_node(), new_node()
        # push right first so the left subtree is numbered first
        stack.append((right[node], idx[~go_left]))
        stack.append((left[node], idx[go_left]))

    return SurvivalTree(
        np.asarray(feature, np.intp),
        np.asarray(threshold, float),
        np.asarray(left, np.intp),
        np.asarray(right, np.intp),
        np.asarray(leaf, np.intp),
        tuple(curves),
        tuple(sizes),
        np.array([c(grid).mean() for c in curves]),
    )


def _tree_task(x, time, event, mtry, min_node_size, seed_seq, bootstrap):
    rng = np.random.default_rng(seed_seq)
    n = time.size
    rows = rng.integers(0, n, size=n) if bootstrap else np.arange(n)
    grid = np.unique(time[event.astype(bool)])
    return grow_tree(x[rows], time[rows], event[rows], mtry, min_node_size, rng, grid)


def fit_rsf(
    data: SurvivalDataset,
    mtry: int | None = None,
    min_node_size: int = 10,
    n_trees: int = 1000,
    seed: int = 0,
    bootstrap: bool = True,
    n_jobs: int = 1,
) -> SurvivalForest:
    """Fit a forest; tree ``i`` draws from its own seed spawned off ``seed``.

    ``mtry`` defaults to ``ceil(sqrt(p))``. ``bootstrap=False`` grows every
    tree on the full sample (used to test split selection).
    """
    p = data.p
    if mtry is None:
        mtry = int(np.ceil(np.sqrt(p)))
    if not 1 <= mtry <= p:
        raise InvalidHyperparameter(f"mtry must lie in [1, {p}], got {mtry}")
    if min_node_size < 2:
        raise InvalidHyperparameter(f"min_node_size must be >= 2, got {min_node_size}")
    if n_trees < 1:
        raise InvalidHyperparameter(f"n_trees must be >= 1, got {n_trees}")
    if not data.event.any():
        raise NoEvents("forest fitting needs at least one event")

    seeds = np.random.SeedSequence(seed).spawn(n_trees)
    args = (data.features, data.time, data.event, mtry, min_node_size)
    if n_jobs == 1:
        trees = [_tree_task(*args, s, bootstrap) for s in seeds]
    else:
        from joblib import Parallel, delayed

        trees = Parallel(n_jobs=n_jobs)(delayed(_tree_task)(*args, s, bootstrap) for s in seeds)
    return SurvivalForest(tuple(trees), mtry, min_node_size, seed, p, float(data.time.max()))


def rsf_cumhaz(forest: SurvivalForest, x, t):
    out = forest.predict_cumhaz(x, t)
    return float(out[0]) if np.asarray(x).ndim == 1 else out


def rsf_risk_score(forest: SurvivalForest, x, horizon: float | None = None):
    """Ensemble mortality by default; ensemble cumulative hazard at ``horizon`` if given."""
    out = forest.predict_risk(x, horizon)
    return float(out[0]) if np.asarray(x).ndim == 1 else out
