"""Nested cross-validation with Monte Carlo repetition.

Every outer fold fits its preprocessing recipe and tunes hyperparameters on
its own training rows only; inner folds do the same within those rows. All
randomness is derived from one master seed through
:func:`derive_seed`, so results do not depend on execution order.
"""

from __future__ import annotations

import itertools
import json
import time as _time
from dataclasses import dataclass, field

import numpy as np

from .cox import fit_cox
from .dataset import RawTable, SurvivalDataset, apply_preprocess, fit_preprocess
from .deephit import DeepHitParams, fit_deephit
from .errors import AllFitsFailed, DivergedLoss, InvalidK, SurvivalError
from .metrics import c_index, calibration_alpha
from .rsf import fit_rsf

MODEL_KINDS = ("cox", "rsf", "deephit")
MODEL_LABELS = {"cox": "Cox PH", "rsf": "SRF", "deephit": "SNN"}
SD_DEFINITION = "sample sd (ddof=1) of per-repetition outer-fold means; 0 when repetitions == 1"

# Errors that mark a single fit as failed instead of aborting the run.
FIT_ERRORS = (SurvivalError, DivergedLoss, ArithmeticError, np.linalg.LinAlgError)


def derive_seed(*keys: int) -> int:
    """Deterministic 63-bit seed for a work unit identified by ``keys``."""
    state = np.random.SeedSequence([int(k) for k in keys]).generate_state(2, np.uint32)
    return int((int(state[0]) << 31) ^ int(state[1]))


def rsf_grid(p: int, mtry=range(1, 21), min_node_size=(10, 20, 30, 40, 50), n_trees=1000) -> list:
    """Forest grid; ``mtry`` values above ``p`` are dropped."""
    return [
        {"mtry": m, "min_node_size": s, "n_trees": n_trees}
        for m, s in itertools.product(mtry, min_node_size)
        if m <= p
    ]


def deephit_grid(
    nodes=(32,),
    epochs=(100,),
    learning_rate=(0.001, 0.01),
    activation=("relu",),
    optimizer=("adam",),
    patience=(10,),
    **fixed,
) -> list:
    keys = ("nodes", "epochs", "learning_rate", "activation", "optimizer", "patience")
    combos = itertools.product(nodes, epochs, learning_rate, activation, optimizer, patience)
    return [dict(zip(keys, c), **fixed) for c in combos]


def default_grid(kind: str, p: int) -> list:
    if kind == "cox":
        return [{}]
    if kind == "rsf":
        return rsf_grid(p)
    if kind == "deephit":
        return deephit_grid()
    raise ValueError(f"unknown model kind {kind!r}")


def fit_model(kind: str, data: SurvivalDataset, params: dict, seed: int):
    if kind == "cox":
        return fit_cox(data, **params)
    if kind == "rsf":
        return fit_rsf(data, seed=seed, **params)
    if kind == "deephit":
        return fit_deephit(data, DeepHitParams.from_dict(params), seed)
    raise ValueError(f"unknown model kind {kind!r}")


def score_model(model, data: SurvivalDataset) -> tuple[float, float]:
    """Held-out C-index and calibration alpha of a fitted model."""
    c = c_index(data.time, data.event, model.predict_risk(data.features)).c_index
    h = model.predict_cumhaz(data.features, data.time)
    return c, calibration_alpha(data.time, data.event, h).alpha


def stratified_folds(labels, k: int, seed: int) -> np.ndarray:
    """Fold id per subject; each stratum is shuffled and dealt round-robin.

    The dealing position carries over between strata, so fold sizes differ by
    at most one overall and within every stratum.
    """
    labels = np.asarray(labels)
    n = labels.size
    if k < 2 or k > n:
        raise InvalidK(f"k must lie in [2, n={n}], got {k}")
    rng = np.random.default_rng(seed)
    folds = np.empty(n, dtype=np.intp)
    start = 0
    for label in np.unique(labels):
        members = rng.permutation(np.flatnonzero(labels == label))
        folds[members] = (start + np.arange(members.size)) % k
        start = (start + members.size) % k
    return folds


def _as_table(data) -> RawTable:
    return data if isinstance(data, RawTable) else RawTable.from_dataset(data)


def _prepare(table: RawTable, train_rows, test_rows, drop_threshold):
    train = table.take(train_rows)
    recipe = fit_preprocess(train, drop_threshold)
    return apply_preprocess(train, recipe), apply_preprocess(table.take(test_rows), recipe), recipe


@dataclass
class TuneResult:
    best: dict
    mean_scores: list
    errors: dict = field(default_factory=dict)


def tune_inner(
    kind: str,
    train,
    grid: list,
    k: int = 5,
    seed: int = 0,
    drop_threshold: float = 0.9,
) -> TuneResult:
    """Pick the grid point with the highest mean inner-validation C-index.

    A grid point that fails on any inner fold is ineligible. Ties go to the
    earliest grid entry. A single-entry grid is returned without fitting.
    """
    if not grid:
        raise ValueError("grid must be nonempty")
    if len(grid) == 1:
        return TuneResult(dict(grid[0]), [None])
    table = _as_table(train)
    folds = stratified_folds(table.event_indicator(), k, seed)
    splits = []
    for f in range(k):
        try:
            splits.append(
                _prepare(table, np.flatnonzero(folds != f), np.flatnonzero(folds == f), drop_threshold)
            )
        except FIT_ERRORS as exc:
            splits.append(exc)

    means, errors = [], {}
    for gi, params in enumerate(grid):
        scores = []
        for f, split in enumerate(splits):
            try:
                if isinstance(split, Exception):
                    raise split
                fit_ds, val_ds, _ = split
                model = fit_model(kind, fit_ds, params, derive_seed(seed, f))
                scores.append(
                    c_index(val_ds.time, val_ds.event, model.predict_risk(val_ds.features)).c_index
                )
            except FIT_ERRORS as exc:
                errors[gi] = f"fold {f}: {type(exc).__name__}: {exc}"
                break
        means.append(float(np.mean(scores)) if gi not in errors else None)

    valid = [(m, -gi) for gi, m in enumerate(means) if m is not None]
    if not valid:
        raise AllFitsFailed(f"every grid point failed: {errors}")
    best_gi = -max(valid)[1]
    return TuneResult(dict(grid[best_gi]), means, errors)


@dataclass
class FoldResult:
    fold: int
    test_idx: tuple
    c_index: float | None
    alpha: float | None
    params: dict | None
    inner_scores: list | None = None
    error: str | None = None
    recipe: object = None
    model: object = None


def nested_cv(
    kind: str,
    data,
    grid: list,
    outer_k: int = 5,
    inner_k: int = 5,
    seed: int = 0,
    drop_threshold: float = 0.9,
    keep_models: bool = False,
) -> list[FoldResult]:
    """Outer-fold C-index and alpha with preprocessing and tuning nested inside."""
    if inner_k < 2:
        raise InvalidK(f"inner_k must be >= 2, got {inner_k}")
    table = _as_table(data)
    folds = stratified_folds(table.event_indicator(), outer_k, derive_seed(seed, 0))
    results = []
    for f in range(outer_k):
        train_rows, test_rows = np.flatnonzero(folds != f), np.flatnonzero(folds == f)
        res = FoldResult(f, tuple(test_rows.tolist()), None, None, None)
        try:
            train_ds, test_ds, recipe = _prepare(table, train_rows, test_rows, drop_threshold)
            res.recipe = recipe if keep_models else None
            tuned = tune_inner(
                kind, table.take(train_rows), grid, inner_k, derive_seed(seed, 1, f), drop_threshold
            )
            res.params, res.inner_scores = tuned.best, tuned.mean_scores
            model = fit_model(kind, train_ds, tuned.best, derive_seed(seed, 2, f))
            res.model = model if keep_models else None
            res.c_index, res.alpha = score_model(model, test_ds)
        except FIT_ERRORS as exc:
            res.error = f"{type(exc).__name__}: {exc}"
        results.append(res)
    return results


def _mean_sd(values) -> tuple[float, float]:
    arr = np.asarray(values, dtype=float)
    arr = arr[np.isfinite(arr)]
    if arr.size == 0:
        return float("nan"), float("nan")
    sd = float(np.std(arr, ddof=1)) if arr.size > 1 else 0.0
    return float(np.mean(arr)), sd


def _fold_mean(values) -> float:
    ok = [v for v in values if v is not None]
    return float(np.mean(ok)) if ok else float("nan")


@dataclass
class EvalReport:
    """Raw per-fold values and their aggregates for one (group, model) cell."""

    model_kind: str
    group: str
    master_seed: int
    outer_k: int
    inner_k: int
    rep_seeds: list
    c_index: list  # [repetition][outer fold], None where the fold failed
    alpha: list
    params: list
    errors: list
    grid: list
    timing_s: float = field(default=0.0, compare=False)

    @property
    def repetitions(self) -> int:
        return len(self.rep_seeds)

    @property
    def rep_c_index(self) -> list:
        return [_fold_mean(r) for r in self.c_index]

    @property
    def rep_alpha(self) -> list:
        return [_fold_mean(r) for r in self.alpha]

    @property
    def c_index_mean_sd(self) -> tuple[float, float]:
        return _mean_sd(self.rep_c_index)

    @property
    def alpha_mean_sd(self) -> tuple[float, float]:
        return _mean_sd(self.rep_alpha)

    @property
    def complete(self) -> bool:
        return all(e is None for rep in self.errors for e in rep)

    def to_dict(self) -> dict:
        c_mean, c_sd = self.c_index_mean_sd
        a_mean, a_sd = self.alpha_mean_sd
        return {
            "model_kind": self.model_kind,
            "group": self.group,
            "master_seed": self.master_seed,
            "repetitions": self.repetitions,
            "outer_k": self.outer_k,
            "inner_k": self.inner_k,
            "rep_seeds": self.rep_seeds,
            "grid": self.grid,
            "raw": {
                "c_index": self.c_index,
                "alpha": self.alpha,
                "params": self.params,
                "errors": self.errors,
            },
            "per_repetition": {"c_index": self.rep_c_index, "alpha": self.rep_alpha},
            "aggregate": {
                "c_index_mean": c_mean,
                "c_index_sd": c_sd,
                "alpha_mean": a_mean,
                "alpha_sd": a_sd,
                "sd_definition": SD_DEFINITION,
                "complete": self.complete,
            },
            "timing_s": self.timing_s,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        raw = d["raw"]
        return cls(
            d["model_kind"], d["group"], d["master_seed"], d["outer_k"], d["inner_k"],
            d["rep_seeds"], raw["c_index"], raw["alpha"], raw["params"], raw["errors"],
            d["grid"], d.get("timing_s", 0.0),
        )

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, allow_nan=True)


def _run_repetition(kind, data, grid, outer_k, inner_k, seed, drop_threshold):
    return nested_cv(kind, data, grid, outer_k, inner_k, seed, drop_threshold)


def monte_carlo(
    kind: str,
    data,
    grid: list,
    repetitions: int = 100,
    master_seed: int = 0,
    outer_k: int = 5,
    inner_k: int = 5,
    drop_threshold: float = 0.9,
    group: str = "cohort",
    n_jobs: int = 1,
) -> EvalReport:
    """Repeat :func:`nested_cv` under seeds derived from ``(master_seed, repetition)``."""
    if repetitions < 1:
        raise ValueError(f"repetitions must be >= 1, got {repetitions}")
    seeds = [derive_seed(master_seed, r) for r in range(repetitions)]
    args = (kind, data, grid, outer_k, inner_k)
    started = _time.perf_counter()
    if n_jobs == 1:
        runs = [_run_repetition(*args, s, drop_threshold) for s in seeds]
    else:
        from joblib import Parallel, delayed

        runs = Parallel(n_jobs=n_jobs)(
            delayed(_run_repetition)(*args, s, drop_threshold) for s in seeds
        )
    return EvalReport(
        model_kind=kind,
        group=group,
        master_seed=master_seed,
        outer_k=outer_k,
        inner_k=inner_k,
        rep_seeds=seeds,
        c_index=[[r.c_index for r in run] for run in runs],
        alpha=[[r.alpha for r in run] for run in runs],
        params=[[r.params for r in run] for run in runs],
        errors=[[r.error for r in run] for run in runs],
        grid=[dict(g) for g in grid],
        timing_s=_time.perf_counter() - started,
    )


def _cell(mean: float, sd: float) -> str:
    return f"{mean:.2f}({sd:.2f})"


def format_table(reports) -> str:
    """Plain-text table: one row per (group, model), mean(sd) per metric."""
    rows = [("Group (Model)", "Mean C-index (sd)", "Mean Calibration (sd)")]
    for rep in reports:
        label = MODEL_LABELS.get(rep.model_kind, rep.model_kind)
        rows.append(
            (f"{rep.group} ({label})", _cell(*rep.c_index_mean_sd), _cell(*rep.alpha_mean_sd))
        )
    widths = [max(len(r[i]) for r in rows) for i in range(3)]
    return "\n".join("  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() for r in rows) + "\n"
