import json

import numpy as np
import pytest

from survml.dataset import RawTable, Schema
from survml.errors import AllFitsFailed, InvalidK
from survml.harness import (
    EvalReport,
    derive_seed,
    format_table,
    monte_carlo,
    nested_cv,
    rsf_grid,
    stratified_folds,
    tune_inner,
)
from survml.simulate import SimSpec, simulate_cohort

SMALL_RSF = [{"mtry": 2, "min_node_size": 10, "n_trees": 5}]
SMALL_DEEPHIT = [{"nodes": 8, "epochs": 10, "bins": 5}]


def cohort(n=200, p=4, seed=0):
    return simulate_cohort(SimSpec(n=n, p=p, seed=seed)).dataset


def table_with_gaps(n=150, seed=0):
    """Simulated cohort with missing numeric cells and a nominal column."""
    ds = cohort(n, 3, seed)
    rng = np.random.default_rng(seed)
    cols = {name: ds.features[:, j].copy() for j, name in enumerate(ds.feature_names)}
    cols["x2"][rng.random(n) < 0.15] = np.nan
    cols["site"] = np.array(rng.choice(["a", "b", "c"], size=n), dtype=object)
    cols["time"] = ds.time.copy()
    cols["event"] = np.array([str(int(e)) for e in ds.event], dtype=object)
    return RawTable(cols, Schema(nominal=("site",)))


def test_divisible_stratified_folds():
    labels = np.array([1] * 30 + [0] * 70)
    folds = stratified_folds(labels, 5, seed=3)
    for f in range(5):
        assert labels[folds == f].sum() == 6
        assert (folds == f).sum() == 20


def test_single_event_stratum():
    labels = np.array([1] + [0] * 9)
    folds = stratified_folds(labels, 5, seed=0)
    assert np.bincount(folds).tolist() == [2] * 5
    assert np.unique(folds[labels == 1]).size == 1


def test_folds_partition_and_stratify_on_random_configurations():
    rng = np.random.default_rng(0)
    for _ in range(100):
        n = int(rng.integers(10, 300))
        k = int(rng.integers(2, 11))
        labels = (rng.random(n) < rng.uniform(0.05, 0.95)).astype(int)
        folds = stratified_folds(labels, k, int(rng.integers(1 << 30)))
        assert folds.min() >= 0 and folds.max() < k  # every index in exactly one fold
        sizes = np.bincount(folds, minlength=k)
        assert sizes.max() - sizes.min() <= 1
        events = np.bincount(folds, weights=labels, minlength=k)
        assert np.all(np.abs(events - sizes * labels.mean()) <= 1)


def test_invalid_k():
    with pytest.raises(InvalidK):
        stratified_folds([0, 1, 0], 1, 0)
    with pytest.raises(InvalidK):
        stratified_folds([0, 1, 0], 4, 0)


def test_derive_seed_is_stable_and_distinct():
    assert derive_seed(1, 2) == derive_seed(1, 2)
    assert len({derive_seed(0, r) for r in range(100)}) == 100
    assert derive_seed(1, 2) != derive_seed(2, 1)


def test_rsf_grid_drops_large_mtry():
    grid = rsf_grid(3)
    assert {g["mtry"] for g in grid} == {1, 2, 3}
    assert len(grid) == 15 and all(g["n_trees"] == 1000 for g in grid)


def test_singleton_grid_returned_without_search():
    res = tune_inner("cox", cohort(), [{"ridge": 0.5}])
    assert res.best == {"ridge": 0.5}
    assert res.mean_scores == [None]


def test_duplicate_grid_entry_same_choice():
    ds = cohort(150)
    grid = [{"mtry": 1, "min_node_size": 10, "n_trees": 5}, {"mtry": 4, "min_node_size": 20, "n_trees": 5}]
    a = tune_inner("rsf", ds, grid, seed=2)
    b = tune_inner("rsf", ds, grid + [dict(grid[1]), dict(grid[0])], seed=2)
    assert a.best == b.best
    assert b.mean_scores[:2] == a.mean_scores


def test_all_points_failing():
    with pytest.raises(AllFitsFailed):
        tune_inner("rsf", cohort(), [{"mtry": 9}, {"mtry": 0}])


def test_informative_mtry_selected():
    grid = [{"mtry": 1, "min_node_size": 10, "n_trees": 5}, {"mtry": 5, "min_node_size": 10, "n_trees": 5}]
    wins = 0
    for r in range(100):
        ds = simulate_cohort(SimSpec(n=150, p=5, beta=(2.0, 0, 0, 0, 0), seed=1000 + r)).dataset
        wins += tune_inner("rsf", ds, grid, k=5, seed=r).best["mtry"] == 5
    assert wins >= 90


def test_outer_folds_partition_data():
    ds = cohort(120)
    results = nested_cv("cox", ds, [{}], outer_k=4, inner_k=3, seed=1)
    idx = np.concatenate([r.test_idx for r in results])
    assert np.array_equal(np.sort(idx), np.arange(ds.n))
    assert all(r.error is None for r in results)


def test_fold_failure_is_recorded():
    ds = cohort(60)
    results = nested_cv("rsf", ds, [{"mtry": 99}], outer_k=3, inner_k=2)
    assert all(r.c_index is None and "InvalidHyperparameter" in r.error for r in results)


def predictions(model, table, recipe):
    from survml.dataset import apply_preprocess

    ds = apply_preprocess(table, recipe)
    return model.predict_risk(ds.features), model.predict_cumhaz(ds.features, 20.0)


@pytest.mark.parametrize(
    "kind,grid",
    [("cox", [{}]), ("rsf", SMALL_RSF + [{"mtry": 1, "min_node_size": 20, "n_trees": 5}]), ("deephit", SMALL_DEEPHIT)],
)
@pytest.mark.filterwarnings("ignore::RuntimeWarning")  # scoring the absurd mutated rows
def test_test_rows_do_not_leak(kind, grid):
    table = table_with_gaps()
    base = nested_cv(kind, table, grid, outer_k=3, inner_k=3, seed=4, keep_models=True)
    probe = table.take(np.arange(20))
    for res in base:
        rows = np.array(res.test_idx)
        mutated = table
        for col in ("x1", "x2", "x3"):
            values = table.columns[col].copy()
            values[rows] = 1e3 + np.arange(rows.size)
            mutated = mutated.replace(col, values)
        site = table.columns["site"].copy()
        site[rows] = "z"
        mutated = mutated.replace("site", site)
        again = nested_cv(kind, mutated, grid, outer_k=3, inner_k=3, seed=4, keep_models=True)[res.fold]
        assert again.test_idx == res.test_idx
        assert again.recipe == res.recipe
        assert again.params == res.params
        for u, v in zip(predictions(res.model, probe, res.recipe), predictions(again.model, probe, again.recipe)):
            np.testing.assert_array_equal(u, v)


def test_single_repetition():
    ds = cohort(100)
    rep = monte_carlo("cox", ds, [{}], repetitions=1, master_seed=3, outer_k=3, inner_k=2)
    folds = nested_cv("cox", ds, [{}], outer_k=3, inner_k=2, seed=derive_seed(3, 0))
    assert rep.c_index_mean_sd == (np.mean([f.c_index for f in folds]), 0.0)


def test_monte_carlo_reproducible_and_self_auditing():
    ds = cohort(100)
    kwargs = dict(repetitions=4, master_seed=9, outer_k=3, inner_k=2)
    a = monte_carlo("rsf", ds, SMALL_RSF, **kwargs)
    b = monte_carlo("rsf", ds, SMALL_RSF, **kwargs)
    c = monte_carlo("rsf", ds, SMALL_RSF, n_jobs=2, **kwargs)
    assert a == b == c
    per_rep = [np.mean(r) for r in a.c_index]
    assert a.c_index_mean_sd == (np.mean(per_rep), np.std(per_rep, ddof=1))
    per_rep_alpha = [np.mean(r) for r in a.alpha]
    assert a.alpha_mean_sd == (np.mean(per_rep_alpha), np.std(per_rep_alpha, ddof=1))
    assert a.complete


def test_report_json_round_trip(tmp_path):
    rep = monte_carlo("cox", cohort(90), [{}], repetitions=2, outer_k=3, inner_k=2)
    rep.to_json(tmp_path / "r.json")
    d = json.loads((tmp_path / "r.json").read_text())
    again = EvalReport.from_dict(d)
    assert again == rep
    assert d["aggregate"]["c_index_sd"] == rep.c_index_mean_sd[1]
    assert "ddof=1" in d["aggregate"]["sd_definition"]


def test_table_layout():
    rep = monte_carlo("cox", cohort(90), [{}], repetitions=2, outer_k=3, inner_k=2, group="MCI")
    lines = format_table([rep]).splitlines()
    assert lines[0].split("  ")[0] == "Group (Model)"
    assert "Mean C-index (sd)" in lines[0] and "Mean Calibration (sd)" in lines[0]
    assert lines[1].startswith("MCI (Cox PH)")
    mean, sd = rep.c_index_mean_sd
    assert f"{mean:.2f}(" in lines[1]
