import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from survml.cli import main
from survml.cox import fit_cox
from survml.dataset import Schema, apply_preprocess, fit_preprocess, load_csv
from survml.metrics import calibration_alpha


def read_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return {k: np.array([float(r[k]) for r in rows]) for k in rows[0]}


@pytest.fixture
def cohort_csv(tmp_path):
    path = tmp_path / "cohort.csv"
    assert main(["simulate", "--n", "200", "--p", "4", "--seed", "7", "--out", str(path)]) == 0
    return path


def test_simulate_writes_cohort_and_sidecar(tmp_path, capsys):
    out = tmp_path / "c.csv"
    assert main(["simulate", "--n", "600", "--p", "10", "--scenario", "linear", "--seed", "7", "--out", str(out)]) == 0
    cols = read_csv(out)
    assert len(cols) == 12 and cols["time"].size == 600
    truth = json.loads(out.with_suffix(".truth.json").read_text())
    assert truth["spec"]["n"] == 600 and truth["config"]["seed"] == 7
    assert '"resolved_config"' in capsys.readouterr().out


def test_simulate_is_byte_identical(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    for path in (a, b):
        main(["simulate", "--n", "50", "--p", "3", "--seed", "1", "--out", str(path)])
    assert a.read_bytes() == b.read_bytes()


def test_missing_n_is_usage_error(tmp_path):
    with pytest.raises(SystemExit) as exc:
        main(["simulate", "--p", "3", "--out", str(tmp_path / "x.csv")])
    assert exc.value.code == 2


def test_invalid_spec_is_runtime_error(tmp_path):
    assert main(["simulate", "--n", "10", "--p", "3", "--shape", "-1", "--out", str(tmp_path / "x.csv")]) == 1


def test_config_file_and_flag_precedence(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"n": 40, "p": 2, "seed": 3, "out": str(tmp_path / "c.csv")}))
    assert main(["simulate", "--config", str(cfg), "--seed", "5"]) == 0
    echoed = json.loads(capsys.readouterr().out.splitlines()[0])["resolved_config"]
    assert echoed["n"] == 40 and echoed["seed"] == 5
    assert read_csv(tmp_path / "c.csv")["time"].size == 40


def test_module_entry_point(tmp_path):
    out = tmp_path / "c.csv"
    run = subprocess.run(
        [sys.executable, "-m", "survml", "simulate", "--n", "20", "--p", "2", "--out", str(out)],
        capture_output=True, text=True,
    )
    assert run.returncode == 0, run.stderr
    assert out.exists()


def test_fit_predict_matches_in_process_fit(tmp_path, cohort_csv):
    model = tmp_path / "m.json"
    preds = tmp_path / "p.csv"
    assert main(["fit", "--model", "cox", "--data", str(cohort_csv), "--out", str(model)]) == 0
    assert main(["predict", "--model-file", str(model), "--data", str(cohort_csv), "--horizons", "10,30",
                 "--out", str(preds)]) == 0
    cols = read_csv(preds)
    table = load_csv(cohort_csv, Schema())
    ds = apply_preprocess(table, fit_preprocess(table))
    ref = fit_cox(ds)
    np.testing.assert_array_equal(cols["risk"], ref.predict_risk(ds.features))
    np.testing.assert_array_equal(cols["cumhaz_at_30"], ref.predict_cumhaz(ds.features, 30.0))
    # Breslow identity survives the round trip through files
    assert calibration_alpha(ds.time, ds.event, cols["cumhaz_at_time"]).alpha == pytest.approx(1.0, abs=1e-6)


@pytest.mark.parametrize("kind,hp", [("rsf", '{"n_trees": 3}'), ("deephit", '{"epochs": 10, "nodes": 4}')])
def test_fit_predict_other_models(tmp_path, cohort_csv, kind, hp):
    model, preds = tmp_path / "m.json", tmp_path / "p.csv"
    assert main(["fit", "--model", kind, "--hp", hp, "--data", str(cohort_csv), "--out", str(model)]) == 0
    assert main(["predict", "--model-file", str(model), "--data", str(cohort_csv), "--out", str(preds)]) == 0
    assert read_csv(preds)["risk"].size == 200


def test_predict_wrong_feature_count(tmp_path, cohort_csv, capsys):
    model = tmp_path / "m.json"
    main(["fit", "--model", "cox", "--data", str(cohort_csv), "--out", str(model)])
    narrow = tmp_path / "narrow.csv"
    narrow.write_text("x1,x2\n0.1,0.2\n")
    assert main(["predict", "--model-file", str(model), "--data", str(narrow), "--out", str(tmp_path / "p.csv")]) == 1
    assert "DimensionMismatch" in capsys.readouterr().err


def test_evaluate_report(tmp_path, cohort_csv, capsys):
    out = tmp_path / "report.json"
    args = ["evaluate", "--model", "cox", "--data", str(cohort_csv), "--reps", "2", "--outer-k", "3",
            "--inner-k", "2", "--seed", "1", "--out", str(out)]
    assert main(args) == 0
    report = json.loads(out.read_text())
    raw = report["raw"]["c_index"]
    assert len(raw) == 2 and all(len(r) == 3 for r in raw)
    assert report["grid"] == [{}]  # Cox is not tuned
    per_rep = [np.mean(r) for r in raw]
    assert report["aggregate"]["c_index_mean"] == np.mean(per_rep)
    assert report["aggregate"]["c_index_sd"] == np.std(per_rep, ddof=1)
    assert "cohort (Cox PH)" in out.with_suffix(".txt").read_text()
    assert "cohort (Cox PH)" in capsys.readouterr().out


def test_evaluate_jobs_do_not_change_results(tmp_path, cohort_csv):
    outs = []
    for jobs in ("1", "2"):
        out = tmp_path / f"r{jobs}.json"
        main(["evaluate", "--model", "rsf", "--grid", '[{"n_trees": 3, "mtry": 2}]', "--data", str(cohort_csv),
              "--reps", "2", "--outer-k", "2", "--inner-k", "2", "--jobs", jobs, "--out", str(out)])
        outs.append(json.loads(out.read_text())["raw"])
    assert outs[0] == outs[1]


def test_evaluate_failure_exit_code(tmp_path, cohort_csv, capsys):
    out = tmp_path / "r.json"
    code = main(["evaluate", "--model", "rsf", "--grid", '[{"mtry": 99}]', "--data", str(cohort_csv),
                 "--reps", "1", "--outer-k", "2", "--inner-k", "2", "--out", str(out)])
    assert code == 1
    assert "fold 0" in capsys.readouterr().err
    assert json.loads(out.read_text())["aggregate"]["complete"] is False
