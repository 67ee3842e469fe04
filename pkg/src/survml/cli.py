"""Command-line entry point: ``survml {simulate,fit,predict,evaluate}``.

Every option can also come from a JSON ``--config`` file whose keys are the
option names with underscores (``outer_k``, ``censor_rate``, ...). Flags given
on the command line win over the file, and the file wins over the defaults.
The resolved configuration is printed to stdout and stored in every output.

Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .cox import CoxModel
from .dataset import (
    PreprocessRecipe,
    Schema,
    apply_preprocess,
    fit_preprocess,
    load_csv,
    transform_features,
    write_csv,
)
from .deephit import DiscreteTimeNet
from .errors import DimensionMismatch, DivergedLoss, SurvivalError
from .harness import MODEL_KINDS, default_grid, fit_model, format_table, monte_carlo
from .rsf import SurvivalForest
from .simulate import SCENARIOS, SimSpec, simulate_cohort

MODEL_CLASSES = {"cox": CoxModel, "rsf": SurvivalForest, "deephit": DiscreteTimeNet}

DEFAULTS = {
    "simulate": {
        "scenario": "linear", "seed": 0, "beta": None, "shape": 1.5, "scale": 60.0,
        "censor_rate": 0.3,
    },
    "fit": {"schema": None, "hp": None, "seed": 0, "drop_threshold": 0.9},
    "predict": {"schema": None, "horizons": None},
    "evaluate": {
        "schema": None, "grid": None, "outer_k": 5, "inner_k": 5, "reps": 100, "seed": 0,
        "jobs": 1, "group": "cohort", "drop_threshold": 0.9,
    },
}
REQUIRED = {
    "simulate": ("n", "p", "out"),
    "fit": ("model", "data", "out"),
    "predict": ("model_file", "data", "out"),
    "evaluate": ("model", "data", "out"),
}


def _floats(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def _json_value(text):
    """Inline JSON, or the path of a JSON file."""
    if not isinstance(text, str):
        return text
    stripped = text.lstrip()
    if stripped.startswith(("[", "{")):
        return json.loads(text)
    return json.loads(Path(text).read_text())


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="survml", description="Survival models under nested cross-validation.")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help_text):
        p = sub.add_parser(name, help=help_text, argument_default=argparse.SUPPRESS)
        p.add_argument("--config", help="JSON file of option values; flags override it")
        return p

    p = add("simulate", "write a synthetic cohort CSV and a truth JSON sidecar")
    p.add_argument("--n", type=int, help="number of subjects")
    p.add_argument("--p", type=int, help="number of covariates")
    p.add_argument("--scenario", choices=SCENARIOS)
    p.add_argument("--seed", type=int)
    p.add_argument("--beta", type=_floats, help="comma-separated coefficients")
    p.add_argument("--shape", type=float)
    p.add_argument("--scale", type=float)
    p.add_argument("--censor-rate", dest="censor_rate", type=float, help="target censored fraction")
    p.add_argument("--out", help="cohort CSV path; the sidecar is <stem>.truth.json")

    p = add("fit", "fit one model on a CSV and write it as JSON")
    p.add_argument("--model", choices=MODEL_KINDS)
    p.add_argument("--data")
    p.add_argument("--schema", help="schema JSON file")
    p.add_argument("--hp", help="hyperparameters as inline JSON or a JSON file")
    p.add_argument("--seed", type=int)
    p.add_argument("--drop-threshold", dest="drop_threshold", type=float)
    p.add_argument("--out")

    p = add("predict", "score a CSV with a fitted model")
    p.add_argument("--model-file", dest="model_file")
    p.add_argument("--data")
    p.add_argument("--schema", help="schema JSON file (defaults to the one stored with the model)")
    p.add_argument("--horizons", type=_floats, help="comma-separated times for cumulative hazard columns")
    p.add_argument("--out")

    p = add("evaluate", "Monte Carlo repeated nested cross-validation")
    p.add_argument("--model", choices=MODEL_KINDS)
    p.add_argument("--data")
    p.add_argument("--schema", help="schema JSON file")
    p.add_argument("--grid", help="hyperparameter grid as inline JSON or a JSON file")
    p.add_argument("--outer-k", dest="outer_k", type=int)
    p.add_argument("--inner-k", dest="inner_k", type=int)
    p.add_argument("--reps", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--jobs", type=int, help="parallel repetitions; results do not depend on it")
    p.add_argument("--group", help="row label in the summary table")
    p.add_argument("--drop-threshold", dest="drop_threshold", type=float)
    p.add_argument("--out", help="report JSON path; the table goes to <stem>.txt")
    return parser


def resolve_config(parser, argv) -> dict:
    args = vars(parser.parse_args(argv))
    command = args.pop("command")
    config = dict(DEFAULTS[command])
    path = args.pop("config", None)
    if path is not None:
        try:
            from_file = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            parser.error(f"cannot read --config {path}: {exc}")
        if not isinstance(from_file, dict):
            parser.error("--config must hold a JSON object")
        config.update({k.replace("-", "_"): v for k, v in from_file.items()})
    config.update(args)
    missing = [k for k in REQUIRED[command] if config.get(k) is None]
    if missing:
        parser.error(f"{command}: missing required option(s) " + ", ".join("--" + k.replace("_", "-") for k in missing))
    config["command"] = command
    return config


def _schema(config, stored=None) -> Schema:
    if config.get("schema"):
        return Schema.from_json(config["schema"])
    return Schema.from_dict(stored) if stored else Schema()


def cmd_simulate(config) -> None:
    spec = SimSpec(
        n=config["n"],
        p=config["p"],
        beta=None if config["beta"] is None else tuple(config["beta"]),
        scenario=config["scenario"],
        shape=config["shape"],
        scale=config["scale"],
        censor_rate_target=config["censor_rate"],
        seed=config["seed"],
    )
    cohort = simulate_cohort(spec)
    ds = cohort.dataset
    cols = {name: ds.features[:, j] for j, name in enumerate(ds.feature_names)}
    cols["time"] = ds.time
    cols["event"] = ds.event
    out = Path(config["out"])
    write_csv(out, cols)
    truth = dict(cohort.truth(), config=config)
    out.with_suffix(".truth.json").write_text(json.dumps(truth, indent=2) + "\n")


def cmd_fit(config) -> None:
    schema = _schema(config)
    table = load_csv(config["data"], schema)
    recipe = fit_preprocess(table, config["drop_threshold"])
    ds = apply_preprocess(table, recipe)
    hp = _json_value(config["hp"]) or {}
    model = fit_model(config["model"], ds, hp, config["seed"])
    doc = {
        "config": config,
        "schema": schema.to_dict(),
        "recipe": recipe.to_dict(),
        "model": model.to_dict(),
    }
    Path(config["out"]).write_text(json.dumps(doc) + "\n")


def load_model(path):
    doc = json.loads(Path(path).read_text())
    kind = doc["model"]["kind"]
    return MODEL_CLASSES[kind].from_dict(doc["model"]), PreprocessRecipe.from_dict(doc["recipe"]), doc


def cmd_predict(config) -> None:
    model, recipe, doc = load_model(config["model_file"])
    schema = _schema(config, doc.get("schema"))
    table = load_csv(config["data"], schema, require_outcome=False)
    given = table.feature_columns
    if len(given) != len(recipe.source_columns):
        raise DimensionMismatch(
            f"model expects {len(recipe.source_columns)} feature columns, file has {len(given)}"
        )
    x = transform_features(table, recipe)
    cols = {"risk": model.predict_risk(x)}
    if schema.time in table.columns:
        time = table.columns[schema.time]
        if np.all(np.isfinite(time)):
            cols["cumhaz_at_time"] = model.predict_cumhaz(x, time)
    for h in config["horizons"] or ():
        cols[f"cumhaz_at_{h:g}"] = model.predict_cumhaz(x, h)
    write_csv(config["out"], cols)


def cmd_evaluate(config) -> int:
    schema = _schema(config)
    table = load_csv(config["data"], schema)
    grid = _json_value(config["grid"])
    if grid is None:
        p = apply_preprocess(table, fit_preprocess(table, config["drop_threshold"])).p
        grid = default_grid(config["model"], p)
    if isinstance(grid, dict):
        grid = [grid]
    report = monte_carlo(
        config["model"],
        table,
        grid,
        repetitions=config["reps"],
        master_seed=config["seed"],
        outer_k=config["outer_k"],
        inner_k=config["inner_k"],
        drop_threshold=config["drop_threshold"],
        group=config["group"],
        n_jobs=config["jobs"],
    )
    out = Path(config["out"])
    doc = dict(report.to_dict(), config=config)
    out.write_text(json.dumps(doc, indent=2) + "\n")
    table_text = format_table([report])
    out.with_suffix(".txt").write_text(table_text)
    print(table_text, end="")
    if not report.complete:
        for r, rep in enumerate(report.errors):
            for f, err in enumerate(rep):
                if err is not None:
                    print(f"repetition {r} fold {f}: {err}", file=sys.stderr)
        return 1
    return 0


COMMANDS = {"simulate": cmd_simulate, "fit": cmd_fit, "predict": cmd_predict, "evaluate": cmd_evaluate}


def main(argv=None) -> int:
    parser = build_parser()
    config = resolve_config(parser, argv)  # exits with status 2 on usage errors
    print(json.dumps({"resolved_config": config}, sort_keys=True))
    try:
        status = COMMANDS[config["command"]](config)
    except (SurvivalError, DivergedLoss, OSError, ValueError, KeyError) as exc:
        print(f"survml {config['command']}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return status or 0
