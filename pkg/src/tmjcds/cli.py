"""Command-line entry point.

Commands: generate, train, evaluate, explain, export, plot-summary, serve.
JSON config files override built-in defaults; flags override the config.
Every command writes a run manifest next to its outputs with the resolved
parameters, seeds and paths needed to reproduce the run.

Exit codes: 0 success, 2 validation error, 3 I/O error, 4 internal invariant
violation.
"""

from __future__ import annotations

import argparse
import datetime
import json
import os
import sys
from dataclasses import replace
from typing import Optional

from . import __version__
from .cohort import CohortParseError, load_cohort, save_cohort
from .conformal import ConformalConfig
from .evaluate import (
    EmptySegmentError,
    StrategySpec,
    render_table,
    run_experiment,
)
from .explain import write_summary_csv
from .forest import ForestHyperparams
from .model import MissingLagBlockError, RequestValidationError, TrainedModel
from .preprocess import PreprocessOptions
from .sampling import export_sample_set_csv
from .schema import FeatureSchema, SchemaError, default_schema, load_schema
from .synthesis import (
    ExamCountSpec,
    InvalidConfigError,
    LabelDynamics,
    SynthesisConfig,
    generate_synthetic_cohort,
)

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_IO = 3
EXIT_INTERNAL = 4


class CliValidationError(ValueError):
    pass


def _load_config(path: Optional[str]) -> dict:
    if not path:
        return {}
    with open(path, "r", encoding="utf-8") as fh:
        cfg = json.load(fh)
    if not isinstance(cfg, dict):
        raise CliValidationError("config file must contain a JSON object")
    return cfg


def _write_manifest(out_dir: str, command: str, args: argparse.Namespace, params: dict,
                    inputs: list[str], outputs: list[str]) -> None:
    manifest = {
        "command": command,
        "config_file": args.config,
        "parameters": params,
        "seeds": {k: v for k, v in params.items() if "seed" in k},
        "inputs": inputs,
        "outputs": outputs,
        "tool_version": __version__,
        "created_at": datetime.datetime.now(datetime.timezone.utc).isoformat(),
    }
    path = os.path.join(out_dir, f"{command.replace('-', '_')}_manifest.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _synthesis_config(cfg: dict, seed: int) -> SynthesisConfig:
    preset = cfg.get("preset", "default")
    if preset == "default":
        base = SynthesisConfig.default(seed=seed)
    elif preset == "high-signal":
        base = SynthesisConfig.high_signal(seed=seed)
    elif preset == "no-signal":
        base = SynthesisConfig.no_signal(seed=seed)
    else:
        raise CliValidationError(f"unknown preset {preset!r} (field: preset)")
    updates: dict = {}
    if "n_patients" in cfg:
        updates["n_patients"] = int(cfg["n_patients"])
    if "female_fraction" in cfg:
        updates["female_fraction"] = float(cfg["female_fraction"])
    if "horizon_years" in cfg:
        updates["horizon_years"] = float(cfg["horizon_years"])
    if "side_correlation" in cfg:
        updates["side_correlation"] = float(cfg["side_correlation"])
    if "signal_spec" in cfg:
        updates["signal_spec"] = {str(k): float(v) for k, v in cfg["signal_spec"].items()}
    if "exams_per_patient" in cfg:
        e = cfg["exams_per_patient"]
        updates["exams_per_patient"] = ExamCountSpec(
            min=int(e.get("min", 2)), max=int(e.get("max", 17)),
            shape=float(e.get("shape", 1.0)),
        )
    if "label_dynamics" in cfg:
        ld = cfg["label_dynamics"]
        updates["label_dynamics"] = LabelDynamics(
            baseline_prevalence=float(ld.get("baseline_prevalence", 0.12)),
            onset_hazard_per_year=float(ld.get("onset_hazard_per_year", 0.05)),
            persistence=bool(ld.get("persistence", True)),
        )
    return replace(base, **updates) if updates else base


def _schema_from_args(args: argparse.Namespace) -> FeatureSchema:
    if getattr(args, "schema", None):
        return load_schema(args.schema)
    return default_schema()


def _strategy_from_args(args: argparse.Namespace) -> StrategySpec:
    return StrategySpec(kind=args.strategy, segment=args.segment, k=args.k)


def _hp_from_args(args: argparse.Namespace, seed: int) -> ForestHyperparams:
    mtry: object = args.mtry
    if isinstance(mtry, str) and mtry.isdigit():
        mtry = int(mtry)
    return ForestHyperparams(
        n_trees=args.trees,
        max_depth=args.max_depth,
        min_samples_leaf=args.min_samples_leaf,
        min_samples_split=args.min_samples_split,
        features_per_split=mtry,
        bootstrap=not args.no_bootstrap,
        seed=seed,
        class_weight=args.class_weight,
    )


def _conformal_from_args(args: argparse.Namespace, seed: int) -> ConformalConfig:
    return ConformalConfig(
        alpha=args.alpha,
        lambda_reg=args.lambda_reg,
        k_reg=args.k_reg,
        randomized=args.randomized,
        allow_empty_sets=args.allow_empty_sets,
        seed=seed,
    )


def cmd_generate(args: argparse.Namespace) -> int:
    cfg = _load_config(args.config)
    if args.preset:
        cfg["preset"] = args.preset
    syn = _synthesis_config(cfg, seed=args.seed)
    schema = _schema_from_args(args)
    cohort = generate_synthetic_cohort(syn, schema)
    os.makedirs(args.out_dir, exist_ok=True)
    out_path = os.path.join(args.out_dir, args.out)
    save_cohort(cohort, out_path)
    _write_manifest(
        args.out_dir, "generate", args,
        params={"preset": cfg.get("preset", "default"), "n_patients": syn.n_patients,
                "female_fraction": syn.female_fraction, "rng_seed": syn.rng_seed,
                "horizon_years": syn.horizon_years},
        inputs=[p for p in [args.config, args.schema] if p],
        outputs=[out_path],
    )
    print(f"wrote {cohort.n_records} records for {len(cohort.patients)} patients to {out_path}")
    return EXIT_OK


def _train_pipeline(args: argparse.Namespace):
    schema = _schema_from_args(args)
    cohort = load_cohort(args.cohort, schema)
    strategy = _strategy_from_args(args)
    hp = _hp_from_args(args, seed=args.seed)
    ccfg = _conformal_from_args(args, seed=args.seed)
    result = run_experiment(
        cohort,
        strategy,
        args.features,
        hp,
        ccfg,
        split_seed=args.split_seed,
        preprocess_options=PreprocessOptions(seed=args.seed),
        threads=args.threads,
        shap_max_rows=args.shap_max_rows or None,
    )
    return schema, cohort, strategy, result


def cmd_train(args: argparse.Namespace) -> int:
    schema, cohort, strategy, result = _train_pipeline(args)
    os.makedirs(args.out_dir, exist_ok=True)
    model = TrainedModel.from_experiment(result, strategy, args.features, schema)
    model_path = os.path.join(args.out_dir, "model.json")
    report_path = os.path.join(args.out_dir, "report.json")
    rank_path = os.path.join(args.out_dir, "shap_summary.csv")
    cloud_path = os.path.join(args.out_dir, "shap_points.csv")
    model.save(model_path)
    with open(report_path, "w", encoding="utf-8") as fh:
        fh.write(result.report.to_json())
        fh.write("\n")
    write_summary_csv(result.summary, rank_path, cloud_path)
    _write_manifest(
        args.out_dir, "train", args,
        params={
            "strategy": strategy.to_dict(), "features": args.features,
            "hyperparams": result.report.hyperparams, "conformal": result.report.conformal,
            "split_seed": args.split_seed, "seed": args.seed, "threads": args.threads,
        },
        inputs=[p for p in [args.cohort, args.config, args.schema] if p],
        outputs=[model_path, report_path, rank_path, cloud_path],
    )
    print(render_table([result.report]))
    print(f"model written to {model_path}")
    return EXIT_OK


def cmd_evaluate(args: argparse.Namespace) -> int:
    model = TrainedModel.load(args.model)
    cohort = load_cohort(args.cohort, model.schema)
    result = run_experiment(
        cohort,
        model.strategy,
        model.feature_subset,
        ForestHyperparams.from_dict(model.forest.hyperparams.to_dict()),
        model.conformal_cfg,
        split_seed=model.split_seed,
        threads=args.threads,
        shap_max_rows=args.shap_max_rows or None,
    )
    os.makedirs(args.out_dir, exist_ok=True)
    report_path = os.path.join(args.out_dir, "evaluation_report.json")
    with open(report_path, "w", encoding="utf-8") as fh:
        fh.write(result.report.to_json())
        fh.write("\n")
    _write_manifest(
        args.out_dir, "evaluate", args,
        params={"model": args.model, "split_seed": model.split_seed},
        inputs=[args.model, args.cohort],
        outputs=[report_path],
    )
    print(render_table([result.report]))
    return EXIT_OK


def cmd_explain(args: argparse.Namespace) -> int:
    model = TrainedModel.load(args.model)
    if args.row_file:
        with open(args.row_file, "r", encoding="utf-8") as fh:
            request = json.load(fh)
    else:
        request = json.loads(args.row_json)
    report = model.predict_request(
        values=request.get("values", {}),
        gender=request.get("gender", ""),
        age_years=request.get("age_years", 0.0),
        previous_exams=request.get("previous_exams"),
    )
    os.makedirs(args.out_dir, exist_ok=True)
    out_path = os.path.join(args.out_dir, "attribution.json")
    with open(out_path, "w", encoding="utf-8") as fh:
        json.dump(report.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    _write_manifest(
        args.out_dir, "explain", args,
        params={"model": args.model},
        inputs=[p for p in [args.model, args.row_file] if p],
        outputs=[out_path],
    )
    print(json.dumps(report.to_dict(), indent=2, sort_keys=True))
    return EXIT_OK


def cmd_export(args: argparse.Namespace) -> int:
    from .evaluate import build_raw_sample_set
    from .preprocess import encode_sample_set, fit_encoders

    schema = _schema_from_args(args)
    cohort = load_cohort(args.cohort, schema)
    strategy = _strategy_from_args(args)
    raw = build_raw_sample_set(cohort, strategy, args.features)
    if raw.n_rows == 0:
        raise CliValidationError("strategy produced no rows to export")
    # exploratory export: encoders are fitted on the exported rows themselves
    encoder = fit_encoders(raw, schema, PreprocessOptions(seed=args.seed))
    sample = encode_sample_set(raw, encoder, schema)
    os.makedirs(args.out_dir, exist_ok=True)
    out_path = os.path.join(args.out_dir, args.out)
    export_sample_set_csv(sample, out_path)
    _write_manifest(
        args.out_dir, "export", args,
        params={"strategy": strategy.to_dict(), "features": args.features, "seed": args.seed},
        inputs=[args.cohort],
        outputs=[out_path],
    )
    print(f"wrote {sample.X.shape[0]} x {sample.X.shape[1]} design matrix to {out_path}")
    return EXIT_OK


def cmd_plot_summary(args: argparse.Namespace) -> int:
    import csv

    per_feature: dict[str, list[tuple[float, float]]] = {}
    with open(args.summary, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != ["feature", "row_index", "shap_value", "feature_value"]:
            raise CliValidationError(
                "expected the long-form summary CSV (feature,row_index,shap_value,feature_value)"
            )
        for row in reader:
            per_feature.setdefault(row["feature"], []).append(
                (float(row["shap_value"]), float(row["feature_value"]))
            )
    if not per_feature:
        raise CliValidationError("summary CSV contains no data points")

    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    import numpy as np

    ranked = sorted(
        per_feature.items(), key=lambda kv: -float(np.mean(np.abs([p[0] for p in kv[1]])))
    )
    if args.top:
        ranked = ranked[: args.top]
    fig, ax = plt.subplots(figsize=(8, max(3, 0.35 * len(ranked))))
    rng = np.random.default_rng(0)
    for pos, (name, points) in enumerate(reversed(ranked)):
        shap_vals = np.array([p[0] for p in points])
        feat_vals = np.array([p[1] for p in points])
        spread = feat_vals.max() - feat_vals.min()
        colors = (feat_vals - feat_vals.min()) / (spread if spread > 0 else 1.0)
        jitter = rng.uniform(-0.3, 0.3, size=len(points))
        ax.scatter(shap_vals, pos + jitter, c=colors, cmap="coolwarm", s=8, alpha=0.8)
    ax.set_yticks(range(len(ranked)))
    ax.set_yticklabels([name for name, _ in reversed(ranked)])
    ax.axvline(0.0, color="grey", linewidth=0.8)
    ax.set_xlabel("attribution to TMJ involvement probability")
    fig.tight_layout()
    fig.savefig(args.out, dpi=150)
    print(f"wrote {args.out}")
    return EXIT_OK


def cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from .service import create_app

    app = create_app(model_path=args.model, alpha_override=args.alpha_override)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tmjcds",
        description="TMJ involvement classification: cohorts, training, explanation, serving",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--seed", type=int, default=0, help="master RNG seed")
        p.add_argument("--threads", type=int, default=1, help="worker thread cap")
        p.add_argument("--config", default=None, help="JSON config file")
        p.add_argument("--out-dir", default=".", help="output directory")
        p.add_argument("--schema", default=None, help="schema JSON (default: shipped)")

    p = sub.add_parser("generate", help="write a synthetic cohort CSV")
    common(p)
    p.add_argument("--out", default="cohort.csv")
    p.add_argument("--preset", choices=["default", "high-signal", "no-signal"], default=None)
    p.set_defaults(func=cmd_generate)

    def strategy_flags(p: argparse.ArgumentParser) -> None:
        p.add_argument("--strategy", choices=["iid", "temporal", "lagged"], default="iid")
        p.add_argument("--segment", type=int, default=0, help="temporal segment index")
        p.add_argument("--k", type=int, default=1, help="lag count for the lagged strategy")
        p.add_argument("--features", default="expert", help="expert | all")

    def hp_flags(p: argparse.ArgumentParser) -> None:
        p.add_argument("--trees", type=int, default=500)
        p.add_argument("--max-depth", type=int, default=None)
        p.add_argument("--min-samples-leaf", type=int, default=1)
        p.add_argument("--min-samples-split", type=int, default=2)
        p.add_argument("--mtry", default="sqrt", help="sqrt | log2 | all | <int>")
        p.add_argument("--no-bootstrap", action="store_true")
        p.add_argument("--class-weight", choices=["uniform", "balanced"], default="uniform")
        p.add_argument("--alpha", type=float, default=0.1)
        p.add_argument("--lambda", dest="lambda_reg", type=float, default=0.01)
        p.add_argument("--k-reg", type=int, default=1)
        p.add_argument("--randomized", action="store_true")
        p.add_argument("--allow-empty-sets", action="store_true")
        p.add_argument("--split-seed", type=int, default=0)
        p.add_argument(
            "--shap-max-rows", type=int, default=200,
            help="cap on test rows explained in the summary (0 = all rows)",
        )

    p = sub.add_parser("train", help="train + calibrate a model on a cohort CSV")
    common(p)
    p.add_argument("--cohort", required=True)
    strategy_flags(p)
    hp_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="re-evaluate a model on its held-out split")
    common(p)
    p.add_argument("--model", required=True)
    p.add_argument("--cohort", required=True)
    p.add_argument(
        "--shap-max-rows", type=int, default=200,
        help="cap on test rows explained in the summary (0 = all rows)",
    )
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("explain", help="attribution for one examination")
    common(p)
    p.add_argument("--model", required=True)
    p.add_argument("--row-file", default=None, help="JSON request file")
    p.add_argument("--row-json", default=None, help="inline JSON request")
    p.set_defaults(func=cmd_explain)

    p = sub.add_parser("export", help="export a strategy's design matrix as CSV")
    common(p)
    p.add_argument("--cohort", required=True)
    strategy_flags(p)
    p.add_argument("--out", default="sample_set.csv")
    p.set_defaults(func=cmd_export)

    p = sub.add_parser("plot-summary", help="render the SHAP summary chart")
    common(p)
    p.add_argument("--summary", required=True, help="long-form shap_points.csv")
    p.add_argument("--out", default="shap_summary.png")
    p.add_argument("--top", type=int, default=20)
    p.set_defaults(func=cmd_plot_summary)

    p = sub.add_parser("serve", help="serve a trained model over HTTP")
    common(p)
    p.add_argument("--model", required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--alpha-override", type=float, default=None)
    p.set_defaults(func=cmd_serve)
    return parser


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "explain" and not (args.row_file or args.row_json):
        parser.error("explain requires --row-file or --row-json")
    try:
        return args.func(args)
    except (
        CliValidationError,
        InvalidConfigError,
        SchemaError,
        CohortParseError,
        EmptySegmentError,
        RequestValidationError,
        MissingLagBlockError,
        json.JSONDecodeError,
        ValueError,
    ) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except Exception as exc:  # pragma: no cover - internal invariant breaches
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
