"""Classification metrics and the end-to-end strategy evaluation harness.

run_experiment executes: patient split -> fit encoders (train only) ->
transform -> fit forest (train) -> calibrate (calibration partition) ->
evaluate points and prediction sets (test) -> SHAP summary (test).  Reports
carry everything needed to reproduce the run and render the standard
comparison table.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence, Union

import numpy as np

from . import conformal, explain, forest as forest_mod, preprocess, sampling
from .cohort import Cohort
from .conformal import ConformalConfig, PredictionSet, SetEvaluation
from .forest import Forest, ForestHyperparams
from .preprocess import EncoderState, PreprocessOptions, SplitAssignment
from .sampling import DEFAULT_BOUNDARIES, RawSampleSet, SampleSet

REPORT_FORMAT_VERSION = 1


class EmptySegmentError(ValueError):
    """A partition of a strategy's sample set contains no rows."""


@dataclass(frozen=True)
class ClassStat:
    precision: float
    sensitivity: float
    f1: float
    tp: int
    fp: int
    tn: int
    fn: int
    degenerate: bool = False


@dataclass(frozen=True)
class ClassMetrics:
    per_class: dict[int, ClassStat]
    macro_f1: float

    def to_dict(self) -> dict:
        return {
            "per_class": {
                str(c): {
                    "precision": s.precision,
                    "sensitivity": s.sensitivity,
                    "f1": s.f1,
                    "tp": s.tp,
                    "fp": s.fp,
                    "tn": s.tn,
                    "fn": s.fn,
                    "degenerate": s.degenerate,
                }
                for c, s in self.per_class.items()
            },
            "macro_f1": self.macro_f1,
        }


def _safe_div(num: float, den: float) -> tuple[float, bool]:
    if den == 0:
        return 0.0, True
    return num / den, False


def compute_metrics(y_true: Sequence[int], y_pred: Sequence[int]) -> ClassMetrics:
    """Per-class precision/sensitivity/F1 and their unweighted macro mean.

    Division by zero (no predicted or no true members of a class) yields 0
    with the degenerate flag set, never an exception.
    """
    yt = np.asarray(y_true, dtype=int)
    yp = np.asarray(y_pred, dtype=int)
    if len(yt) != len(yp):
        raise ValueError("y_true and y_pred must align")
    if len(yt) == 0:
        raise ValueError("empty input")
    per_class: dict[int, ClassStat] = {}
    f1s = []
    for c in (0, 1):
        tp = int(((yt == c) & (yp == c)).sum())
        fp = int(((yt != c) & (yp == c)).sum())
        fn = int(((yt == c) & (yp != c)).sum())
        tn = int(((yt != c) & (yp != c)).sum())
        precision, deg_p = _safe_div(tp, tp + fp)
        sensitivity, deg_s = _safe_div(tp, tp + fn)
        f1, deg_f = _safe_div(2.0 * precision * sensitivity, precision + sensitivity)
        per_class[c] = ClassStat(
            precision=precision,
            sensitivity=sensitivity,
            f1=f1,
            tp=tp,
            fp=fp,
            tn=tn,
            fn=fn,
            degenerate=deg_p or deg_s or deg_f,
        )
        f1s.append(f1)
    return ClassMetrics(per_class=per_class, macro_f1=float(np.mean(f1s)))


@dataclass(frozen=True)
class StrategySpec:
    """Which sampling strategy to run and its parameters."""

    kind: str  # "iid" | "temporal" | "lagged"
    segment: int = 0
    k: int = 1
    boundaries: tuple[float, ...] = DEFAULT_BOUNDARIES

    def __post_init__(self) -> None:
        if self.kind not in ("iid", "temporal", "lagged"):
            raise ValueError(f"unknown strategy {self.kind!r}")

    @property
    def tag(self) -> str:
        if self.kind == "iid":
            return "iid"
        if self.kind == "temporal":
            return f"temporal:{self.segment}"
        return f"lagged:{self.k}"

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "segment": self.segment,
            "k": self.k,
            "boundaries": list(self.boundaries),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "StrategySpec":
        return cls(
            kind=d["kind"],
            segment=d.get("segment", 0),
            k=d.get("k", 1),
            boundaries=tuple(d.get("boundaries", DEFAULT_BOUNDARIES)),
        )


def build_raw_sample_set(cohort: Cohort, strategy: StrategySpec, feature_subset) -> RawSampleSet:
    if strategy.kind == "iid":
        return sampling.make_iid(cohort, feature_subset)
    if strategy.kind == "temporal":
        segments = sampling.make_temporal_segments(cohort, strategy.boundaries, feature_subset)
        if not 0 <= strategy.segment < len(segments):
            raise ValueError(f"segment {strategy.segment} out of range")
        return segments[strategy.segment]
    return sampling.make_lagged(cohort, strategy.k, feature_subset)


@dataclass(frozen=True)
class ExperimentReport:
    strategy_tag: str
    n_rows: int
    d_raw: int
    d_encoded: int
    metrics: ClassMetrics
    set_eval: SetEvaluation
    hyperparams: dict
    conformal: dict
    seeds: dict
    partition_sizes: dict
    clamped_count: int
    feature_subset: str
    oob_estimate: Optional[float] = None
    shap_top_features: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "format_version": REPORT_FORMAT_VERSION,
            "strategy_tag": self.strategy_tag,
            "N": self.n_rows,
            "d": self.d_raw,
            "d_encoded": self.d_encoded,
            "metrics": self.metrics.to_dict(),
            "coverage": {str(c): v for c, v in self.set_eval.coverage.items()},
            "mean_set_size": {str(c): v for c, v in self.set_eval.mean_set_size.items()},
            "marginal_coverage": self.set_eval.marginal_coverage,
            "hyperparams": self.hyperparams,
            "conformal": self.conformal,
            "seeds": self.seeds,
            "partition_sizes": self.partition_sizes,
            "clamped_count": self.clamped_count,
            "feature_subset": self.feature_subset,
            "oob_estimate": self.oob_estimate,
            "shap_top_features": list(self.shap_top_features),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    def digest(self) -> str:
        return hashlib.sha256(self.to_json().encode("utf-8")).hexdigest()


@dataclass
class ExperimentResult:
    report: ExperimentReport
    forest: Forest
    encoder: EncoderState
    threshold: conformal.CalibratedThreshold
    split: SplitAssignment
    summary: explain.SummaryData
    test_sets: list[PredictionSet]
    test_sample: SampleSet


def _partition_raw(
    raw: RawSampleSet, split: SplitAssignment
) -> tuple[RawSampleSet, RawSampleSet, RawSampleSet]:
    parts = []
    for ids in (split.train_ids, split.calib_ids, split.test_ids):
        idx = raw.rows_for_patients(ids)
        parts.append(raw.select(idx))
    return parts[0], parts[1], parts[2]


def run_experiment(
    cohort: Cohort,
    strategy: StrategySpec,
    feature_subset: Union[str, Sequence[str]] = "expert",
    hp: Optional[ForestHyperparams] = None,
    conformal_cfg: Optional[ConformalConfig] = None,
    split_seed: int = 0,
    *,
    preprocess_options: Optional[PreprocessOptions] = None,
    threads: int = 1,
    shap_max_rows: Optional[int] = None,
    split: Optional[SplitAssignment] = None,
) -> ExperimentResult:
    """One full train/calibrate/evaluate/explain pass; deterministic given seeds."""
    hp = hp or ForestHyperparams()
    conformal_cfg = conformal_cfg or ConformalConfig()
    preprocess_options = preprocess_options or PreprocessOptions()

    raw = build_raw_sample_set(cohort, strategy, feature_subset)
    split = split or preprocess.split_patients(cohort, seed=split_seed)
    raw_train, raw_calib, raw_test = _partition_raw(raw, split)
    for name, part in (("train", raw_train), ("calibration", raw_calib), ("test", raw_test)):
        if part.n_rows == 0:
            raise EmptySegmentError(
                f"{name} partition of strategy {strategy.tag} has no rows"
            )

    encoder = preprocess.fit_encoders(raw_train, cohort.schema, preprocess_options)
    train = preprocess.encode_sample_set(raw_train, encoder, cohort.schema)
    calib = preprocess.encode_sample_set(raw_calib, encoder, cohort.schema)
    test = preprocess.encode_sample_set(raw_test, encoder, cohort.schema)

    model = forest_mod.fit(
        train.X, train.y, hp, feature_names=encoder.layout, threads=threads
    )
    threshold = conformal.calibrate(model, calib.X, calib.y, conformal_cfg)

    y_pred = model.predict_matrix(test.X)
    metrics = compute_metrics(test.y, y_pred)

    proba = model.predict_proba_matrix(test.X)
    set_rng = np.random.default_rng([conformal_cfg.seed, 1])
    us = set_rng.random(len(test.y)) if conformal_cfg.randomized else np.zeros(len(test.y))
    sets = [
        conformal.set_from_probs(proba[i], threshold, conformal_cfg, us[i])
        for i in range(len(test.y))
    ]
    set_eval = conformal.evaluate_sets(sets, test.y)

    if shap_max_rows is not None and test.X.shape[0] > shap_max_rows:
        pick_rng = np.random.default_rng([split_seed, 7])
        pick = np.sort(pick_rng.choice(test.X.shape[0], size=shap_max_rows, replace=False))
        shap_X = test.X[pick]
    else:
        shap_X = test.X
    summary = explain.summarize(model, shap_X, encoder.layout)

    report = ExperimentReport(
        strategy_tag=strategy.tag,
        n_rows=raw.n_rows,
        d_raw=raw.n_columns,
        d_encoded=len(encoder.layout),
        metrics=metrics,
        set_eval=set_eval,
        hyperparams=hp.to_dict(),
        conformal=conformal_cfg.to_dict(),
        seeds={"split": split.seed, "forest": hp.seed, "conformal": conformal_cfg.seed,
               "preprocess": preprocess_options.seed},
        partition_sizes={
            "train": raw_train.n_rows,
            "calib": raw_calib.n_rows,
            "test": raw_test.n_rows,
        },
        clamped_count=raw.clamped_count,
        feature_subset=feature_subset if isinstance(feature_subset, str) else "custom",
        oob_estimate=model.oob_estimate,
        shap_top_features=tuple(name for name, _, _ in summary.rank_rows()[:10]),
    )
    return ExperimentResult(
        report=report,
        forest=model,
        encoder=encoder,
        threshold=threshold,
        split=split,
        summary=summary,
        test_sets=sets,
        test_sample=test,
    )


@dataclass(frozen=True)
class RunConfig:
    strategy: StrategySpec
    feature_subset: str = "expert"
    hp: ForestHyperparams = field(default_factory=ForestHyperparams)
    conformal_cfg: ConformalConfig = field(default_factory=ConformalConfig)


def compare_strategies(
    cohort: Cohort,
    runs: Sequence[RunConfig],
    split_seed: int = 0,
    *,
    threads: int = 1,
    shap_max_rows: Optional[int] = None,
) -> list[ExperimentReport]:
    """Run several strategies under one shared patient split.

    A temporal run expands into one report per segment so strategy effects
    stay comparable across the same held-out patients.
    """
    if not runs:
        raise ValueError("need at least one run config")
    split = preprocess.split_patients(cohort, seed=split_seed)
    reports: list[ExperimentReport] = []
    for rc in runs:
        if rc.strategy.kind == "temporal":
            segments = range(len(rc.strategy.boundaries))
            specs = [replace(rc.strategy, segment=s) for s in segments]
        else:
            specs = [rc.strategy]
        for spec in specs:
            result = run_experiment(
                cohort,
                spec,
                rc.feature_subset,
                rc.hp,
                rc.conformal_cfg,
                split_seed,
                threads=threads,
                shap_max_rows=shap_max_rows,
                split=split,
            )
            reports.append(result.report)
    return reports


def render_table(reports: Sequence[ExperimentReport]) -> str:
    """Plain-text comparison table (strategy rows, per-class metric columns)."""
    header = (
        f"{'Strategy':<14}{'N':>7}{'d':>5}  {'Class':<6}"
        f"{'Precision':>10}{'Sensitivity':>12}{'F1m':>8}{'Coverage':>10}{'Set size':>10}"
    )
    lines = [header, "-" * len(header)]
    for r in reports:
        for c in (0, 1):
            stat = r.metrics.per_class[c]
            lines.append(
                f"{r.strategy_tag if c == 0 else '':<14}"
                f"{r.n_rows if c == 0 else '':>7}"
                f"{r.d_raw if c == 0 else '':>5}  "
                f"{'TMJ' + str(c):<6}"
                f"{stat.precision:>10.3f}"
                f"{stat.sensitivity:>12.3f}"
                f"{f'{r.metrics.macro_f1:.4f}' if c == 0 else '':>8}"
                f"{r.set_eval.coverage[c]:>10.3f}"
                f"{r.set_eval.mean_set_size[c]:>10.3f}"
            )
    return "\n".join(lines)


def reports_to_json(reports: Sequence[ExperimentReport]) -> str:
    return json.dumps(
        {"format_version": REPORT_FORMAT_VERSION, "reports": [r.to_dict() for r in reports]},
        sort_keys=True,
        indent=2,
    )
