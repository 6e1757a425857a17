"""Serializable bundle of everything a deployed predictor needs.

One TrainedModel file holds the schema, the fitted encoder state, the forest,
and the conformal threshold, so a single artifact fully determines responses.
It also implements the single-examination prediction path shared by the CLI
and the HTTP service: request validation, transform, probabilities,
prediction set and attribution.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from typing import Optional

from . import __version__ as TOOL_VERSION
from . import conformal, explain
from .conformal import CalibratedThreshold, ConformalConfig, PredictionSet
from .evaluate import ExperimentResult, StrategySpec
from .forest import Forest
from .preprocess import EncoderState
from .sampling import RawRow, resolve_feature_subset
from .schema import FeatureSchema, Label

MODEL_FORMAT_VERSION = 1


class RequestValidationError(ValueError):
    """Invalid prediction request; carries field-level messages."""

    def __init__(self, errors: list[dict]):
        self.errors = errors
        super().__init__("; ".join(e["message"] for e in errors))


class MissingLagBlockError(ValueError):
    def __init__(self, required: int, got: int):
        self.required = required
        self.got = got
        super().__init__(f"model requires {required} previous exam(s), got {got}")


@dataclass(frozen=True)
class PredictionReport:
    probabilities: tuple[float, float]
    point_label: Label
    prediction_set: PredictionSet
    alpha: float
    attributions: list[dict]  # {feature, shap_value, raw_value}
    base_value: float
    model_info: dict

    def to_dict(self) -> dict:
        return {
            "probabilities": {"TMJ0": self.probabilities[0], "TMJ1": self.probabilities[1]},
            "point_label": self.point_label.name,
            "prediction_set": [lbl.name for lbl in self.prediction_set.labels],
            "set_size": self.prediction_set.set_size,
            "alpha": self.alpha,
            "attributions": self.attributions,
            "base_value": self.base_value,
            "model_info": self.model_info,
        }


@dataclass
class TrainedModel:
    strategy: StrategySpec
    feature_subset: str
    schema: FeatureSchema
    encoder: EncoderState
    forest: Forest
    conformal_cfg: ConformalConfig
    threshold: CalibratedThreshold
    split_seed: int
    train_report_digest: str
    tool_version: str = TOOL_VERSION

    @property
    def lag_count(self) -> int:
        return self.strategy.k if self.strategy.kind == "lagged" else 0

    @property
    def schema_hash(self) -> str:
        return self.schema.content_hash()

    def model_info(self) -> dict:
        return {
            "strategy": self.strategy.tag,
            "feature_subset": self.feature_subset,
            "d": len(self.encoder.layout),
            "d_raw": len(self.encoder.columns),
            "alpha": self.conformal_cfg.alpha,
            "lambda_reg": self.conformal_cfg.lambda_reg,
            "k_reg": self.conformal_cfg.k_reg,
            "schema_hash": self.schema_hash,
            "train_report_digest": self.train_report_digest,
            "previous_exams_required": self.lag_count,
            "version": self.tool_version,
        }

    # --- persistence -------------------------------------------------------

    def to_json(self) -> str:
        tau = self.threshold.tau_hat
        doc = {
            "format_version": MODEL_FORMAT_VERSION,
            "tool_version": self.tool_version,
            "strategy": self.strategy.to_dict(),
            "feature_subset": self.feature_subset,
            "schema": json.loads(self.schema.to_json()),
            "schema_hash": self.schema_hash,
            "encoder": json.loads(self.encoder.to_json()),
            "forest": json.loads(self.forest.to_json()),
            "conformal": {
                "config": self.conformal_cfg.to_dict(),
                "tau_hat": None if math.isinf(tau) else tau,
                "capped": math.isinf(tau),
                "n_calib": self.threshold.n_calib,
                "score_definition_version": self.threshold.score_definition_version,
            },
            "split_seed": self.split_seed,
            "train_report_digest": self.train_report_digest,
        }
        return json.dumps(doc, sort_keys=True)

    def save(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_json())
            fh.write("\n")

    @classmethod
    def from_json(cls, text: str) -> "TrainedModel":
        doc = json.loads(text)
        if doc["format_version"] != MODEL_FORMAT_VERSION:
            raise ValueError(f"unsupported model format {doc['format_version']}")
        con = doc["conformal"]
        threshold = CalibratedThreshold(
            tau_hat=math.inf if con["capped"] else float(con["tau_hat"]),
            n_calib=con["n_calib"],
            score_definition_version=con["score_definition_version"],
        )
        return cls(
            strategy=StrategySpec.from_dict(doc["strategy"]),
            feature_subset=doc["feature_subset"],
            schema=FeatureSchema.from_json(json.dumps(doc["schema"])),
            encoder=EncoderState.from_json(json.dumps(doc["encoder"])),
            forest=Forest.from_json(json.dumps(doc["forest"])),
            conformal_cfg=ConformalConfig.from_dict(con["config"]),
            threshold=threshold,
            split_seed=doc["split_seed"],
            train_report_digest=doc["train_report_digest"],
            tool_version=doc["tool_version"],
        )

    @classmethod
    def load(cls, path: str) -> "TrainedModel":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_json(fh.read())

    @classmethod
    def from_experiment(
        cls, result: ExperimentResult, strategy: StrategySpec, feature_subset: str,
        schema: FeatureSchema,
    ) -> "TrainedModel":
        return cls(
            strategy=strategy,
            feature_subset=feature_subset,
            schema=schema,
            encoder=result.encoder,
            forest=result.forest,
            conformal_cfg=ConformalConfig.from_dict(result.report.conformal),
            threshold=result.threshold,
            split_seed=result.split.seed,
            train_report_digest=result.report.digest(),
        )

    # --- request validation + prediction ------------------------------------

    def _parse_block(self, values: dict, errors: list[dict], block: int) -> dict:
        subset = set(resolve_feature_subset(self.schema, self.feature_subset))
        parsed: dict[str, object] = {}
        for name, raw in values.items():
            spec = self.schema.get(name)
            where = f"previous_exams[{block - 1}]." if block else ""
            if spec is None:
                errors.append(
                    {"feature": f"{where}{name}", "message": f"unknown feature {name!r}"}
                )
                continue
            if name not in subset:
                errors.append(
                    {"feature": f"{where}{name}",
                     "message": f"feature {name!r} is not part of this model"}
                )
                continue
            value: object = raw
            try:
                if spec.kind in ("binary", "ordinal"):
                    value = int(raw)  # type: ignore[arg-type]
                elif spec.kind == "continuous":
                    value = float(raw)  # type: ignore[arg-type]
                else:
                    value = str(raw)
                spec.validate_value(value)
            except (TypeError, ValueError) as exc:
                errors.append({"feature": f"{where}{name}", "message": str(exc)})
                continue
            parsed[name] = value
        return parsed

    def build_row(
        self,
        values: dict,
        gender: str,
        age_years: float,
        previous_exams: Optional[list[dict]] = None,
    ) -> RawRow:
        """Validate a request and assemble the raw design row."""
        errors: list[dict] = []
        if gender not in ("female", "male"):
            errors.append({"feature": "gender", "message": "gender must be female or male"})
        try:
            age = float(age_years)
        except (TypeError, ValueError):
            age = 0.0
            errors.append({"feature": "age_years", "message": "age_years must be a number"})
        previous = previous_exams or []
        if len(previous) != self.lag_count:
            raise MissingLagBlockError(self.lag_count, len(previous))

        row_values = dict(self._parse_block(values, errors, block=0))
        ages = [age]
        for j, block in enumerate(previous, start=1):
            block_values = block.get("values", {})
            try:
                block_age = float(block.get("age_years"))
            except (TypeError, ValueError):
                block_age = age
                errors.append(
                    {"feature": f"previous_exams[{j - 1}].age_years",
                     "message": "age_years must be a number"}
                )
            parsed = self._parse_block(block_values, errors, block=j)
            for name, v in parsed.items():
                row_values[f"{name}_lag{j}"] = v
            ages.append(block_age)
        if errors:
            raise RequestValidationError(errors)
        return RawRow(values=row_values, gender=gender, ages=tuple(ages))

    def predict_row(self, row: RawRow, u: Optional[float] = None) -> PredictionReport:
        """Full prediction report for one raw row (deterministic per request)."""
        from .preprocess import _merged_raw, transform  # shared single-row path

        X = transform([row], self.encoder, self.schema)
        x = X[0]
        p0, p1 = self.forest.predict_proba(x)
        if u is None:
            u = _request_uniform(row, self.schema_hash) if self.conformal_cfg.randomized else 0.0
        pred_set = conformal.set_from_probs(
            (p0, p1), self.threshold, self.conformal_cfg, u
        )
        attribution = explain.forest_shap(self.forest, x)
        by_name = {m.name: m for m in self.encoder.merged}
        attributions = []
        for j, name in enumerate(self.encoder.layout):
            m = by_name[name]
            raw_val = _merged_raw(
                row, m, self.schema, self.encoder.drug_map, self.encoder.options.strict_drugs
            )
            attributions.append(
                {
                    "feature": name,
                    "shap_value": float(attribution.per_feature[j]),
                    "raw_value": raw_val if not isinstance(raw_val, float) else float(raw_val),
                }
            )
        point = Label.TMJ1 if p1 > p0 else Label.TMJ0
        return PredictionReport(
            probabilities=(p0, p1),
            point_label=point,
            prediction_set=pred_set,
            alpha=self.conformal_cfg.alpha,
            attributions=attributions,
            base_value=attribution.base_value,
            model_info=self.model_info(),
        )

    def predict_request(
        self,
        values: dict,
        gender: str,
        age_years: float,
        previous_exams: Optional[list[dict]] = None,
    ) -> PredictionReport:
        row = self.build_row(values, gender, age_years, previous_exams)
        return self.predict_row(row)


def _request_uniform(row: RawRow, salt: str) -> float:
    """Deterministic uniform draw from a request (randomized conformal models
    must answer identical requests identically)."""
    canon = json.dumps(
        {"values": {k: str(v) for k, v in sorted(row.values.items())},
         "gender": row.gender, "ages": list(row.ages), "salt": salt},
        sort_keys=True,
    )
    digest = hashlib.sha256(canon.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") / 2**64
