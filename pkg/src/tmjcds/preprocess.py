"""Feature engineering fitted on training rows only.

Pipeline (fixed order): drug-class reduction -> left/right merge ->
age/gender deviation of the mm measurements -> scalar entity embeddings for
nominal features -> z-score.  :func:`fit_encoders` computes every statistic
from the training rows it is given; :func:`transform` then applies the frozen
state to any rows, so test data can never leak into the fitted state.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence

import numpy as np

from .cohort import Cohort
from .sampling import RawColumn, RawRow, RawSampleSet, SampleSet
from .schema import UNKNOWN_CATEGORY, FeatureSchema, FeatureSpec, SchemaError, load_drug_map

ENCODER_FORMAT_VERSION = 1


class DrugClass(str, Enum):
    """Five-way medication grouping."""

    NONE = "None"
    NSAID = "NSAID"
    CORTICOSTEROID = "Corticosteroid"
    CONVENTIONAL_DMARD = "ConventionalDMARD"
    BIOLOGICAL_DMARD = "BiologicalDMARD"


#: combination tokens resolve to the strongest component
DRUG_PRECEDENCE = (
    DrugClass.NONE,
    DrugClass.NSAID,
    DrugClass.CORTICOSTEROID,
    DrugClass.CONVENTIONAL_DMARD,
    DrugClass.BIOLOGICAL_DMARD,
)


class UnmappedDrugError(ValueError):
    pass


def classify_drug(raw: object, drug_map: dict[str, str], strict: bool = True) -> DrugClass:
    """Map one raw medication token to its drug class.

    Combination tokens (joined with '+') resolve to the component with the
    highest precedence.  Unmapped tokens raise in strict mode and fall back to
    None (with a warning) otherwise.
    """
    token = str(raw).strip().lower() if raw is not None else ""
    if token == "":
        return DrugClass.NONE
    if token in drug_map:
        return DrugClass(drug_map[token])
    if "+" in token:
        parts = [p for p in (s.strip() for s in token.split("+")) if p]
        classes = [classify_drug(p, drug_map, strict=strict) for p in parts]
        return max(classes, key=DRUG_PRECEDENCE.index)
    if strict:
        raise UnmappedDrugError(f"unmapped drug token {token!r}")
    warnings.warn(f"unmapped drug token {token!r}; treating as no medication")
    return DrugClass.NONE


def merge_sides(values: dict[str, object], schema: FeatureSchema) -> dict[str, object]:
    """Collapse left/right mirror pairs to a single feature.

    Equal values pass through; otherwise ordinals and binaries take the
    greater level, continuous pairs the maximum.  Non-sided features are
    unchanged.  If only one side is present its value is used.
    """
    out: dict[str, object] = {}
    for name, value in values.items():
        spec = schema[name]
        if spec.side == "none":
            out[name] = value
    for left, right in schema.mirror_pairs():
        if left not in values and right not in values:
            continue
        merged = _merge_pair(schema[left], values.get(left), values.get(right))
        out[merged_name(schema[left])] = merged
    return out


def merged_name(left_spec: FeatureSpec) -> str:
    """Merged-column name for a mirror pair, via its left member."""
    name = left_spec.name
    if name.endswith("leftmm"):
        return name[:-6] + "mm"
    if name.endswith("left"):
        return name[:-4]
    raise SchemaError(f"cannot derive merged name for {name!r}")


def _merge_pair(spec: FeatureSpec, left: object, right: object) -> object:
    if left is None:
        return right
    if right is None:
        return left
    if left == right:
        return left
    if spec.kind == "continuous":
        return max(float(left), float(right))  # type: ignore[arg-type]
    return max(int(left), int(right))  # type: ignore[call-overload]


def age_gender_deviation(
    value: float,
    gender: str,
    age: float,
    buckets: dict[tuple[str, int], float],
    global_mean: float,
) -> float:
    """Deviation of a measurement from its (gender, whole-year age) average.

    Buckets absent from the table (too few training samples) fall back to the
    global training mean.
    """
    mean = buckets.get((gender, int(math.floor(age))), global_mean)
    return float(value) - mean


@dataclass(frozen=True)
class MergedColumn:
    """Final design column and the raw column(s) it is derived from."""

    name: str
    sources: tuple[str, ...]
    feature: str  # governing schema feature (left member for pairs)
    block: int


@dataclass(frozen=True)
class PreprocessOptions:
    min_bucket_count: int = 5
    deviation_features: tuple[str, ...] = ("openingmm", "protrusionmm")
    strict_drugs: bool = True
    embed_epochs: int = 200
    embed_step: float = 0.1
    seed: int = 0


@dataclass(frozen=True)
class EncoderState:
    """Frozen preprocessing state; all statistics were fitted on training rows."""

    format_version: int
    columns: tuple[RawColumn, ...]
    merged: tuple[MergedColumn, ...]
    layout: tuple[str, ...]  # merged minus dropped, in order
    label_maps: dict[str, dict[str, int]]
    embeddings: dict[str, dict[str, float]]
    reference_buckets: dict[str, dict[tuple[str, int], float]]
    reference_globals: dict[str, float]
    zscore: dict[str, tuple[float, float]]
    dropped: tuple[str, ...]
    drug_map: dict[str, str]
    options: PreprocessOptions

    def to_json(self) -> str:
        d = {
            "format_version": self.format_version,
            "columns": [[c.name, c.base_feature, c.block] for c in self.columns],
            "merged": [[m.name, list(m.sources), m.feature, m.block] for m in self.merged],
            "layout": list(self.layout),
            "label_maps": self.label_maps,
            "embeddings": self.embeddings,
            "reference_buckets": {
                col: {f"{g}:{b}": mean for (g, b), mean in table.items()}
                for col, table in self.reference_buckets.items()
            },
            "reference_globals": self.reference_globals,
            "zscore": {k: [m, s] for k, (m, s) in self.zscore.items()},
            "dropped": list(self.dropped),
            "drug_map": self.drug_map,
            "options": {
                "min_bucket_count": self.options.min_bucket_count,
                "deviation_features": list(self.options.deviation_features),
                "strict_drugs": self.options.strict_drugs,
                "embed_epochs": self.options.embed_epochs,
                "embed_step": self.options.embed_step,
                "seed": self.options.seed,
            },
        }
        return json.dumps(d, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "EncoderState":
        d = json.loads(text)
        return cls(
            format_version=d["format_version"],
            columns=tuple(RawColumn(*c) for c in d["columns"]),
            merged=tuple(
                MergedColumn(m[0], tuple(m[1]), m[2], m[3]) for m in d["merged"]
            ),
            layout=tuple(d["layout"]),
            label_maps={k: dict(v) for k, v in d["label_maps"].items()},
            embeddings={k: dict(v) for k, v in d["embeddings"].items()},
            reference_buckets={
                col: {
                    (key.rsplit(":", 1)[0], int(key.rsplit(":", 1)[1])): mean
                    for key, mean in table.items()
                }
                for col, table in d["reference_buckets"].items()
            },
            reference_globals=dict(d["reference_globals"]),
            zscore={k: (v[0], v[1]) for k, v in d["zscore"].items()},
            dropped=tuple(d["dropped"]),
            drug_map=dict(d["drug_map"]),
            options=PreprocessOptions(
                min_bucket_count=d["options"]["min_bucket_count"],
                deviation_features=tuple(d["options"]["deviation_features"]),
                strict_drugs=d["options"]["strict_drugs"],
                embed_epochs=d["options"]["embed_epochs"],
                embed_step=d["options"]["embed_step"],
                seed=d["options"]["seed"],
            ),
        )


def _merged_layout(
    columns: Sequence[RawColumn], schema: FeatureSchema
) -> list[MergedColumn]:
    """Pair sided raw columns block-wise, preserving schema order."""
    by_block: dict[int, dict[str, RawColumn]] = {}
    for c in columns:
        by_block.setdefault(c.block, {})[c.base_feature] = c
    merged: list[MergedColumn] = []
    for block in sorted(by_block):
        present = by_block[block]
        done: set[str] = set()
        for feat_name in [c.base_feature for c in columns if c.block == block]:
            if feat_name in done:
                continue
            spec = schema[feat_name]
            suffix = f"_lag{block}" if block else ""
            if spec.side == "none":
                merged.append(
                    MergedColumn(feat_name + suffix, (present[feat_name].name,), feat_name, block)
                )
                done.add(feat_name)
                continue
            left = spec if spec.side == "left" else schema[spec.mirror_of or ""]
            right_name = left.mirror_of or ""
            if left.name in present and right_name in present:
                merged.append(
                    MergedColumn(
                        merged_name(left) + suffix,
                        (present[left.name].name, present[right_name].name),
                        left.name,
                        block,
                    )
                )
                done.update((left.name, right_name))
            else:
                # unpaired side in this subset: passes through unmerged
                merged.append(
                    MergedColumn(feat_name + suffix, (present[feat_name].name,), feat_name, block)
                )
                done.add(feat_name)
    return merged


def _merged_raw(
    row: RawRow, mcol: MergedColumn, schema: FeatureSchema, drug_map: dict[str, str],
    strict_drugs: bool,
):
    spec = schema[mcol.feature]
    vals = []
    for src in mcol.sources:
        v = row.values.get(src)
        if v is not None and spec.name == "drug":
            v = classify_drug(v, drug_map, strict=strict_drugs).value
        vals.append(v)
    if len(vals) == 1:
        return vals[0]
    return _merge_pair(spec, vals[0], vals[1])


def _is_nominal(spec: FeatureSpec) -> bool:
    return spec.kind == "nominal"


def _fit_embeddings(
    code_matrix: np.ndarray,
    n_categories: list[int],
    y: np.ndarray,
    epochs: int,
    step: float,
    seed: int,
) -> list[np.ndarray]:
    """Scalar entity embeddings from a one-layer logistic model.

    ``code_matrix`` is (N, F) of category codes (-1 = missing).  Returns the
    effective per-category scalars (feature weight absorbed).
    """
    rng = np.random.default_rng(seed)
    n, f = code_matrix.shape
    emb = [rng.uniform(-0.01, 0.01, size=k) for k in n_categories]
    w = np.ones(f)
    b = 0.0
    yf = y.astype(float)
    masks = [code_matrix[:, j] >= 0 for j in range(f)]
    for _ in range(epochs):
        z = np.full(n, b)
        looked = []
        for j in range(f):
            lj = np.where(masks[j], emb[j][np.clip(code_matrix[:, j], 0, None)], 0.0)
            looked.append(lj)
            z += w[j] * lj
        p = 1.0 / (1.0 + np.exp(-z))
        g = (p - yf) / n
        b -= step * g.sum()
        for j in range(f):
            gj = np.where(masks[j], g, 0.0)
            dw = float(looked[j] @ gj)
            demb = np.bincount(
                np.clip(code_matrix[:, j], 0, None),
                weights=gj,
                minlength=n_categories[j],
            ) * w[j]
            w[j] -= step * dw
            emb[j] -= step * demb
    return [w[j] * emb[j] for j in range(len(emb))]


def fit_encoders(
    sample: RawSampleSet,
    schema: FeatureSchema,
    options: Optional[PreprocessOptions] = None,
    drug_map: Optional[dict[str, str]] = None,
) -> EncoderState:
    """Fit the full preprocessing state on training rows only.

    Deterministic given options.seed.  Zero-variance columns are dropped and
    recorded; nominal features with more than two categories get gradient-fit
    scalar embeddings, two-category ones fall back to label-mean-ordered codes.
    """
    if sample.n_rows == 0:
        raise ValueError("cannot fit encoders on an empty training set")
    options = options or PreprocessOptions()
    drug_map = drug_map if drug_map is not None else load_drug_map()
    merged = _merged_layout(sample.columns, schema)
    y = np.asarray(sample.labels, dtype=np.int8)
    single_class = len(np.unique(y)) < 2

    # merged raw values per column
    raw_cols: dict[str, list] = {
        m.name: [
            _merged_raw(r, m, schema, drug_map, options.strict_drugs) for r in sample.rows
        ]
        for m in merged
    }

    # --- deviation reference tables (continuous mm features) ---------------
    reference_buckets: dict[str, dict[tuple[str, int], float]] = {}
    reference_globals: dict[str, float] = {}
    for m in merged:
        spec = schema[m.feature]
        base = m.name[: -len(f"_lag{m.block}")] if m.block else m.name
        if spec.kind != "continuous" or base not in options.deviation_features:
            continue
        sums: dict[tuple[str, int], list[float]] = {}
        allv: list[float] = []
        for row, v in zip(sample.rows, raw_cols[m.name]):
            if v is None:
                continue
            bucket = (row.gender, int(math.floor(row.ages[m.block])))
            sums.setdefault(bucket, []).append(float(v))
            allv.append(float(v))
        reference_globals[m.name] = float(np.mean(allv)) if allv else 0.0
        reference_buckets[m.name] = {
            bucket: float(np.mean(vs))
            for bucket, vs in sums.items()
            if len(vs) >= options.min_bucket_count
        }

    # --- nominal label maps + embeddings ------------------------------------
    label_maps: dict[str, dict[str, int]] = {}
    embeddings: dict[str, dict[str, float]] = {}
    nominal_cols = [m for m in merged if _is_nominal(schema[m.feature])]
    for m in nominal_cols:
        spec = schema[m.feature]
        if spec.name == "drug":
            # tokens were already reduced to the five-class grouping
            declared = [c.value for c in DRUG_PRECEDENCE]
        else:
            declared = list(spec.categories or ())
        observed = {v for v in raw_cols[m.name] if v is not None}
        cats = [c for c in declared if c in observed]
        if UNKNOWN_CATEGORY in observed:
            cats.append(UNKNOWN_CATEGORY)
        label_maps[m.name] = {c: i for i, c in enumerate(cats)}

    gd_cols = [
        m for m in nominal_cols if len(label_maps[m.name]) > 2 and not single_class
    ]
    if single_class and nominal_cols:
        warnings.warn("single-class training labels: embeddings fall back to ordinal codes")
    if gd_cols:
        code_matrix = np.full((sample.n_rows, len(gd_cols)), -1, dtype=np.int64)
        for j, m in enumerate(gd_cols):
            lm = label_maps[m.name]
            for i, v in enumerate(raw_cols[m.name]):
                if v is not None:
                    code_matrix[i, j] = lm[str(v)]
        eff = _fit_embeddings(
            code_matrix,
            [len(label_maps[m.name]) for m in gd_cols],
            y,
            options.embed_epochs,
            options.embed_step,
            options.seed,
        )
        for j, m in enumerate(gd_cols):
            lm = label_maps[m.name]
            embeddings[m.name] = {c: float(eff[j][code]) for c, code in lm.items()}
    for m in nominal_cols:
        if m.name in embeddings:
            continue
        lm = label_maps[m.name]
        if single_class or len(lm) < 2:
            embeddings[m.name] = {c: float(code) for c, code in lm.items()}
            continue
        # two categories: codes ordered by training-label mean
        means = {}
        for c in lm:
            mask = [v == c for v in raw_cols[m.name]]
            means[c] = float(y[mask].mean()) if any(mask) else 0.0
        ordered = sorted(lm, key=lambda c: (means[c], lm[c]))
        embeddings[m.name] = {c: float(i) for i, c in enumerate(ordered)}

    # --- pre-z numeric values, then z-score ---------------------------------
    zscore: dict[str, tuple[float, float]] = {}
    dropped: list[str] = []
    state_partial = {
        "reference_buckets": reference_buckets,
        "reference_globals": reference_globals,
        "embeddings": embeddings,
    }
    for m in merged:
        col = [
            _pre_z_value(v, row, m, schema, state_partial, options)
            for v, row in zip(raw_cols[m.name], sample.rows)
        ]
        present = np.array([c for c in col if c is not None], dtype=float)
        if present.size == 0:
            dropped.append(m.name)
            continue
        mean = float(present.mean())
        sd = float(present.std())
        if sd < 1e-12:
            dropped.append(m.name)
            continue
        zscore[m.name] = (mean, sd)

    layout = tuple(m.name for m in merged if m.name not in dropped)
    return EncoderState(
        format_version=ENCODER_FORMAT_VERSION,
        columns=tuple(sample.columns),
        merged=tuple(merged),
        layout=layout,
        label_maps=label_maps,
        embeddings=embeddings,
        reference_buckets=reference_buckets,
        reference_globals=reference_globals,
        zscore=zscore,
        dropped=tuple(dropped),
        drug_map=dict(drug_map),
        options=options,
    )


def _pre_z_value(raw, row: RawRow, m: MergedColumn, schema, state, options):
    """Numeric value before z-scoring; None when missing or unseen."""
    if raw is None:
        return None
    spec = schema[m.feature]
    if spec.kind == "nominal":
        emb = state["embeddings"].get(m.name, {})
        return emb.get(str(raw))  # unseen category -> None -> neutral 0 post-z
    if spec.kind == "continuous":
        v = float(raw)
        if m.name in state["reference_buckets"]:
            return age_gender_deviation(
                v,
                row.gender,
                row.ages[m.block],
                state["reference_buckets"][m.name],
                state["reference_globals"][m.name],
            )
        return v
    return float(int(raw))


def transform(
    rows: Sequence[RawRow], encoder: EncoderState, schema: FeatureSchema
) -> np.ndarray:
    """Apply the frozen pipeline; returns an (N, len(layout)) float matrix.

    Missing values and categories unseen at fit time land on 0.0, the
    post-z-score neutral (the training mean).
    """
    state = {
        "reference_buckets": encoder.reference_buckets,
        "reference_globals": encoder.reference_globals,
        "embeddings": encoder.embeddings,
    }
    by_name = {m.name: m for m in encoder.merged}
    out = np.zeros((len(rows), len(encoder.layout)), dtype=float)
    for j, name in enumerate(encoder.layout):
        m = by_name[name]
        mean, sd = encoder.zscore[name]
        for i, row in enumerate(rows):
            raw = _merged_raw(row, m, schema, encoder.drug_map, encoder.options.strict_drugs)
            v = _pre_z_value(raw, row, m, schema, state, encoder.options)
            out[i, j] = 0.0 if v is None else (float(v) - mean) / sd
    return out


def encode_sample_set(
    sample: RawSampleSet, encoder: EncoderState, schema: FeatureSchema
) -> SampleSet:
    """Numeric SampleSet for a raw sample under a fitted encoder."""
    X = transform(sample.rows, encoder, schema)
    return SampleSet(
        X=X,
        y=np.asarray(sample.labels, dtype=np.int8),
        feature_names=encoder.layout,
        provenance=sample.provenance,
        strategy_tag=sample.strategy_tag,
    )


# --- patient-level splitting -------------------------------------------------


class SplitError(ValueError):
    pass


@dataclass(frozen=True)
class SplitAssignment:
    train_ids: frozenset[str]
    calib_ids: frozenset[str]
    test_ids: frozenset[str]
    seed: int

    def part_of(self, patient_id: str) -> str:
        if patient_id in self.train_ids:
            return "train"
        if patient_id in self.calib_ids:
            return "calib"
        if patient_id in self.test_ids:
            return "test"
        raise KeyError(patient_id)


def largest_remainder_counts(n: int, fractions: Sequence[float]) -> list[int]:
    """Integer partition of n by quota rounding; remainder ties go to the
    later partition."""
    quotas = [n * f for f in fractions]
    counts = [int(math.floor(q)) for q in quotas]
    remainders = [q - c for q, c in zip(quotas, counts)]
    short = n - sum(counts)
    order = sorted(range(len(fractions)), key=lambda i: (remainders[i], i), reverse=True)
    for i in order[:short]:
        counts[i] += 1
    return counts


def split_patients(
    cohort: Cohort, fractions: tuple[float, float, float] = (0.8, 0.1, 0.1), seed: int = 0
) -> SplitAssignment:
    """Shuffle patients and partition train/calibration/test by patient.

    All examinations of one patient land in one partition, preventing a
    patient's other visits from leaking into training.
    """
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise SplitError("fractions must sum to 1")
    ids = sorted(p.patient_id for p in cohort.patients)
    if len(ids) < 3:
        raise SplitError("need at least 3 patients to split")
    rng = np.random.default_rng(seed)
    perm = list(rng.permutation(len(ids)))
    shuffled = [ids[i] for i in perm]
    n_train, n_calib, n_test = largest_remainder_counts(len(ids), fractions)
    return SplitAssignment(
        train_ids=frozenset(shuffled[:n_train]),
        calib_ids=frozenset(shuffled[n_train : n_train + n_calib]),
        test_ids=frozenset(shuffled[n_train + n_calib :]),
        seed=seed,
    )


def split_rows(
    sample: RawSampleSet, fractions: tuple[float, float, float] = (0.8, 0.1, 0.1),
    seed: int = 0,
) -> tuple[list[int], list[int], list[int]]:
    """Row-level split (leaks a patient's visits across partitions; optional
    alternative kept for parity with per-examination splitting)."""
    n = sample.n_rows
    if n < 3:
        raise SplitError("need at least 3 rows to split")
    rng = np.random.default_rng(seed)
    perm = list(rng.permutation(n))
    n_train, n_calib, _ = largest_remainder_counts(n, fractions)
    return (
        sorted(perm[:n_train]),
        sorted(perm[n_train : n_train + n_calib]),
        sorted(perm[n_train + n_calib :]),
    )
