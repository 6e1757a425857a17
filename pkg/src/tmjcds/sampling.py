"""Sampling strategies: flatten a longitudinal cohort into supervised rows.

Three strategies are supported: one row per examination (iid), rows bucketed
by years since first examination (temporal segmentation), and rows augmented
with the previous k examinations' values as lag columns (lagged).  All three
produce *raw* value rows; numeric encoding happens in :mod:`tmjcds.preprocess`
so that encoder statistics can be fitted on exactly the design matrix a
strategy trains on.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from .cohort import Cohort
from .schema import FeatureSchema, SchemaError

#: recorded alongside examinations but never part of a design matrix
TARGET_ADJACENT = ("involvementstatus",)

DEFAULT_BOUNDARIES = (2.0, 5.0, 15.0)


@dataclass(frozen=True)
class RawColumn:
    """One raw design column: a schema feature at lag ``block`` (0 = current)."""

    name: str
    base_feature: str
    block: int


@dataclass(frozen=True)
class RawRow:
    """Raw values for one sample; ``ages`` holds the exam age per lag block."""

    values: dict[str, object]
    gender: str
    ages: tuple[float, ...]


@dataclass(frozen=True)
class RawSampleSet:
    columns: tuple[RawColumn, ...]
    rows: tuple[RawRow, ...]
    labels: np.ndarray
    provenance: tuple[tuple[str, int], ...]
    strategy_tag: str
    block_count: int
    clamped_count: int = 0

    def __post_init__(self) -> None:
        if not (len(self.rows) == len(self.labels) == len(self.provenance)):
            raise ValueError("rows, labels and provenance must align")
        if len(set(self.provenance)) != len(self.provenance):
            raise ValueError("duplicate (patient_id, exam_index) in sample set")

    @property
    def n_rows(self) -> int:
        return len(self.rows)

    @property
    def n_columns(self) -> int:
        return len(self.columns)

    def select(self, indices: Sequence[int]) -> "RawSampleSet":
        idx = list(indices)
        return RawSampleSet(
            columns=self.columns,
            rows=tuple(self.rows[i] for i in idx),
            labels=self.labels[idx] if len(idx) else self.labels[:0],
            provenance=tuple(self.provenance[i] for i in idx),
            strategy_tag=self.strategy_tag,
            block_count=self.block_count,
            clamped_count=self.clamped_count,
        )

    def rows_for_patients(self, patient_ids) -> list[int]:
        wanted = set(patient_ids)
        return [i for i, (pid, _) in enumerate(self.provenance) if pid in wanted]


@dataclass(frozen=True)
class SampleSet:
    """Numeric design matrix produced by encoding a RawSampleSet."""

    X: np.ndarray
    y: np.ndarray
    feature_names: tuple[str, ...]
    provenance: tuple[tuple[str, int], ...]
    strategy_tag: str

    def __post_init__(self) -> None:
        if not (self.X.shape[0] == len(self.y) == len(self.provenance)):
            raise ValueError("X, y and provenance must align")
        if self.X.shape[1] != len(self.feature_names):
            raise ValueError("X width must match feature_names")


def resolve_feature_subset(
    schema: FeatureSchema, subset: Union[str, Sequence[str]] = "all"
) -> list[str]:
    """Expand "all"/"expert"/explicit list into raw feature names (schema order).

    Target-adjacent features are always excluded from design matrices.
    """
    if subset == "all":
        names = [n for n in schema.names if n not in TARGET_ADJACENT]
    elif subset == "expert":
        names = [n for n in schema.expert_names if n not in TARGET_ADJACENT]
    else:
        names = []
        for n in subset:
            if schema.get(n) is None:
                raise SchemaError(f"unknown feature {n!r} in subset")
            if n in TARGET_ADJACENT:
                raise SchemaError(f"feature {n!r} cannot enter a design matrix")
            names.append(n)
    return names


def _columns_for(feature_names: Sequence[str], k: int) -> tuple[RawColumn, ...]:
    cols = [RawColumn(name=f, base_feature=f, block=0) for f in feature_names]
    for j in range(1, k + 1):
        cols.extend(
            RawColumn(name=f"{f}_lag{j}", base_feature=f, block=j) for f in feature_names
        )
    return tuple(cols)


def make_iid(
    cohort: Cohort, feature_subset: Union[str, Sequence[str]] = "all"
) -> RawSampleSet:
    """One sample per examination, temporal structure ignored."""
    features = resolve_feature_subset(cohort.schema, feature_subset)
    rows, labels, prov = [], [], []
    for patient, i, exam in cohort.exam_rows():
        rows.append(
            RawRow(
                values={f: exam.values[f] for f in features if f in exam.values},
                gender=patient.gender,
                ages=(exam.age_at_exam,),
            )
        )
        labels.append(int(exam.label))
        prov.append((patient.patient_id, i))
    return RawSampleSet(
        columns=_columns_for(features, 0),
        rows=tuple(rows),
        labels=np.asarray(labels, dtype=np.int8),
        provenance=tuple(prov),
        strategy_tag="iid",
        block_count=1,
    )


def make_temporal_segments(
    cohort: Cohort,
    boundaries_years: Sequence[float] = DEFAULT_BOUNDARIES,
    feature_subset: Union[str, Sequence[str]] = "all",
) -> list[RawSampleSet]:
    """Partition examinations into left-closed intervals of years since first exam.

    Boundaries ``(b0, .., b_last)`` give segments [0,b0), [b0,b1), ...,
    [b_penultimate, inf); samples beyond b_last are kept in the final segment
    and counted as clamped.
    """
    bounds = list(boundaries_years)
    if any(b2 <= b1 for b1, b2 in zip(bounds, bounds[1:])) or not bounds:
        raise ValueError("boundaries must be strictly increasing and non-empty")
    features = resolve_feature_subset(cohort.schema, feature_subset)
    n_segments = len(bounds)
    per_seg: list[dict] = [
        {"rows": [], "labels": [], "prov": [], "clamped": 0} for _ in range(n_segments)
    ]
    edges = [0.0] + bounds[:-1]  # segment s covers [edges[s], edges[s+1]) and last is open
    for patient, i, exam in cohort.exam_rows():
        t = exam.exam_time
        seg = n_segments - 1
        for s in range(n_segments - 1):
            if edges[s] <= t < edges[s + 1]:
                seg = s
                break
        if t > bounds[-1]:
            per_seg[seg]["clamped"] += 1
        per_seg[seg]["rows"].append(
            RawRow(
                values={f: exam.values[f] for f in features if f in exam.values},
                gender=patient.gender,
                ages=(exam.age_at_exam,),
            )
        )
        per_seg[seg]["labels"].append(int(exam.label))
        per_seg[seg]["prov"].append((patient.patient_id, i))
    return [
        RawSampleSet(
            columns=_columns_for(features, 0),
            rows=tuple(d["rows"]),
            labels=np.asarray(d["labels"], dtype=np.int8),
            provenance=tuple(d["prov"]),
            strategy_tag=f"temporal:{s}",
            block_count=1,
            clamped_count=d["clamped"],
        )
        for s, d in enumerate(per_seg)
    ]


def make_lagged(
    cohort: Cohort, k: int, feature_subset: Union[str, Sequence[str]] = "all"
) -> RawSampleSet:
    """Supervised rows carrying the previous k examinations as lag columns.

    A patient with e exams yields max(0, e - k) rows; row for exam i holds the
    values of exams (i, i-1, .., i-k), lag columns suffixed ``_lag1..k``.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    features = resolve_feature_subset(cohort.schema, feature_subset)
    rows, labels, prov = [], [], []
    for patient in cohort.patients:
        exams = patient.exams
        for i in range(k, len(exams)):
            values: dict[str, object] = {}
            ages = []
            for j in range(0, k + 1):
                exam = exams[i - j]
                suffix = f"_lag{j}" if j else ""
                for f in features:
                    if f in exam.values:
                        values[f + suffix] = exam.values[f]
                ages.append(exam.age_at_exam)
            rows.append(RawRow(values=values, gender=patient.gender, ages=tuple(ages)))
            labels.append(int(exams[i].label))
            prov.append((patient.patient_id, i))
    return RawSampleSet(
        columns=_columns_for(features, k),
        rows=tuple(rows),
        labels=np.asarray(labels, dtype=np.int8),
        provenance=tuple(prov),
        strategy_tag=f"lagged:{k}",
        block_count=k + 1,
    )


def export_sample_set_csv(sample: SampleSet, path: str) -> None:
    """Write the numeric design matrix with provenance columns prefixed."""
    import csv

    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["__patient_id", "__exam_index", "__label", *sample.feature_names])
        for i in range(sample.X.shape[0]):
            pid, idx = sample.provenance[i]
            writer.writerow(
                [pid, idx, int(sample.y[i]), *(repr(float(v)) for v in sample.X[i])]
            )
