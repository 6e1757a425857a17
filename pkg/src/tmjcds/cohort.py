"""Longitudinal cohort data model and CSV ingestion.

A cohort is a set of patients, each with a time-ordered series of clinical
examinations.  Files use one row per examination with the header
``patient_id,gender,exam_time_years,age_years,label,<feature columns...>``;
missing values are empty strings.  An optional reserved ``valid`` column
(0/1) marks rows to drop during ingestion, mirroring upstream cleaning.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Optional

from .schema import UNKNOWN_CATEGORY, FeatureSchema, Label, SchemaError

GENDERS = ("female", "male")

MIN_EXAMS = 2
MAX_EXAMS = 17

RESERVED_COLUMNS = ("patient_id", "gender", "exam_time_years", "age_years", "label", "valid")


class CohortParseError(ValueError):
    """Malformed cohort file; carries the offending 1-based line number."""

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class OrderingViolationError(ValueError):
    """Exam times within a patient are not strictly increasing."""


@dataclass(frozen=True)
class ExamRecord:
    """One clinical examination: raw feature values plus the TMJ label.

    ``values`` maps feature name -> raw value (int code, category token or
    float); features may be absent (missing).  ``exam_time`` is years since
    the patient's first examination.
    """

    patient_id: str
    exam_time: float
    age_at_exam: float
    values: dict[str, object]
    label: Label

    def validate(self, schema: FeatureSchema) -> None:
        if self.exam_time < 0:
            raise SchemaError(f"{self.patient_id}: exam_time must be >= 0")
        for name, value in self.values.items():
            spec = schema.get(name)
            if spec is None:
                raise SchemaError(f"unknown feature {name!r}")
            spec.validate_value(value)


@dataclass(frozen=True)
class Patient:
    patient_id: str
    gender: str
    exams: tuple[ExamRecord, ...]

    def __post_init__(self) -> None:
        if self.gender not in GENDERS:
            raise SchemaError(f"{self.patient_id}: gender must be female/male")


@dataclass(frozen=True)
class Cohort:
    """Immutable, validated longitudinal cohort."""

    schema: FeatureSchema
    patients: tuple[Patient, ...]

    def __post_init__(self) -> None:
        for p in self.patients:
            if not MIN_EXAMS <= len(p.exams) <= MAX_EXAMS:
                raise SchemaError(
                    f"{p.patient_id}: patients have {MIN_EXAMS}-{MAX_EXAMS} exams, got {len(p.exams)}"
                )
            if p.exams[0].exam_time != 0.0:
                raise SchemaError(f"{p.patient_id}: first exam must be at time 0")
            for a, b in zip(p.exams, p.exams[1:]):
                if not b.exam_time > a.exam_time:
                    raise OrderingViolationError(
                        f"{p.patient_id}: exam times not strictly increasing "
                        f"({a.exam_time} then {b.exam_time})"
                    )
            for e in p.exams:
                e.validate(self.schema)

    @property
    def n_records(self) -> int:
        return sum(len(p.exams) for p in self.patients)

    def exam_rows(self):
        """Yield (patient, exam_index, exam) over all examinations in order."""
        for p in self.patients:
            for i, e in enumerate(p.exams):
                yield p, i, e


@dataclass(frozen=True)
class CohortSummary:
    n_patients: int
    n_records: int
    n_female: int
    n_male: int
    exam_count_histogram: dict[int, int]
    prevalence: float
    prevalence_by_bucket: dict[str, float]
    bucket_counts: dict[str, int] = field(default_factory=dict)


_TIME_BUCKETS = (("0-2", 0.0, 2.0), ("2-5", 2.0, 5.0), ("5+", 5.0, math.inf))


def cohort_summary(cohort: Cohort) -> CohortSummary:
    """Exact counts over a cohort; pure function of its contents."""
    hist: dict[int, int] = {}
    n_female = 0
    pos = 0
    bucket_pos = {name: 0 for name, _, _ in _TIME_BUCKETS}
    bucket_n = {name: 0 for name, _, _ in _TIME_BUCKETS}
    for p in cohort.patients:
        hist[len(p.exams)] = hist.get(len(p.exams), 0) + 1
        if p.gender == "female":
            n_female += 1
        for e in p.exams:
            is_pos = int(e.label == Label.TMJ1)
            pos += is_pos
            for name, lo, hi in _TIME_BUCKETS:
                if lo <= e.exam_time < hi:
                    bucket_n[name] += 1
                    bucket_pos[name] += is_pos
                    break
    n_records = cohort.n_records
    return CohortSummary(
        n_patients=len(cohort.patients),
        n_records=n_records,
        n_female=n_female,
        n_male=len(cohort.patients) - n_female,
        exam_count_histogram=dict(sorted(hist.items())),
        prevalence=pos / n_records if n_records else 0.0,
        prevalence_by_bucket={
            name: (bucket_pos[name] / bucket_n[name] if bucket_n[name] else 0.0)
            for name, _, _ in _TIME_BUCKETS
        },
        bucket_counts=bucket_n,
    )


def _parse_value(token: str, spec, strict: bool, line: int):
    if spec.kind == "binary" or spec.kind == "ordinal":
        try:
            return int(token)
        except ValueError:
            raise CohortParseError(f"{spec.name}: expected integer, got {token!r}", line)
    if spec.kind == "continuous":
        try:
            return float(token)
        except ValueError:
            raise CohortParseError(f"{spec.name}: expected real, got {token!r}", line)
    # nominal
    if token in (spec.categories or ()):
        return token
    if strict:
        raise SchemaError(f"line {line}: {spec.name}: unknown category {token!r}")
    return UNKNOWN_CATEGORY


def load_cohort(path: str, schema: FeatureSchema, strict: bool = True) -> Cohort:
    """Read and validate a cohort CSV.

    Rows are grouped by patient_id and sorted by exam_time.  In non-strict
    mode unknown nominal tokens map to the reserved unknown category instead
    of raising.  Rows with ``valid`` = 0 (optional column) are dropped.
    """
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise CohortParseError("empty file", 1)
        required = list(RESERVED_COLUMNS[:5])
        if header[: len(required)] != required:
            raise CohortParseError(
                f"header must start with {','.join(required)}", 1
            )
        feature_cols = [c for c in header[len(required):] if c != "valid"]
        has_valid = "valid" in header
        valid_idx = header.index("valid") if has_valid else -1
        for c in feature_cols:
            if c in RESERVED_COLUMNS:
                raise CohortParseError(f"reserved column {c!r} out of place", 1)
            if schema.get(c) is None:
                raise SchemaError(f"unknown feature {c!r} in header")
        col_specs = [schema[c] for c in feature_cols]

        by_patient: dict[str, list[ExamRecord]] = {}
        genders: dict[str, str] = {}
        order: list[str] = []
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise CohortParseError(
                    f"expected {len(header)} fields, got {len(row)}", line_no
                )
            if has_valid and row[valid_idx].strip() in ("0", "false"):
                continue
            pid, gender, time_tok, age_tok, label_tok = row[:5]
            if gender not in GENDERS:
                raise CohortParseError(f"bad gender {gender!r}", line_no)
            try:
                exam_time = float(time_tok)
                age = float(age_tok)
            except ValueError:
                raise CohortParseError("exam_time_years/age_years must be real", line_no)
            if label_tok not in ("0", "1"):
                raise CohortParseError(f"label must be 0/1, got {label_tok!r}", line_no)
            values: dict[str, object] = {}
            body = [v for i, v in enumerate(row[5:], start=5) if i != valid_idx]
            for spec, token in zip(col_specs, body):
                if token == "":
                    continue  # missing
                values[spec.name] = _parse_value(token, spec, strict, line_no)
            rec = ExamRecord(
                patient_id=pid,
                exam_time=exam_time,
                age_at_exam=age,
                values=values,
                label=Label(int(label_tok)),
            )
            if pid not in by_patient:
                by_patient[pid] = []
                genders[pid] = gender
                order.append(pid)
            elif genders[pid] != gender:
                raise CohortParseError(f"patient {pid}: inconsistent gender", line_no)
            by_patient[pid].append(rec)

    patients = []
    for pid in order:
        exams = sorted(by_patient[pid], key=lambda e: e.exam_time)
        for a, b in zip(exams, exams[1:]):
            if a.exam_time == b.exam_time:
                raise OrderingViolationError(
                    f"patient {pid}: duplicate exam_time {a.exam_time}"
                )
        patients.append(Patient(patient_id=pid, gender=genders[pid], exams=tuple(exams)))
    return Cohort(schema=schema, patients=tuple(patients))


def _format_value(value: object) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def save_cohort(cohort: Cohort, path: str) -> None:
    """Write the cohort CSV; inverse of load_cohort (round-trip preserving)."""
    feature_cols = cohort.schema.names
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(list(RESERVED_COLUMNS[:5]) + feature_cols)
        for p in cohort.patients:
            for e in p.exams:
                row = [
                    p.patient_id,
                    p.gender,
                    repr(e.exam_time),
                    repr(e.age_at_exam),
                    str(int(e.label)),
                ]
                row.extend(
                    _format_value(e.values[c]) if c in e.values else "" for c in feature_cols
                )
                writer.writerow(row)
