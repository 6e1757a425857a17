"""Statistics-matched synthetic cohort generation.

The clinical dataset behind this project is private; this generator produces
cohorts that match its published summary statistics (patient count, gender
ratio, 2-17 exams per patient, 25-year horizon) with configurable label
dynamics and feature-label signal, so the full pipeline can be exercised and
tested end to end.

Determinism: every patient draws from an independent RNG substream seeded by
(rng_seed, patient_index), so generation order or parallelism cannot change
the output.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .cohort import Cohort, ExamRecord, Patient
from .schema import FeatureSchema, Label, default_schema


class InvalidConfigError(ValueError):
    """Synthesis configuration failed validation."""


@dataclass(frozen=True)
class ExamCountSpec:
    """Integer distribution for exams per patient on [min, max].

    ``shape`` tilts mass toward small counts: weight(k) proportional to
    k**(-shape); 0 gives the uniform distribution.
    """

    min: int = 2
    max: int = 17
    shape: float = 1.0

    def probabilities(self) -> np.ndarray:
        ks = np.arange(self.min, self.max + 1, dtype=float)
        w = ks ** (-self.shape)
        return w / w.sum()


@dataclass(frozen=True)
class LabelDynamics:
    """TMJ-involvement onset process.

    With persistence, a patient starts involved with probability
    ``baseline_prevalence`` or converts at a constant yearly hazard, and stays
    involved afterwards.  Without persistence each exam samples independently
    from the same marginal curve.
    """

    baseline_prevalence: float = 0.12
    onset_hazard_per_year: float = 0.05
    persistence: bool = True


@dataclass(frozen=True)
class SynthesisConfig:
    n_patients: int = 1035
    female_fraction: float = 690 / 1035
    exams_per_patient: ExamCountSpec = field(default_factory=ExamCountSpec)
    horizon_years: float = 25.0
    label_dynamics: LabelDynamics = field(default_factory=LabelDynamics)
    signal_spec: dict[str, float] = field(default_factory=dict)
    side_correlation: float = 0.7
    rng_seed: int = 0

    def validate(self, schema: FeatureSchema) -> None:
        if self.n_patients < 0:
            raise InvalidConfigError("n_patients must be >= 0")
        if not 0.0 <= self.female_fraction <= 1.0:
            raise InvalidConfigError("female_fraction must be in [0, 1]")
        if self.horizon_years <= 0:
            raise InvalidConfigError("horizon_years must be > 0")
        if not 2 <= self.exams_per_patient.min <= self.exams_per_patient.max <= 17:
            raise InvalidConfigError("exams_per_patient must satisfy 2 <= min <= max <= 17")
        ld = self.label_dynamics
        if not 0.0 <= ld.baseline_prevalence <= 1.0:
            raise InvalidConfigError("baseline_prevalence must be in [0, 1]")
        if ld.onset_hazard_per_year < 0:
            raise InvalidConfigError("onset_hazard_per_year must be >= 0")
        if not 0.0 <= self.side_correlation <= 1.0:
            raise InvalidConfigError("side_correlation must be in [0, 1]")
        if self.rng_seed < 0:
            raise InvalidConfigError("rng_seed must be non-negative")
        for name in self.signal_spec:
            if schema.get(name) is None:
                raise InvalidConfigError(f"signal_spec names unknown feature {name!r}")

    # --- presets -------------------------------------------------------

    @classmethod
    def default(cls, seed: int = 0) -> "SynthesisConfig":
        """Cohort matched to the published dataset statistics, mild signal."""
        return cls(rng_seed=seed, signal_spec=_mild_signal())

    @classmethod
    def high_signal(cls, seed: int = 0, n_patients: int = 1035) -> "SynthesisConfig":
        """Strongly separable cohort used as the end-to-end smoke target."""
        return cls(
            n_patients=n_patients,
            rng_seed=seed,
            label_dynamics=LabelDynamics(
                baseline_prevalence=0.2, onset_hazard_per_year=0.06, persistence=True
            ),
            signal_spec=_strong_signal(),
        )

    @classmethod
    def no_signal(cls, seed: int = 0, n_patients: int = 300) -> "SynthesisConfig":
        """Balanced labels independent of every feature (null baseline)."""
        return cls(
            n_patients=n_patients,
            rng_seed=seed,
            label_dynamics=LabelDynamics(
                baseline_prevalence=0.5, onset_hazard_per_year=0.0, persistence=False
            ),
            signal_spec={},
        )


def _mild_signal() -> dict[str, float]:
    return {
        "krepitationleft": 0.8, "krepitationright": 0.8,
        "painmoveleft": 0.6, "painmoveright": 0.6,
        "openingmm": -0.5, "lowerface": 0.5, "drug": 0.7,
    }


def _strong_signal() -> dict[str, float]:
    return {
        "krepitationleft": 2.5, "krepitationright": 2.5,
        "painmoveleft": 2.0, "painmoveright": 2.0,
        "laterpalpleft": 1.5, "laterpalpright": 1.5,
        "openingmm": -2.0, "protrusionmm": -1.5,
        "lowerface": 1.8, "asybasis": 1.5, "profile": 1.5, "drug": 2.0,
        "translationleft": 1.2, "translationright": 1.2,
    }


def _sigmoid(z: float) -> float:
    return 1.0 / (1.0 + math.exp(-z))


# Base rates for feature generation; label effects tilt these.
_BINARY_BASE_P = 0.22
_ORDINAL_BASE = (0.62, 0.28, 0.10)


def _draw_binary(rng: np.random.Generator, beta: float, involved: bool) -> int:
    logit = math.log(_BINARY_BASE_P / (1 - _BINARY_BASE_P)) + (beta if involved else 0.0)
    return int(rng.random() < _sigmoid(logit))


def _draw_ordinal(rng: np.random.Generator, levels: int, beta: float, involved: bool) -> int:
    base = np.array(_ORDINAL_BASE[:levels], dtype=float)
    if levels != len(_ORDINAL_BASE):
        base = np.geomspace(1.0, 0.15, levels)
    w = base * np.exp((beta if involved else 0.0) * np.arange(levels) / max(levels - 1, 1))
    w /= w.sum()
    return int(rng.choice(levels, p=w))


def _draw_nominal(
    rng: np.random.Generator, categories: tuple[str, ...], beta: float, involved: bool
) -> str:
    n = len(categories)
    w = np.geomspace(1.0, 0.4, n)
    if involved and beta:
        w = w * np.exp(beta * (np.arange(n) == n - 1))
    w /= w.sum()
    return str(categories[int(rng.choice(n, p=w))])


_CONTINUOUS_BASE = {
    # name -> (intercept, age slope, male offset, noise sd)
    "openingmm": (30.0, 1.1, 2.0, 4.0),
    "protrusionmm": (4.5, 0.18, 0.4, 1.2),
    "laterotrusion": (7.0, 0.12, 0.3, 1.6),
}


def _draw_continuous(
    rng: np.random.Generator, base_name: str, age: float, gender: str,
    beta: float, involved: bool,
) -> float:
    icpt, slope, male_off, sd = _CONTINUOUS_BASE.get(base_name, (10.0, 0.1, 0.0, 1.0))
    mean = icpt + slope * min(age, 16.0) + (male_off if gender == "male" else 0.0)
    if involved and beta:
        mean += beta * sd  # effect expressed in noise-sd units
    return float(mean + rng.normal(0.0, sd))


def _draw_value(rng, spec, base_name, beta, involved, age, gender):
    if spec.kind == "binary":
        return _draw_binary(rng, beta, involved)
    if spec.kind == "ordinal":
        return _draw_ordinal(rng, int(spec.levels or 2), beta, involved)
    if spec.kind == "nominal":
        return _draw_nominal(rng, spec.categories or (), beta, involved)
    return _draw_continuous(rng, base_name, age, gender, beta, involved)


def _pair_base(name: str, mirror: str) -> str:
    """Common stem of a mirror pair (used for continuous base curves)."""
    for i, (a, b) in enumerate(zip(name, mirror)):
        if a != b:
            return name[:i]
    return name[: min(len(name), len(mirror))]


def _generate_patient(
    index: int, cfg: SynthesisConfig, schema: FeatureSchema, female: bool,
    exam_probs: np.ndarray,
) -> Patient:
    rng = np.random.default_rng([cfg.rng_seed, index])
    gender = "female" if female else "male"
    spec_counts = cfg.exams_per_patient
    n_exams = int(rng.choice(np.arange(spec_counts.min, spec_counts.max + 1), p=exam_probs))

    times = np.concatenate(
        [[0.0], np.sort(rng.uniform(0.2, cfg.horizon_years, size=n_exams - 1))]
    )
    age_first = float(rng.uniform(2.0, 14.0))

    ld = cfg.label_dynamics
    if ld.persistence:
        involved_from_start = rng.random() < ld.baseline_prevalence
        if ld.onset_hazard_per_year > 0:
            onset = float(rng.exponential(1.0 / ld.onset_hazard_per_year))
        else:
            onset = math.inf
        labels = [
            bool(involved_from_start or (t >= onset)) for t in times
        ]
    else:
        labels = [
            bool(
                rng.random()
                < 1.0 - (1.0 - ld.baseline_prevalence) * math.exp(-ld.onset_hazard_per_year * t)
            )
            for t in times
        ]

    pairs = {left: right for left, right in schema.mirror_pairs()}
    right_names = set(pairs.values())

    exams = []
    for i, t in enumerate(times):
        age = age_first + float(t)
        involved = labels[i]
        values: dict[str, object] = {}
        for feat in schema.entries:
            if feat.name in right_names:
                continue  # drawn together with its left partner
            if feat.name == "involvementstatus":
                values[feat.name] = int(involved)
                continue
            if feat.side == "left":
                right = pairs[feat.name]
                beta = cfg.signal_spec.get(feat.name, cfg.signal_spec.get(right, 0.0))
                base = _pair_base(feat.name, right)
                left_v = _draw_value(rng, feat, base, beta, involved, age, gender)
                if rng.random() < cfg.side_correlation:
                    right_v = left_v
                else:
                    right_v = _draw_value(rng, feat, base, beta, involved, age, gender)
                values[feat.name] = left_v
                values[right] = right_v
            else:
                beta = cfg.signal_spec.get(feat.name, 0.0)
                values[feat.name] = _draw_value(
                    rng, feat, feat.name, beta, involved, age, gender
                )
        exams.append(
            ExamRecord(
                patient_id=f"P{index:05d}",
                exam_time=float(t),
                age_at_exam=age,
                values=values,
                label=Label.TMJ1 if involved else Label.TMJ0,
            )
        )
    return Patient(patient_id=f"P{index:05d}", gender=gender, exams=tuple(exams))


def generate_synthetic_cohort(
    cfg: SynthesisConfig, schema: Optional[FeatureSchema] = None
) -> Cohort:
    """Generate a cohort; deterministic in cfg.rng_seed, parallel-safe per patient."""
    schema = schema or default_schema()
    cfg.validate(schema)

    n_female = round(cfg.female_fraction * cfg.n_patients)
    gender_rng = np.random.default_rng([cfg.rng_seed, 2**48])  # own substream
    perm = gender_rng.permutation(cfg.n_patients)
    female_set = set(int(i) for i in perm[:n_female])

    exam_probs = cfg.exams_per_patient.probabilities()
    patients = tuple(
        _generate_patient(i, cfg, schema, i in female_set, exam_probs)
        for i in range(cfg.n_patients)
    )
    return Cohort(schema=schema, patients=patients)


def with_scrambled_labels(cohort: Cohort, patient_ids: set[str], seed: int) -> Cohort:
    """Copy of the cohort with the given patients' labels replaced by coin flips.

    Used by leakage tests: scrambling held-out labels must not change any
    trained artifact.
    """
    rng = np.random.default_rng(seed)
    new_patients = []
    for p in cohort.patients:
        if p.patient_id not in patient_ids:
            new_patients.append(p)
            continue
        exams = tuple(
            ExamRecord(
                patient_id=e.patient_id,
                exam_time=e.exam_time,
                age_at_exam=e.age_at_exam,
                values=dict(e.values),
                label=Label(int(rng.integers(0, 2))),
            )
            for e in p.exams
        )
        new_patients.append(Patient(p.patient_id, p.gender, exams))
    return Cohort(schema=cohort.schema, patients=tuple(new_patients))
