"""Explainable, uncertainty-aware classification of TMJ involvement from
longitudinal clinical examinations: data model, synthetic cohorts,
preprocessing, sampling strategies, random forest, conformal prediction sets,
SHAP attributions, evaluation harness, CLI and serving layer."""

__version__ = "0.1.0"
