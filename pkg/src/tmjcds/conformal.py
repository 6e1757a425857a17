"""Split-conformal prediction sets with the regularized adaptive score.

The nonconformity score of a label, given class probabilities sorted in
descending order, is the cumulative probability mass down to the label's rank
plus a rank penalty: sum_{j<=r} p_(j) + lambda * max(0, r - k_reg), minus
u * p_(r) in the randomized variant (u uniform on [0,1], supplied by the
caller).  Calibration takes the ceil((1-alpha)(n+1))-th smallest calibration
score as the threshold; prediction sets include classes in descending
probability order while the running score stays within the threshold, which
makes every set a prefix of that ordering by construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .forest import Forest
from .schema import Label

SCORE_DEFINITION_VERSION = "raps-v1"

#: threshold value meaning "every set is the full label set"
TAU_CAP = math.inf

_SIMPLEX_TOL = 1e-9


class ScoreVersionMismatch(ValueError):
    pass


@dataclass(frozen=True)
class ConformalConfig:
    alpha: float = 0.1
    lambda_reg: float = 0.01
    k_reg: int = 1
    randomized: bool = False
    allow_empty_sets: bool = False
    seed: int = 0

    def __post_init__(self) -> None:
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must be in (0, 1)")
        if self.lambda_reg < 0:
            raise ValueError("lambda_reg must be >= 0")
        if self.k_reg < 0:
            raise ValueError("k_reg must be >= 0")

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "lambda_reg": self.lambda_reg,
            "k_reg": self.k_reg,
            "randomized": self.randomized,
            "allow_empty_sets": self.allow_empty_sets,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ConformalConfig":
        return cls(**d)


@dataclass(frozen=True)
class CalibratedThreshold:
    tau_hat: float
    n_calib: int
    score_definition_version: str = SCORE_DEFINITION_VERSION

    def __post_init__(self) -> None:
        if self.n_calib < 1:
            raise ValueError("n_calib must be >= 1")

    @property
    def capped(self) -> bool:
        return math.isinf(self.tau_hat)


@dataclass(frozen=True)
class PredictionSet:
    labels: tuple[Label, ...]  # prefix of the descending-probability ordering
    sorted_probs: tuple[float, ...]
    sorted_classes: tuple[int, ...]

    @property
    def set_size(self) -> int:
        return len(self.labels)

    def contains(self, label) -> bool:
        return Label(int(label)) in self.labels


def _check_simplex(probs: np.ndarray) -> None:
    if probs.ndim != 1 or len(probs) < 2:
        raise ValueError("probs must be a 1-D simplex vector")
    if (probs < -_SIMPLEX_TOL).any() or abs(float(probs.sum()) - 1.0) > _SIMPLEX_TOL:
        raise ValueError(f"probabilities off the simplex: {probs.tolist()}")


def raps_score(
    probs: Sequence[float], label: int, cfg: ConformalConfig, u: float = 0.0
) -> float:
    """Nonconformity score of ``label`` under the regularized adaptive rule."""
    p = np.asarray(probs, dtype=float)
    _check_simplex(p)
    order = np.argsort(-p, kind="stable")
    rank = int(np.nonzero(order == int(label))[0][0]) + 1  # 1-based
    cumulative = float(p[order[:rank]].sum())
    penalty = cfg.lambda_reg * max(0, rank - cfg.k_reg)
    random_part = (u * float(p[order[rank - 1]])) if cfg.randomized else 0.0
    return cumulative + penalty - random_part


def calibrate_from_scores(scores: Sequence[float], alpha: float) -> float:
    """k-th smallest score with k = ceil((1-alpha)(n+1)); +inf cap when k > n."""
    s = np.asarray(scores, dtype=float)
    n = len(s)
    if n < 1:
        raise ValueError("empty calibration set")
    k = math.ceil((1.0 - alpha) * (n + 1))
    if k > n:
        return TAU_CAP
    return float(np.sort(s)[k - 1])


def calibrate(
    forest: Forest, X_calib: np.ndarray, y_calib: np.ndarray, cfg: ConformalConfig
) -> CalibratedThreshold:
    """Split-conformal threshold from a held-out calibration set.

    Deterministic given cfg.seed (which drives the randomized variant's
    uniform draws).
    """
    X_calib = np.asarray(X_calib, dtype=float)
    y_calib = np.asarray(y_calib)
    if X_calib.shape[0] == 0:
        raise ValueError("empty calibration set")
    if X_calib.shape[0] != len(y_calib):
        raise ValueError("X_calib and y_calib must align")
    proba = forest.predict_proba_matrix(X_calib)
    rng = np.random.default_rng(cfg.seed)
    us = rng.random(len(y_calib)) if cfg.randomized else np.zeros(len(y_calib))
    scores = [
        raps_score(proba[i], int(y_calib[i]), cfg, us[i]) for i in range(len(y_calib))
    ]
    return CalibratedThreshold(
        tau_hat=calibrate_from_scores(scores, cfg.alpha), n_calib=len(y_calib)
    )


def set_from_probs(
    probs: Sequence[float], threshold: CalibratedThreshold, cfg: ConformalConfig,
    u: float = 0.0,
) -> PredictionSet:
    """Build the prediction set for one probability vector.

    Classes enter in descending-probability order while the running score of
    the classes included so far stays strictly below tau (so the class that
    crosses the threshold is still included, and the score being calibrated
    upper-bounds the set-entry score of every covered label).  With
    allow_empty_sets=False an empty set is replaced by the argmax singleton.
    """
    if threshold.score_definition_version != SCORE_DEFINITION_VERSION:
        raise ScoreVersionMismatch(
            f"threshold was calibrated under {threshold.score_definition_version!r}"
        )
    p = np.asarray(probs, dtype=float)
    _check_simplex(p)
    order = np.argsort(-p, kind="stable")
    included: list[Label] = []
    cumulative = 0.0
    running = 0.0  # score of the included prefix; 0 before any class
    for pos, cls in enumerate(order, start=1):
        if not running < threshold.tau_hat:
            break
        included.append(Label(int(cls)))
        cumulative += float(p[cls])
        running = cumulative + cfg.lambda_reg * max(0, pos - cfg.k_reg)
        if cfg.randomized:
            running -= u * float(p[cls])
    if not included and not cfg.allow_empty_sets:
        included = [Label(int(order[0]))]
    return PredictionSet(
        labels=tuple(included),
        sorted_probs=tuple(float(p[c]) for c in order),
        sorted_classes=tuple(int(c) for c in order),
    )


def predict_set(
    forest: Forest, threshold: CalibratedThreshold, x: Sequence[float],
    cfg: ConformalConfig, u: float = 0.0,
) -> PredictionSet:
    p0, p1 = forest.predict_proba(x)
    return set_from_probs((p0, p1), threshold, cfg, u)


@dataclass(frozen=True)
class SetEvaluation:
    """Per-true-class coverage and mean set size, plus marginal coverage."""

    coverage: dict[int, float]
    mean_set_size: dict[int, float]
    marginal_coverage: float
    class_counts: dict[int, int] = field(default_factory=dict)


def evaluate_sets(sets: Sequence[PredictionSet], y_true: Sequence[int]) -> SetEvaluation:
    """Count coverage/set size conditioned on the true class.

    Marginal coverage is the class-frequency-weighted mean of the per-class
    coverages (equivalently the overall covered fraction).
    """
    if len(sets) != len(y_true):
        raise ValueError("sets and y_true must align")
    counts = {0: 0, 1: 0}
    covered = {0: 0, 1: 0}
    size_sum = {0: 0, 1: 0}
    for s, yt in zip(sets, y_true):
        c = int(yt)
        counts[c] += 1
        covered[c] += int(s.contains(c))
        size_sum[c] += s.set_size
    coverage = {c: (covered[c] / counts[c] if counts[c] else 0.0) for c in counts}
    mean_size = {c: (size_sum[c] / counts[c] if counts[c] else 0.0) for c in counts}
    total = sum(counts.values())
    marginal = sum(covered.values()) / total if total else 0.0
    return SetEvaluation(
        coverage=coverage,
        mean_set_size=mean_size,
        marginal_coverage=marginal,
        class_counts=dict(counts),
    )
