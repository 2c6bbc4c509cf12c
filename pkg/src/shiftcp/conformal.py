"""Split conformal prediction with the adaptive (cumulative-probability)
score: per-row scoring, calibration quantile, prediction sets, and the
coverage / set-size / accuracy report.

Ties in class probabilities break deterministically by lower class index,
in both scoring and set construction, so a set built at a row's own score
always contains that row's label.
"""

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np


@dataclass(frozen=True)
class CalibrationResult:
    epsilon: float
    threshold: float
    p: int


@dataclass(frozen=True)
class PredictionSet:
    node: int
    members: np.ndarray  # classes ordered by descending probability


@dataclass(frozen=True)
class ConformalReport:
    coverage: float
    inefficiency: float
    accuracy: float
    covered: np.ndarray  # per-node bool
    set_sizes: np.ndarray  # per-node int


def _check_row(probs_row):
    row = np.asarray(probs_row, dtype=np.float64).reshape(-1)
    if abs(row.sum() - 1.0) > 1e-6:
        raise ValueError(f"probability row sums to {row.sum()!r}, expected 1")
    return row


def aps_score(probs_row, label: int) -> float:
    """Cumulative probability of the descending-ordered classes up to and
    including the true label's position."""
    row = _check_row(probs_row)
    if not 0 <= label < row.size:
        raise ValueError(f"label {label} out of range [0, {row.size})")
    order = np.argsort(-row, kind="stable")
    pos = int(np.flatnonzero(order == label)[0])
    return float(np.cumsum(row[order])[pos])


def aps_score_matrix(probs: np.ndarray, labels) -> np.ndarray:
    """Vectorized aps_score over the rows of a probability matrix."""
    probs = np.asarray(probs, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    order = np.argsort(-probs, axis=1, kind="stable")
    cums = np.cumsum(np.take_along_axis(probs, order, axis=1), axis=1)
    pos = np.argmax(order == labels[:, None], axis=1)
    return np.take_along_axis(cums, pos[:, None], axis=1)[:, 0]


def quantile_index(p: int, epsilon: float) -> int:
    """1-based order statistic for the calibration threshold.

    The level is (1-eps)(1+1/p); the matching order statistic is
    ceil((1-eps)(p+1)), capped at p (the max score) when the level reaches 1.
    Exact rational arithmetic avoids float-boundary misrounding.
    """
    k = math.ceil((1 - Fraction(epsilon)) * (p + 1))
    return min(p, k)


def calibrate(scores, epsilon: float) -> CalibrationResult:
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    if scores.size == 0:
        raise ValueError("calibrate: empty score list")
    if not 0.0 < epsilon < 1.0:
        raise ValueError(f"epsilon must be in (0, 1), got {epsilon}")
    p = scores.size
    k = quantile_index(p, epsilon)
    threshold = float(np.sort(scores)[k - 1])
    return CalibrationResult(epsilon, threshold, p)


def predict_set(probs_row, threshold: float, node: int = -1) -> PredictionSet:
    """Classes whose cumulative-probability score is within the threshold:
    the longest descending-probability prefix with cumulative mass <= the
    threshold. May be empty (top class alone overshoots a low threshold);
    covers all classes once the threshold reaches the total mass.

    This is the set {y : score(row, y) <= threshold}, the membership rule
    whose coverage matches the calibrated level exactly. The alternative
    "stop at the first prefix >= threshold" rule overshoots the nominal
    coverage by roughly the mean true-class probability.
    """
    row = _check_row(probs_row)
    order = np.argsort(-row, kind="stable")
    cums = np.cumsum(row[order])
    k_star = int((cums <= threshold).sum())
    return PredictionSet(node, order[:k_star].copy())


def set_size_matrix(probs: np.ndarray, threshold: float) -> np.ndarray:
    """Vectorized |predict_set| over rows."""
    probs = np.asarray(probs, dtype=np.float64)
    order = np.argsort(-probs, axis=1, kind="stable")
    cums = np.cumsum(np.take_along_axis(probs, order, axis=1), axis=1)
    return (cums <= threshold).sum(axis=1)


def covered_matrix(probs: np.ndarray, labels, threshold: float) -> np.ndarray:
    """Vectorized membership test: label's rank position falls inside the set."""
    probs = np.asarray(probs, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    order = np.argsort(-probs, axis=1, kind="stable")
    pos = np.argmax(order == labels[:, None], axis=1)
    return pos < set_size_matrix(probs, threshold)


def evaluate(sets, labels, probs) -> ConformalReport:
    """Coverage, mean set size, and top-1 accuracy over one test split."""
    labels = np.asarray(labels, dtype=np.int64)
    probs = np.asarray(probs, dtype=np.float64)
    if len(sets) != labels.size or probs.shape[0] != labels.size:
        raise ValueError(
            f"length mismatch: {len(sets)} sets, {labels.size} labels, "
            f"{probs.shape[0]} probability rows"
        )
    if labels.size == 0:
        raise ValueError("evaluate: empty test set")
    covered = np.array([labels[i] in s.members for i, s in enumerate(sets)])
    sizes = np.array([s.members.size for s in sets], dtype=np.int64)
    accuracy = float(np.mean(probs.argmax(axis=1) == labels))
    return ConformalReport(
        coverage=float(covered.mean()),
        inefficiency=float(sizes.mean()),
        accuracy=accuracy,
        covered=covered,
        set_sizes=sizes,
    )
