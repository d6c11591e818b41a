"""Confusion-matrix metrics on the percent scale, plus multi-run aggregation.

The attack class (label 1) is the positive class everywhere. Metrics for the
normal class are obtained by swapping the positive-class convention, see
:meth:`ConfusionCounts.swapped`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

__all__ = [
    "ConfusionCounts",
    "ClassMetrics",
    "RunSummary",
    "confusion",
    "class_metrics",
    "macro_f1",
    "aggregate_runs",
]

METRIC_NAMES = ("accuracy", "precision", "recall", "f1")


@dataclass(frozen=True)
class ConfusionCounts:
    """Binary confusion counts with attack (1) as the positive class."""

    tp: int
    fp: int
    fn: int
    tn: int

    def __post_init__(self) -> None:
        for name in ("tp", "fp", "fn", "tn"):
            v = getattr(self, name)
            if v < 0:
                raise ValueError(f"{name} must be non-negative, got {v}")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    def swapped(self) -> ConfusionCounts:
        """Counts with the positive-class convention flipped (normal as positive)."""
        return ConfusionCounts(tp=self.tn, fp=self.fn, fn=self.fp, tn=self.tp)


@dataclass(frozen=True)
class ClassMetrics:
    """Accuracy, precision, recall and F1 on the 0..100 percent scale."""

    accuracy: float
    precision: float
    recall: float
    f1: float

    def as_dict(self) -> dict[str, float]:
        return {name: getattr(self, name) for name in METRIC_NAMES}


@dataclass(frozen=True)
class RunSummary:
    """Per-metric mean and population standard deviation over runs."""

    mean: ClassMetrics
    std: ClassMetrics
    run_count: int


def confusion(y_true: Sequence[int], y_pred: Sequence[int]) -> ConfusionCounts:
    """Count tp/fp/fn/tn for binary labels (1 = attack, positive class).

    Raises:
        ValueError: on length mismatch or empty inputs.
    """
    t = np.asarray(y_true, dtype=np.int64)
    p = np.asarray(y_pred, dtype=np.int64)
    if t.shape != p.shape:
        raise ValueError(f"length mismatch: y_true has {t.size}, y_pred has {p.size}")
    if t.size == 0:
        raise ValueError("cannot compute confusion counts on empty inputs")
    return ConfusionCounts(
        tp=int(np.sum((t == 1) & (p == 1))),
        fp=int(np.sum((t == 0) & (p == 1))),
        fn=int(np.sum((t == 1) & (p == 0))),
        tn=int(np.sum((t == 0) & (p == 0))),
    )


def _ratio_percent(num: int, den: int) -> float:
    # Zero-denominator cells are defined as 0 so near-degenerate results stay numeric.
    return 0.0 if den == 0 else 100.0 * num / den


def class_metrics(c: ConfusionCounts) -> ClassMetrics:
    """Percent-scale accuracy, precision, recall, F1 for the positive class."""
    if c.total == 0:
        raise ValueError("confusion counts are all zero")
    accuracy = 100.0 * (c.tp + c.tn) / c.total
    precision = _ratio_percent(c.tp, c.tp + c.fp)
    recall = _ratio_percent(c.tp, c.tp + c.fn)
    f1 = 0.0 if precision + recall == 0 else 2.0 * precision * recall / (precision + recall)
    return ClassMetrics(accuracy=accuracy, precision=precision, recall=recall, f1=f1)


def macro_f1(attack: ClassMetrics, normal: ClassMetrics) -> float:
    """Unweighted mean of the attack-class and normal-class F1 scores."""
    return (attack.f1 + normal.f1) / 2.0


def aggregate_runs(per_run: Sequence[ClassMetrics]) -> RunSummary:
    """Arithmetic mean and population standard deviation of each metric over runs."""
    if len(per_run) == 0:
        raise ValueError("need at least one run to aggregate")
    means = {}
    stds = {}
    for name in METRIC_NAMES:
        values = [getattr(m, name) for m in per_run]
        mu = math.fsum(values) / len(values)
        var = math.fsum((v - mu) ** 2 for v in values) / len(values)
        means[name] = mu
        stds[name] = math.sqrt(var)
    return RunSummary(mean=ClassMetrics(**means), std=ClassMetrics(**stds), run_count=len(per_run))
