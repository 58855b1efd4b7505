"""Precision/recall/F-beta metrics over (prediction, ground truth) pairs.

All scores are percentages in [0, 100].  Overall metrics pool counts over
every (image, class) cell; class-wise metrics average per-class precision
and recall over classes with a defined denominator and apply F-beta to the
averages.  Ignore cells (-1) are excluded from every tally.  Degenerate
denominators yield 0 with an explicit flag so silent zeros cannot skew
comparisons.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.stats import rankdata

from .dataset import GroundTruthMatrix
from .errors import InputError
from .verdict import IGNORE, PredictionMatrix


@dataclass
class ConfusionCounts:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0
    ignored: int = 0

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn + self.ignored


def confusion(
    pred: PredictionMatrix, gt: GroundTruthMatrix,
) -> tuple[ConfusionCounts, list[ConfusionCounts]]:
    """Pooled and per-class confusion tallies; ignore cells count only as ignored."""
    if pred.cells.shape != gt.bits.shape:
        raise InputError(
            f"prediction shape {pred.cells.shape} != ground truth shape {gt.bits.shape}")
    if list(pred.images) != list(gt.images):
        raise InputError("prediction and ground truth image orders differ")

    p = pred.cells
    y = gt.bits.astype(np.int8)
    masks = {
        "tp": (p == 1) & (y == 1),
        "fp": (p == 1) & (y == 0),
        "fn": (p == 0) & (y == 1),
        "tn": (p == 0) & (y == 0),
        "ignored": p == IGNORE,
    }
    pooled = ConfusionCounts(**{k: int(m.sum()) for k, m in masks.items()})
    per_class = []
    for c in range(p.shape[1]):
        per_class.append(ConfusionCounts(**{k: int(m[:, c].sum()) for k, m in masks.items()}))
    return pooled, per_class


def f_beta(p: float, r: float, beta: float) -> float:
    """Generalized F score of precision/recall percentages; 0 when both are 0."""
    if beta <= 0:
        raise InputError("beta must be positive")
    if p == 0 and r == 0:
        return 0.0
    b2 = beta * beta
    return (1 + b2) * p * r / (b2 * p + r)


@dataclass
class OverallMetrics:
    p: float
    r: float
    f1: float
    f05: float
    degenerate_precision: bool = False  # no positive predictions at all
    degenerate_recall: bool = False  # no ground-truth positives at all
    degenerate_f: bool = False  # both p and r were 0


def overall_metrics(counts: ConfusionCounts) -> OverallMetrics:
    """Class-agnostic metrics from pooled counts."""
    deg_p = counts.tp + counts.fp == 0
    deg_r = counts.tp + counts.fn == 0
    p = 0.0 if deg_p else 100.0 * counts.tp / (counts.tp + counts.fp)
    r = 0.0 if deg_r else 100.0 * counts.tp / (counts.tp + counts.fn)
    return OverallMetrics(
        p=p, r=r,
        f1=f_beta(p, r, 1.0), f05=f_beta(p, r, 0.5),
        degenerate_precision=deg_p, degenerate_recall=deg_r,
        degenerate_f=(p == 0 and r == 0),
    )


@dataclass
class ClasswiseMetrics:
    p: float
    r: float
    f1: float
    f05: float
    per_class_p: dict[int, float] = field(default_factory=dict)  # class index -> %
    per_class_r: dict[int, float] = field(default_factory=dict)
    excluded_precision: list[int] = field(default_factory=list)  # class indices
    excluded_recall: list[int] = field(default_factory=list)
    degenerate_f: bool = False


def classwise_metrics(per_class: list[ConfusionCounts]) -> ClasswiseMetrics:
    """Unweighted means of per-class precision/recall, then F-beta of the means.

    A class with no positive predictions contributes nothing to the
    precision average; a class with no ground-truth positives contributes
    nothing to the recall average.  Both exclusions are reported.
    """
    per_p: dict[int, float] = {}
    per_r: dict[int, float] = {}
    excluded_p: list[int] = []
    excluded_r: list[int] = []
    for idx, c in enumerate(per_class):
        if c.tp + c.fp == 0:
            excluded_p.append(idx)
        else:
            per_p[idx] = 100.0 * c.tp / (c.tp + c.fp)
        if c.tp + c.fn == 0:
            excluded_r.append(idx)
        else:
            per_r[idx] = 100.0 * c.tp / (c.tp + c.fn)
    p = sum(per_p.values()) / len(per_p) if per_p else 0.0
    r = sum(per_r.values()) / len(per_r) if per_r else 0.0
    return ClasswiseMetrics(
        p=p, r=r,
        f1=f_beta(p, r, 1.0), f05=f_beta(p, r, 0.5),
        per_class_p=per_p, per_class_r=per_r,
        excluded_precision=excluded_p, excluded_recall=excluded_r,
        degenerate_f=(p == 0 and r == 0),
    )


def spearman(xs, ys) -> float:
    """Spearman rank correlation: Pearson correlation of average-tie ranks."""
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if xs.shape != ys.shape or xs.ndim != 1:
        raise InputError("score vectors must be 1-D and of equal length")
    if xs.size < 2:
        raise InputError("need at least two scores to correlate")
    rx = rankdata(xs, method="average")
    ry = rankdata(ys, method="average")
    if np.ptp(rx) == 0 or np.ptp(ry) == 0:
        raise InputError("rank correlation undefined for a constant vector")
    return float(np.corrcoef(rx, ry)[0, 1])
