"""Collapse the judgement tensor into per-cell predictions by voting.

With ``s`` yes votes among ``nm`` voters, a cell commits to 1 when
``s >= k``, to 0 when the no votes reach ``k`` (with binary votes this is
``s <= nm - k``), and is otherwise marked ignore (-1).  Invalid votes count
as neither yes nor no but still occupy voter slots, so they push cells
toward ignore — an unreadable judge answer is treated as low confidence.
The thresholds are consistent only when ``2k > nm``, which is enforced.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, InputError
from .judge import ANSWER_NO, ANSWER_YES, JudgementTensor

IGNORE = -1

VOTE_LABELS = ("unanimous", "all_but_one", "simple_majority", "custom")


def vote_label(k: int, nm: int) -> str:
    """Canonical name of a threshold for a given voter count."""
    if k == nm:
        return "unanimous"
    if k == nm - 1:
        return "all_but_one"
    if k == (nm + 2) // 2:  # ceil((nm + 1) / 2)
        return "simple_majority"
    return "custom"


@dataclass(frozen=True)
class VoteConfig:
    k: int
    label: str | None = None

    @classmethod
    def unanimous(cls, nm: int) -> "VoteConfig":
        return cls(nm, "unanimous")

    @classmethod
    def all_but_one(cls, nm: int) -> "VoteConfig":
        return cls(nm - 1, "all_but_one")

    @classmethod
    def simple_majority(cls, nm: int) -> "VoteConfig":
        return cls((nm + 2) // 2, "simple_majority")

    def validate(self, nm: int) -> str:
        if not 1 <= self.k <= nm:
            raise ConfigError(f"voting threshold k={self.k} outside 1..{nm}")
        if 2 * self.k <= nm:
            raise ConfigError(
                f"voting threshold k={self.k} with nm={nm} lets both outcomes fire; need 2k > nm")
        canonical = vote_label(self.k, nm)
        if self.label is not None and self.label != canonical:
            raise ConfigError(
                f"voting label {self.label!r} does not match k={self.k} for nm={nm} "
                f"(that is {canonical!r})")
        return canonical


@dataclass
class PredictionMatrix:
    """Per (image, class) prediction: 1 present, 0 absent, -1 ignore."""

    images: list[int]
    class_ids: list[int]
    cells: np.ndarray  # int8, shape (|I|, |C|)
    k: int
    nm: int
    label: str = "custom"

    def ignored_count(self) -> int:
        return int((self.cells == IGNORE).sum())


def apply_voting(tensor: JudgementTensor, config: VoteConfig) -> PredictionMatrix:
    """Vote every cell of the tensor under the configured threshold."""
    nm = tensor.nm
    label = config.validate(nm)
    yes = (tensor.cells == ANSWER_YES).sum(axis=2)
    no = (tensor.cells == ANSWER_NO).sum(axis=2)
    cells = np.full(yes.shape, IGNORE, dtype=np.int8)
    cells[no >= config.k] = 0
    cells[yes >= config.k] = 1  # disjoint from the above since 2k > nm
    return PredictionMatrix(
        images=list(tensor.images),
        class_ids=list(tensor.class_ids),
        cells=cells,
        k=config.k,
        nm=nm,
        label=label,
    )


def write_prediction_csv(pred: PredictionMatrix, path: str | Path) -> None:
    """Audit export: one (image_id, class_id, value) row per cell."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["image_id", "class_id", "value"])
        for i, image_id in enumerate(pred.images):
            for c, class_id in enumerate(pred.class_ids):
                writer.writerow([image_id, class_id, int(pred.cells[i, c])])


def vote_counts(tensor: JudgementTensor) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(yes, no, invalid) counts per cell, mostly for diagnostics."""
    yes = (tensor.cells == ANSWER_YES).sum(axis=2)
    no = (tensor.cells == ANSWER_NO).sum(axis=2)
    invalid = tensor.nm - yes - no
    return yes, no, invalid


def ensure_dims_match(pred: PredictionMatrix, images: list[int], class_ids: list[int]) -> None:
    if pred.images != list(images):
        raise InputError("prediction matrix image order does not match the dataset")
    if pred.class_ids != list(class_ids):
        raise InputError("prediction matrix class order does not match the vocabulary")
