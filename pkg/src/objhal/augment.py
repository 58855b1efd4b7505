"""Object-enumeration training records: present classes with grid locations
plus co-occurrence-biased absent classes.

Each image yields one instruction/response pair in a plain-text grammar::

    instruction: <image> Give a list of objects and locations in the image.
    response:    dog [center]
                 chair [absent]

Present classes come first in vocabulary order, each located by the center
of its largest-area box on a 3x3 grid; sampled absent classes follow with
the literal label "absent".
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dataset import CooccurrenceMatrix, GroundTruthMatrix, ImageRecord, InstanceAnnotation
from .errors import InputError
from .vocab import ClassVocabulary

INSTRUCTION = "<image> Give a list of objects and locations in the image."
ABSENT = "absent"

_ROWS = ("top", "middle", "bottom")
_COLS = ("left", "center", "right")

GRID_LABELS = tuple(
    "center" if (r, c) == (1, 1) else f"{_ROWS[r]} {_COLS[c]}"
    for r in range(3) for c in range(3)
)

_LINE_RE = re.compile(r"^(?P<name>.+) \[(?P<label>[a-z ]+)\]$")


def grid_location(bbox: tuple[float, float, float, float],
                  image_width: float, image_height: float) -> str:
    """3x3 grid cell of a box center; y grows downward.

    Thirds are half-open intervals closed at the right/bottom edge, so a
    center exactly on a boundary falls into the higher-index cell.
    """
    if image_width <= 0 or image_height <= 0:
        raise InputError("image dimensions must be positive")
    x, y, w, h = bbox
    u = (x + w / 2.0) / image_width
    v = (y + h / 2.0) / image_height
    col = 0 if u < 1 / 3 else (1 if u < 2 / 3 else 2)
    row = 0 if v < 1 / 3 else (1 if v < 2 / 3 else 2)
    return "center" if (row, col) == (1, 1) else f"{_ROWS[row]} {_COLS[col]}"


@dataclass(frozen=True)
class AugmentConfig:
    negatives_per_image: int = 3
    cooccurrence_bias_weight: float = 1.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.negatives_per_image < 0:
            raise InputError("negatives_per_image must be >= 0")
        if not 0.0 <= self.cooccurrence_bias_weight <= 1.0:
            raise InputError("cooccurrence_bias_weight must lie in [0, 1]")


def sample_negatives(
    present: set[int],
    cooc: CooccurrenceMatrix,
    vocab: ClassVocabulary,
    config: AugmentConfig,
    rng: np.random.Generator | None = None,
) -> list[int]:
    """Absent classes sampled without replacement, biased toward classes that
    co-occur with the present ones.

    The weight of absent class c mixes its strongest co-occurrence with any
    present class (normalized over the absent pool) against a uniform term,
    controlled by the bias weight.  All-zero co-occurrence falls back to
    uniform.
    """
    if rng is None:
        rng = np.random.default_rng(config.seed)
    positions = [i for i, e in enumerate(vocab.classes) if e.class_id not in present]
    if not positions or config.negatives_per_image == 0:
        return []
    n = min(config.negatives_per_image, len(positions))

    present_pos = [vocab.position(c) for c in present]
    uniform = np.full(len(positions), 1.0 / len(positions))
    if present_pos:
        strongest = cooc.counts[np.ix_(positions, present_pos)].max(axis=1).astype(float)
    else:
        strongest = np.zeros(len(positions))
    if strongest.sum() > 0:
        weights = (config.cooccurrence_bias_weight * strongest / strongest.sum()
                   + (1.0 - config.cooccurrence_bias_weight) * uniform)
    else:
        weights = uniform
    weights = weights / weights.sum()

    supported = int(np.count_nonzero(weights))
    if supported >= n:
        picked = rng.choice(len(positions), size=n, replace=False, p=weights)
    else:
        # full bias can zero out most classes; take the whole support,
        # then fill uniformly from the rest
        picked = np.flatnonzero(weights)
        rest = np.flatnonzero(weights == 0)
        extra = rng.choice(rest, size=n - supported, replace=False)
        picked = np.concatenate([picked, extra])
    return [vocab.classes[positions[int(j)]].class_id for j in picked]


@dataclass
class EnumerationRecord:
    image_id: int
    lines: list[tuple[str, str]]  # (class name, grid label or "absent")
    rendered_instruction: str
    rendered_response: str


def build_enumeration_record(
    image: ImageRecord,
    annotations: list[InstanceAnnotation],
    vocab: ClassVocabulary,
    cooc: CooccurrenceMatrix,
    config: AugmentConfig,
    rng: np.random.Generator | None = None,
) -> EnumerationRecord:
    """One record for one image: located present classes, then sampled absences."""
    best_box: dict[int, tuple[float, tuple]] = {}  # class_id -> (area, bbox)
    for ann in annotations:
        if ann.image_id != image.image_id:
            raise InputError(f"annotation for image {ann.image_id} passed with image "
                             f"{image.image_id}")
        area = ann.bbox[2] * ann.bbox[3]
        prior = best_box.get(ann.class_id)
        if prior is None or area > prior[0]:
            best_box[ann.class_id] = (area, ann.bbox)

    lines: list[tuple[str, str]] = []
    for entry in vocab.classes:  # vocabulary order
        if entry.class_id in best_box:
            _, bbox = best_box[entry.class_id]
            lines.append((entry.name, grid_location(bbox, image.width, image.height)))
    negatives = sample_negatives(set(best_box), cooc, vocab, config, rng=rng)
    for class_id in negatives:
        lines.append((vocab.entry(class_id).name, ABSENT))

    response = "\n".join(f"{name} [{label}]" for name, label in lines)
    return EnumerationRecord(
        image_id=image.image_id,
        lines=lines,
        rendered_instruction=INSTRUCTION,
        rendered_response=response,
    )


def parse_enumeration_response(text: str, vocab: ClassVocabulary) -> list[tuple[str, str]]:
    """Inverse of the record grammar; rejects unknown names and labels."""
    lines = []
    for raw in text.splitlines():
        match = _LINE_RE.match(raw)
        if not match:
            raise InputError(f"line does not match the enumeration grammar: {raw!r}")
        name, label = match.group("name"), match.group("label")
        if name not in vocab.index:
            raise InputError(f"unknown class name {name!r}")
        if label != ABSENT and label not in GRID_LABELS:
            raise InputError(f"unknown location label {label!r}")
        lines.append((name, label))
    return lines


def augment_dataset(
    images: list[ImageRecord],
    annotations: list[InstanceAnnotation],
    gt: GroundTruthMatrix,
    config: AugmentConfig,
    out_path: str | Path,
) -> int:
    """Write one enumeration record per image (ordered by image_id) as JSON lines.

    Each image draws from its own generator seeded by (run seed, image_id),
    so the output is independent of annotation order.
    """
    from .dataset import build_cooccurrence

    cooc = build_cooccurrence(gt)
    by_image: dict[int, list[InstanceAnnotation]] = {img.image_id: [] for img in images}
    for ann in annotations:
        by_image[ann.image_id].append(ann)

    count = 0
    with open(out_path, "w", encoding="utf-8") as fh:
        for image in sorted(images, key=lambda im: im.image_id):
            anns = sorted(by_image[image.image_id],
                          key=lambda a: (a.class_id, a.bbox))
            rng = np.random.default_rng([config.seed, image.image_id])
            record = build_enumeration_record(image, anns, gt.vocab, cooc, config, rng=rng)
            fh.write(json.dumps({
                "image_id": record.image_id,
                "instruction": record.rendered_instruction,
                "response": record.rendered_response,
            }, ensure_ascii=False) + "\n")
            count += 1
    return count
