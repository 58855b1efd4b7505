"""COCO-style annotation ingestion and derived ground-truth structures.

Only a small slice of the COCO schema is consumed: ``images`` (id, width,
height, file_name), ``annotations`` (image_id, category_id, bbox, iscrowd)
and ``categories`` (id, name) from an instances file, and
``annotations`` (image_id, caption) from a captions file.  Category names
are resolved against the loaded vocabulary, so COCO-80 and any other
vocabulary file share one code path.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InputError
from .vocab import ClassVocabulary

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ImageRecord:
    image_id: int
    width: int
    height: int
    file_name: str


@dataclass(frozen=True)
class InstanceAnnotation:
    image_id: int
    class_id: int
    bbox: tuple[float, float, float, float]  # (x, y, w, h), y grows downward
    iscrowd: bool = False


@dataclass
class GroundTruthMatrix:
    """Image-level class existence: bits[i][c] = 1 iff class c occurs in image i.

    Rows follow ``images`` order, columns follow vocabulary order.
    ``instance_counts`` holds the number of instance annotations per image
    and is used only for sampler tie-breaking.
    """

    images: list[int]
    vocab: ClassVocabulary
    bits: np.ndarray
    instance_counts: np.ndarray | None = None

    def __post_init__(self) -> None:
        expected = (len(self.images), len(self.vocab))
        if self.bits.shape != expected:
            raise InputError(f"ground-truth shape {self.bits.shape} != {expected}")

    def row(self, image_id: int) -> np.ndarray:
        return self.bits[self.images.index(image_id)]


@dataclass
class CooccurrenceMatrix:
    """counts[a][b] = number of images containing both classes a and b."""

    counts: np.ndarray


def _file_digest(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def load_instances(
    path: str | Path,
    vocab: ClassVocabulary,
    cache_dir: str | Path | None = None,
) -> tuple[list[ImageRecord], list[InstanceAnnotation], GroundTruthMatrix]:
    """Parse a COCO-format instances JSON and build the ground-truth matrix.

    Unknown category names are a hard error listing every offender.  Boxes
    reaching outside their image are clamped with a warning.  When
    ``cache_dir`` is given, the ground-truth matrix is also stored as a
    binary keyed by the input file digest and reused on later loads.
    """
    path = Path(path)
    try:
        blob = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: not valid JSON: {exc}") from exc
    for key in ("images", "annotations", "categories"):
        if key not in blob:
            raise InputError(f"{path}: missing top-level '{key}' array")

    images: list[ImageRecord] = []
    seen_ids: set[int] = set()
    for obj in blob["images"]:
        rec = ImageRecord(int(obj["id"]), int(obj["width"]), int(obj["height"]),
                          str(obj.get("file_name", "")))
        if rec.image_id in seen_ids:
            raise InputError(f"{path}: duplicate image id {rec.image_id}")
        if rec.width <= 0 or rec.height <= 0:
            raise InputError(f"{path}: image {rec.image_id} has non-positive size")
        seen_ids.add(rec.image_id)
        images.append(rec)
    by_id = {rec.image_id: rec for rec in images}

    unknown = sorted({c["name"] for c in blob["categories"] if c["name"] not in vocab.index})
    if unknown:
        raise InputError(f"{path}: categories not in vocabulary: {', '.join(unknown)}")
    cat_to_class = {int(c["id"]): vocab.index[c["name"]] for c in blob["categories"]}

    annotations: list[InstanceAnnotation] = []
    clamped = 0
    for obj in blob["annotations"]:
        image_id = int(obj["image_id"])
        if image_id not in by_id:
            raise InputError(f"{path}: annotation references unknown image {image_id}")
        cat_id = int(obj["category_id"])
        if cat_id not in cat_to_class:
            raise InputError(f"{path}: annotation references unknown category {cat_id}")
        x, y, w, h = (float(v) for v in obj["bbox"])
        if w < 0 or h < 0:
            raise InputError(f"{path}: negative box size on image {image_id}")
        img = by_id[image_id]
        cx, cy = min(max(x, 0.0), img.width), min(max(y, 0.0), img.height)
        cw = min(w, img.width - cx)
        ch = min(h, img.height - cy)
        if (cx, cy, cw, ch) != (x, y, w, h):
            clamped += 1
            x, y, w, h = cx, cy, cw, ch
        annotations.append(InstanceAnnotation(
            image_id, cat_to_class[cat_id], (x, y, w, h), bool(obj.get("iscrowd", 0))))
    if clamped:
        log.warning("%s: clamped %d boxes to image bounds", path, clamped)

    cache_file = None
    if cache_dir is not None:
        cache_file = Path(cache_dir) / f"gt_{_file_digest(path)[:16]}.npz"
        if cache_file.exists():
            cached = np.load(cache_file)
            gt = GroundTruthMatrix(images=[int(i) for i in cached["images"]], vocab=vocab,
                                   bits=cached["bits"], instance_counts=cached["instance_counts"])
            return images, annotations, gt

    row = {rec.image_id: i for i, rec in enumerate(images)}
    bits = np.zeros((len(images), len(vocab)), dtype=np.uint8)
    counts = np.zeros(len(images), dtype=np.int64)
    for ann in annotations:
        # crowd regions count toward presence: existence, not countability
        bits[row[ann.image_id], vocab.position(ann.class_id)] = 1
        counts[row[ann.image_id]] += 1
    gt = GroundTruthMatrix(images=[rec.image_id for rec in images], vocab=vocab,
                           bits=bits, instance_counts=counts)

    if cache_file is not None:
        cache_file.parent.mkdir(parents=True, exist_ok=True)
        np.savez_compressed(cache_file, images=np.asarray(gt.images),
                            bits=bits, instance_counts=counts)
    return images, annotations, gt


def load_captions(path: str | Path) -> dict[int, list[str]]:
    """Parse a COCO-format captions JSON into image_id -> captions (file order)."""
    path = Path(path)
    try:
        blob = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: not valid JSON: {exc}") from exc
    if "annotations" not in blob:
        raise InputError(f"{path}: missing top-level 'annotations' array")
    captions: dict[int, list[str]] = {}
    for obj in blob["annotations"]:
        captions.setdefault(int(obj["image_id"]), []).append(str(obj["caption"]))
    return captions


def align_captions(
    image_ids: list[int], captions: dict[int, list[str]],
) -> tuple[dict[int, list[str]], int]:
    """Give every listed image a caption list; count images that had none."""
    missing = 0
    aligned = {}
    for image_id in image_ids:
        caps = captions.get(image_id, [])
        if not caps:
            missing += 1
        aligned[image_id] = caps
    if missing:
        log.warning("%d images have no reference captions", missing)
    return aligned, missing


def build_cooccurrence(gt: GroundTruthMatrix) -> CooccurrenceMatrix:
    """counts[a][b] = images containing both a and b (diagonal = per-class counts)."""
    bits = gt.bits.astype(np.int64)
    return CooccurrenceMatrix(counts=bits.T @ bits)


def natural_subsample(gt: GroundTruthMatrix, target_count: int, seed: int) -> list[int]:
    """Greedy class-coverage subsample of the image pool.

    Repeatedly picks the image adding the most not-yet-covered classes
    (ties: fewest total instance annotations, then lowest image_id); once
    every class present in the pool is covered, the remainder is filled by
    seeded uniform sampling without replacement.
    """
    if target_count < 1:
        raise InputError("target_count must be >= 1")
    if target_count >= len(gt.images):
        return list(gt.images)

    counts = gt.instance_counts
    if counts is None:
        counts = gt.bits.sum(axis=1)
    class_sets = [frozenset(np.flatnonzero(gt.bits[i]).tolist()) for i in range(len(gt.images))]
    uncovered = frozenset().union(*class_sets) if class_sets else frozenset()

    chosen: list[int] = []
    remaining = set(range(len(gt.images)))
    uncovered = set(uncovered)
    while uncovered and len(chosen) < target_count:
        best = min(
            remaining,
            key=lambda i: (-len(class_sets[i] & uncovered), counts[i], gt.images[i]),
        )
        if not class_sets[best] & uncovered:
            break
        chosen.append(best)
        remaining.discard(best)
        uncovered -= class_sets[best]

    need = target_count - len(chosen)
    if need > 0:
        pool = sorted(remaining, key=lambda i: gt.images[i])
        rng = np.random.default_rng(seed)
        fill = rng.choice(len(pool), size=need, replace=False)
        chosen.extend(pool[j] for j in fill)
    return [gt.images[i] for i in chosen]
