"""Ingestion of the free-form LVLM responses the harness evaluates.

Responses are produced outside the harness (no model is run here) and
arrive as one JSON object per line with keys ``model_id``, ``image_id``,
``prompt`` and ``response``; an optional ``meta`` map is carried through
opaquely.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

from .errors import InputError

# The concept-neutral instruction every response is expected to answer.
DESCRIBE_PROMPT = "Describe this image in detail."

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ResponseRecord:
    model_id: str
    image_id: int
    prompt: str
    response_text: str
    generation_meta: dict | None = None


@dataclass
class ResponseSet:
    """All responses of one model, indexed by image id."""

    model_id: str
    records: dict[int, ResponseRecord]
    coverage: float
    prompt_mismatches: int = 0

    def image_ids(self) -> list[int]:
        return sorted(self.records)

    def __len__(self) -> int:
        return len(self.records)


def ingest_responses(
    path: str | Path,
    dataset_images: list[int],
    canonical_prompt: str = DESCRIBE_PROMPT,
    allow_empty: bool = False,
) -> ResponseSet:
    """Read and validate a newline-delimited response file.

    Duplicate image ids and ids unknown to the dataset are hard errors.
    Records whose prompt differs from the canonical prompt only bump a
    warning counter.  Empty response texts are rejected unless
    ``allow_empty`` is set.
    """
    path = Path(path)
    known = set(dataset_images)
    records: dict[int, ResponseRecord] = {}
    model_id: str | None = None
    mismatches = 0
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise InputError(f"{path}:{lineno}: not valid JSON: {exc}") from exc
        try:
            rec = ResponseRecord(
                model_id=str(obj["model_id"]),
                image_id=int(obj["image_id"]),
                prompt=str(obj["prompt"]),
                response_text=str(obj["response"]),
                generation_meta=obj.get("meta"),
            )
        except KeyError as exc:
            raise InputError(f"{path}:{lineno}: missing key {exc}") from exc
        if model_id is None:
            model_id = rec.model_id
        elif rec.model_id != model_id:
            raise InputError(f"{path}:{lineno}: mixed model ids "
                             f"({model_id!r} and {rec.model_id!r}) in one set")
        if rec.image_id in records:
            raise InputError(f"{path}:{lineno}: duplicate response for image {rec.image_id}")
        if rec.image_id not in known:
            raise InputError(f"{path}:{lineno}: image {rec.image_id} not in the dataset")
        if not rec.response_text and not allow_empty:
            raise InputError(f"{path}:{lineno}: empty response for image {rec.image_id} "
                             "(pass allow_empty to accept)")
        if rec.prompt != canonical_prompt:
            mismatches += 1
        records[rec.image_id] = rec
    if mismatches:
        log.warning("%s: %d records use a non-canonical prompt", path, mismatches)
    coverage = len(records) / len(dataset_images) if dataset_images else 0.0
    return ResponseSet(model_id=model_id or "", records=records,
                       coverage=coverage, prompt_mismatches=mismatches)


def length_stats(responses: ResponseSet) -> dict[str, float]:
    """Character-count statistics; median uses the lower-median convention."""
    if not responses.records:
        raise InputError("cannot compute length stats of an empty response set")
    lengths = sorted(len(r.response_text) for r in responses.records.values())
    n = len(lengths)
    return {
        "count": n,
        "median_chars": lengths[(n - 1) // 2],
        "mean_chars": sum(lengths) / n,
        "min_chars": lengths[0],
        "max_chars": lengths[-1],
    }
