"""Legacy exact-text-matching hallucination metric for captions.

Class names and their synonyms are matched as whole-word phrases (with a
plural rule) in lowercased text; ground truth per image is the union of
instance-annotation classes and classes extracted from the reference
captions.  The hallucination ratios then compare extracted classes to that
ground truth.  The synonym dictionary drives well-known false matches
(e.g. a "seat" synonym firing inside "toilet seat"); that behaviour is the
metric, not a bug here.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from .dataset import InstanceAnnotation
from .errors import InputError
from .vocab import ClassVocabulary


@dataclass
class ExtractionResult:
    caption: str
    # (matched phrase, class_id, (start, end)); spans are non-overlapping
    # after leftmost-longest resolution
    mentions: list[tuple[str, int, tuple[int, int]]] = field(default_factory=list)

    def class_ids(self) -> set[int]:
        return {class_id for _, class_id, _ in self.mentions}


class ObjectExtractor:
    """Compiled whole-word phrase matcher over a vocabulary."""

    def __init__(self, vocab: ClassVocabulary):
        self.vocab = vocab
        variant_to_class: dict[str, int] = {}
        for entry in vocab.classes:
            for phrase in (entry.name, *entry.synonyms):
                for variant in (phrase, phrase + "s", phrase + "es"):
                    # a plural variant may collide with another class's own
                    # phrase; the literal phrase wins
                    if variant == phrase or variant not in vocab.index:
                        variant_to_class.setdefault(variant, entry.class_id)
        self._variant_to_class = variant_to_class
        alternatives = sorted(variant_to_class, key=len, reverse=True)
        pattern = "|".join(re.escape(v) for v in alternatives)
        # word boundaries at non-alphanumerics; longest alternative wins at
        # each start position, and finditer keeps matches non-overlapping
        self._regex = re.compile(rf"(?<![a-z0-9])(?:{pattern})(?![a-z0-9])")

    def extract(self, text: str) -> ExtractionResult:
        lowered = text.lower()
        mentions = []
        for match in self._regex.finditer(lowered):
            phrase = match.group(0)
            mentions.append((phrase, self._variant_to_class[phrase], match.span()))
        return ExtractionResult(caption=text, mentions=mentions)


def extract_objects(text: str, vocab: ClassVocabulary) -> ExtractionResult:
    """One-shot extraction; build an ObjectExtractor for corpus-sized work."""
    return ObjectExtractor(vocab).extract(text)


def build_chair_gt(
    instances: list[InstanceAnnotation],
    captions: dict[int, list[str]],
    vocab: ClassVocabulary,
    image_ids: list[int] | None = None,
) -> dict[int, set[int]]:
    """Per-image ground-truth class sets: annotations united with caption matches.

    ``image_ids``, when given, guarantees an (possibly empty) entry per
    listed image; otherwise the keys are the images seen in either source.
    """
    extractor = ObjectExtractor(vocab)
    gt: dict[int, set[int]] = {}
    if image_ids is not None:
        for image_id in image_ids:
            gt[image_id] = set()
    for ann in instances:
        gt.setdefault(ann.image_id, set()).add(ann.class_id)
    for image_id, caps in captions.items():
        bucket = gt.setdefault(image_id, set())
        for cap in caps:
            bucket |= extractor.extract(cap).class_ids()
    return gt


@dataclass
class ChairScores:
    chair_i: float  # hallucinated / predicted objects, pooled
    chair_s: float  # texts with at least one hallucination / texts
    predicted_objects: int
    hallucinated_objects: int
    sentences: int
    sentences_with_hallucination: int
    degenerate: bool = False  # no predicted objects at all


def chair_scores(
    predicted_texts: dict[int, str],
    gt_sets: dict[int, set[int]],
    vocab: ClassVocabulary,
) -> ChairScores:
    """Hallucination ratios over a corpus of model texts.

    Each text counts as one sentence unit, and each distinct class counts
    once per text regardless of repeated mentions.
    """
    if not predicted_texts:
        raise InputError("no predicted texts to score")
    missing = [i for i in predicted_texts if i not in gt_sets]
    if missing:
        raise InputError(f"no ground-truth set for images: {sorted(missing)[:10]}")
    extractor = ObjectExtractor(vocab)
    predicted = hallucinated = with_hall = 0
    for image_id, text in predicted_texts.items():
        classes = extractor.extract(text).class_ids()
        bad = classes - gt_sets[image_id]
        predicted += len(classes)
        hallucinated += len(bad)
        if bad:
            with_hall += 1
    sentences = len(predicted_texts)
    return ChairScores(
        chair_i=hallucinated / predicted if predicted else 0.0,
        chair_s=with_hall / sentences,
        predicted_objects=predicted,
        hallucinated_objects=hallucinated,
        sentences=sentences,
        sentences_with_hallucination=with_hall,
        degenerate=predicted == 0,
    )
