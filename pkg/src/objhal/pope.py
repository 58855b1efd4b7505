"""Closed-question existence protocol: balanced sampling and the exhaustive variant.

The original protocol samples a small balanced question set (a few present
and a few absent classes per sampled image); the complete variant asks one
question per (image, class) cell so no potential hallucination goes
unqueried.  Answering the questions is an LVLM's job, not the harness's:
questions are exported to a file and answers ingested from one.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dataset import GroundTruthMatrix
from .errors import InputError
from .metrics import f_beta
from .vocab import article_for

QUESTION_FORMAT = "Is there {article} {class_name} in the image?"

# Hand-crafted phrase rules for free-form answers that do not lead with
# yes/no.  Deliberately simple; misfires are part of what the rate reports.
_NEGATIVE_PHRASES = ("there is no", "is not", "does not", "no,")
_POSITIVE_PHRASES = ("there is a", "there is an", "yes,")


@dataclass(frozen=True)
class PopeQuestion:
    image_id: int
    class_id: int
    question_text: str
    gt_label: str  # "yes" | "no"


@dataclass(frozen=True)
class PopeAnswerRecord:
    question: PopeQuestion
    raw_response: str
    parsed: str  # "yes" | "no" | "unparseable"


def _question_for(gt: GroundTruthMatrix, row: int, col: int) -> PopeQuestion:
    entry = gt.vocab.classes[col]
    return PopeQuestion(
        image_id=gt.images[row],
        class_id=entry.class_id,
        question_text=QUESTION_FORMAT.format(article=article_for(entry), class_name=entry.name),
        gt_label="yes" if gt.bits[row, col] else "no",
    )


def generate_pope(
    gt: GroundTruthMatrix,
    num_images: int = 500,
    pos_per_image: int = 3,
    neg_per_image: int = 3,
    seed: int = 0,
) -> list[PopeQuestion]:
    """Balanced question sample: a seeded image subset, then per image up to
    ``pos_per_image`` present classes and ``neg_per_image`` absent classes."""
    if num_images > len(gt.images):
        raise InputError(f"num_images={num_images} exceeds pool size {len(gt.images)}")
    if pos_per_image < 0 or neg_per_image < 0:
        raise InputError("per-image question counts must be >= 0")
    rng = np.random.default_rng(seed)
    rows = rng.choice(len(gt.images), size=num_images, replace=False)
    questions: list[PopeQuestion] = []
    for row in rows:
        present = np.flatnonzero(gt.bits[row])
        absent = np.flatnonzero(gt.bits[row] == 0)
        n_pos = min(pos_per_image, present.size)
        n_neg = min(neg_per_image, absent.size)
        pos_cols = rng.choice(present, size=n_pos, replace=False) if n_pos else []
        neg_cols = rng.choice(absent, size=n_neg, replace=False) if n_neg else []
        for col in list(pos_cols) + list(neg_cols):
            questions.append(_question_for(gt, int(row), int(col)))
    return questions


def generate_popec(gt: GroundTruthMatrix) -> list[PopeQuestion]:
    """Exhaustive questions: one per (image, class) cell, labels straight from Y."""
    return [
        _question_for(gt, row, col)
        for row in range(len(gt.images))
        for col in range(len(gt.vocab))
    ]


def parse_yes_no(raw_response: str) -> str:
    """Rule cascade from the leading token, then indicative phrases.

    (1) first alphabetic token equal to yes/no wins; (2) otherwise a match
    in exactly one of the negative/positive phrase groups decides;
    (3) otherwise unparseable.
    """
    text = raw_response.lower()
    token = ""
    for ch in text:
        if ch.isalpha():
            token += ch
        elif token:
            break
    if token in ("yes", "no"):
        return token
    has_neg = any(p in text for p in _NEGATIVE_PHRASES)
    has_pos = any(p in text for p in _POSITIVE_PHRASES)
    if has_neg and not has_pos:
        return "no"
    if has_pos and not has_neg:
        return "yes"
    return "unparseable"


def make_answer_record(question: PopeQuestion, raw_response: str) -> PopeAnswerRecord:
    return PopeAnswerRecord(question, raw_response, parse_yes_no(raw_response))


@dataclass
class PopeScore:
    p: float
    r: float
    f1: float
    accuracy: float
    unparseable_rate: float
    tp: int
    fp: int
    fn: int
    tn: int
    total: int


def score_pope(answers: list[PopeAnswerRecord]) -> PopeScore:
    """F1-centred scoring; an unparseable answer counts as the wrong label."""
    if not answers:
        raise InputError("no answers to score")
    tp = fp = fn = tn = unparseable = 0
    for rec in answers:
        truth = rec.question.gt_label
        parsed = rec.parsed
        if parsed == "unparseable":
            unparseable += 1
            parsed = "no" if truth == "yes" else "yes"
        if parsed == "yes" and truth == "yes":
            tp += 1
        elif parsed == "yes" and truth == "no":
            fp += 1
        elif parsed == "no" and truth == "yes":
            fn += 1
        else:
            tn += 1
    total = len(answers)
    p = 100.0 * tp / (tp + fp) if tp + fp else 0.0
    r = 100.0 * tp / (tp + fn) if tp + fn else 0.0
    return PopeScore(
        p=p, r=r, f1=f_beta(p, r, 1.0),
        accuracy=100.0 * (tp + tn) / total,
        unparseable_rate=100.0 * unparseable / total,
        tp=tp, fp=fp, fn=fn, tn=tn, total=total,
    )


def write_questions(questions: list[PopeQuestion], path: str | Path) -> None:
    """One JSON object per line: image_id, class_id, question, gt_label."""
    with open(path, "w", encoding="utf-8") as fh:
        for q in questions:
            fh.write(json.dumps({
                "image_id": q.image_id,
                "class_id": q.class_id,
                "question": q.question_text,
                "gt_label": q.gt_label,
            }, ensure_ascii=False) + "\n")


def read_answers(path: str | Path, questions: list[PopeQuestion]) -> list[PopeAnswerRecord]:
    """Join an answer file (question keys plus ``response``) onto the questions."""
    raw: dict[tuple[int, int], str] = {}
    path = Path(path)
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise InputError(f"{path}:{lineno}: not valid JSON: {exc}") from exc
        raw[(int(obj["image_id"]), int(obj["class_id"]))] = str(obj["response"])
    answers = []
    missing = 0
    for q in questions:
        key = (q.image_id, q.class_id)
        if key not in raw:
            missing += 1
            continue
        answers.append(make_answer_record(q, raw[key]))
    if missing:
        raise InputError(f"{path}: {missing} questions have no answer")
    return answers
