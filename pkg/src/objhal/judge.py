"""HTTP client for external language-model judges and the judgement tensor.

Each (response, class) pair is posed as an abstractive yes/no question to
every judge endpoint under every question template.  Raw generations are
normalized to yes/no; anything else is re-queried once and then stored as
an invalid vote.  Every completed cell is appended to an on-disk cache
before it counts as done, so interrupted runs resume without repeating
work.

Wire protocol (text-generation-inference convention)::

    POST {base_url}/generate
    {"inputs": "<prompt>", "parameters": {"max_new_tokens": n, "do_sample": false}}
    -> {"generated_text": "<string>"}
"""

from __future__ import annotations

import hashlib
import json
import logging
import threading
import time
from concurrent.futures import FIRST_EXCEPTION, ThreadPoolExecutor, wait
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import requests

from .errors import EndpointError, InputError
from .responses import ResponseSet
from .vocab import ClassEntry, ClassVocabulary, article_for

log = logging.getLogger(__name__)

# Vote codes inside the judgement tensor.
ANSWER_NO = 0
ANSWER_YES = 1
ANSWER_INVALID = -1
_UNFILLED = -2

PROMPT_PREAMBLE = "Read the text about an image and answer the question."
PROMPT_INSTRUCTION = "Please answer yes or no."


@dataclass(frozen=True)
class QuestionTemplate:
    """A question with ``{article}`` and ``{class_name}`` placeholders."""

    question_id: str
    text_with_placeholders: str

    def __post_init__(self) -> None:
        for ph in ("{article}", "{class_name}"):
            if self.text_with_placeholders.count(ph) != 1:
                raise InputError(
                    f"template {self.question_id!r} must contain {ph} exactly once")

    def render(self, entry: ClassEntry) -> str:
        return (self.text_with_placeholders
                .replace("{article}", article_for(entry))
                .replace("{class_name}", entry.name))


# The three semantically equivalent existence questions used by default.
DEFAULT_TEMPLATES = (
    QuestionTemplate("is_there", "Is there {article} {class_name} in this image?"),
    QuestionTemplate("implies", "Does the text imply {article} {class_name} is in the image?"),
    QuestionTemplate("mentions",
                     "Does the text explicitly mention {article} {class_name} is in the image?"),
)


@dataclass(frozen=True)
class JudgeEndpoint:
    judge_id: str
    base_url: str
    max_new_tokens: int = 3
    timeout: float = 60.0
    retry_budget: int = 3
    backoff_base: float = 0.5
    headers: tuple[tuple[str, str], ...] = ()

    def __post_init__(self) -> None:
        if self.max_new_tokens < 1:
            raise InputError(f"endpoint {self.judge_id!r}: max_new_tokens must be >= 1")
        if self.retry_budget < 0:
            raise InputError(f"endpoint {self.judge_id!r}: retry_budget must be >= 0")


def render_prompt(response_text: str, template: QuestionTemplate, entry: ClassEntry) -> str:
    """Full judge prompt; the response text is inserted verbatim."""
    question = template.render(entry)
    return (f"Text: {response_text} {PROMPT_PREAMBLE} "
            f"Question: {PROMPT_INSTRUCTION} {question}")


def normalize_answer(raw: str) -> str:
    """Collapse a raw generation to "yes"/"no"/"unparseable".

    Lowercases, strips surrounding whitespace and trailing '.'/'!', then
    requires an exact match; anything else is unparseable.
    """
    text = raw.strip().lower().rstrip(".!").strip()
    if text in ("yes", "no"):
        return text
    return "unparseable"


_thread_state = threading.local()


def _session() -> requests.Session:
    sess = getattr(_thread_state, "session", None)
    if sess is None:
        sess = requests.Session()
        _thread_state.session = sess
    return sess


def query_judge(endpoint: JudgeEndpoint, prompt: str) -> str:
    """Single generation request with greedy decoding and bounded retries.

    Connection errors, timeouts and 5xx responses are retried up to
    ``retry_budget`` times with exponential backoff; other failures raise
    immediately.
    """
    body = {
        "inputs": prompt,
        "parameters": {"max_new_tokens": endpoint.max_new_tokens, "do_sample": False},
    }
    url = endpoint.base_url.rstrip("/") + "/generate"
    attempts = 0
    delay = endpoint.backoff_base
    while True:
        attempts += 1
        try:
            resp = _session().post(url, json=body, timeout=endpoint.timeout,
                                   headers=dict(endpoint.headers) or None)
            if resp.status_code >= 500:
                raise requests.ConnectionError(f"HTTP {resp.status_code}")
            if resp.status_code >= 400:
                raise EndpointError(
                    f"judge {endpoint.judge_id!r}: HTTP {resp.status_code}", attempts)
            try:
                data = resp.json()
            except ValueError as exc:
                raise EndpointError(
                    f"judge {endpoint.judge_id!r}: non-JSON response", attempts) from exc
            if not isinstance(data, dict) or "generated_text" not in data:
                raise EndpointError(
                    f"judge {endpoint.judge_id!r}: response lacks 'generated_text'", attempts)
            return str(data["generated_text"])
        except (requests.ConnectionError, requests.Timeout) as exc:
            if attempts > endpoint.retry_budget:
                raise EndpointError(
                    f"judge {endpoint.judge_id!r} unreachable after {attempts} attempts: {exc}",
                    attempts) from exc
            time.sleep(delay)
            delay *= 2


def cache_key(prompt: str, endpoint: JudgeEndpoint) -> str:
    """Digest identifying one judgement: prompt, judge and decoding params."""
    payload = json.dumps({
        "prompt": prompt,
        "judge_id": endpoint.judge_id,
        "max_new_tokens": endpoint.max_new_tokens,
        "do_sample": False,
    }, sort_keys=True, ensure_ascii=False)
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


@dataclass
class JudgementTensor:
    """One yes/no/invalid vote per (image, class, judge x question)."""

    images: list[int]
    class_ids: list[int]
    voters: list[tuple[str, str]]  # (judge_id, question_id) in axis order
    cells: np.ndarray  # int8, shape (|I|, |C|, NM)
    provenance: dict = field(default_factory=dict)

    @property
    def nm(self) -> int:
        return self.cells.shape[2]

    def invalid_count(self) -> int:
        return int((self.cells == ANSWER_INVALID).sum())


@dataclass
class RunStats:
    total_cells: int = 0
    cached_cells: int = 0
    completed_cells: int = 0
    http_calls: int = 0
    invalid_cells: int = 0


def _load_cache(path: Path) -> dict[str, str]:
    """Read cached normalized answers; a truncated final line is ignored."""
    cache: dict[str, str] = {}
    if not path.exists():
        return cache
    lines = path.read_text(encoding="utf-8").splitlines()
    for i, line in enumerate(lines):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError:
            if i == len(lines) - 1:
                log.warning("%s: dropping truncated final cache line", path)
                continue
            raise InputError(f"{path}: corrupt cache line {i + 1}")
        cache[rec["cache_key"]] = rec["normalized"]
    return cache


_CODE = {"yes": ANSWER_YES, "no": ANSWER_NO, "invalid": ANSWER_INVALID}


class _CacheWriter:
    """Append-only cache sink; a lock serializes writers."""

    def __init__(self, handle):
        self._handle = handle
        self._lock = threading.Lock()

    def write(self, record: dict) -> None:
        line = json.dumps(record, ensure_ascii=False) + "\n"
        with self._lock:
            self._handle.write(line)
            self._handle.flush()


def _judge_cell(endpoint: JudgeEndpoint, prompt: str, record: dict,
                writer: _CacheWriter) -> tuple[str, int]:
    """Query once, re-query once on an unparseable answer, then persist.

    The cache record is appended before the future resolves, so every
    answer actually received from an endpoint survives an abort.
    """
    raw = query_judge(endpoint, prompt)
    norm = normalize_answer(raw)
    calls = 1
    if norm == "unparseable":
        raw = query_judge(endpoint, prompt)
        norm = normalize_answer(raw)
        calls = 2
    norm = "invalid" if norm == "unparseable" else norm
    writer.write({**record, "raw": raw, "normalized": norm})
    return norm, calls


def run_aqa(
    responses: ResponseSet,
    vocab: ClassVocabulary,
    endpoints: list[JudgeEndpoint],
    templates: list[QuestionTemplate],
    cache_path: str | Path,
    concurrency_limit: int = 8,
    progress=None,
) -> JudgementTensor:
    """Fill the judgement tensor, using and extending the on-disk cache.

    The tensor is assembled from an unordered stream of completed cells, so
    the result is independent of request completion order and of
    ``concurrency_limit``.  Any endpoint failure beyond its retry budget
    aborts the run; the cache stays valid for resumption.  ``progress``,
    when given, is called as ``progress(done, total, stats)``.
    """
    if not endpoints or not templates:
        raise InputError("need at least one endpoint and one template")
    if len({e.judge_id for e in endpoints}) != len(endpoints):
        raise InputError("judge ids must be unique")
    if len({t.question_id for t in templates}) != len(templates):
        raise InputError("question ids must be unique")
    if concurrency_limit < 1:
        raise InputError("concurrency_limit must be >= 1")
    if not responses.records:
        raise InputError("response set is empty; nothing to judge")

    cache_path = Path(cache_path)
    cache_path.parent.mkdir(parents=True, exist_ok=True)
    cache = _load_cache(cache_path)

    images = responses.image_ids()
    voters = [(ep, tpl) for ep in endpoints for tpl in templates]
    nm = len(voters)
    cells = np.full((len(images), len(vocab), nm), _UNFILLED, dtype=np.int8)
    stats = RunStats(total_cells=cells.size)

    pending = []  # (i, c, v, prompt, key, endpoint, template, image_id, class_id)
    for i, image_id in enumerate(images):
        text = responses.records[image_id].response_text
        for c, entry in enumerate(vocab.classes):
            for v, (ep, tpl) in enumerate(voters):
                prompt = render_prompt(text, tpl, entry)
                key = cache_key(prompt, ep)
                hit = cache.get(key)
                if hit is not None:
                    cells[i, c, v] = _CODE[hit]
                    stats.cached_cells += 1
                else:
                    pending.append((i, c, v, prompt, key, ep, tpl, image_id, entry.class_id))
    stats.completed_cells = stats.cached_cells
    if progress is not None:
        progress(stats.completed_cells, stats.total_cells, stats)

    if pending:
        with open(cache_path, "a", encoding="utf-8") as sink:
            writer = _CacheWriter(sink)
            with ThreadPoolExecutor(max_workers=concurrency_limit) as pool:
                futures = {}
                for i, c, v, prompt, key, ep, tpl, image_id, class_id in pending:
                    record = {
                        "cache_key": key,
                        "image_id": image_id,
                        "class_id": class_id,
                        "judge_id": ep.judge_id,
                        "question_id": tpl.question_id,
                    }
                    futures[pool.submit(_judge_cell, ep, prompt, record, writer)] = (i, c, v)
                not_done = set(futures)
                try:
                    while not_done:
                        done, not_done = wait(not_done, return_when=FIRST_EXCEPTION)
                        for fut in done:
                            i, c, v = futures[fut]
                            norm, calls = fut.result()  # re-raises worker errors
                            cells[i, c, v] = _CODE[norm]
                            stats.http_calls += calls
                            stats.completed_cells += 1
                            if norm == "invalid":
                                stats.invalid_cells += 1
                            if progress is not None:
                                progress(stats.completed_cells, stats.total_cells, stats)
                except BaseException:
                    for fut in not_done:
                        fut.cancel()
                    raise

    assert (cells != _UNFILLED).all()
    provenance = {
        "endpoints": [{"judge_id": e.judge_id, "base_url": e.base_url,
                       "max_new_tokens": e.max_new_tokens} for e in endpoints],
        "templates": [{"question_id": t.question_id, "text": t.text_with_placeholders}
                      for t in templates],
        "prompt_digest": hashlib.sha256("\n".join(
            [PROMPT_PREAMBLE, PROMPT_INSTRUCTION] +
            [t.text_with_placeholders for t in templates]).encode("utf-8")).hexdigest(),
        "decoding": {"do_sample": False},
        "invalid_cells": int((cells == ANSWER_INVALID).sum()),
    }
    return JudgementTensor(
        images=images,
        class_ids=[e.class_id for e in vocab.classes],
        voters=[(ep.judge_id, tpl.question_id) for ep, tpl in voters],
        cells=cells,
        provenance=provenance,
    )


def save_tensor(tensor: JudgementTensor, path: str | Path) -> None:
    np.savez_compressed(
        Path(path),
        cells=tensor.cells,
        images=np.asarray(tensor.images, dtype=np.int64),
        class_ids=np.asarray(tensor.class_ids, dtype=np.int64),
        voters=np.asarray(["\t".join(v) for v in tensor.voters]),
        provenance=np.asarray(json.dumps(tensor.provenance, sort_keys=True)),
    )


def load_tensor(path: str | Path) -> JudgementTensor:
    path = Path(path)
    if not path.exists():
        raise InputError(f"no judgement tensor at {path}")
    blob = np.load(path, allow_pickle=False)
    return JudgementTensor(
        images=[int(i) for i in blob["images"]],
        class_ids=[int(c) for c in blob["class_ids"]],
        voters=[tuple(v.split("\t")) for v in blob["voters"].tolist()],
        cells=blob["cells"],
        provenance=json.loads(str(blob["provenance"])),
    )
