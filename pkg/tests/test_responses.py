import json

import pytest

from conftest import write_responses
from objhal.errors import InputError
from objhal.responses import DESCRIBE_PROMPT, ingest_responses, length_stats


def test_full_coverage(tmp_path):
    path = write_responses(tmp_path / "r.jsonl", {1: "a dog", 2: "a cat"})
    rs = ingest_responses(path, [1, 2])
    assert rs.coverage == 1.0
    assert rs.model_id == "stub-model"
    assert rs.records[1].response_text == "a dog"


def test_empty_file_is_valid_with_zero_coverage(tmp_path):
    path = tmp_path / "r.jsonl"
    path.write_text("", encoding="utf-8")
    rs = ingest_responses(path, [1, 2])
    assert rs.coverage == 0.0
    assert len(rs) == 0


def test_duplicate_image_names_offender(tmp_path):
    lines = [
        json.dumps({"model_id": "m", "image_id": 7, "prompt": DESCRIBE_PROMPT, "response": "x"}),
        json.dumps({"model_id": "m", "image_id": 7, "prompt": DESCRIBE_PROMPT, "response": "y"}),
    ]
    path = tmp_path / "r.jsonl"
    path.write_text("\n".join(lines), encoding="utf-8")
    with pytest.raises(InputError, match="image 7"):
        ingest_responses(path, [7])


def test_unknown_image_rejected(tmp_path):
    path = write_responses(tmp_path / "r.jsonl", {9: "a dog"})
    with pytest.raises(InputError, match="image 9"):
        ingest_responses(path, [1, 2])


def test_empty_response_rejected_by_default(tmp_path):
    path = write_responses(tmp_path / "r.jsonl", {1: ""})
    with pytest.raises(InputError, match="empty response"):
        ingest_responses(path, [1])
    rs = ingest_responses(path, [1], allow_empty=True)
    assert rs.records[1].response_text == ""


def test_prompt_mismatch_counts_but_passes(tmp_path):
    path = write_responses(tmp_path / "r.jsonl", {1: "a dog"}, prompt="What is this?")
    rs = ingest_responses(path, [1])
    assert rs.prompt_mismatches == 1


def test_mixed_model_ids_rejected(tmp_path):
    lines = [
        json.dumps({"model_id": "a", "image_id": 1, "prompt": DESCRIBE_PROMPT, "response": "x"}),
        json.dumps({"model_id": "b", "image_id": 2, "prompt": DESCRIBE_PROMPT, "response": "y"}),
    ]
    path = tmp_path / "r.jsonl"
    path.write_text("\n".join(lines), encoding="utf-8")
    with pytest.raises(InputError, match="mixed model ids"):
        ingest_responses(path, [1, 2])


def test_ingest_is_order_independent(tmp_path):
    texts = {1: "a", 2: "bb", 3: "ccc"}
    fwd = write_responses(tmp_path / "fwd.jsonl", texts)
    lines = fwd.read_text(encoding="utf-8").strip().splitlines()
    (tmp_path / "rev.jsonl").write_text("\n".join(reversed(lines)) + "\n", encoding="utf-8")
    a = ingest_responses(fwd, [1, 2, 3])
    b = ingest_responses(tmp_path / "rev.jsonl", [1, 2, 3])
    assert a.records == b.records
    assert length_stats(a) == length_stats(b)


def test_median_odd(tmp_path):
    path = write_responses(tmp_path / "r.jsonl", {1: "a", 2: "ab", 3: "abc"})
    stats = length_stats(ingest_responses(path, [1, 2, 3]))
    assert stats["median_chars"] == 2


def test_median_even_uses_lower_median(tmp_path):
    # oracle: sort [10, 20, 30, 40] and take index (n - 1) // 2 -> 20
    texts = {i: "x" * n for i, n in enumerate([10, 20, 30, 40], start=1)}
    path = write_responses(tmp_path / "r.jsonl", texts)
    stats = length_stats(ingest_responses(path, list(texts)))
    assert stats["median_chars"] == 20
    assert stats["mean_chars"] == 25.0


def test_length_stats_empty_set_rejected(tmp_path):
    path = tmp_path / "r.jsonl"
    path.write_text("", encoding="utf-8")
    rs = ingest_responses(path, [1])
    with pytest.raises(InputError):
        length_stats(rs)
