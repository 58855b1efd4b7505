import json

import numpy as np
import pytest

from conftest import write_coco_captions, write_coco_instances
from objhal.dataset import (align_captions, build_cooccurrence, load_captions, load_instances,
                            natural_subsample)
from objhal.errors import InputError


def test_single_annotation_yields_single_bit(tmp_path, vocab5):
    path = write_coco_instances(tmp_path / "inst.json", {7: ["dog"]}, vocab5)
    images, annotations, gt = load_instances(path, vocab5)
    assert [im.image_id for im in images] == [7]
    assert len(annotations) == 1
    assert gt.bits.tolist() == [[1, 0, 0, 0, 0]]


def test_presence_not_count(tmp_path, vocab5):
    path = write_coco_instances(tmp_path / "inst.json", {1: ["dog", "dog", "dog"]}, vocab5)
    _, annotations, gt = load_instances(path, vocab5)
    assert len(annotations) == 3
    assert gt.bits[0, 0] == 1
    assert gt.instance_counts.tolist() == [3]


def test_unknown_category_listed(tmp_path, vocab5):
    blob = {
        "images": [{"id": 1, "width": 10, "height": 10, "file_name": "x.jpg"}],
        "annotations": [],
        "categories": [{"id": 5, "name": "dragon"}, {"id": 6, "name": "dog"}],
    }
    path = tmp_path / "inst.json"
    path.write_text(json.dumps(blob), encoding="utf-8")
    with pytest.raises(InputError, match="dragon"):
        load_instances(path, vocab5)


def test_duplicate_image_id_rejected(tmp_path, vocab5):
    blob = {
        "images": [{"id": 1, "width": 10, "height": 10, "file_name": "a.jpg"},
                   {"id": 1, "width": 10, "height": 10, "file_name": "b.jpg"}],
        "annotations": [],
        "categories": [],
    }
    path = tmp_path / "inst.json"
    path.write_text(json.dumps(blob), encoding="utf-8")
    with pytest.raises(InputError, match="duplicate image id"):
        load_instances(path, vocab5)


def test_malformed_json_rejected(tmp_path, vocab5):
    path = tmp_path / "inst.json"
    path.write_text("{nope", encoding="utf-8")
    with pytest.raises(InputError, match="not valid JSON"):
        load_instances(path, vocab5)


def test_out_of_bounds_box_clamped_with_warning(tmp_path, vocab5, caplog):
    path = write_coco_instances(tmp_path / "inst.json", {1: ["dog"]}, vocab5,
                                width=50, height=50, boxes={(1, "dog"): [40, 40, 30, 30]})
    with caplog.at_level("WARNING"):
        _, annotations, _ = load_instances(path, vocab5)
    assert "clamped" in caplog.text
    x, y, w, h = annotations[0].bbox
    assert x + w <= 50 and y + h <= 50


def test_gt_reproducible_and_order_matches(tmp_path, vocab5):
    presence = {3: ["cat", "frisbee"], 1: ["dog"], 2: ["dog", "traffic light"]}
    path = write_coco_instances(tmp_path / "inst.json", presence, vocab5)
    _, _, gt1 = load_instances(path, vocab5)
    _, _, gt2 = load_instances(path, vocab5)
    assert gt1.images == [1, 2, 3]
    assert np.array_equal(gt1.bits, gt2.bits)


def test_gt_cache_round_trip(tmp_path, vocab5):
    path = write_coco_instances(tmp_path / "inst.json", {1: ["dog"], 2: ["cat"]}, vocab5)
    _, _, fresh = load_instances(path, vocab5, cache_dir=tmp_path / "cache")
    assert (tmp_path / "cache").exists()
    _, _, cached = load_instances(path, vocab5, cache_dir=tmp_path / "cache")
    assert np.array_equal(fresh.bits, cached.bits)
    assert fresh.images == cached.images


def test_load_captions_order_preserved(tmp_path):
    path = write_coco_captions(tmp_path / "caps.json", {1: ["a dog.", "the dog runs."]})
    captions = load_captions(path)
    assert captions == {1: ["a dog.", "the dog runs."]}


def test_align_captions_counts_missing(tmp_path):
    path = write_coco_captions(tmp_path / "caps.json", {1: ["a dog."]})
    captions = load_captions(path)
    aligned, missing = align_captions([1, 2], captions)
    assert aligned[2] == []
    assert missing == 1


def test_cooccurrence_single_image_both_classes(tmp_path, vocab5):
    path = write_coco_instances(tmp_path / "i.json", {1: ["dog", "cat"]}, vocab5)
    _, _, gt = load_instances(path, vocab5)
    counts = build_cooccurrence(gt).counts
    assert counts[0, 0] == 1 and counts[1, 1] == 1
    assert counts[0, 1] == 1 and counts[1, 0] == 1


def test_cooccurrence_disjoint(tmp_path, vocab5):
    path = write_coco_instances(tmp_path / "i.json", {1: ["dog"], 2: ["cat"]}, vocab5)
    _, _, gt = load_instances(path, vocab5)
    counts = build_cooccurrence(gt).counts
    assert counts[0, 1] == 0 and counts[1, 0] == 0
    assert counts[0, 0] == 1 and counts[1, 1] == 1


def test_cooccurrence_matches_brute_force(tmp_path, vocab5):
    # presences {AB, AB, A} with A=dog, B=cat
    path = write_coco_instances(
        tmp_path / "i.json", {1: ["dog", "cat"], 2: ["dog", "cat"], 3: ["dog"]}, vocab5)
    _, _, gt = load_instances(path, vocab5)
    counts = build_cooccurrence(gt).counts
    assert counts[0, 1] == 2
    assert counts[0, 0] == 3
    assert counts[1, 1] == 2


def test_cooccurrence_properties_random():
    from objhal.dataset import GroundTruthMatrix
    from objhal.vocab import ClassEntry, ClassVocabulary

    rng = np.random.default_rng(7)
    vocab = ClassVocabulary([ClassEntry(i, f"klass{i}") for i in range(6)])
    for _ in range(25):
        bits = rng.integers(0, 2, size=(8, 6)).astype(np.uint8)
        gt = GroundTruthMatrix(images=list(range(8)), vocab=vocab, bits=bits)
        counts = build_cooccurrence(gt).counts
        assert np.array_equal(counts, counts.T)
        diag = np.diag(counts)
        assert (counts <= np.minimum.outer(diag, diag)).all()
        # diagonal equals per-class presence
        assert np.array_equal(diag, bits.sum(axis=0))


def _fixture_gt(tmp_path, vocab5, presence):
    path = write_coco_instances(tmp_path / "sub.json", presence, vocab5)
    return load_instances(path, vocab5)[2]


def test_subsample_target_covers_pool(tmp_path, vocab5):
    gt = _fixture_gt(tmp_path, vocab5, {i: ["dog"] for i in range(1, 6)})
    assert natural_subsample(gt, 10, seed=0) == [1, 2, 3, 4, 5]


def test_subsample_greedy_forces_unique_holder(tmp_path, vocab5):
    presence = {
        1: ["dog"],
        2: ["dog", "cat"],
        3: ["frisbee"],  # only holder of frisbee, but fewer classes than 4
        4: ["dog", "cat", "umbrella", "traffic light"],
    }
    gt = _fixture_gt(tmp_path, vocab5, presence)
    # exhaustive singleton search: image 4 adds the most uncovered classes
    best = max(presence, key=lambda i: len(set(presence[i])))
    assert natural_subsample(gt, 1, seed=0) == [best]


def test_subsample_deterministic_and_covering(tmp_path, vocab5):
    rng = np.random.default_rng(3)
    names = [e.name for e in vocab5.classes]
    presence = {i: list(rng.choice(names, size=rng.integers(1, 4), replace=False))
                for i in range(1, 41)}
    gt = _fixture_gt(tmp_path, vocab5, presence)
    first = natural_subsample(gt, 12, seed=11)
    second = natural_subsample(gt, 12, seed=11)
    assert first == second
    assert len(first) == 12
    # greedy rule covers every class present in the pool
    covered = set()
    for image_id in first:
        covered.update(np.flatnonzero(gt.bits[gt.images.index(image_id)]).tolist())
    pool = set(np.flatnonzero(gt.bits.any(axis=0)).tolist())
    assert covered >= pool


def test_subsample_tie_breaks_by_instances_then_id(tmp_path, vocab5):
    # both images hold only {dog}; image 2 has fewer boxes -> picked first
    presence = {1: ["dog", "dog"], 2: ["dog"], 3: ["cat"]}
    gt = _fixture_gt(tmp_path, vocab5, presence)
    picked = natural_subsample(gt, 2, seed=0)
    assert picked[0] in (2, 3)  # both add one new class with one instance; id 2 < 3
    assert picked[0] == 2


def test_subsample_rejects_bad_target(tmp_path, vocab5):
    gt = _fixture_gt(tmp_path, vocab5, {1: ["dog"]})
    with pytest.raises(InputError):
        natural_subsample(gt, 0, seed=0)
