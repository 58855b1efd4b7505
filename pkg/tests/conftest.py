import json
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))  # for mock_judge

from objhal.vocab import builtin_vocab_path, load_vocabulary


@pytest.fixture(scope="session")
def coco_vocab():
    return load_vocabulary(builtin_vocab_path("coco80"))


@pytest.fixture(scope="session")
def vocab5():
    return load_vocabulary(builtin_vocab_path("test5"))


def write_coco_instances(path, presence, vocab, width=120, height=90, boxes=None):
    """Write a COCO-format instances file from {image_id: [class names]}.

    ``boxes`` optionally maps (image_id, name) to an explicit bbox; other
    annotations get a small default box.
    """
    categories = [{"id": 1000 + e.class_id, "name": e.name} for e in vocab.classes]
    name_to_cat = {e.name: 1000 + e.class_id for e in vocab.classes}
    images = [{"id": i, "width": width, "height": height, "file_name": f"{i:012d}.jpg"}
              for i in sorted(presence)]
    annotations = []
    ann_id = 1
    for image_id in sorted(presence):
        for name in presence[image_id]:
            bbox = (boxes or {}).get((image_id, name), [10, 10, 20, 20])
            annotations.append({
                "id": ann_id,
                "image_id": image_id,
                "category_id": name_to_cat[name],
                "bbox": list(bbox),
                "iscrowd": 0,
            })
            ann_id += 1
    blob = {"images": images, "annotations": annotations, "categories": categories}
    Path(path).write_text(json.dumps(blob), encoding="utf-8")
    return path


def write_coco_captions(path, captions):
    """Write a COCO-format captions file from {image_id: [caption, ...]}."""
    annotations = [
        {"image_id": image_id, "caption": caption, "id": n}
        for n, (image_id, caption) in enumerate(
            ((i, c) for i in sorted(captions) for c in captions[i]), start=1)
    ]
    blob = {"annotations": annotations}
    Path(path).write_text(json.dumps(blob), encoding="utf-8")
    return path


def write_responses(path, texts, model_id="stub-model",
                    prompt="Describe this image in detail."):
    """Write a response JSONL file from {image_id: response text}."""
    lines = []
    for image_id in sorted(texts):
        lines.append(json.dumps({
            "model_id": model_id,
            "image_id": image_id,
            "prompt": prompt,
            "response": texts[image_id],
        }))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path
