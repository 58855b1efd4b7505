import numpy as np
import pytest

from conftest import write_coco_instances
from objhal.dataset import load_instances
from objhal.errors import InputError
from objhal.pope import (generate_pope, generate_popec, make_answer_record, parse_yes_no,
                         read_answers, score_pope, write_questions)


@pytest.fixture
def gt23(tmp_path, vocab5):
    presence = {1: ["dog", "cat"], 2: ["frisbee"]}
    path = write_coco_instances(tmp_path / "inst.json", presence, vocab5)
    return load_instances(path, vocab5)[2]


class TestGeneratePopec:
    def test_exhaustive_cover(self, gt23):
        questions = generate_popec(gt23)
        assert len(questions) == 2 * 5
        cells = {(q.image_id, q.class_id) for q in questions}
        assert cells == {(i, c) for i in (1, 2) for c in range(5)}

    def test_labels_match_gt_bit_for_bit(self, gt23):
        questions = generate_popec(gt23)
        for q in questions:
            row = gt23.images.index(q.image_id)
            col = gt23.vocab.position(q.class_id)
            assert (q.gt_label == "yes") == bool(gt23.bits[row, col])

    def test_positive_fraction_equals_density(self, gt23):
        questions = generate_popec(gt23)
        positives = sum(q.gt_label == "yes" for q in questions)
        assert positives / len(questions) == gt23.bits.mean()

    def test_question_wording(self, gt23):
        q = next(q for q in generate_popec(gt23) if q.class_id == 3)
        assert q.question_text == "Is there an umbrella in the image?"
        q = next(q for q in generate_popec(gt23) if q.class_id == 0)
        assert q.question_text == "Is there a dog in the image?"


class TestGeneratePope:
    def test_image_with_single_present_class(self, tmp_path, vocab5):
        path = write_coco_instances(tmp_path / "one.json", {1: ["dog"]}, vocab5)
        gt = load_instances(path, vocab5)[2]
        questions = generate_pope(gt, num_images=1, pos_per_image=3, neg_per_image=3, seed=0)
        labels = [q.gt_label for q in questions]
        assert labels.count("yes") == 1
        assert labels.count("no") == 3

    def test_zero_questions(self, gt23):
        assert generate_pope(gt23, num_images=2, pos_per_image=0, neg_per_image=0) == []

    def test_too_many_images_rejected(self, gt23):
        with pytest.raises(InputError):
            generate_pope(gt23, num_images=3)

    def test_deterministic_given_seed(self, gt23):
        a = generate_pope(gt23, num_images=2, pos_per_image=1, neg_per_image=1, seed=42)
        b = generate_pope(gt23, num_images=2, pos_per_image=1, neg_per_image=1, seed=42)
        assert a == b

    def test_balanced_where_feasible(self, tmp_path, vocab5):
        presence = {i: ["dog", "cat", "frisbee"] for i in range(1, 9)}
        path = write_coco_instances(tmp_path / "bal.json", presence, vocab5)
        gt = load_instances(path, vocab5)[2]
        questions = generate_pope(gt, num_images=8, pos_per_image=2, neg_per_image=2, seed=1)
        labels = [q.gt_label for q in questions]
        assert labels.count("yes") == labels.count("no") == 16


class TestParseYesNo:
    @pytest.mark.parametrize("raw,expected", [
        ("Yes, there is.", "yes"),
        ("No.", "no"),
        ("There is no traffic light in the image.", "no"),
        ("yes", "yes"),
        ("NO", "no"),
        ("The image does not contain a dog.", "no"),
        ("There is a dog sitting on the couch.", "yes"),
        ("I cannot tell.", "unparseable"),
        ("Probably.", "unparseable"),
        # both phrase groups fire -> unparseable
        ("Well, there is a cat but there is no dog.", "unparseable"),
        ("", "unparseable"),
    ])
    def test_cascade(self, raw, expected):
        assert parse_yes_no(raw) == expected

    def test_case_randomization_invariance(self):
        rng = np.random.default_rng(4)
        samples = ["Yes, there is.", "There is no traffic light in the image.",
                   "No.", "It does not appear so.", "hard to say"]
        for text in samples:
            for _ in range(10):
                shuffled = "".join(
                    ch.upper() if rng.random() < 0.5 else ch.lower() for ch in text)
                assert parse_yes_no(shuffled) == parse_yes_no(text)


class TestScorePope:
    def test_all_correct(self, gt23):
        questions = generate_popec(gt23)
        answers = [make_answer_record(q, q.gt_label) for q in questions]
        score = score_pope(answers)
        assert (score.p, score.r, score.f1, score.accuracy) == (100.0, 100.0, 100.0, 100.0)
        assert score.unparseable_rate == 0.0

    def test_matches_hand_tally_on_six_questions(self, gt23):
        questions = generate_popec(gt23)[:6]  # image 1, classes 0..4; image 2, class 0
        # gt labels: yes yes no no no | no
        replies = ["yes", "no", "yes", "no", "hmm", "no"]
        answers = [make_answer_record(q, r) for q, r in zip(questions, replies)]
        # hand tally: q0 yes/yes tp; q1 no/yes fn; q2 yes/no fp; q3 no/no tn;
        # q4 unparseable with gt no -> counted as yes -> fp; q5 no/no tn
        score = score_pope(answers)
        assert (score.tp, score.fp, score.fn, score.tn) == (1, 2, 1, 2)
        assert score.p == pytest.approx(100 / 3)
        assert score.r == pytest.approx(50.0)
        assert score.accuracy == pytest.approx(50.0)
        assert score.unparseable_rate == pytest.approx(100 / 6)

    def test_unparseable_with_positive_gt_counts_as_miss(self, gt23):
        q = next(q for q in generate_popec(gt23) if q.gt_label == "yes")
        score = score_pope([make_answer_record(q, "banana")])
        assert score.fn == 1 and score.tp == 0

    def test_empty_rejected(self):
        with pytest.raises(InputError):
            score_pope([])


class TestQuestionFiles:
    def test_round_trip_and_scoring(self, gt23, tmp_path):
        questions = generate_popec(gt23)
        qpath = tmp_path / "questions.jsonl"
        write_questions(questions, qpath)
        lines = qpath.read_text().strip().splitlines()
        assert len(lines) == len(questions)

        import json
        apath = tmp_path / "answers.jsonl"
        with open(apath, "w") as fh:
            for q in questions:
                fh.write(json.dumps({
                    "image_id": q.image_id, "class_id": q.class_id,
                    "question": q.question_text, "gt_label": q.gt_label,
                    "response": q.gt_label,
                }) + "\n")
        answers = read_answers(apath, questions)
        assert score_pope(answers).f1 == 100.0

    def test_missing_answers_rejected(self, gt23, tmp_path):
        questions = generate_popec(gt23)
        apath = tmp_path / "answers.jsonl"
        apath.write_text("", encoding="utf-8")
        with pytest.raises(InputError, match="no answer"):
            read_answers(apath, questions)
