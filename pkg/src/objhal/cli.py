"""Command-line entry point wiring the whole harness.

Subcommands: judge, score, pope, chair, augment, sample, correlate, report.
Exit codes: 0 ok, 2 config error, 3 input error, 4 endpoint failure.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from dataclasses import asdict
from datetime import datetime, timezone
from pathlib import Path

from . import augment as augment_mod
from . import chair as chair_mod
from . import pope as pope_mod
from .config import RunConfig
from .dataset import align_captions, build_cooccurrence, load_captions, load_instances, \
    natural_subsample
from .errors import ConfigError, EndpointError, HarnessError, InputError
from .judge import load_tensor, run_aqa, save_tensor
from .metrics import spearman
from .report import METRIC_COLUMNS, build_metrics_report, collect_reports, per_class_csv, \
    render_table, report_to_json
from .responses import ingest_responses, length_stats
from .verdict import VoteConfig, apply_voting
from .vocab import load_vocabulary


def _timestamp() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _fresh_path(directory: Path, stem: str, suffix: str) -> Path:
    """Next unused artifact path; existing reports are never overwritten."""
    directory.mkdir(parents=True, exist_ok=True)
    path = directory / f"{stem}{suffix}"
    serial = 0
    while path.exists():
        serial += 1
        path = directory / f"{stem}-{serial}{suffix}"
    return path


def _load_common(cfg: RunConfig):
    vocab = load_vocabulary(cfg.vocabulary)
    images, annotations, gt = load_instances(cfg.instances, vocab)
    return vocab, images, annotations, gt


class _Progress:
    """Plain-text progress line: cells done/total, call rate, invalid count."""

    def __init__(self, every: int = 200):
        self.every = every
        self.start = time.monotonic()

    def __call__(self, done: int, total: int, stats) -> None:
        if done % self.every and done != total:
            return
        elapsed = max(time.monotonic() - self.start, 1e-9)
        rate = stats.http_calls / elapsed
        print(f"\rcells {done}/{total}  calls {stats.http_calls} ({rate:.1f}/s)  "
              f"invalid {stats.invalid_cells}", end="", file=sys.stderr, flush=True)
        if done == total:
            print(file=sys.stderr)


def cmd_judge(cfg: RunConfig) -> int:
    cfg.require("vocabulary", "instances", "responses", "cache", "tensor")
    if not cfg.endpoints:
        raise ConfigError("judge requires at least one endpoint")
    vocab, _, _, gt = _load_common(cfg)
    responses = ingest_responses(cfg.responses, gt.images,
                                 allow_empty=cfg.allow_empty_responses)
    if not responses.records:
        raise InputError("response file contains no records; refusing to judge")
    endpoints = cfg.judge_endpoints()
    templates = cfg.question_templates()
    nm = len(endpoints) * len(templates)
    total = len(responses.records) * len(vocab) * nm
    print(f"plan: {len(responses.records)} responses x {len(vocab)} classes x "
          f"{nm} (judge, question) pairs = {total} cells")
    tensor = run_aqa(responses, vocab, endpoints, templates, cfg.cache,
                     concurrency_limit=cfg.concurrency_limit, progress=_Progress())
    tensor.provenance["model_id"] = responses.model_id
    tensor.provenance["run_digest"] = cfg.run_digest()
    Path(cfg.tensor).parent.mkdir(parents=True, exist_ok=True)
    save_tensor(tensor, cfg.tensor)
    print(f"tensor saved to {cfg.tensor} "
          f"(invalid cells: {tensor.invalid_count()})")
    return 0


def cmd_score(cfg: RunConfig) -> int:
    cfg.require("vocabulary", "instances", "responses", "tensor")
    vocab, _, _, gt = _load_common(cfg)
    responses = ingest_responses(cfg.responses, gt.images,
                                 allow_empty=cfg.allow_empty_responses)
    tensor = load_tensor(cfg.tensor)
    if tensor.class_ids != [e.class_id for e in vocab.classes]:
        raise InputError("tensor class order does not match the vocabulary")
    if tensor.images != responses.image_ids():
        raise InputError("tensor images do not match the response set")

    k = cfg.vote_k if cfg.vote_k is not None else tensor.nm
    pred = apply_voting(tensor, VoteConfig(k))
    # rows of Y restricted to the judged images, same order
    sub_gt = _restrict_gt(gt, tensor.images)

    stats = length_stats(responses)
    metadata = {
        "generated_at": _timestamp(),
        "run_digest": cfg.run_digest(),
        "config": cfg.resolved(),
        "input_digests": cfg.input_digests(),
        "median_response_length": stats["median_chars"],
        "response_coverage": responses.coverage,
        "invalid_votes": tensor.invalid_count(),
    }
    report = build_metrics_report(pred, sub_gt, responses.model_id, metadata)

    out = Path(cfg.output_dir)
    stem = f"score_{report.model_id}_{cfg.run_digest()}"
    json_path = _fresh_path(out, stem, ".json")
    json_path.write_text(report_to_json(report), encoding="utf-8")
    _fresh_path(out, stem, ".csv").write_text(per_class_csv(report), encoding="utf-8")
    table = render_table([report])
    _fresh_path(out, stem, ".txt").write_text(table, encoding="utf-8")
    print(table)
    print(f"report written to {json_path}")
    return 0


def _restrict_gt(gt, image_ids):
    from .dataset import GroundTruthMatrix

    rows = {img: i for i, img in enumerate(gt.images)}
    missing = [i for i in image_ids if i not in rows]
    if missing:
        raise InputError(f"judged images missing from the dataset: {missing[:10]}")
    sel = [rows[i] for i in image_ids]
    counts = None if gt.instance_counts is None else gt.instance_counts[sel]
    return GroundTruthMatrix(images=list(image_ids), vocab=gt.vocab,
                             bits=gt.bits[sel], instance_counts=counts)


def cmd_pope(cfg: RunConfig, mode: str, questions_out: str | None,
             answers: str | None) -> int:
    cfg.require("vocabulary", "instances")
    _, _, _, gt = _load_common(cfg)
    if mode == "complete":
        questions = pope_mod.generate_popec(gt)
    else:
        p = cfg.pope
        questions = pope_mod.generate_pope(
            gt, num_images=int(p.get("num_images", 500)),
            pos_per_image=int(p.get("pos_per_image", 3)),
            neg_per_image=int(p.get("neg_per_image", 3)),
            seed=int(cfg.seeds.get("pope", 0)))
    print(f"{mode}: {len(questions)} questions")
    if questions_out:
        pope_mod.write_questions(questions, questions_out)
        print(f"questions written to {questions_out}")
    if answers:
        records = pope_mod.read_answers(answers, questions)
        score = pope_mod.score_pope(records)
        out = _fresh_path(Path(cfg.output_dir), f"pope_{mode}_{cfg.run_digest()}", ".json")
        out.write_text(json.dumps({
            "mode": mode, "generated_at": _timestamp(),
            "score": asdict(score), "config": cfg.resolved(),
        }, indent=2, sort_keys=True, default=str) + "\n", encoding="utf-8")
        print(f"P {score.p:.1f}  R {score.r:.1f}  F1 {score.f1:.1f}  "
              f"acc {score.accuracy:.1f}  unparseable {score.unparseable_rate:.1f}%")
        print(f"score written to {out}")
    return 0


def cmd_chair(cfg: RunConfig) -> int:
    cfg.require("vocabulary", "instances", "captions", "responses")
    vocab, _, annotations, gt = _load_common(cfg)
    captions, missing = align_captions(gt.images, load_captions(cfg.captions))
    responses = ingest_responses(cfg.responses, gt.images,
                                 allow_empty=cfg.allow_empty_responses)
    gt_sets = chair_mod.build_chair_gt(annotations, captions, vocab, image_ids=gt.images)
    texts = {i: r.response_text for i, r in responses.records.items()}
    scores = chair_mod.chair_scores(texts, gt_sets, vocab)
    out = _fresh_path(Path(cfg.output_dir), f"chair_{cfg.run_digest()}", ".json")
    out.write_text(json.dumps({
        "generated_at": _timestamp(),
        "scores": asdict(scores),
        "images_without_captions": missing,
        "config": cfg.resolved(),
    }, indent=2, sort_keys=True, default=str) + "\n", encoding="utf-8")
    print(f"CHAIR_i {scores.chair_i:.4f}  CHAIR_s {scores.chair_s:.4f}  "
          f"({scores.hallucinated_objects}/{scores.predicted_objects} objects, "
          f"{scores.sentences_with_hallucination}/{scores.sentences} texts)")
    print(f"scores written to {out}")
    return 0


def cmd_augment(cfg: RunConfig, records_out: str | None) -> int:
    cfg.require("vocabulary", "instances")
    _, images, annotations, gt = _load_common(cfg)
    out_path = records_out or str(Path(cfg.output_dir) / "enumeration.jsonl")
    Path(out_path).parent.mkdir(parents=True, exist_ok=True)
    config = augment_mod.AugmentConfig(
        negatives_per_image=int(cfg.augment.get("negatives_per_image", 3)),
        cooccurrence_bias_weight=float(cfg.augment.get("cooccurrence_bias_weight", 1.0)),
        seed=int(cfg.seeds.get("augment", 0)))
    count = augment_mod.augment_dataset(images, annotations, gt, config, out_path)
    print(f"{count} enumeration records written to {out_path}")
    return 0


def cmd_sample(cfg: RunConfig, sample_out: str | None) -> int:
    cfg.require("vocabulary", "instances")
    _, _, _, gt = _load_common(cfg)
    target = int(cfg.sample.get("target_count", 5110))
    seed = int(cfg.seeds.get("sample", 0))
    picked = natural_subsample(gt, target, seed)
    out_path = Path(sample_out or Path(cfg.output_dir) / "subsample.json")
    out_path.parent.mkdir(parents=True, exist_ok=True)
    out_path.write_text(json.dumps({
        "algorithm": "greedy-coverage",  # approximate stand-in, recorded for provenance
        "seed": seed,
        "target_count": target,
        "image_ids": picked,
    }, indent=2) + "\n", encoding="utf-8")
    print(f"{len(picked)} images sampled to {out_path}")
    return 0


def cmd_correlate(path_a: str, path_b: str) -> int:
    side_a = {r.model_id: r for r in collect_reports([path_a])}
    side_b = {r.model_id: r for r in collect_reports([path_b])}
    shared = sorted(set(side_a) & set(side_b))
    if len(shared) < 2:
        raise InputError(
            f"need at least two shared model ids to correlate; got {shared or 'none'}")
    print(f"{len(shared)} shared models: {', '.join(shared)}")
    for name in METRIC_COLUMNS:
        xs = [side_a[m].metric(name) for m in shared]
        ys = [side_b[m].metric(name) for m in shared]
        try:
            rho = spearman(xs, ys)
            print(f"{name.upper():>8}: spearman {rho:+.3f}")
        except InputError as exc:
            print(f"{name.upper():>8}: undefined ({exc})")
    return 0


def cmd_report(paths: list[str], csv_out: str | None) -> int:
    reports = collect_reports(paths)
    if not reports:
        raise InputError("no reports given")
    print(render_table(reports))
    if csv_out:
        lines = ["model," + ",".join(METRIC_COLUMNS)]
        for rep in reports:
            lines.append(rep.model_id + "," +
                         ",".join(f"{rep.metric(n):.4f}" for n in METRIC_COLUMNS))
        Path(csv_out).write_text("\n".join(lines) + "\n", encoding="utf-8")
        print(f"summary csv written to {csv_out}")
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="objhal",
        description="Object-hallucination evaluation harness for vision-language models.")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--vocabulary", help="vocabulary file (overrides config)")
        p.add_argument("--instances", help="COCO-format instances JSON")
        p.add_argument("--captions", help="COCO-format captions JSON")
        p.add_argument("--responses", help="JSONL response file")
        p.add_argument("--output-dir", dest="output_dir", help="artifact directory")
        return p

    p = add_common(sub.add_parser("judge", help="run abstractive QA against judge endpoints"))
    p.add_argument("--cache", help="append-only judgement cache (JSONL)")
    p.add_argument("--tensor", help="output judgement tensor (.npz)")
    p.add_argument("--concurrency-limit", dest="concurrency_limit", type=int)

    p = add_common(sub.add_parser("score", help="vote a tensor and emit metric reports"))
    p.add_argument("--tensor", help="judgement tensor from the judge step")
    p.add_argument("--k", dest="vote_k", type=int, help="voting threshold (default: unanimous)")

    p = add_common(sub.add_parser("pope", help="generate/score closed yes-no questions"))
    p.add_argument("--mode", choices=("original", "complete"), default="original")
    p.add_argument("--questions-out", help="write generated questions here (JSONL)")
    p.add_argument("--answers", help="answer file to score (JSONL)")

    add_common(sub.add_parser("chair", help="exact-text-matching caption metric"))

    p = add_common(sub.add_parser("augment", help="emit object-enumeration records"))
    p.add_argument("--records-out", help="output JSONL path")

    p = add_common(sub.add_parser("sample", help="greedy class-coverage image subsample"))
    p.add_argument("--target", type=int, help="number of images to keep")
    p.add_argument("--sample-out", help="output JSON path")

    p = sub.add_parser("correlate", help="rank correlation between two report files")
    p.add_argument("report_a")
    p.add_argument("report_b")

    p = sub.add_parser("report", help="render a leaderboard table from report files")
    p.add_argument("reports", nargs="+")
    p.add_argument("--csv-out", help="also write a summary csv")

    return parser


_OVERRIDE_KEYS = ("vocabulary", "instances", "captions", "responses", "output_dir",
                  "cache", "tensor", "concurrency_limit", "vote_k")


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "correlate":
            return cmd_correlate(args.report_a, args.report_b)
        if args.command == "report":
            return cmd_report(args.reports, args.csv_out)

        overrides = {k: getattr(args, k, None) for k in _OVERRIDE_KEYS}
        if args.command == "sample" and args.target is not None:
            overrides["sample"] = {"target_count": args.target}
        cfg = RunConfig.load(args.config, overrides)
        if args.command == "judge":
            return cmd_judge(cfg)
        if args.command == "score":
            return cmd_score(cfg)
        if args.command == "pope":
            return cmd_pope(cfg, args.mode, args.questions_out, args.answers)
        if args.command == "chair":
            return cmd_chair(cfg)
        if args.command == "augment":
            return cmd_augment(cfg, args.records_out)
        if args.command == "sample":
            return cmd_sample(cfg, args.sample_out)
        raise ConfigError(f"unknown command {args.command!r}")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except InputError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return 3
    except EndpointError as exc:
        print(f"endpoint failure: {exc}", file=sys.stderr)
        return 4
    except HarnessError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except FileNotFoundError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    raise SystemExit(main())
