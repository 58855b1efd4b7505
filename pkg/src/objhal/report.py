"""Report assembly and emission: JSON (full precision), per-class CSV, and a
text leaderboard table with the class-wise F0.5 column highlighted as the
principal metric."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .dataset import GroundTruthMatrix
from .errors import InputError
from .metrics import (ClasswiseMetrics, ConfusionCounts, OverallMetrics, classwise_metrics,
                      confusion, overall_metrics)
from .verdict import PredictionMatrix

METRIC_COLUMNS = ("p_all", "r_all", "f1_all", "f05_all", "p_cls", "r_cls", "f1_cls", "f05_cls")
PRINCIPAL_METRIC = "f05_cls"


@dataclass
class MetricsReport:
    model_id: str
    p_all: float
    r_all: float
    f1_all: float
    f05_all: float
    p_cls: float
    r_cls: float
    f1_cls: float
    f05_cls: float
    per_class: list[dict] = field(default_factory=list)
    excluded_classes: dict[str, list[str]] = field(default_factory=dict)
    degenerate_flags: dict[str, bool] = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)

    def metric(self, name: str) -> float:
        if name not in METRIC_COLUMNS:
            raise InputError(f"unknown metric {name!r}")
        return getattr(self, name)


def build_metrics_report(
    pred: PredictionMatrix,
    gt: GroundTruthMatrix,
    model_id: str,
    metadata: dict | None = None,
) -> MetricsReport:
    """Score a prediction matrix against ground truth into a full report."""
    pooled, per_class = confusion(pred, gt)
    overall = overall_metrics(pooled)
    cls = classwise_metrics(per_class)
    names = gt.vocab.names()

    table = []
    for idx, counts in enumerate(per_class):
        table.append({
            "class_id": gt.vocab.classes[idx].class_id,
            "name": names[idx],
            "tp": counts.tp, "fp": counts.fp, "fn": counts.fn, "tn": counts.tn,
            "ignored": counts.ignored,
            "precision": cls.per_class_p.get(idx),
            "recall": cls.per_class_r.get(idx),
        })

    meta = dict(metadata or {})
    meta.setdefault("k", pred.k)
    meta.setdefault("nm", pred.nm)
    meta.setdefault("vote_label", pred.label)
    meta["ignored_cells"] = pooled.ignored
    meta["pooled_counts"] = asdict(pooled)

    return MetricsReport(
        model_id=model_id,
        p_all=overall.p, r_all=overall.r, f1_all=overall.f1, f05_all=overall.f05,
        p_cls=cls.p, r_cls=cls.r, f1_cls=cls.f1, f05_cls=cls.f05,
        per_class=table,
        excluded_classes={
            "precision": [names[i] for i in cls.excluded_precision],
            "recall": [names[i] for i in cls.excluded_recall],
        },
        degenerate_flags={
            "overall_precision": overall.degenerate_precision,
            "overall_recall": overall.degenerate_recall,
            "overall_f": overall.degenerate_f,
            "classwise_f": cls.degenerate_f,
        },
        metadata=meta,
    )


def report_to_json(report: MetricsReport) -> str:
    return json.dumps(asdict(report), indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def report_from_json(path: str | Path) -> MetricsReport:
    try:
        blob = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: not valid JSON: {exc}") from exc
    try:
        return MetricsReport(**blob)
    except TypeError as exc:
        raise InputError(f"{path}: not a metrics report: {exc}") from exc


def per_class_csv(report: MetricsReport) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["class_id", "name", "tp", "fp", "fn", "tn", "ignored",
                     "precision", "recall"])
    for row in report.per_class:
        writer.writerow([
            row["class_id"], row["name"], row["tp"], row["fp"], row["fn"], row["tn"],
            row["ignored"],
            "" if row["precision"] is None else f"{row['precision']:.4f}",
            "" if row["recall"] is None else f"{row['recall']:.4f}",
        ])
    return buf.getvalue()


def render_table(reports: list[MetricsReport]) -> str:
    """Fixed-width leaderboard; scores printed with one decimal, the
    principal metric column marked with '*'."""
    headers = ["model", "L"] + [
        ("*" if name == PRINCIPAL_METRIC else "") + name.upper() for name in METRIC_COLUMNS
    ]
    rows = []
    for rep in reports:
        median = rep.metadata.get("median_response_length")
        rows.append(
            [rep.model_id, "-" if median is None else str(int(median))]
            + [f"{rep.metric(name):.1f}" for name in METRIC_COLUMNS]
        )
    widths = [max(len(h), *(len(r[i]) for r in rows)) for i, h in enumerate(headers)]
    lines = [
        "  ".join(h.ljust(widths[i]) for i, h in enumerate(headers)),
        "  ".join("-" * w for w in widths),
    ]
    for row in rows:
        lines.append("  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)))
    lines.append("")
    lines.append(f"* {PRINCIPAL_METRIC.upper()} is the principal comparison metric.")
    return "\n".join(lines) + "\n"


def collect_reports(paths: list[str | Path]) -> list[MetricsReport]:
    """Load report files; each may hold a single report or a list of them."""
    reports: list[MetricsReport] = []
    for path in paths:
        blob = json.loads(Path(path).read_text(encoding="utf-8"))
        items = blob if isinstance(blob, list) else [blob]
        for item in items:
            try:
                reports.append(MetricsReport(**item))
            except TypeError as exc:
                raise InputError(f"{path}: not a metrics report: {exc}") from exc
    return reports
