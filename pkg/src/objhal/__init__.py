"""Object-hallucination evaluation harness for vision-language models.

Quantifies objects asserted in free-form image descriptions that are absent
from the image, by posing existence questions about each vocabulary class
to an ensemble of external language-model judges and voting their answers.
Also ships the closed-question protocol (original and exhaustive variants),
the exact-text-matching caption metric, and an object-enumeration training
data generator.
"""

__version__ = "0.1.0"

from .augment import AugmentConfig, EnumerationRecord, grid_location
from .chair import ChairScores, chair_scores, extract_objects
from .dataset import (CooccurrenceMatrix, GroundTruthMatrix, ImageRecord, InstanceAnnotation,
                      build_cooccurrence, load_captions, load_instances, natural_subsample)
from .judge import (DEFAULT_TEMPLATES, JudgeEndpoint, JudgementTensor, QuestionTemplate,
                    normalize_answer, render_prompt, run_aqa)
from .metrics import classwise_metrics, confusion, f_beta, overall_metrics, spearman
from .pope import PopeQuestion, generate_pope, generate_popec, parse_yes_no, score_pope
from .report import MetricsReport, build_metrics_report
from .responses import DESCRIBE_PROMPT, ResponseSet, ingest_responses, length_stats
from .verdict import PredictionMatrix, VoteConfig, apply_voting
from .vocab import ClassEntry, ClassVocabulary, article_for, load_vocabulary

__all__ = [
    "AugmentConfig", "ChairScores", "ClassEntry", "ClassVocabulary", "CooccurrenceMatrix",
    "DEFAULT_TEMPLATES", "DESCRIBE_PROMPT", "EnumerationRecord", "GroundTruthMatrix",
    "ImageRecord", "InstanceAnnotation", "JudgeEndpoint", "JudgementTensor", "MetricsReport",
    "PopeQuestion", "PredictionMatrix", "QuestionTemplate", "ResponseSet", "VoteConfig",
    "apply_voting", "article_for", "build_cooccurrence", "build_metrics_report",
    "chair_scores", "classwise_metrics", "confusion", "extract_objects", "f_beta",
    "generate_pope", "generate_popec", "grid_location", "ingest_responses", "length_stats",
    "load_captions", "load_instances", "load_vocabulary", "natural_subsample",
    "normalize_answer", "overall_metrics", "parse_yes_no", "render_prompt", "run_aqa",
    "score_pope", "spearman",
]
