"""Run configuration: a JSON config file with flag overrides (flags win).

Everything a run needs is resolved and validated up front, then serialized
into every report for provenance.  Judge decoding is greedy by definition;
sampling parameters in an endpoint entry are rejected outright.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError
from .judge import DEFAULT_TEMPLATES, JudgeEndpoint, QuestionTemplate

_FORBIDDEN_ENDPOINT_KEYS = ("do_sample", "temperature", "top_p", "top_k", "typical_p")


@dataclass
class RunConfig:
    vocabulary: str | None = None
    instances: str | None = None
    captions: str | None = None
    responses: str | None = None
    output_dir: str = "objhal-out"
    cache: str | None = None
    tensor: str | None = None
    concurrency_limit: int = 8
    vote_k: int | None = None  # None selects unanimous voting
    endpoints: list[dict] = field(default_factory=list)
    templates: list[dict] | str = "default"
    seeds: dict = field(default_factory=lambda: {"sample": 0, "pope": 0, "augment": 0})
    pope: dict = field(default_factory=lambda: {
        "num_images": 500, "pos_per_image": 3, "neg_per_image": 3})
    augment: dict = field(default_factory=lambda: {
        "negatives_per_image": 3, "cooccurrence_bias_weight": 1.0})
    sample: dict = field(default_factory=lambda: {"target_count": 5110})
    allow_empty_responses: bool = False

    @classmethod
    def load(cls, path: str | Path | None, overrides: dict | None = None) -> "RunConfig":
        data: dict = {}
        if path is not None:
            try:
                data = json.loads(Path(path).read_text(encoding="utf-8"))
            except FileNotFoundError as exc:
                raise ConfigError(f"config file not found: {path}") from exc
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{path}: not valid JSON: {exc}") from exc
            if not isinstance(data, dict):
                raise ConfigError(f"{path}: config must be a JSON object")
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
        for key, value in (overrides or {}).items():
            if value is not None:
                data[key] = value
        try:
            cfg = cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc
        cfg._validate()
        return cfg

    def _validate(self) -> None:
        if self.concurrency_limit < 1:
            raise ConfigError("concurrency_limit must be >= 1")
        if self.vote_k is not None and self.vote_k < 1:
            raise ConfigError("vote_k must be >= 1")
        for ep in self.endpoints:
            if not isinstance(ep, dict) or "judge_id" not in ep or "base_url" not in ep:
                raise ConfigError("each endpoint needs judge_id and base_url")
            params = ep.get("parameters") or {}
            for bad in _FORBIDDEN_ENDPOINT_KEYS:
                if bad in ep or bad in params:
                    raise ConfigError(
                        f"endpoint {ep.get('judge_id')!r}: judging is greedy-only; "
                        f"remove {bad!r}")

    def require(self, *names: str) -> None:
        missing = [n for n in names if not getattr(self, n)]
        if missing:
            raise ConfigError(f"missing required configuration: {', '.join(missing)}")
        for name in ("vocabulary", "instances", "captions", "responses", "tensor"):
            value = getattr(self, name)
            if name in names and value and not Path(value).exists():
                raise ConfigError(f"{name} path does not exist: {value}")

    def judge_endpoints(self) -> list[JudgeEndpoint]:
        endpoints = []
        for ep in self.endpoints:
            endpoints.append(JudgeEndpoint(
                judge_id=str(ep["judge_id"]),
                base_url=str(ep["base_url"]),
                max_new_tokens=int(ep.get("max_new_tokens", 3)),
                timeout=float(ep.get("timeout", 60.0)),
                retry_budget=int(ep.get("retry_budget", 3)),
                backoff_base=float(ep.get("backoff_base", 0.5)),
                headers=tuple((str(k), str(v)) for k, v in (ep.get("headers") or {}).items()),
            ))
        return endpoints

    def question_templates(self) -> list[QuestionTemplate]:
        if self.templates == "default":
            return list(DEFAULT_TEMPLATES)
        if not isinstance(self.templates, list) or not self.templates:
            raise ConfigError("templates must be 'default' or a non-empty list")
        return [QuestionTemplate(str(t["question_id"]), str(t["text"])) for t in self.templates]

    def resolved(self) -> dict:
        out = {}
        for name in self.__dataclass_fields__:
            out[name] = getattr(self, name)
        return out

    def input_digests(self) -> dict[str, str]:
        digests = {}
        for name in ("vocabulary", "instances", "captions", "responses", "tensor"):
            value = getattr(self, name)
            if value and Path(value).exists():
                digests[name] = hashlib.sha256(Path(value).read_bytes()).hexdigest()
        return digests

    def run_digest(self) -> str:
        payload = json.dumps({"config": self.resolved(), "inputs": self.input_digests()},
                             sort_keys=True, default=str)
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:12]
