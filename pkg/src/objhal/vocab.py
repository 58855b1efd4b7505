"""Object class vocabulary shared by every stage of the harness.

A vocabulary file is UTF-8 text with one JSON object per line:

    {"id": 0, "name": "person", "synonyms": ["man", "woman"]}
    {"id": 25, "name": "umbrella", "article": "an"}

Blank lines and lines starting with ``#`` are ignored.  ``article`` and
``synonyms`` are optional.  When no article is stored, vowel-initial names
default to "an" and everything else to "a".

Synonym lists are consulted only by the exact-text-matching captioning
metric (:mod:`objhal.chair`); LM-based judging works from class names alone.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import InputError

_VOWELS = "aeiou"
_ARTICLES = ("a", "an")


@dataclass(frozen=True)
class ClassEntry:
    """One object class: stable id, display name, article, synonym phrases."""

    class_id: int
    name: str
    article: str | None = None
    synonyms: tuple[str, ...] = ()

    def validate(self) -> None:
        if not self.name or self.name != self.name.strip() or self.name != self.name.lower():
            raise InputError(f"class {self.class_id}: name must be non-empty lowercase "
                             f"without surrounding whitespace, got {self.name!r}")
        if self.article is not None and self.article not in _ARTICLES:
            raise InputError(f"class {self.name!r}: article must be one of {_ARTICLES}, "
                             f"got {self.article!r}")
        seen = set()
        for syn in self.synonyms:
            if not syn or syn != syn.strip() or syn != syn.lower():
                raise InputError(f"class {self.name!r}: bad synonym {syn!r}")
            if syn == self.name:
                raise InputError(f"class {self.name!r}: synonym equals the class name")
            if syn in seen:
                raise InputError(f"class {self.name!r}: duplicate synonym {syn!r}")
            seen.add(syn)


def article_for(entry: ClassEntry) -> str:
    """Article to use before the class name ("a"/"an").

    A stored per-class override wins; otherwise vowel-initial names take "an".
    """
    if entry.article is not None:
        return entry.article
    return "an" if entry.name[:1] in _VOWELS else "a"


@dataclass
class ClassVocabulary:
    """Ordered class set with a phrase index over names and synonyms."""

    classes: list[ClassEntry]
    index: dict[str, int] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        if not self.classes:
            raise InputError("vocabulary has no classes")
        ids = set()
        names = set()
        for entry in self.classes:
            entry.validate()
            if entry.class_id in ids:
                raise InputError(f"duplicate class id {entry.class_id}")
            if entry.name in names:
                raise InputError(f"duplicate class name {entry.name!r}")
            ids.add(entry.class_id)
            names.add(entry.name)
        index: dict[str, int] = {}
        for entry in self.classes:
            for phrase in (entry.name, *entry.synonyms):
                owner = index.get(phrase)
                if owner is not None and owner != entry.class_id:
                    raise InputError(
                        f"ambiguous phrase {phrase!r}: maps to class ids {owner} and {entry.class_id}")
                index[phrase] = entry.class_id
        self.index = index

    def __len__(self) -> int:
        return len(self.classes)

    def entry(self, class_id: int) -> ClassEntry:
        return self._by_id[class_id]

    @property
    def _by_id(self) -> dict[int, ClassEntry]:
        by_id = getattr(self, "_by_id_cache", None)
        if by_id is None:
            by_id = {e.class_id: e for e in self.classes}
            object.__setattr__(self, "_by_id_cache", by_id)
        return by_id

    def position(self, class_id: int) -> int:
        """Column index of a class in matrix order."""
        pos = getattr(self, "_pos_cache", None)
        if pos is None:
            pos = {e.class_id: i for i, e in enumerate(self.classes)}
            object.__setattr__(self, "_pos_cache", pos)
        return pos[class_id]

    def names(self) -> list[str]:
        return [e.name for e in self.classes]


def load_vocabulary(path: str | Path) -> ClassVocabulary:
    """Load and validate a vocabulary file; ordering equals file order."""
    path = Path(path)
    classes = []
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise InputError(f"{path}:{lineno}: not valid JSON: {exc}") from exc
        if not isinstance(obj, dict) or "id" not in obj or "name" not in obj:
            raise InputError(f"{path}:{lineno}: entry needs at least 'id' and 'name'")
        classes.append(ClassEntry(
            class_id=int(obj["id"]),
            name=str(obj["name"]),
            article=obj.get("article"),
            synonyms=tuple(obj.get("synonyms") or ()),
        ))
    return ClassVocabulary(classes)


def dump_vocabulary(vocab: ClassVocabulary) -> str:
    """Serialize a vocabulary back to the line-oriented file format."""
    lines = []
    for entry in vocab.classes:
        obj: dict = {"id": entry.class_id, "name": entry.name}
        if entry.article is not None:
            obj["article"] = entry.article
        if entry.synonyms:
            obj["synonyms"] = list(entry.synonyms)
        lines.append(json.dumps(obj, ensure_ascii=False))
    return "\n".join(lines) + "\n"


def builtin_vocab_path(name: str) -> Path:
    """Path of a vocabulary file shipped with the package (e.g. "coco80")."""
    path = Path(__file__).parent / "data" / f"{name}.vocab"
    if not path.exists():
        raise InputError(f"no builtin vocabulary named {name!r}")
    return path
