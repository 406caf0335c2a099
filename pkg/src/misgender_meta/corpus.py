"""Normalized records for templates, contexts, generations and annotations.

All files are UTF-8 JSONL with one record per line and a stable field order.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, Iterable, Mapping

from .pronouns import BasePronoun, PronounCase, get_profile, parse_base
from .text import MASK, MASK_KIND, Token, detokenize, tokenize

__all__ = [
    "AnnotationRecord", "Context", "DatasetError", "DecodeParams", "GenerationRecord",
    "Label", "Template", "Token", "detokenize", "load_dataset", "load_records",
    "tokenize", "write_records",
]

DATASETS = ("misgendered", "ruff", "tango", "tango_derived", "custom")
SETTINGS = ("native", "pre_mask", "post_mask")


class DatasetError(ValueError):
    """A record failed validation. Carries the offending line when known."""

    def __init__(self, message: str, line: int | None = None, path: str | None = None):
        where = ""
        if path is not None:
            where += f"{path}:"
        if line is not None:
            where += f"{line}: "
        elif where:
            where += " "
        super().__init__(where + message)
        self.line = line
        self.path = path


class Label(str, enum.Enum):
    CORRECT = "correct"
    MISGENDERING = "misgendering"
    NO_PRONOUN = "no_pronoun"


@dataclass(frozen=True)
class DecodeParams:
    top_k: int = 50
    top_p: float = 0.95
    max_tokens: int = 50
    num_samples: int = 5
    beams: int = 1
    temperature: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.beams != 1:
            raise ValueError("only single-beam sampling is supported")
        if self.top_k < 0:
            raise ValueError("top_k must be >= 0 (0 disables the filter)")
        if not 0.0 < self.top_p <= 1.0:
            raise ValueError("top_p must be in (0, 1]")
        if self.max_tokens < 0 or self.num_samples < 1:
            raise ValueError("max_tokens must be >= 0 and num_samples >= 1")
        if self.temperature <= 0:
            raise ValueError("temperature must be positive")

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def _require(data: Mapping, key: str, line: int | None):
    if key not in data or data[key] is None:
        raise DatasetError(f"missing required field {key!r}", line)
    return data[key]


def _check_profile(name: str, line: int | None) -> str:
    try:
        get_profile(name)
    except ValueError as exc:
        raise DatasetError(str(exc), line) from None
    return name


def _base(value: str, line: int | None) -> BasePronoun:
    try:
        return parse_base(value)
    except ValueError as exc:
        raise DatasetError(f"gold_base: {exc}", line) from None


@dataclass(frozen=True)
class Template:
    id: str
    dataset: str
    text: str
    mask_case: PronounCase
    gold_base: BasePronoun
    profile: str = "misgendered_ruff"
    metadata: dict = field(default_factory=dict, compare=True, hash=False)
    has_distractor: bool = False
    # full candidate sequences for templates rewritten from generations
    renderings: dict | None = field(default=None, hash=False)

    def __post_init__(self):
        count = self.text.count(MASK)
        if count != 1:
            raise DatasetError(f"template {self.id!r} must contain exactly one {MASK}, found {count}")

    @property
    def tokens(self) -> list[Token]:
        return tokenize(self.text)

    @property
    def mask_index(self) -> int:
        return next(i for i, t in enumerate(self.tokens) if t.kind == MASK_KIND)

    def to_dict(self) -> dict:
        out = {
            "id": self.id,
            "dataset": self.dataset,
            "text": self.text,
            "mask_case": self.mask_case.value,
            "gold_base": self.gold_base.value,
            "profile": self.profile,
            "metadata": dict(self.metadata),
            "has_distractor": self.has_distractor,
        }
        if self.renderings is not None:
            out["renderings"] = {b.value: self.renderings[b] for b in BasePronoun}
        return out

    @classmethod
    def from_dict(cls, data: Mapping, line: int | None = None) -> "Template":
        try:
            case = PronounCase.parse(_require(data, "mask_case", line))
        except ValueError as exc:
            if isinstance(exc, DatasetError):
                raise
            raise DatasetError(f"mask_case: {exc}", line) from None
        renderings = data.get("renderings")
        if renderings is not None:
            renderings = {_base(k, line): v for k, v in renderings.items()}
        try:
            return cls(
                id=str(_require(data, "id", line)),
                dataset=str(_require(data, "dataset", line)),
                text=_require(data, "text", line),
                mask_case=case,
                gold_base=_base(_require(data, "gold_base", line), line),
                profile=_check_profile(data.get("profile", "misgendered_ruff"), line),
                metadata=dict(data.get("metadata") or {}),
                has_distractor=bool(data.get("has_distractor", False)),
                renderings=renderings,
            )
        except DatasetError as exc:
            if exc.line is None and line is not None:
                raise DatasetError(str(exc), line) from None
            raise


@dataclass(frozen=True)
class Context:
    id: str
    dataset: str
    text: str
    gold_base: BasePronoun
    profile: str = "misgendered_ruff"
    setting: str = "native"
    metadata: dict = field(default_factory=dict, hash=False)
    has_distractor: bool = False

    def __post_init__(self):
        if self.setting not in SETTINGS:
            raise DatasetError(f"context {self.id!r}: unknown setting {self.setting!r}")

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "dataset": self.dataset,
            "text": self.text,
            "gold_base": self.gold_base.value,
            "profile": self.profile,
            "setting": self.setting,
            "metadata": dict(self.metadata),
            "has_distractor": self.has_distractor,
        }

    @classmethod
    def from_dict(cls, data: Mapping, line: int | None = None) -> "Context":
        setting = data.get("setting", "native")
        if setting not in SETTINGS:
            raise DatasetError(f"setting: unknown value {setting!r}", line)
        return cls(
            id=str(_require(data, "id", line)),
            dataset=str(_require(data, "dataset", line)),
            text=_require(data, "text", line),
            gold_base=_base(_require(data, "gold_base", line), line),
            profile=_check_profile(data.get("profile", "misgendered_ruff"), line),
            setting=setting,
            metadata=dict(data.get("metadata") or {}),
            has_distractor=bool(data.get("has_distractor", False)),
        )


@dataclass(frozen=True)
class GenerationRecord:
    context_id: str
    sample_index: int
    text: str
    model_id: str
    decode: DecodeParams
    seed: int

    def __post_init__(self):
        if not 0 <= self.sample_index < self.decode.num_samples:
            raise DatasetError(
                f"sample_index {self.sample_index} outside [0, {self.decode.num_samples})"
            )

    @property
    def key(self) -> tuple[str, int]:
        return (self.context_id, self.sample_index)

    def to_dict(self) -> dict:
        return {
            "context_id": self.context_id,
            "sample_index": self.sample_index,
            "text": self.text,
            "model_id": self.model_id,
            "decode": self.decode.to_dict(),
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, data: Mapping, line: int | None = None) -> "GenerationRecord":
        try:
            decode = DecodeParams(**(data.get("decode") or {}))
        except (TypeError, ValueError) as exc:
            raise DatasetError(f"decode: {exc}", line) from None
        return cls(
            context_id=str(_require(data, "context_id", line)),
            sample_index=int(_require(data, "sample_index", line)),
            text=_require(data, "text", line),
            model_id=str(data.get("model_id", "")),
            decode=decode,
            seed=int(data.get("seed", 0)),
        )


@dataclass(frozen=True)
class AnnotationRecord:
    context_id: str
    sample_index: int
    label: Label
    extraneous_gendered: bool = False
    notes: str = ""
    annotator_id: str = ""

    @property
    def key(self) -> tuple[str, int]:
        return (self.context_id, self.sample_index)

    def to_dict(self) -> dict:
        return {
            "context_id": self.context_id,
            "sample_index": self.sample_index,
            "label": self.label.value,
            "extraneous_gendered": self.extraneous_gendered,
            "notes": self.notes,
            "annotator_id": self.annotator_id,
        }

    @classmethod
    def from_dict(cls, data: Mapping, line: int | None = None) -> "AnnotationRecord":
        try:
            label = Label(_require(data, "label", line))
        except ValueError as exc:
            if isinstance(exc, DatasetError):
                raise
            raise DatasetError(f"label: {exc}", line) from None
        return cls(
            context_id=str(_require(data, "context_id", line)),
            sample_index=int(_require(data, "sample_index", line)),
            label=label,
            extraneous_gendered=bool(data.get("extraneous_gendered", False)),
            notes=str(data.get("notes", "")),
            annotator_id=str(data.get("annotator_id", "")),
        )


RECORD_TYPES = {
    "template_jsonl": Template,
    "context_jsonl": Context,
    "generation_jsonl": GenerationRecord,
    "annotation_jsonl": AnnotationRecord,
}


def _iter_json_lines(path: Path) -> Iterable[tuple[int, dict]]:
    with open(path, encoding="utf-8") as f:
        for lineno, raw in enumerate(f, start=1):
            if not raw.strip():
                continue
            try:
                data = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise DatasetError(f"malformed JSON: {exc.msg}", lineno, str(path)) from None
            if not isinstance(data, dict):
                raise DatasetError("expected a JSON object", lineno, str(path))
            yield lineno, data


def load_records(path: str | Path, format: str) -> list[Any]:
    try:
        cls = RECORD_TYPES[format]
    except KeyError:
        raise ValueError(f"unknown format {format!r}; expected one of {sorted(RECORD_TYPES)}")
    path = Path(path)
    records = []
    for lineno, data in _iter_json_lines(path):
        try:
            records.append(cls.from_dict(data, lineno))
        except DatasetError as exc:
            raise DatasetError(str(exc), None, str(path)) from None
    return records


def load_dataset(path: str | Path, format: str) -> list:
    """Load templates or contexts; duplicate ids are rejected."""
    if format not in ("template_jsonl", "context_jsonl"):
        raise ValueError(f"unknown dataset format {format!r}")
    records = load_records(path, format)
    seen: set[str] = set()
    for rec in records:
        if rec.id in seen:
            raise DatasetError(f"duplicate id {rec.id!r}", path=str(path))
        seen.add(rec.id)
    return records


def sniff_format(path: str | Path) -> str:
    """Guess template vs context format from the first record."""
    for _, data in _iter_json_lines(Path(path)):
        return "template_jsonl" if "mask_case" in data else "context_jsonl"
    return "template_jsonl"


def dumps(record: Any) -> str:
    data = record.to_dict() if hasattr(record, "to_dict") else record
    return json.dumps(data, ensure_ascii=False)


def write_records(path: str | Path, records: Iterable[Any], append: bool = False) -> None:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "a" if append else "w", encoding="utf-8", newline="\n") as f:
            for rec in records:
                f.write(dumps(rec) + "\n")
    except OSError as exc:
        raise OSError(f"{path}: {exc.strerror or exc}") from exc
