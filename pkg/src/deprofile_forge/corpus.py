"""Canonical data model for the three record sources, plus JSONL ingestion.

Skeleton records (counseling, assessment and merged profiles all share the
skeleton schema) and social-media candidate records are read from
line-delimited JSON. Every value is checked against its closed vocabulary
before a typed object is built, so downstream code never sees free text
where a category is expected.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Callable, Iterable, Iterator, Sequence, TypeVar

from . import vocab

log = logging.getLogger(__name__)

T = TypeVar("T")


class CorpusError(ValueError):
    """Raised for unreadable inputs and duplicate identifiers."""


class SchemaError(CorpusError):
    """A record violates the file schema or a closed vocabulary."""

    def __init__(self, message: str, line: int | None = None, path: str | None = None):
        self.line = line
        self.path = path
        where = ""
        if path is not None:
            where = f"{path}:"
        if line is not None:
            where += f"line {line}: "
        elif where:
            where += " "
        super().__init__(f"{where}{message}")


class SymptomLabel(str, Enum):
    POSITIVE = "positive"
    NEGATIVE = "negative"
    NOT_MENTIONED = "not_mentioned"


class ItemKind(str, Enum):
    SYMPTOM = "symptom"
    EVENT = "event"


@dataclass(frozen=True)
class Demographics:
    age_bucket: str
    gender: str
    employment: str
    marital: str

    def __post_init__(self) -> None:
        for name, value, allowed in (
            ("age", self.age_bucket, vocab.AGE_BUCKETS),
            ("gender", self.gender, vocab.GENDERS),
            ("employment", self.employment, vocab.EMPLOYMENT_STATUSES),
            ("marital", self.marital, vocab.MARITAL_STATUSES),
        ):
            if value not in allowed:
                raise SchemaError(f"demographics.{name}={value!r} not in {list(allowed)}")

    def as_tuple(self) -> tuple[str, str, str, str]:
        return (self.age_bucket, self.gender, self.employment, self.marital)

    def to_record(self) -> dict:
        return {
            "age": self.age_bucket,
            "gender": self.gender,
            "employment": self.employment,
            "marital": self.marital,
        }


@dataclass(frozen=True)
class RiskProfile:
    depression_risk: int
    suicide_risk: int

    def __post_init__(self) -> None:
        for name in ("depression_risk", "suicide_risk"):
            value = getattr(self, name)
            if not _is_int(value) or value < 0:
                raise SchemaError(f"risk.{name.split('_')[0]} must be a non-negative integer, got {value!r}")


@dataclass(frozen=True)
class PersonalityVector:
    openness: int
    conscientiousness: int
    extraversion: int
    agreeableness: int
    neuroticism: int

    def __post_init__(self) -> None:
        for trait in vocab.OCEAN_TRAITS:
            value = getattr(self, trait)
            if not _is_int(value) or not 1 <= value <= 7:
                raise SchemaError(f"personality.{trait[0]}={value!r} outside [1, 7]")

    def as_tuple(self) -> tuple[int, int, int, int, int]:
        return tuple(getattr(self, t) for t in vocab.OCEAN_TRAITS)  # type: ignore[return-value]

    def to_record(self) -> dict:
        return dict(zip(vocab.OCEAN_KEYS, self.as_tuple()))


@dataclass(frozen=True)
class SymptomChecklist:
    """Three-way label for each assessment attribute; keys are exactly the vocabulary."""

    labels: dict[str, SymptomLabel]

    def __post_init__(self) -> None:
        keys = set(self.labels)
        expected = set(vocab.ASSESSMENT_ATTRIBUTES)
        if keys != expected:
            missing = sorted(expected - keys)
            extra = sorted(keys - expected)
            raise SchemaError(
                f"symptom checklist has {len(keys)} keys, expected {len(expected)}"
                f" (missing={missing}, unexpected={extra})"
            )

    @classmethod
    def from_mapping(cls, raw: dict[str, Any]) -> SymptomChecklist:
        labels: dict[str, SymptomLabel] = {}
        for key, value in raw.items():
            norm = vocab.normalize_attribute(key)
            if norm in labels:
                raise SchemaError(f"symptom key {key!r} duplicates {norm!r} after normalization")
            try:
                labels[norm] = SymptomLabel(value)
            except ValueError:
                raise SchemaError(f"symptom {key!r} has label {value!r}") from None
        cls(labels)  # validate key set before reordering
        return cls({k: labels[k] for k in vocab.ASSESSMENT_ATTRIBUTES})

    @classmethod
    def blank(cls) -> SymptomChecklist:
        return cls({k: SymptomLabel.NOT_MENTIONED for k in vocab.ASSESSMENT_ATTRIBUTES})

    def updated(self, changes: dict[str, SymptomLabel | str]) -> SymptomChecklist:
        labels = dict(self.labels)
        for key, value in changes.items():
            labels[vocab.normalize_attribute(key)] = SymptomLabel(value)
        return SymptomChecklist(labels)

    @property
    def positives(self) -> frozenset[str]:
        return frozenset(k for k, v in self.labels.items() if v is SymptomLabel.POSITIVE)

    @property
    def negatives(self) -> frozenset[str]:
        return frozenset(k for k, v in self.labels.items() if v is SymptomLabel.NEGATIVE)

    def to_record(self) -> dict:
        return {k: self.labels[k].value for k in vocab.ASSESSMENT_ATTRIBUTES}


@dataclass(frozen=True)
class PatientSkeleton:
    id: str
    demographics: Demographics
    risk: RiskProfile
    personality: PersonalityVector
    symptoms: SymptomChecklist
    assessment_snippets: tuple[str, ...] = ()
    counseling_snippets: tuple[str, ...] = ()


@dataclass(frozen=True)
class TimelineItem:
    day_index: int
    kind: ItemKind
    label: str
    text: str
    score: float

    def __post_init__(self) -> None:
        if not _is_int(self.day_index):
            raise SchemaError(f"timeline day must be an integer, got {self.day_index!r}")
        if isinstance(self.score, bool) or not isinstance(self.score, (int, float)):
            raise SchemaError(f"timeline score must be a number, got {self.score!r}")
        if not math.isfinite(self.score) or not 0.0 <= self.score <= 1.0:
            raise SchemaError(f"timeline score {self.score!r} outside [0, 1]")
        if not isinstance(self.label, str) or not self.label.strip():
            raise SchemaError("timeline label must be a non-empty string")
        if not isinstance(self.text, str):
            raise SchemaError("timeline text must be a string")

    def to_record(self) -> dict:
        return {"day": self.day_index, "label": self.label, "text": self.text, "score": self.score}


@dataclass(frozen=True)
class SocialCandidate:
    id: str
    demographics: Demographics
    personality: PersonalityVector
    symptom_set: frozenset[str]
    symptom_timeline: tuple[TimelineItem, ...] = ()
    event_timeline: tuple[TimelineItem, ...] = ()


@dataclass(frozen=True)
class IngestConfig:
    score_threshold: float = 0.8
    strict: bool = True

    def __post_init__(self) -> None:
        if not 0.0 <= self.score_threshold <= 1.0:
            raise ValueError(f"score_threshold must be in [0, 1], got {self.score_threshold}")


@dataclass
class LoadReport:
    path: str
    loaded: int = 0
    skipped_lines: list[int] = field(default_factory=list)
    errors: dict[int, str] = field(default_factory=dict)

    @property
    def skipped(self) -> int:
        return len(self.skipped_lines)

    def to_record(self) -> dict:
        return {
            "path": self.path,
            "loaded": self.loaded,
            "skipped": self.skipped,
            "skipped_lines": list(self.skipped_lines),
            "errors": {str(k): v for k, v in self.errors.items()},
        }


def threshold_timeline(items: Sequence[TimelineItem], p: float) -> list[TimelineItem]:
    """Keep items whose classifier score is at or above ``p``; order is preserved."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"threshold must be in [0, 1], got {p}")
    return [item for item in items if item.score >= p]


# ---------------------------------------------------------------------------
# record <-> object
# ---------------------------------------------------------------------------

SKELETON_FIELDS = frozenset(
    {"id", "demographics", "risk", "personality", "symptoms", "assessment_snippets", "counseling_snippets"}
)
CANDIDATE_FIELDS = frozenset(
    {"id", "demographics", "personality", "symptom_set", "symptom_timeline", "event_timeline"}
)
_DEMO_FIELDS = frozenset({"age", "gender", "employment", "marital"})
_RISK_FIELDS = frozenset({"depression", "suicide"})
_ITEM_FIELDS = frozenset({"day", "label", "text", "score"})


def _is_int(value: Any) -> bool:
    return isinstance(value, int) and not isinstance(value, bool)


def _expect_fields(obj: Any, expected: frozenset[str], where: str) -> dict:
    if not isinstance(obj, dict):
        raise SchemaError(f"{where} must be an object")
    keys = set(obj)
    if keys != expected:
        parts = []
        if expected - keys:
            parts.append(f"missing {sorted(expected - keys)}")
        if keys - expected:
            parts.append(f"unexpected {sorted(keys - expected)}")
        raise SchemaError(f"{where}: " + ", ".join(parts))
    return obj


def _expect_id(value: Any) -> str:
    if not isinstance(value, str) or not value:
        raise SchemaError(f"id must be a non-empty string, got {value!r}")
    return value


def _str_list(value: Any, where: str) -> tuple[str, ...]:
    if not isinstance(value, list) or not all(isinstance(v, str) for v in value):
        raise SchemaError(f"{where} must be a list of strings")
    return tuple(value)


def demographics_from_record(raw: Any) -> Demographics:
    raw = _expect_fields(raw, _DEMO_FIELDS, "demographics")
    return Demographics(raw["age"], raw["gender"], raw["employment"], raw["marital"])


def personality_from_record(raw: Any) -> PersonalityVector:
    raw = _expect_fields(raw, frozenset(vocab.OCEAN_KEYS), "personality")
    return PersonalityVector(*(raw[k] for k in vocab.OCEAN_KEYS))


def skeleton_from_record(rec: Any) -> PatientSkeleton:
    rec = _expect_fields(rec, SKELETON_FIELDS, "skeleton record")
    risk = _expect_fields(rec["risk"], _RISK_FIELDS, "risk")
    if not isinstance(rec["symptoms"], dict):
        raise SchemaError("symptoms must be an object")
    return PatientSkeleton(
        id=_expect_id(rec["id"]),
        demographics=demographics_from_record(rec["demographics"]),
        risk=RiskProfile(risk["depression"], risk["suicide"]),
        personality=personality_from_record(rec["personality"]),
        symptoms=SymptomChecklist.from_mapping(rec["symptoms"]),
        assessment_snippets=_str_list(rec["assessment_snippets"], "assessment_snippets"),
        counseling_snippets=_str_list(rec["counseling_snippets"], "counseling_snippets"),
    )


def skeleton_to_record(sk: PatientSkeleton) -> dict:
    return {
        "id": sk.id,
        "demographics": sk.demographics.to_record(),
        "risk": {"depression": sk.risk.depression_risk, "suicide": sk.risk.suicide_risk},
        "personality": sk.personality.to_record(),
        "symptoms": sk.symptoms.to_record(),
        "assessment_snippets": list(sk.assessment_snippets),
        "counseling_snippets": list(sk.counseling_snippets),
    }


def _timeline_from_record(raw: Any, kind: ItemKind, where: str) -> tuple[TimelineItem, ...]:
    if not isinstance(raw, list):
        raise SchemaError(f"{where} must be a list")
    items = []
    for i, entry in enumerate(raw):
        entry = _expect_fields(entry, _ITEM_FIELDS, f"{where}[{i}]")
        label = entry["label"]
        if kind is ItemKind.SYMPTOM:
            canon = vocab.canonical_social_label(label) if isinstance(label, str) else None
            if canon is None:
                raise SchemaError(f"{where}[{i}]: symptom label {label!r} not in social-media vocabulary")
            label = canon
        items.append(TimelineItem(entry["day"], kind, label, entry["text"], entry["score"]))
    return tuple(items)


def candidate_from_record(rec: Any, p: float = 0.0) -> SocialCandidate:
    """Build a candidate; timeline items scoring below ``p`` are dropped, the rest day-sorted."""
    rec = _expect_fields(rec, CANDIDATE_FIELDS, "candidate record")
    raw_set = rec["symptom_set"]
    if not isinstance(raw_set, list):
        raise SchemaError("symptom_set must be a list")
    labels = set()
    for label in raw_set:
        canon = vocab.canonical_social_label(label) if isinstance(label, str) else None
        if canon is None:
            raise SchemaError(f"symptom_set label {label!r} not in social-media vocabulary")
        labels.add(canon)
    symptoms = _timeline_from_record(rec["symptom_timeline"], ItemKind.SYMPTOM, "symptom_timeline")
    events = _timeline_from_record(rec["event_timeline"], ItemKind.EVENT, "event_timeline")
    return SocialCandidate(
        id=_expect_id(rec["id"]),
        demographics=demographics_from_record(rec["demographics"]),
        personality=personality_from_record(rec["personality"]),
        symptom_set=frozenset(labels),
        symptom_timeline=_day_sorted(threshold_timeline(symptoms, p)),
        event_timeline=_day_sorted(threshold_timeline(events, p)),
    )


def _day_sorted(items: Iterable[TimelineItem]) -> tuple[TimelineItem, ...]:
    return tuple(sorted(items, key=lambda it: it.day_index))


def candidate_to_record(c: SocialCandidate) -> dict:
    order = {label: i for i, label in enumerate(vocab.SOCIAL_SYMPTOMS)}
    return {
        "id": c.id,
        "demographics": c.demographics.to_record(),
        "personality": c.personality.to_record(),
        "symptom_set": sorted(c.symptom_set, key=order.__getitem__),
        "symptom_timeline": [it.to_record() for it in c.symptom_timeline],
        "event_timeline": [it.to_record() for it in c.event_timeline],
    }


# ---------------------------------------------------------------------------
# files
# ---------------------------------------------------------------------------


def iter_jsonl(path: str | Path) -> Iterator[tuple[int, Any]]:
    """Yield ``(line_number, parsed)`` for non-blank lines; parse failures yield the exception."""
    try:
        fh = open(path, encoding="utf-8")
    except OSError as exc:
        raise CorpusError(f"cannot read {path}: {exc}") from exc
    with fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                yield lineno, json.loads(line)
            except json.JSONDecodeError as exc:
                yield lineno, exc


def _load(
    path: str | Path,
    build: Callable[[Any], T],
    config: IngestConfig,
) -> tuple[list[T], LoadReport]:
    report = LoadReport(path=str(path))
    out: list[T] = []
    seen: dict[str, int] = {}
    for lineno, rec in iter_jsonl(path):
        try:
            if isinstance(rec, json.JSONDecodeError):
                raise SchemaError(f"malformed JSON ({rec.msg})")
            obj = build(rec)
        except SchemaError as exc:
            if config.strict:
                raise SchemaError(str(exc), line=lineno, path=str(path)) from None
            report.skipped_lines.append(lineno)
            report.errors[lineno] = str(exc)
            log.warning("%s:%d skipped: %s", path, lineno, exc)
            continue
        ident = obj.id  # type: ignore[attr-defined]
        if ident in seen:
            raise CorpusError(f"{path}: line {lineno}: duplicate id {ident!r} (first seen on line {seen[ident]})")
        seen[ident] = lineno
        out.append(obj)
    report.loaded = len(out)
    return out, report


def load_skeletons_with_report(path: str | Path, config: IngestConfig | None = None):
    return _load(path, skeleton_from_record, config or IngestConfig())


def load_skeletons(path: str | Path, config: IngestConfig | None = None) -> list[PatientSkeleton]:
    """Read skeleton-schema records. Strict mode raises on the first bad line."""
    return load_skeletons_with_report(path, config)[0]


def load_candidates_with_report(path: str | Path, config: IngestConfig | None = None):
    config = config or IngestConfig()
    return _load(path, lambda rec: candidate_from_record(rec, config.score_threshold), config)


def load_candidates(path: str | Path, config: IngestConfig | None = None) -> list[SocialCandidate]:
    """Read candidate records, dropping timeline items scoring below the ingest threshold."""
    return load_candidates_with_report(path, config)[0]


def dumps_jsonl(records: Iterable[dict]) -> str:
    return "".join(json.dumps(r, ensure_ascii=False, sort_keys=False) + "\n" for r in records)


def serialize_skeletons(skeletons: Iterable[PatientSkeleton]) -> str:
    return dumps_jsonl(skeleton_to_record(s) for s in skeletons)


def serialize_candidates(candidates: Iterable[SocialCandidate]) -> str:
    return dumps_jsonl(candidate_to_record(c) for c in candidates)
