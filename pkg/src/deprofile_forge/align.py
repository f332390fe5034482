"""Two-stage profile alignment.

Stage 1 pairs counseling and assessment records into conflict-free clinical
skeletons. Stage 2 attaches social-media candidates to each skeleton:
demographic hard match, projection of symptom tags into the shared
category space, conflict pruning, scoring, strict thresholds and ranking.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from . import vocab
from .corpus import (
    Demographics,
    PatientSkeleton,
    PersonalityVector,
    SocialCandidate,
    SymptomChecklist,
    SymptomLabel,
)

STRICT = "strict"
LENIENT = "lenient"


class AlignError(ValueError):
    pass


@dataclass(frozen=True)
class SymptomTaxonomyMap:
    """Social-media label -> assessment attribute pairing, plus the social-only labels."""

    pairs: dict[str, str]
    social_only: frozenset[str] = frozenset()

    def __post_init__(self) -> None:
        known_social = set(vocab.SOCIAL_SYMPTOMS)
        known_assessment = set(vocab.ASSESSMENT_ATTRIBUTES)
        for social, assessment in self.pairs.items():
            if social not in known_social:
                raise AlignError(f"taxonomy key {social!r} is not a social-media label")
            if assessment not in known_assessment:
                raise AlignError(f"taxonomy value {assessment!r} is not an assessment attribute")
        if len(set(self.pairs.values())) != len(self.pairs):
            raise AlignError("taxonomy pairing must be injective")
        overlap = self.social_only & set(self.pairs)
        if overlap:
            raise AlignError(f"labels both paired and social-only: {sorted(overlap)}")

    @classmethod
    def default(cls) -> SymptomTaxonomyMap:
        return cls(dict(vocab.PAIRED_SYMPTOMS), frozenset(vocab.SOCIAL_ONLY_SYMPTOMS))

    @classmethod
    def from_file(cls, path: str | Path) -> SymptomTaxonomyMap:
        """JSON ``{"pairs": {social: attribute}, "social_only": [...]}``."""
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
        pairs = {}
        for social, assessment in raw["pairs"].items():
            canon = vocab.canonical_social_label(social)
            if canon is None:
                raise AlignError(f"taxonomy key {social!r} is not a social-media label")
            pairs[canon] = vocab.normalize_attribute(assessment)
        social_only = set()
        for label in raw.get("social_only", []):
            canon = vocab.canonical_social_label(label)
            if canon is None:
                raise AlignError(f"social_only label {label!r} is not a social-media label")
            social_only.add(canon)
        return cls(pairs, frozenset(social_only))

    @property
    def shared_categories(self) -> frozenset[str]:
        return frozenset(self.pairs.values())


@dataclass(frozen=True)
class MatchScore:
    sim_symp: float
    sim_pers: float

    @property
    def sim_total(self) -> float:
        return self.sim_symp + self.sim_pers


@dataclass(frozen=True)
class RankedCandidate:
    candidate_id: str
    score: MatchScore

    def to_record(self) -> dict:
        return {
            "candidate_id": self.candidate_id,
            "sim_symp": self.score.sim_symp,
            "sim_pers": self.score.sim_pers,
            "sim_total": self.score.sim_total,
        }


@dataclass(frozen=True)
class UnifiedProfile:
    skeleton: PatientSkeleton
    ranked_candidates: tuple[RankedCandidate, ...] = ()
    thresholds: tuple[float, float] = (0.8, 0.8)
    policy: str = STRICT

    @property
    def top_candidate_id(self) -> str | None:
        return self.ranked_candidates[0].candidate_id if self.ranked_candidates else None

    def to_record(self) -> dict:
        return {
            "skeleton_id": self.skeleton.id,
            "candidates": [rc.to_record() for rc in self.ranked_candidates],
            "thresholds": {"sim_symp": self.thresholds[0], "sim_pers": self.thresholds[1]},
            "policy_flags": {"unknown_demographics": self.policy},
        }


def unified_from_record(rec: dict, skeletons: dict[str, PatientSkeleton]) -> UnifiedProfile:
    try:
        skeleton = skeletons[rec["skeleton_id"]]
    except KeyError:
        raise AlignError(f"profile references unknown skeleton {rec.get('skeleton_id')!r}") from None
    ranked = tuple(
        RankedCandidate(c["candidate_id"], MatchScore(c["sim_symp"], c["sim_pers"])) for c in rec["candidates"]
    )
    th = rec["thresholds"]
    return UnifiedProfile(skeleton, ranked, (th["sim_symp"], th["sim_pers"]), rec["policy_flags"]["unknown_demographics"])


# ---------------------------------------------------------------------------
# stage 1
# ---------------------------------------------------------------------------


def _field_matches(a: str, b: str, policy: str) -> bool:
    if a == b:
        return True
    return policy == LENIENT and vocab.UNKNOWN in (a, b)


def demographics_align(a: Demographics, b: Demographics, policy: str = STRICT) -> bool:
    if policy not in (STRICT, LENIENT):
        raise AlignError(f"unknown demographic policy {policy!r}")
    return all(_field_matches(x, y, policy) for x, y in zip(a.as_tuple(), b.as_tuple()))


def checklists_conflict(a: SymptomChecklist, b: SymptomChecklist) -> bool:
    """True if some attribute is positive in one checklist and negative in the other."""
    return bool((a.positives & b.negatives) | (a.negatives & b.positives))


def merge_checklists(a: SymptomChecklist, b: SymptomChecklist) -> SymptomChecklist:
    merged = {}
    for key in vocab.ASSESSMENT_ATTRIBUTES:
        la, lb = a.labels[key], b.labels[key]
        merged[key] = lb if la is SymptomLabel.NOT_MENTIONED else la
    return SymptomChecklist(merged)


def _merge_demographics(a: Demographics, b: Demographics) -> Demographics:
    # only differs under the lenient policy: keep the known value
    pick = [x if x != vocab.UNKNOWN else y for x, y in zip(a.as_tuple(), b.as_tuple())]
    return Demographics(*pick)


def merge_pair(counseling: PatientSkeleton, assessment: PatientSkeleton) -> PatientSkeleton:
    """Merged skeleton: risk from the assessment record, personality from counseling."""
    return PatientSkeleton(
        id=f"{counseling.id}+{assessment.id}",
        demographics=_merge_demographics(counseling.demographics, assessment.demographics),
        risk=assessment.risk,
        personality=counseling.personality,
        symptoms=merge_checklists(counseling.symptoms, assessment.symptoms),
        assessment_snippets=assessment.assessment_snippets,
        counseling_snippets=counseling.counseling_snippets,
    )


def match_stage1(
    counseling_profiles: Sequence[PatientSkeleton],
    assessment_profiles: Sequence[PatientSkeleton],
    policy: str = STRICT,
) -> list[PatientSkeleton]:
    """Every (counseling, assessment) pair whose demographics align and whose checklists do not conflict."""
    out = []
    for c in counseling_profiles:
        for a in assessment_profiles:
            if demographics_align(c.demographics, a.demographics, policy) and not checklists_conflict(
                c.symptoms, a.symptoms
            ):
                out.append(merge_pair(c, a))
    return out


# ---------------------------------------------------------------------------
# stage 2
# ---------------------------------------------------------------------------


def demographic_prefilter(
    skeleton: PatientSkeleton, candidates: Iterable[SocialCandidate], policy: str = STRICT
) -> list[SocialCandidate]:
    return [c for c in candidates if demographics_align(skeleton.demographics, c.demographics, policy)]


def project_symptoms(
    candidate_set: Iterable[str], taxonomy: SymptomTaxonomyMap, strict: bool = False
) -> frozenset[str]:
    """Map social labels into the shared category space; unpaired labels fall out."""
    out = set()
    for label in candidate_set:
        if label in taxonomy.pairs:
            out.add(taxonomy.pairs[label])
        elif strict and label not in taxonomy.social_only:
            raise AlignError(f"label {label!r} is neither paired nor social-only")
    return frozenset(out)


def unpaired_symptoms(candidate_set: Iterable[str], taxonomy: SymptomTaxonomyMap) -> frozenset[str]:
    return frozenset(label for label in candidate_set if label not in taxonomy.pairs)


def prune_conflicts(skeleton: PatientSkeleton, projected_set: Iterable[str]) -> bool:
    """False iff the candidate carries a category the skeleton explicitly denies."""
    return not (set(projected_set) & skeleton.symptoms.negatives)


def sim_symp(skeleton_positives: Iterable[str], candidate_set: Iterable[str]) -> float:
    social = set(candidate_set)
    if not social:
        raise AlignError("sim_symp undefined for an empty candidate symptom set")
    return len(set(skeleton_positives) & social) / len(social)


def sim_pers(v1: PersonalityVector | Sequence[float], v2: PersonalityVector | Sequence[float]) -> float:
    a = v1.as_tuple() if isinstance(v1, PersonalityVector) else tuple(v1)
    b = v2.as_tuple() if isinstance(v2, PersonalityVector) else tuple(v2)
    if len(a) != len(b):
        raise AlignError("personality vectors differ in length")
    na = math.sqrt(math.fsum(x * x for x in a))
    nb = math.sqrt(math.fsum(x * x for x in b))
    if na == 0 or nb == 0:
        raise AlignError("cosine undefined for a zero personality vector")
    return math.fsum(x * y for x, y in zip(a, b)) / (na * nb)


def passes_thresholds(score: MatchScore, thresholds: tuple[float, float] = (0.8, 0.8)) -> bool:
    return score.sim_symp > thresholds[0] and score.sim_pers > thresholds[1]


def rank_key(rc: RankedCandidate) -> tuple[float, float, str]:
    return (-rc.score.sim_total, -rc.score.sim_symp, rc.candidate_id)


@dataclass
class ExpansionTrace:
    """Per-step survivor counts for one skeleton, for reporting."""

    pool: int = 0
    prefiltered: int = 0
    projected_nonempty: int = 0
    conflict_free: int = 0
    qualified: int = 0
    dropped: dict[str, str] = field(default_factory=dict)


def expand_stage2(
    skeleton: PatientSkeleton,
    candidates: Sequence[SocialCandidate],
    taxonomy: SymptomTaxonomyMap | None = None,
    thresholds: tuple[float, float] = (0.8, 0.8),
    policy: str = STRICT,
    trace: ExpansionTrace | None = None,
) -> UnifiedProfile:
    taxonomy = taxonomy or SymptomTaxonomyMap.default()
    trace = trace if trace is not None else ExpansionTrace()
    trace.pool = len(candidates)
    positives = skeleton.symptoms.positives

    pool = demographic_prefilter(skeleton, candidates, policy)
    trace.prefiltered = len(pool)
    ranked = []
    for cand in pool:
        projected = project_symptoms(cand.symptom_set, taxonomy)
        if not projected:
            trace.dropped[cand.id] = "no shared-space symptoms"
            continue
        trace.projected_nonempty += 1
        if not prune_conflicts(skeleton, projected):
            trace.dropped[cand.id] = "clinical conflict"
            continue
        trace.conflict_free += 1
        score = MatchScore(sim_symp(positives, projected), sim_pers(skeleton.personality, cand.personality))
        if not passes_thresholds(score, thresholds):
            trace.dropped[cand.id] = "below threshold"
            continue
        ranked.append(RankedCandidate(cand.id, score))
    ranked.sort(key=rank_key)
    trace.qualified = len(ranked)
    return UnifiedProfile(skeleton, tuple(ranked), tuple(thresholds), policy)  # type: ignore[arg-type]
