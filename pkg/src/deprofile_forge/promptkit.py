"""System-prompt assembly and the three-stage interview driver.

The role-play prompt is built from up to seven components, each a fixed
template filled from the unified profile and the memory of its selected
candidate:

    B  demographics          S  symptom attributes     T  life-event cards
    R  disorder risk         A  assessment snippets
    P  personality           C  counseling snippets
"""

from __future__ import annotations

import hashlib
import json
import logging
import re
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources
from pathlib import Path
from typing import Any, Iterable, Sequence

from . import vocab
from .align import SymptomTaxonomyMap, UnifiedProfile
from .coc import MemoryCard, NodeKind, TemporalGraph
from .corpus import PersonalityVector
from .gateway import ChatClient, GatewayError
from .symptom_text import DESCRIPTIONS

log = logging.getLogger(__name__)

TAG_ORDER = ("B", "R", "P", "S", "A", "C", "T")

# ablation variants, one per results row
VARIANTS: dict[str, frozenset[str]] = {
    "basic": frozenset("BRP"),
    "basic+T": frozenset("BRPT"),
    "basic+S": frozenset("BRPS"),
    "basic+ST": frozenset("BRPST"),
    "full w/o T": frozenset("BRPSAC"),
    "full": frozenset(TAG_ORDER),
}

# first line of each block; lets a reader (or a test) scan a prompt for blocks
BLOCK_MARKERS = {
    "B": "Use ONLY the following demographic profile:",
    "R": "You currently have ",
    "P": "Follow the Big Five personality instructions below.",
    "S": "Below are the patient's positive symptom attributes.",
    "A": "Assessment-style reference (style only):",
    "C": "Counseling-style reference (style only):",
    "T": "Use the Life-Event Timeline Cards below to describe changes in mood and functioning.",
}

PLACEHOLDER = re.compile(r"<[A-Z][A-Z_]*>")


class PromptError(ValueError):
    pass


class Level(str, Enum):
    LOW = "Low"
    MEDIUM = "Medium"
    HIGH = "High"


@dataclass(frozen=True)
class OceanLevel:
    trait: str
    level: Level


def discretize_score(score: int) -> Level:
    if score <= 2:
        return Level.LOW
    if score <= 5:
        return Level.MEDIUM
    return Level.HIGH


def discretize_ocean(v: PersonalityVector) -> list[OceanLevel]:
    return [OceanLevel(trait, discretize_score(s)) for trait, s in zip(vocab.OCEAN_TRAITS, v.as_tuple())]


def parse_tags(spec: str | Iterable[str]) -> frozenset[str]:
    """``"B,R,P"``, ``"BRP"``, a variant name, or an iterable of tags."""
    if isinstance(spec, str):
        if spec in VARIANTS:
            return VARIANTS[spec]
        spec = [t for t in re.split(r"[,\s+]+", spec) if t]
        if len(spec) == 1 and len(spec[0]) > 1:
            spec = list(spec[0])
    tags = frozenset(t.strip().upper() for t in spec)
    unknown = tags - set(TAG_ORDER)
    if unknown:
        raise PromptError(f"unknown prompt tags {sorted(unknown)}; expected a subset of {','.join(TAG_ORDER)}")
    return tags


def variant_name(tags: Iterable[str]) -> str:
    tags = frozenset(tags)
    for name, vtags in VARIANTS.items():
        if vtags == tags:
            return name
    return "".join(t for t in TAG_ORDER if t in tags)


def variant_slug(tags: Iterable[str]) -> str:
    """Filesystem-safe variant name."""
    return re.sub(r"[^A-Za-z0-9+]+", "-", variant_name(tags)).strip("-")


# ---------------------------------------------------------------------------
# templates
# ---------------------------------------------------------------------------

TEMPLATE_B = """Use ONLY the following demographic profile:
Age: <AGE>
Gender: <GENDER>
Employment status: <WORK_STATUS>
Marital status: <MARITAL_STATUS>"""

TEMPLATE_R = """You currently have <DEPRESSION_RISK_LEVEL> risk of depression.
You currently have <SUICIDE_RISK_LEVEL> risk of suicide.

Although you may have some symptoms and negative life events, you must stay
consistent with the specified depression severity and suicide risk. If you are
asked to fill in any scale, answer according to the condition described here."""

TEMPLATE_P = """Follow the Big Five personality instructions below. Make decisions and speak
in this style throughout the conversation, but do NOT explicitly mention
psychological trait terms.

<TRAIT_INSTRUCTIONS>"""

TRAIT_INSTRUCTIONS = {
    "openness": {
        Level.HIGH: "Be imaginative; use metaphors; embrace novelty and abstraction.",
        Level.MEDIUM: "Balance pragmatism and innovation.",
        Level.LOW: "Be traditional; focus on established facts; avoid abstract/vague ideas.",
    },
    "conscientiousness": {
        Level.HIGH: "Be highly disciplined and detail-oriented.",
        Level.MEDIUM: "Be reliable and organized, with flexibility when appropriate.",
        Level.LOW: "Be casual and unstructured; may appear procrastinating.",
    },
    "extraversion": {
        Level.HIGH: "Be enthusiastic and energetic; actively lead the conversation.",
        Level.MEDIUM: "Communicate smoothly without dominating.",
        Level.LOW: "Be reserved; answer briefly; avoid initiating topics.",
    },
    "agreeableness": {
        Level.HIGH: "Be gentle and accommodating; avoid conflicts.",
        Level.MEDIUM: "Be friendly but with boundaries.",
        Level.LOW: "Be blunt; focus on facts; be skeptical/critical.",
    },
    "neuroticism": {
        Level.HIGH: "Show anxiety and mood swings; worry easily.",
        Level.MEDIUM: "Show normal emotional reactivity and recovery.",
        Level.LOW: "Be unshakably calm and emotionally stable.",
    },
}

TEMPLATE_S = """Below are the patient's positive symptom attributes. Some positive attributes
are associated with timeline time points; when asked about these attributes,
mention the time points explicitly.

<POSITIVE_ATTRIBUTE_DESCRIPTIONS_WITH_OPTIONAL_TIMELINE>

Other symptom timeline information (if available):
<EXTRA_TIMELINE_SNIPPETS>

Below are descriptions of the patient's normal conditions. If you are asked
about any of these symptoms/attributes, you must deny them.

<NEGATIVE_ATTRIBUTE_DESCRIPTIONS>"""

TEMPLATE_A = """Assessment-style reference (style only): Use the following diagnostic interview
snippets only to imitate answering style (brief answers, vague frequency/severity,
more details only when probed).

<ASSESSMENT_DIALOGUE_SNIPPETS>"""

TEMPLATE_C = """Counseling-style reference (style only): Use the following counseling snippets
only to imitate interaction style (tone, hesitation, avoidance, emotional expression).

<COUNSELING_DIALOGUE_SNIPPETS>"""

TEMPLATE_T = """Use the Life-Event Timeline Cards below to describe changes in mood and functioning.
Rules:
1) Only use events/impacts that appear in the cards; do not invent details.
2) Include the time expression from the card when mentioning an event/impact.
3) Only claim causality if both the event and the change are supported by the cards.
4) Cite at most 1-2 cards per answer; avoid list-like narration.

<LIFE_EVENT_CARDS>"""

# depression levels follow the BDI-II bands
DEPRESSION_LEVELS = {0: "minimal", 1: "mild", 2: "moderate", 3: "severe"}
SUICIDE_LEVELS = {0: "no", 1: "low", 2: "moderate", 3: "high"}

NONE_LINE = "(none)"


def _fill(template: str, values: dict[str, str]) -> str:
    out = template
    for key, value in values.items():
        out = out.replace(f"<{key}>", value)
    left = PLACEHOLDER.findall(out)
    if left:
        raise PromptError(f"unfilled placeholders {left}")
    return out


def _risk_phrase(level: int, table: dict[int, str]) -> str:
    return table.get(level, f"level-{level}")


@dataclass(frozen=True)
class PromptOptions:
    few_shot_k: int = 2
    max_cards: int | None = None


@dataclass(frozen=True)
class PromptComponent:
    tag: str
    text: str


def _bulleted(lines: Sequence[str]) -> str:
    return "\n".join(f"- {ln}" for ln in lines) if lines else NONE_LINE


def _symptom_timepoints(
    graph: TemporalGraph | None, taxonomy: SymptomTaxonomyMap
) -> tuple[dict[str, list[str]], list[str]]:
    """Time points per assessment attribute, plus lines for symptoms outside the shared space."""
    by_attr: dict[str, list[str]] = {}
    extra: list[str] = []
    if graph is None:
        return by_attr, extra
    # oldest first so the prompt reads chronologically
    for node in sorted(graph.nodes, key=lambda n: (-n.time_norm.days_ago, n.id)):
        if node.kind is not NodeKind.SYMPTOM:
            continue
        attr = taxonomy.pairs.get(node.label)
        stamp = node.time_norm.represent_time
        if attr is None:
            extra.append(f"{stamp}: {node.label}")
        else:
            by_attr.setdefault(attr, []).append(stamp)
    return by_attr, extra


def render_component(
    tag: str,
    profile: UnifiedProfile,
    cards: Sequence[MemoryCard] = (),
    graph: TemporalGraph | None = None,
    options: PromptOptions = PromptOptions(),
    taxonomy: SymptomTaxonomyMap | None = None,
) -> PromptComponent:
    sk = profile.skeleton
    if tag == "B":
        d = sk.demographics
        text = _fill(
            TEMPLATE_B,
            {"AGE": d.age_bucket, "GENDER": d.gender, "WORK_STATUS": d.employment, "MARITAL_STATUS": d.marital},
        )
    elif tag == "R":
        text = _fill(
            TEMPLATE_R,
            {
                "DEPRESSION_RISK_LEVEL": _risk_phrase(sk.risk.depression_risk, DEPRESSION_LEVELS),
                "SUICIDE_RISK_LEVEL": _risk_phrase(sk.risk.suicide_risk, SUICIDE_LEVELS),
            },
        )
    elif tag == "P":
        lines = []
        for ol in discretize_ocean(sk.personality):
            lines.append(f"{ol.trait.capitalize()}: {TRAIT_INSTRUCTIONS[ol.trait][ol.level]}")
        text = _fill(TEMPLATE_P, {"TRAIT_INSTRUCTIONS": "\n".join(lines)})
    elif tag == "S":
        timepoints, extra = _symptom_timepoints(graph, taxonomy or SymptomTaxonomyMap.default())
        positives = []
        for attr in vocab.ASSESSMENT_ATTRIBUTES:
            if attr in sk.symptoms.positives:
                line = DESCRIPTIONS[attr][0]
                if attr in timepoints:
                    line += " (time points: " + ", ".join(timepoints[attr]) + ")"
                positives.append(line)
        negatives = [DESCRIPTIONS[a][1] for a in vocab.ASSESSMENT_ATTRIBUTES if a in sk.symptoms.negatives]
        text = _fill(
            TEMPLATE_S,
            {
                "POSITIVE_ATTRIBUTE_DESCRIPTIONS_WITH_OPTIONAL_TIMELINE": _bulleted(positives),
                "EXTRA_TIMELINE_SNIPPETS": _bulleted(extra),
                "NEGATIVE_ATTRIBUTE_DESCRIPTIONS": _bulleted(negatives),
            },
        )
    elif tag == "A":
        snippets = list(sk.assessment_snippets[: options.few_shot_k])
        text = _fill(TEMPLATE_A, {"ASSESSMENT_DIALOGUE_SNIPPETS": "\n\n".join(snippets) or NONE_LINE})
    elif tag == "C":
        snippets = list(sk.counseling_snippets[: options.few_shot_k])
        text = _fill(TEMPLATE_C, {"COUNSELING_DIALOGUE_SNIPPETS": "\n\n".join(snippets) or NONE_LINE})
    elif tag == "T":
        chosen = sorted(cards, key=lambda c: c.episode_id)  # most recent first
        if options.max_cards is not None:
            chosen = chosen[: options.max_cards]
        text = _fill(TEMPLATE_T, {"LIFE_EVENT_CARDS": "\n\n".join(c.card_text for c in chosen)})
        text = text.rstrip("\n")
    else:
        raise PromptError(f"unknown component tag {tag!r}")
    return PromptComponent(tag, text)


def assemble_prompt(
    profile: UnifiedProfile,
    cards: Sequence[MemoryCard] = (),
    enabled_tags: Iterable[str] = TAG_ORDER,
    graph: TemporalGraph | None = None,
    options: PromptOptions = PromptOptions(),
    taxonomy: SymptomTaxonomyMap | None = None,
) -> str:
    tags = parse_tags(enabled_tags)
    if not tags:
        raise PromptError("at least one prompt component must be enabled")
    blocks = [
        render_component(tag, profile, cards, graph, options, taxonomy).text for tag in TAG_ORDER if tag in tags
    ]
    return "\n\n".join(blocks) + "\n"


def blocks_present(prompt: str) -> set[str]:
    """Tags whose block marker opens a line of the prompt."""
    found = set()
    for tag, marker in BLOCK_MARKERS.items():
        if re.search(r"(?m)^" + re.escape(marker), prompt):
            found.add(tag)
    return found


# ---------------------------------------------------------------------------
# interview
# ---------------------------------------------------------------------------

STAGES = ("persona", "symptom", "timeline")


@dataclass(frozen=True)
class Question:
    stage: str
    question_id: str
    category: str
    text: str


@dataclass(frozen=True)
class InterviewScript:
    questions: tuple[Question, ...]

    def __post_init__(self) -> None:
        ids = [q.question_id for q in self.questions]
        if len(set(ids)) != len(ids):
            raise PromptError("question ids must be unique")
        ranks = []
        for q in self.questions:
            if q.stage not in STAGES:
                raise PromptError(f"question {q.question_id}: unknown stage {q.stage!r}")
            ranks.append(STAGES.index(q.stage))
        if ranks != sorted(ranks):
            raise PromptError("stages must run persona -> symptom -> timeline")

    def __len__(self) -> int:
        return len(self.questions)

    def __iter__(self):
        return iter(self.questions)

    def only(self, stages: Iterable[str] = (), categories: Iterable[str] = ()) -> InterviewScript:
        stages, categories = set(stages), set(categories)
        return InterviewScript(
            tuple(
                q
                for q in self.questions
                if (not stages or q.stage in stages) and (not categories or q.category in categories)
            )
        )

    @classmethod
    def from_records(cls, records: Iterable[dict]) -> InterviewScript:
        qs = []
        for rec in records:
            if set(rec) != {"stage", "question_id", "category", "text"}:
                raise PromptError(f"script record fields {sorted(rec)} != stage, question_id, category, text")
            qs.append(Question(rec["stage"], rec["question_id"], rec["category"], rec["text"]))
        return cls(tuple(qs))

    @classmethod
    def from_file(cls, path: str | Path) -> InterviewScript:
        return cls.from_records(json.loads(Path(path).read_text(encoding="utf-8")))

    @classmethod
    def bundled(cls) -> InterviewScript:
        raw = resources.files("deprofile_forge").joinpath("data/interview_script.json").read_text(encoding="utf-8")
        return cls.from_records(json.loads(raw))

    def to_records(self) -> list[dict]:
        return [
            {"stage": q.stage, "question_id": q.question_id, "category": q.category, "text": q.text}
            for q in self.questions
        ]


@dataclass(frozen=True)
class Turn:
    question_id: str
    stage: str
    question: str
    answer: str

    def to_record(self) -> dict:
        return {"qid": self.question_id, "stage": self.stage, "question": self.question, "answer": self.answer}


@dataclass
class DialogueTranscript:
    profile_id: str
    turns: list[Turn] = field(default_factory=list)
    backend: str = ""
    config_hash: str = ""
    timestamp: str | None = None
    status: str = "ok"
    errors: list[str] = field(default_factory=list)

    def to_record(self) -> dict:
        rec: dict[str, Any] = {
            "profile_id": self.profile_id,
            "backend": self.backend,
            "config_hash": self.config_hash,
            "turns": [t.to_record() for t in self.turns],
        }
        if self.status != "ok":
            rec["status"] = self.status
            rec["errors"] = list(self.errors)
        if self.timestamp is not None:
            rec["timestamp"] = self.timestamp
        return rec

    @classmethod
    def from_record(cls, rec: dict) -> DialogueTranscript:
        turns = [Turn(t["qid"], t["stage"], t["question"], t["answer"]) for t in rec["turns"]]
        return cls(
            rec["profile_id"],
            turns,
            rec.get("backend", ""),
            rec.get("config_hash", ""),
            rec.get("timestamp"),
            rec.get("status", "ok"),
            list(rec.get("errors", [])),
        )


def prompt_hash(prompt: str) -> str:
    return hashlib.sha256(prompt.encode("utf-8")).hexdigest()[:16]


def run_interview(
    prompt: str,
    script: InterviewScript,
    chat_client: ChatClient,
    profile_id: str = "",
    on_failure: str = "continue",
    config_hash: str = "",
) -> DialogueTranscript:
    """Ask every question in order, sending the full accumulated history each time.

    A turn whose request fails (after the client's own retries) is dropped and
    noted in ``errors``; ``on_failure="abort"`` stops the interview there.
    """
    if on_failure not in ("continue", "abort"):
        raise PromptError(f"on_failure must be 'continue' or 'abort', got {on_failure!r}")
    transcript = DialogueTranscript(profile_id, backend=getattr(chat_client, "name", ""), config_hash=config_hash)
    history: list[dict] = []
    for q in script:
        try:
            answer = chat_client.chat(prompt, list(history), q.text, question_id=q.question_id)
        except GatewayError as exc:
            transcript.errors.append(f"{q.question_id}: {exc}")
            log.warning("profile %s, question %s failed: %s", profile_id, q.question_id, exc)
            if on_failure == "abort":
                transcript.status = "aborted"
                break
            transcript.status = "partial"
            continue
        transcript.turns.append(Turn(q.question_id, q.stage, q.text, answer))
        history += [{"role": "user", "content": q.text}, {"role": "assistant", "content": answer}]
    return transcript
