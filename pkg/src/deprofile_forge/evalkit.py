"""Automatic dialogue metrics, LLM judging and citation auditing.

Realism is the mean, over patients, of the cosine between the mean
embedding of the simulator's answers and the mean embedding of the
patient's real utterances. Inter-patient diversity is, per question, the
mean of ``1 - cos(answer, centroid of answers)``, averaged over questions.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from .coc import MemoryCard, days_range, find_time_expressions
from .gateway import ChatClient, GatewayError
from .promptkit import DialogueTranscript

log = logging.getLogger(__name__)

# relative to the mean answer norm
ZERO_CENTROID_RTOL = 1e-12


class MetricError(ValueError):
    pass


def _as_matrix(vectors: Sequence[Any]) -> np.ndarray:
    rows = [np.asarray(getattr(v, "vector", v), dtype=float) for v in vectors]
    if not rows:
        raise MetricError("no vectors")
    dims = {r.shape for r in rows}
    if len(dims) != 1 or rows[0].ndim != 1:
        raise MetricError(f"inconsistent vector shapes {sorted(dims)}")
    return np.vstack(rows)


def mean_embedding(vectors: Sequence[Any]) -> np.ndarray:
    return _as_matrix(vectors).mean(axis=0)


def cosine(u: np.ndarray, v: np.ndarray) -> float:
    nu, nv = float(np.linalg.norm(u)), float(np.linalg.norm(v))
    if nu == 0.0 or nv == 0.0:
        raise MetricError("cosine undefined for a zero vector")
    return float(np.dot(u, v) / (nu * nv))


@dataclass
class RealismReport:
    per_patient: dict[str, float]
    mean: float

    def to_record(self) -> dict:
        return {"per_patient": dict(sorted(self.per_patient.items())), "mean": self.mean}


def realism(
    generated_per_patient: Mapping[str, Sequence[Any]], real_per_patient: Mapping[str, Sequence[Any]]
) -> RealismReport:
    if set(generated_per_patient) != set(real_per_patient):
        missing = set(generated_per_patient) ^ set(real_per_patient)
        raise MetricError(f"patient keys differ between generated and real: {sorted(missing)}")
    if not generated_per_patient:
        raise MetricError("realism needs at least one patient")
    per = {}
    for pid in sorted(generated_per_patient):
        g = mean_embedding(generated_per_patient[pid])
        r = mean_embedding(real_per_patient[pid])
        try:
            per[pid] = cosine(g, r)
        except MetricError:
            raise MetricError(f"patient {pid}: zero mean embedding") from None
    return RealismReport(per, math.fsum(per.values()) / len(per))


@dataclass
class DiversityReport:
    per_question: dict[str, float]
    overall: float | None
    skipped: list[str] = field(default_factory=list)
    single_answer: list[str] = field(default_factory=list)

    def to_record(self) -> dict:
        return {
            "per_question": dict(sorted(self.per_question.items())),
            "overall": self.overall,
            "skipped": sorted(self.skipped),
            "single_answer": sorted(self.single_answer),
        }


def div_inter(vectors: Sequence[Any]) -> float | None:
    """Mean one-minus-cosine to the centroid; None when the centroid vanishes."""
    z = _as_matrix(vectors)
    centroid = z.mean(axis=0)
    scale = float(np.mean(np.linalg.norm(z, axis=1)))
    if float(np.linalg.norm(centroid)) <= ZERO_CENTROID_RTOL * scale:
        return None
    return math.fsum(1.0 - cosine(row, centroid) for row in z) / len(z)


def diversity_qcentroid(answers_by_question: Mapping[str, Sequence[Any]]) -> DiversityReport:
    """Questions with a zero centroid are skipped; the overall mean uses questions with >= 2 answers."""
    per: dict[str, float] = {}
    skipped, single = [], []
    for qid in sorted(answers_by_question):
        answers = answers_by_question[qid]
        if len(answers) == 0:
            raise MetricError(f"question {qid} has no answers")
        value = div_inter(answers)
        if value is None:
            skipped.append(qid)
            continue
        per[qid] = value
        if len(answers) < 2:
            single.append(qid)
    eligible = [v for q, v in per.items() if q not in single]
    overall = math.fsum(eligible) / len(eligible) if eligible else None
    return DiversityReport(per, overall, skipped, single)


# ---------------------------------------------------------------------------
# judge
# ---------------------------------------------------------------------------

JUDGE_DIMENSIONS = ("persona_faithfulness", "event_richness", "symptom_consistency")

VERDICT_SCHEMA = {
    "type": "object",
    "required": [*JUDGE_DIMENSIONS, "reasons", "extracted_events"],
    "properties": {
        **{d: {"type": "integer", "minimum": 1, "maximum": 5} for d in JUDGE_DIMENSIONS},
        "reasons": {
            "type": "object",
            "properties": {d: {"type": "string"} for d in JUDGE_DIMENSIONS},
        },
        "evidence": {"type": "array", "items": {"type": "string"}},
        "extracted_events": {"type": "array", "items": {"type": "string"}},
    },
}

JUDGE_TEMPLATE = """You are a clinical psychology expert and an expert evaluator for role-playing dialogue systems. Your task is to evaluate the quality of the patient's responses in the dialogue based on (i) the patient profile and constraints, and (ii) the exact System Prompt that the patient model actually saw when generating its responses.

[1. System Prompt seen by the patient model during generation (IMPORTANT): includes patient profile and constraints]

{patient_prompt_text}

[2. Dialogue context (multi-turn; question = clinician/doctor, answer = patient)]

{dialogue}

[3. Rating dimensions (each must be an integer from 1 to 5)]

A) persona_faithfulness: Whether the responses are consistent with the demographics and Big Five personality traits (no contradictions; consistent speaking style).
B) event richness and temporal diversity: Whether the dialogue mentions life events more concretely, with richer categories and more diverse time spans. Mentioning explicit time points should receive higher scores.
C) symptom_consistency: Whether the symptoms expressed in the dialogue are consistent with the profile's positive/negative symptoms, without contradictions or adding major symptoms not supported by the profile.

[4. Output requirements]

- Output STRICT JSON only. No Markdown. No extra text.
- Provide a score for each dimension, plus brief reasons and evidence points.
- Also extract a list of "explicitly mentioned life events" in the dialogue as extracted_events (output an empty array if none).

The required JSON schema is:

{schema_json}"""

REASK = "Your previous reply was rejected: {error}. Reply again with STRICT JSON only, matching the schema exactly."


class JudgeError(RuntimeError):
    pass


@dataclass(frozen=True)
class JudgeVerdict:
    persona_faithfulness: int
    event_richness: int
    symptom_consistency: int
    reasons: dict[str, str]
    extracted_events: tuple[str, ...]
    evidence: tuple[str, ...] = ()

    def to_record(self) -> dict:
        return {
            "persona_faithfulness": self.persona_faithfulness,
            "event_richness": self.event_richness,
            "symptom_consistency": self.symptom_consistency,
            "reasons": dict(self.reasons),
            "evidence": list(self.evidence),
            "extracted_events": list(self.extracted_events),
        }


def format_dialogue(transcript: DialogueTranscript) -> str:
    return "\n".join(f"question: {t.question}\nanswer: {t.answer}" for t in transcript.turns)


def build_judge_prompt(transcript: DialogueTranscript, patient_prompt: str) -> str:
    return JUDGE_TEMPLATE.format(
        patient_prompt_text=patient_prompt.rstrip("\n"),
        dialogue=format_dialogue(transcript),
        schema_json=json.dumps(VERDICT_SCHEMA, sort_keys=True),
    )


def parse_verdict(reply: str) -> JudgeVerdict:
    """Validate a judge reply; raises ValueError describing the first problem."""
    try:
        data = json.loads(reply)
    except json.JSONDecodeError as exc:
        raise ValueError(f"not strict JSON ({exc.msg})") from None
    if not isinstance(data, dict):
        raise ValueError("top level must be an object")
    scores = {}
    for dim in JUDGE_DIMENSIONS:
        value = data.get(dim)
        if isinstance(value, bool) or not isinstance(value, int):
            raise ValueError(f"{dim} must be an integer, got {value!r}")
        if not 1 <= value <= 5:
            raise ValueError(f"{dim}={value} outside 1..5")
        scores[dim] = value
    if "extracted_events" not in data:
        raise ValueError("extracted_events missing (use [] when there are none)")
    events = data["extracted_events"]
    if not isinstance(events, list) or not all(isinstance(e, str) for e in events):
        raise ValueError("extracted_events must be a list of strings")
    reasons = data.get("reasons", {})
    if not isinstance(reasons, dict):
        raise ValueError("reasons must be an object")
    evidence = data.get("evidence", [])
    if not isinstance(evidence, list):
        raise ValueError("evidence must be a list")
    return JudgeVerdict(
        **scores,
        reasons={str(k): str(v) for k, v in reasons.items()},
        extracted_events=tuple(events),
        evidence=tuple(str(e) for e in evidence),
    )


def judge(
    transcript: DialogueTranscript, patient_prompt: str, judge_client: ChatClient, max_reasks: int = 1
) -> JudgeVerdict:
    """Ask the judge once, re-ask up to ``max_reasks`` times on an invalid reply."""
    prompt = build_judge_prompt(transcript, patient_prompt)
    history: list[dict] = []
    user = prompt
    error = ""
    for attempt in range(max_reasks + 1):
        try:
            reply = judge_client.chat("", history, user)
        except GatewayError as exc:
            raise JudgeError(f"judge backend failed: {exc}") from exc
        try:
            return parse_verdict(reply)
        except ValueError as exc:
            error = str(exc)
            log.warning("judge reply rejected for %s (attempt %d): %s", transcript.profile_id, attempt + 1, error)
            history += [{"role": "user", "content": user}, {"role": "assistant", "content": reply}]
            user = REASK.format(error=error)
    raise JudgeError(f"invalid verdict after {max_reasks + 1} attempts: {error}")


# ---------------------------------------------------------------------------
# citation audit
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Mention:
    question_id: str
    expression: str
    matched_episode: int | None


@dataclass
class CitationAudit:
    profile_id: str
    mentions: list[Mention] = field(default_factory=list)

    @property
    def total(self) -> int:
        return len(self.mentions)

    @property
    def matched(self) -> int:
        return sum(m.matched_episode is not None for m in self.mentions)

    @property
    def unmatched(self) -> int:
        return self.total - self.matched

    def to_record(self) -> dict:
        return {
            "total": self.total,
            "matched": self.matched,
            "unmatched": self.unmatched,
            "mentions": [
                {"qid": m.question_id, "expression": m.expression, "episode_id": m.matched_episode}
                for m in self.mentions
            ],
        }


def audit_citations(transcript: DialogueTranscript, cards: Sequence[MemoryCard]) -> CitationAudit:
    """Match each relative-time phrase in the answers against the cards' representative times."""
    reps = [(c.episode_id, c.represent_days_ago) for c in cards]
    audit = CitationAudit(transcript.profile_id)
    for turn in transcript.turns:
        for expr in find_time_expressions(turn.answer):
            lo, hi = days_range(expr)
            hit = next((eid for eid, d in reps if lo <= d <= hi), None)
            audit.mentions.append(Mention(turn.question_id, expr, hit))
    return audit


# ---------------------------------------------------------------------------
# report
# ---------------------------------------------------------------------------

TABLE_COLUMNS = ("variant", "realism", "diversity_qcentroid", "event_richness", "persona_faithfulness", "symptom_consistency")


@dataclass
class EvalReport:
    run_id: str
    config_hash: str
    variant: str = ""
    realism: RealismReport | None = None
    diversity: DiversityReport | None = None
    verdicts: dict[str, JudgeVerdict] = field(default_factory=dict)
    judge_failures: dict[str, str] = field(default_factory=dict)
    audits: dict[str, CitationAudit] = field(default_factory=dict)

    def geval_means(self) -> dict[str, float | None]:
        out: dict[str, float | None] = {}
        for dim in JUDGE_DIMENSIONS:
            vals = [getattr(v, dim) for v in self.verdicts.values()]
            out[dim] = math.fsum(vals) / len(vals) if vals else None
        return out

    def to_record(self) -> dict:
        rec: dict[str, Any] = {"run_id": self.run_id, "config_hash": self.config_hash, "variant": self.variant}
        rec["realism"] = self.realism.to_record() if self.realism else None
        rec["diversity"] = self.diversity.to_record() if self.diversity else None
        rec["geval"] = (
            {
                "per_transcript": {k: self.verdicts[k].to_record() for k in sorted(self.verdicts)},
                "means": self.geval_means(),
                "failures": dict(sorted(self.judge_failures.items())),
            }
            if self.verdicts or self.judge_failures
            else None
        )
        if self.audits:
            totals = {
                key: sum(getattr(a, key) for a in self.audits.values()) for key in ("total", "matched", "unmatched")
            }
            rec["citation_audit"] = {
                "per_transcript": {k: self.audits[k].to_record() for k in sorted(self.audits)},
                **totals,
            }
        else:
            rec["citation_audit"] = None
        return rec

    def table_row(self) -> dict[str, float | str | None]:
        means = self.geval_means()
        return {
            "variant": self.variant or self.run_id,
            "realism": self.realism.mean if self.realism else None,
            "diversity_qcentroid": self.diversity.overall if self.diversity else None,
            "event_richness": means["event_richness"],
            "persona_faithfulness": means["persona_faithfulness"],
            "symptom_consistency": means["symptom_consistency"],
        }


def _cell(value: Any) -> str:
    if value is None:
        return "-"
    if isinstance(value, float):
        return f"{value:.4f}"
    return str(value)


def render_table(rows: Iterable[Mapping[str, Any]], delimiter: str = "\t") -> str:
    lines = [delimiter.join(TABLE_COLUMNS)]
    lines += [delimiter.join(_cell(row.get(c)) for c in TABLE_COLUMNS) for row in rows]
    return "\n".join(lines) + "\n"


def render_markdown(rows: Iterable[Mapping[str, Any]]) -> str:
    headers = ("Variant", "Realism", "Diversity (Q-Centroid)", "Event Richness", "Persona", "Symptom")
    lines = ["| " + " | ".join(headers) + " |", "|" + "---|" * len(headers)]
    for row in rows:
        lines.append("| " + " | ".join(_cell(row.get(c)) for c in TABLE_COLUMNS) + " |")
    return "\n".join(lines) + "\n"


def emit_report(reports: Sequence[EvalReport]) -> tuple[str, str]:
    """Machine-readable JSON plus a delimited summary table (one row per report)."""
    if not reports:
        raise MetricError("emit_report needs at least one report")
    if not any(r.realism or r.diversity or r.verdicts or r.audits for r in reports):
        raise MetricError("no metric has been computed")
    payload = reports[0].to_record() if len(reports) == 1 else {"reports": [r.to_record() for r in reports]}
    body = json.dumps(payload, indent=2, sort_keys=True, ensure_ascii=False) + "\n"
    return body, render_table(r.table_row() for r in reports)
