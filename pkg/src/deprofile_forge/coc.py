"""Chain-of-Change memory: temporal graph plus rendered episode cards.

A candidate's symptom and life-event timelines are cut to a look-back
horizon ending at the anchor day, turned into graph nodes with relative
time labels, linked by ``temporal_precedes`` and ``persists`` edges,
bucketed into fixed windows and rendered through fixed templates.
"""

from __future__ import annotations

import json
import logging
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Iterable, Protocol, Sequence

from .corpus import ItemKind, SocialCandidate, TimelineItem

log = logging.getLogger(__name__)

TEMPORAL_PRECEDES = "temporal_precedes"
PERSISTS = "persists"
# reserved, never emitted
TRIGGERS = "triggers"
WORSENS = "worsens"
ALLEVIATES = "alleviates"
RELATIONS = (TEMPORAL_PRECEDES, PERSISTS, TRIGGERS, WORSENS, ALLEVIATES)

SYMPTOM_TRIPLE_FIELDS = ("subject", "experience", "severity_frequency")
EVENT_TRIPLE_FIELDS = ("actor", "action", "impact")


class CocError(ValueError):
    pass


class NodeKind(str, Enum):
    SYMPTOM = "Symptom"
    LIFE_EVENT = "LifeEvent"


@dataclass(frozen=True)
class CocConfig:
    anchor_day: int | None = None
    horizon: int = 90
    window: int = 7
    extractor_enabled: bool = False
    temporal_closure: bool = False
    extractor_parallelism: int = 1

    def __post_init__(self) -> None:
        if self.horizon <= 0:
            raise CocError(f"horizon must be positive, got {self.horizon}")
        if self.window <= 0:
            raise CocError(f"window must be positive, got {self.window}")
        if self.extractor_parallelism < 1:
            raise CocError("extractor_parallelism must be >= 1")

    def resolved(self, items: Iterable[TimelineItem]) -> CocConfig:
        """Fill in the anchor day from the latest timestamp when unset."""
        if self.anchor_day is not None:
            return self
        days = [it.day_index for it in items]
        return replace(self, anchor_day=max(days) if days else 0)


# ---------------------------------------------------------------------------
# relative time
# ---------------------------------------------------------------------------


def _plural(n: int, unit: str) -> str:
    return f"{n} {unit}{'' if n == 1 else 's'} ago"


def relative_label(days_ago: int) -> str:
    """Coarse relative-time phrase for a non-negative day offset."""
    if days_ago < 0:
        raise CocError(f"days_ago must be non-negative, got {days_ago}")
    if days_ago == 0:
        return "today"
    if days_ago == 1:
        return "yesterday"
    if days_ago < 7:
        return _plural(days_ago, "day")
    if days_ago < 28:
        return _plural(days_ago // 7, "week")
    if days_ago < 365:
        return _plural(max(1, days_ago // 30), "month")
    return _plural(days_ago // 365, "year")


TIME_EXPRESSION = re.compile(
    r"\b(?:(?P<today>today)|(?P<yesterday>yesterday)|(?P<n>\d+)\s+(?P<unit>day|week|month|year)s?\s+ago)\b",
    re.IGNORECASE,
)


def find_time_expressions(text: str) -> list[str]:
    return [m.group(0) for m in TIME_EXPRESSION.finditer(text)]


def days_range(expression: str) -> tuple[int, int]:
    """Inclusive days_ago interval a relative-time phrase can stand for.

    ``N days ago`` is read literally for any N, so the plain form ``14 days ago``
    resolves as well as the coarse ``2 weeks ago``.
    """
    m = TIME_EXPRESSION.fullmatch(expression.strip())
    if m is None:
        raise CocError(f"not a relative time expression: {expression!r}")
    if m.group("today"):
        return (0, 0)
    if m.group("yesterday"):
        return (1, 1)
    n = int(m.group("n"))
    unit = m.group("unit").lower()
    if unit == "day":
        return (n, n)
    if unit == "week":
        return (7 * n, 7 * n + 6)
    if unit == "month":
        lo = 28 if n == 1 else 30 * n
        return (lo, 30 * n + 29)
    return (365 * n, 365 * n + 364)


@dataclass(frozen=True)
class TimeNorm:
    days_ago: int
    relative_label: str

    @property
    def represent_time(self) -> str:
        return f"{self.relative_label} ({self.days_ago})"


def time_normalize(day: int, config: CocConfig) -> TimeNorm:
    if config.anchor_day is None:
        raise CocError("anchor_day must be resolved before normalizing")
    days_ago = config.anchor_day - day
    if days_ago < 0:
        raise CocError(f"day {day} lies after the anchor day {config.anchor_day}")
    return TimeNorm(days_ago, relative_label(days_ago))


def retain_horizon(items: Iterable[TimelineItem], config: CocConfig) -> list[TimelineItem]:
    """Items inside ``(anchor - H, anchor]``, stably sorted by day."""
    items = list(items)
    config = config.resolved(items)
    lo = config.anchor_day - config.horizon  # type: ignore[operator]
    kept = [it for it in items if lo < it.day_index <= config.anchor_day]  # type: ignore[operator]
    return sorted(kept, key=lambda it: it.day_index)


# ---------------------------------------------------------------------------
# extraction
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Extraction:
    triple: dict[str, str]
    summary: str = ""


class Extractor(Protocol):
    def extract(self, kind: str, label: str, text: str) -> Extraction | None: ...


def extract_triple(kind: NodeKind | str, label: str, text: str, extractor: Extractor | None) -> Extraction | None:
    """Optional enrichment; transport failures degrade to no triple."""
    if extractor is None:
        return None
    kind_value = kind.value if isinstance(kind, NodeKind) else kind
    try:
        result = extractor.extract(kind_value, label, text)
    except Exception as exc:  # any backend failure leaves the node label-only
        log.warning("extractor failed for %s %r: %s", kind_value, label, exc)
        return None
    if result is None:
        return None
    expected = SYMPTOM_TRIPLE_FIELDS if kind_value == NodeKind.SYMPTOM.value else EVENT_TRIPLE_FIELDS
    if set(result.triple) != set(expected):
        log.warning("extractor returned fields %s for %s, expected %s", sorted(result.triple), kind_value, expected)
        return None
    return result


# ---------------------------------------------------------------------------
# graph
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GraphNode:
    id: str
    kind: NodeKind
    label: str
    evidence: str
    time_norm: TimeNorm
    timestamp_day: int
    triple: dict[str, str] | None = None
    summary: str | None = None

    def to_record(self) -> dict:
        return {
            "id": self.id,
            "type": self.kind.value,
            "label": self.label,
            "evidence": self.evidence,
            "timestamp_day": self.timestamp_day,
            "time_norm": {"days_ago": self.time_norm.days_ago, "relative_cn": self.time_norm.relative_label},
            "triple": self.triple,
            "summary": self.summary,
        }


@dataclass(frozen=True)
class Edge:
    source: str
    target: str
    relation: str

    def to_record(self) -> dict:
        return {"from": self.source, "to": self.target, "relation": self.relation}


@dataclass
class TemporalGraph:
    nodes: list[GraphNode] = field(default_factory=list)
    edges: list[Edge] = field(default_factory=list)

    def node(self, node_id: str) -> GraphNode:
        for n in self.nodes:
            if n.id == node_id:
                return n
        raise KeyError(node_id)

    def edges_of(self, relation: str) -> list[Edge]:
        return [e for e in self.edges if e.relation == relation]

    def to_record(self) -> dict:
        return {"nodes": [n.to_record() for n in self.nodes], "edges": [e.to_record() for e in self.edges]}


_KIND_OF = {ItemKind.SYMPTOM: NodeKind.SYMPTOM, ItemKind.EVENT: NodeKind.LIFE_EVENT}


def _ordered(symptom_items: Sequence[TimelineItem], event_items: Sequence[TimelineItem]) -> list[TimelineItem]:
    # same day: symptoms first, then input order
    tagged = [(it.day_index, 0, i, it) for i, it in enumerate(symptom_items)]
    tagged += [(it.day_index, 1, i, it) for i, it in enumerate(event_items)]
    tagged.sort(key=lambda t: t[:3])
    return [t[3] for t in tagged]


def build_nodes(
    symptom_items: Sequence[TimelineItem],
    event_items: Sequence[TimelineItem],
    config: CocConfig,
    extractor: Extractor | None = None,
) -> list[GraphNode]:
    ordered = _ordered(symptom_items, event_items)
    config = config.resolved(ordered)
    use_extractor = extractor if config.extractor_enabled else None

    def enrich(item: TimelineItem) -> Extraction | None:
        return extract_triple(_KIND_OF[item.kind], item.label, item.text, use_extractor)

    if use_extractor is not None and config.extractor_parallelism > 1 and len(ordered) > 1:
        with ThreadPoolExecutor(max_workers=config.extractor_parallelism) as pool:
            extractions = list(pool.map(enrich, ordered))  # map keeps input order
    else:
        extractions = [enrich(it) for it in ordered]

    nodes = []
    for seq, (item, ext) in enumerate(zip(ordered, extractions)):
        nodes.append(
            GraphNode(
                id=f"n{seq:03d}",
                kind=_KIND_OF[item.kind],
                label=item.label,
                evidence=item.text,
                time_norm=time_normalize(item.day_index, config),
                timestamp_day=item.day_index,
                triple=dict(ext.triple) if ext else None,
                summary=(ext.summary or None) if ext else None,
            )
        )
    return nodes


def link_nodes(nodes: Sequence[GraphNode], temporal_closure: bool = False) -> list[Edge]:
    """Edges over nodes already in (day, sequence) order."""
    edges = []
    if temporal_closure:
        for i, v in enumerate(nodes):
            for w in nodes[i + 1 :]:
                edges.append(Edge(v.id, w.id, TEMPORAL_PRECEDES))
    else:
        for v, w in zip(nodes, nodes[1:]):
            edges.append(Edge(v.id, w.id, TEMPORAL_PRECEDES))
    last_by_label: dict[str, GraphNode] = {}
    for node in nodes:
        if node.kind is not NodeKind.SYMPTOM:
            continue
        prev = last_by_label.get(node.label)
        if prev is not None:
            edges.append(Edge(prev.id, node.id, PERSISTS))
        last_by_label[node.label] = node
    return edges


def build_graph(
    symptom_items: Sequence[TimelineItem],
    event_items: Sequence[TimelineItem],
    config: CocConfig,
    extractor: Extractor | None = None,
) -> TemporalGraph:
    nodes = build_nodes(symptom_items, event_items, config, extractor)
    return TemporalGraph(nodes, link_nodes(nodes, config.temporal_closure))


# ---------------------------------------------------------------------------
# episodes and cards
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Episode:
    episode_id: int
    members: tuple[str, ...]
    time_range: tuple[int, int]


def aggregate_episodes(graph: TemporalGraph, config: CocConfig) -> list[Episode]:
    buckets: dict[int, list[GraphNode]] = {}
    for node in graph.nodes:
        buckets.setdefault(node.time_norm.days_ago // config.window, []).append(node)
    episodes = []
    for eid in sorted(buckets):
        members = buckets[eid]
        offsets = [n.time_norm.days_ago for n in members]
        episodes.append(Episode(eid, tuple(n.id for n in members), (min(offsets), max(offsets))))
    return episodes


_REPRESENT = re.compile(r"^represent_time: .+ \((\d+)\)$", re.MULTILINE)


@dataclass(frozen=True)
class MemoryCard:
    episode_id: int
    time_range: str
    card_text: str

    @property
    def represent_days_ago(self) -> int:
        m = _REPRESENT.search(self.card_text)
        if m is None:
            raise CocError(f"card {self.episode_id} has no represent_time line")
        return int(m.group(1))

    def to_record(self) -> dict:
        return {"episode_id": self.episode_id, "time_range": self.time_range, "card_cn": self.card_text}

    @classmethod
    def from_record(cls, rec: dict) -> MemoryCard:
        if set(rec) != {"episode_id", "time_range", "card_cn"}:
            raise CocError(f"card record fields {sorted(rec)} != episode_id, time_range, card_cn")
        return cls(rec["episode_id"], rec["time_range"], rec["card_cn"])


def format_time_range(lo: int, hi: int) -> str:
    return f"{lo} days ago" if lo == hi else f"{lo}-{hi} days ago"


def _node_line(node: GraphNode) -> str:
    line = f"- {node.time_norm.represent_time}: {node.label}"
    if node.triple:
        fields = SYMPTOM_TRIPLE_FIELDS if node.kind is NodeKind.SYMPTOM else EVENT_TRIPLE_FIELDS
        line += " [" + "; ".join(f"{f}: {node.triple[f]}" for f in fields) + "]"
    if node.summary:
        line += f" ({node.summary})"
    return line


def render_card(episode: Episode, graph: TemporalGraph) -> MemoryCard:
    members = [graph.node(nid) for nid in episode.members]
    # most recent member; first in node order on ties
    rep = min(members, key=lambda n: n.time_norm.days_ago)
    lines = [
        f"Episode {episode.episode_id}",
        f"time_range: {format_time_range(*episode.time_range)}",
        f"represent_time: {rep.time_norm.represent_time}",
    ]
    symptoms = [n for n in members if n.kind is NodeKind.SYMPTOM]
    events = [n for n in members if n.kind is NodeKind.LIFE_EVENT]
    if events:
        lines.append("Events:")
        lines.extend(_node_line(n) for n in events)
    if symptoms:
        lines.append("Symptoms:")
        lines.extend(_node_line(n) for n in symptoms)
    return MemoryCard(episode.episode_id, format_time_range(*episode.time_range), "\n".join(lines))


def render_cards(episodes: Sequence[Episode], graph: TemporalGraph, config: CocConfig | None = None) -> list[MemoryCard]:
    return [render_card(ep, graph) for ep in episodes if ep.members]


# ---------------------------------------------------------------------------
# composition
# ---------------------------------------------------------------------------


@dataclass
class Memory:
    profile_id: str
    user_id: str
    config: CocConfig
    graph: TemporalGraph
    cards: list[MemoryCard]

    def to_record(self) -> dict:
        return {
            "profile_id": self.profile_id,
            "user_id": self.user_id,
            "anchor_day": self.config.anchor_day,
            "H": self.config.horizon,
            "W": self.config.window,
            "graph": self.graph.to_record(),
            "cards": [c.to_record() for c in self.cards],
        }

    def dumps(self) -> str:
        return json.dumps(self.to_record(), ensure_ascii=False, indent=2) + "\n"


def load_cards(record: dict) -> list[MemoryCard]:
    return [MemoryCard.from_record(c) for c in record.get("cards", [])]


def graph_from_record(record: dict) -> TemporalGraph:
    try:
        nodes = [
            GraphNode(
                id=n["id"],
                kind=NodeKind(n["type"]),
                label=n["label"],
                evidence=n["evidence"],
                time_norm=TimeNorm(n["time_norm"]["days_ago"], n["time_norm"]["relative_cn"]),
                timestamp_day=n["timestamp_day"],
                triple=n["triple"],
                summary=n["summary"],
            )
            for n in record["nodes"]
        ]
        edges = [Edge(e["from"], e["to"], e["relation"]) for e in record["edges"]]
    except (KeyError, TypeError, ValueError) as exc:
        raise CocError(f"malformed graph record: {exc!r}") from None
    return TemporalGraph(nodes, edges)


def memory_from_record(record: dict) -> Memory:
    try:
        config = CocConfig(anchor_day=record["anchor_day"], horizon=record["H"], window=record["W"])
        return Memory(
            record["profile_id"], record["user_id"], config, graph_from_record(record["graph"]), load_cards(record)
        )
    except KeyError as exc:
        raise CocError(f"memory record is missing {exc}") from None


def build_memory(
    candidate: SocialCandidate,
    config: CocConfig | None = None,
    extractor: Extractor | None = None,
    profile_id: str = "",
) -> Memory:
    config = (config or CocConfig()).resolved([*candidate.symptom_timeline, *candidate.event_timeline])
    symptoms = retain_horizon(candidate.symptom_timeline, config)
    events = retain_horizon(candidate.event_timeline, config)
    graph = build_graph(symptoms, events, config, extractor)
    cards = render_cards(aggregate_episodes(graph, config), graph, config)
    return Memory(profile_id, candidate.id, config, graph, cards)
