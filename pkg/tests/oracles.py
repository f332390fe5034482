"""Independent reference implementations used as test oracles.

Written from the formulas directly, over plain dicts and lists, without
importing the package's scoring code.
"""

import json
import math
import re

# social label -> assessment attribute, transcribed by hand from the published pairing list
PAIRS = {
    "Decreased Energy Tiredness Fatigue": "mental state-fatigue",
    "Depressed Mood": "emotion-depressed mood",
    "Inattention": "mental state-inattention",
    "Indecisiveness": "mental state-indecisiveness",
    "Suicidal Ideas": "suicide-suicidal ideation",
    "Worthlessness And Guilty": "suicide-low self-worth",
    "Diminished Emotional Expression": "interest-emotional blunting",
    "Drastical Shift In Mood And Energy": "screening-mania",
    "Loss Of Interest Or Motivation": "interest-loss of interest",
    "Pessimism": "suicide-hopelessness",
    "Poor Memory": "mental state-memory decline",
    "Sleep Disturbance": "sleep-sleep disturbance",
    "Hyperactivity Agitation": "somatic-psychomotor agitation",
    "Catatonic Behavior": "somatic-psychomotor retardation",
    "Fear About Social Situations": "social functioning-avoid social contact",
    "Weight And Appetite Change": "appetite-appetite disturbance",
    "Fear Of Gaining Weight": "appetite-significant weight change",
}

OCEAN = ("o", "c", "e", "a", "n")

TIME_POINT = re.compile(r"(today|yesterday|\d+ (?:day|week|month|year)s? ago) \((\d+)\)")


def read_jsonl(path):
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


def stage1(counseling, assessment):
    """Raw-dict skeletons for every aligned, conflict-free pair (exact demographics)."""
    out = []
    for c in counseling:
        for a in assessment:
            if c["demographics"] != a["demographics"]:
                continue
            clash = any(
                {c["symptoms"][k], a["symptoms"][k]} == {"positive", "negative"} for k in c["symptoms"]
            )
            if clash:
                continue
            merged = {}
            for k in c["symptoms"]:
                merged[k] = a["symptoms"][k] if c["symptoms"][k] == "not_mentioned" else c["symptoms"][k]
            out.append(
                {
                    "id": c["id"] + "+" + a["id"],
                    "demographics": c["demographics"],
                    "personality": c["personality"],
                    "symptoms": merged,
                }
            )
    return out


def cosine(u, v):
    dot = sum(x * y for x, y in zip(u, v))
    return dot / (math.sqrt(sum(x * x for x in u)) * math.sqrt(sum(y * y for y in v)))


def expand(skeleton, candidates, t_symp=0.8, t_pers=0.8):
    """[(candidate_id, sim_symp, sim_pers)] in rank order."""
    positives = {k for k, v in skeleton["symptoms"].items() if v == "positive"}
    negatives = {k for k, v in skeleton["symptoms"].items() if v == "negative"}
    sv = [skeleton["personality"][k] for k in OCEAN]
    rows = []
    for cand in candidates:
        if cand["demographics"] != skeleton["demographics"]:
            continue
        projected = {PAIRS[s] for s in cand["symptom_set"] if s in PAIRS}
        if not projected or projected & negatives:
            continue
        symp = len(positives & projected) / len(projected)
        pers = cosine(sv, [cand["personality"][k] for k in OCEAN])
        if symp > t_symp and pers > t_pers:
            rows.append((cand["id"], symp, pers))
    rows.sort(key=lambda r: (-(r[1] + r[2]), -r[1], r[0]))
    return rows


def mean_vector(vectors):
    n = len(vectors)
    return [sum(v[i] for v in vectors) / n for i in range(len(vectors[0]))]


def realism(generated, real):
    per = {}
    for pid in generated:
        per[pid] = cosine(mean_vector(generated[pid]), mean_vector(real[pid]))
    return per, sum(per.values()) / len(per)


def div_inter(vectors):
    centroid = mean_vector(vectors)
    return sum(1.0 - cosine(v, centroid) for v in vectors) / len(vectors)


def memory_violations(symptom_items, event_items, anchor, horizon, window, memory):
    """Invariant violations of a built memory against its raw input (list of strings)."""
    bad = []
    graph = memory.graph
    nodes = {n.id: n for n in graph.nodes}
    expected_days = sorted(
        it.day_index for it in [*symptom_items, *event_items] if anchor - horizon < it.day_index <= anchor
    )
    if sorted(n.timestamp_day for n in graph.nodes) != expected_days:
        bad.append("horizon: retained node days differ from interval membership")
    for n in graph.nodes:
        d = n.time_norm.days_ago
        if not 0 <= d < horizon or d != anchor - n.timestamp_day:
            bad.append(f"horizon: node {n.id} days_ago {d}")

    order = [n.id for n in graph.nodes]
    position = {nid: i for i, nid in enumerate(order)}
    succ = {nid: [] for nid in order}
    for e in graph.edges:
        if e.relation == "temporal_precedes":
            a, b = nodes[e.source], nodes[e.target]
            if not (a.timestamp_day < b.timestamp_day or (a.timestamp_day == b.timestamp_day and position[a.id] < position[b.id])):
                bad.append(f"temporal: {a.id}->{b.id} goes backwards")
            succ[a.id].append(b.id)
        elif e.relation == "persists":
            a, b = nodes[e.source], nodes[e.target]
            if a.kind.value != "Symptom" or b.kind.value != "Symptom" or a.label != b.label:
                bad.append(f"persists: {a.id}->{b.id} joins different labels or non-symptoms")
            between = [
                n for n in graph.nodes
                if n.kind.value == "Symptom" and n.label == a.label and position[a.id] < position[n.id] < position[b.id]
            ]
            if between or position[a.id] >= position[b.id]:
                bad.append(f"persists: {a.id}->{b.id} skips an occurrence")
        else:
            bad.append(f"unexpected relation {e.relation}")
    # every consecutive same-label pair must be linked
    last = {}
    persists = {(e.source, e.target) for e in graph.edges if e.relation == "persists"}
    for nid in order:
        n = nodes[nid]
        if n.kind.value != "Symptom":
            continue
        if n.label in last and (last[n.label], nid) not in persists:
            bad.append(f"persists: missing {last[n.label]}->{nid}")
        last[n.label] = nid

    # Kahn's algorithm over temporal edges
    indeg = {nid: 0 for nid in order}
    for a in succ:
        for b in succ[a]:
            indeg[b] += 1
    queue = [nid for nid, k in indeg.items() if k == 0]
    visited = 0
    while queue:
        nid = queue.pop()
        visited += 1
        for b in succ[nid]:
            indeg[b] -= 1
            if indeg[b] == 0:
                queue.append(b)
    if visited != len(order):
        bad.append("temporal: cycle")

    # episodes partition the nodes with id = floor(days_ago / W)
    from deprofile_forge.coc import CocConfig, aggregate_episodes

    seen = {n.id: 0 for n in graph.nodes}
    episodes = aggregate_episodes(graph, CocConfig(anchor_day=anchor, horizon=horizon, window=window))
    for ep in episodes:
        for nid in ep.members:
            seen[nid] = seen.get(nid, 0) + 1
            if nodes[nid].time_norm.days_ago // window != ep.episode_id:
                bad.append(f"episode: {nid} in {ep.episode_id}")
    if any(k != 1 for k in seen.values()):
        bad.append("episode: not a partition")
    if [ep.episode_id for ep in episodes] != sorted({n.time_norm.days_ago // window for n in graph.nodes}):
        bad.append("episode: ids not ascending or buckets missing")
    if [c.episode_id for c in memory.cards] != [ep.episode_id for ep in episodes]:
        bad.append("cards: one card per non-empty episode expected")

    # every "label (N)" time point in a card belongs to a node of that episode
    members = {ep.episode_id: {nodes[nid].time_norm for nid in ep.members} for ep in episodes}
    for card in memory.cards:
        stamps = {(tn.relative_label, tn.days_ago) for tn in members.get(card.episode_id, ())}
        for label, days in TIME_POINT.findall(card.card_text):
            if (label, int(days)) not in stamps:
                bad.append(f"card {card.episode_id}: time point {label} ({days}) not traceable")
    return bad
