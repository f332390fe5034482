#!/usr/bin/env python3
"""Regenerate the bundled synthetic fixture corpus.

Writes counseling/assessment source records (stage 1 pairs them into 12
skeletons) and 40 social-media candidates with hand-shaped symptom sets:
exact subsets, a 4-of-5 boundary case, clinical conflicts, social-only
sets, personality mismatches and demographic near-misses.

    python tools/make_fixture.py src/deprofile_forge/data/fixture
"""

import json
import random
import sys
from pathlib import Path

from deprofile_forge import vocab

SEED = 20240611
rng = random.Random(SEED)

PAIRED = list(vocab.PAIRED_SYMPTOMS)  # social labels with an assessment counterpart
SOCIAL_ONLY = list(vocab.SOCIAL_ONLY_SYMPTOMS)
ATTR_OF = vocab.PAIRED_SYMPTOMS
# one marker attribute per member slot within a demographic group; see source_records
MARKERS = ["sleep-light sleep", "sleep-frequent dreaming", "appetite-binge eating"]
EVENT_LABELS = [
    "work_pressure", "job_loss", "exam", "breakup", "family_conflict", "bereavement",
    "illness", "moving", "financial_trouble", "social_isolation", "new_relationship",
]

GROUPS = [
    {"age": "18-25", "gender": "M", "employment": "employed", "marital": "single"},
    {"age": "18-25", "gender": "F", "employment": "student", "marital": "single"},
    {"age": "26-35", "gender": "F", "employment": "employed", "marital": "married"},
    {"age": "36-50", "gender": "M", "employment": "unemployed", "marital": "divorced"},
]

PERSONAS = [
    {"o": 5, "c": 4, "e": 3, "a": 6, "n": 6},
    {"o": 6, "c": 3, "e": 2, "a": 5, "n": 7},
    {"o": 3, "c": 6, "e": 5, "a": 4, "n": 5},
    {"o": 4, "c": 5, "e": 6, "a": 3, "n": 4},
]
FAR_PERSONA = {"o": 7, "c": 1, "e": 1, "a": 1, "n": 1}

SYMPTOM_POSTS = {
    "Decreased Energy Tiredness Fatigue": "so tired today, could barely get out of bed",
    "Depressed Mood": "everything feels grey, i can't shake this sadness",
    "Inattention": "read the same page five times and nothing went in",
    "Indecisiveness": "stood in the shop for twenty minutes unable to pick anything",
    "Suicidal Ideas": "some nights i wonder if anyone would notice if i was gone",
    "Worthlessness And Guilty": "i feel like a burden to everyone around me",
    "Diminished Emotional Expression": "feel numb, like watching my life through glass",
    "Drastical Shift In Mood And Energy": "up all night with a hundred ideas, crashed by noon",
    "Loss Of Interest Or Motivation": "didn't even open my guitar case this week",
    "Pessimism": "nothing is going to get better, why bother",
    "Poor Memory": "forgot my own appointment again",
    "Sleep Disturbance": "awake at 3am again, staring at the ceiling",
    "Hyperactivity Agitation": "can't sit still, pacing around my room",
    "Catatonic Behavior": "sat on the couch for hours without moving",
    "Fear About Social Situations": "cancelled on my friends again, can't face people",
    "Weight And Appetite Change": "skipped meals all day, food tastes like nothing",
    "Fear Of Gaining Weight": "checked the scale four times today",
    "Anxious Mood": "heart racing for no reason all afternoon",
    "Panic Fear": "had a panic attack on the bus",
    "Anger Irritability": "snapped at my roommate over nothing",
    "Gastrointestinal Symptoms": "stomach in knots all day",
    "Impulsivity": "spent half my rent on something i don't need",
}
EVENT_POSTS = {
    "work_pressure": "boss dumped another deadline on me",
    "job_loss": "got laid off this morning",
    "exam": "finals start next week and i'm not ready",
    "breakup": "we broke up last night",
    "family_conflict": "huge fight with my parents at dinner",
    "bereavement": "grandma passed away",
    "illness": "diagnosed with a stomach ulcer",
    "moving": "moved into a new flat across town",
    "financial_trouble": "can't cover rent this month",
    "social_isolation": "haven't talked to anyone in days",
    "new_relationship": "went on a second date, it went well",
}

ASSESS_QA = [
    ("How have you been sleeping?", "Not well. I wake up a lot, maybe three or four times."),
    ("How is your appetite?", "I don't really feel like eating. Sometimes I skip lunch."),
    ("Do you still enjoy your hobbies?", "Not really. I used to draw, now I can't be bothered."),
    ("How is your mood most days?", "Low, mostly. It's worse in the mornings."),
    ("Do you feel tired during the day?", "All the time, even when I've done nothing."),
]
COUNSEL_QA = [
    ("What brings you here today?", "I... I don't know. Things have just been heavy lately."),
    ("How do your friends react when you pull back?", "They stopped asking. I guess that's my fault."),
    ("What would you like to change?", "I want to feel normal again. I don't even know what that means."),
    ("How was your week?", "Same as always. Work, home, bed. Nothing really happens."),
]


def checklist(positives, negatives):
    labels = {a: "not_mentioned" for a in vocab.ASSESSMENT_ATTRIBUTES}
    for a in positives:
        labels[a] = "positive"
    for a in negatives:
        labels[a] = "negative"
    return labels


def snippet(qa, lead, reply_tag):
    q, a = qa
    return f"{lead}: {q}\n{reply_tag}: {a}"


def skeleton_specs():
    """12 clinical profiles, 3 per demographic group."""
    specs = []
    for i in range(12):
        group = i % 4
        shared_pos = rng.sample(PAIRED, 5)
        rest = [s for s in PAIRED if s not in shared_pos]
        shared_neg = rng.sample(rest, 3)
        free = [a for a in vocab.ASSESSMENT_ATTRIBUTES if a not in ATTR_OF.values() and a not in MARKERS]
        extra_pos = rng.sample(free, 3)
        specs.append(
            {
                "idx": i,
                "group": group,
                "persona": PERSONAS[group],
                "pos_social": shared_pos,
                "neg_social": shared_neg,
                "positives": [ATTR_OF[s] for s in shared_pos] + extra_pos,
                "negatives": [ATTR_OF[s] for s in shared_neg],
                "risk": {"depression": rng.randint(1, 3), "suicide": rng.randint(0, 2)},
            }
        )
    return specs


def source_records(specs):
    counseling, assessment = [], []
    for s in specs:
        demo = GROUPS[s["group"]]
        # split the positives across the two sources so the merge has work to do
        pos_c, pos_a = s["positives"][::2], s["positives"][1::2]
        counseling.append(
            {
                "id": f"cns{s['idx']:02d}",
                "demographics": demo,
                "risk": {"depression": 0, "suicide": 0},
                "personality": s["persona"],
                "symptoms": checklist(pos_c, s["negatives"][:1]),
                "assessment_snippets": [],
                "counseling_snippets": [snippet(qa, "Counselor", "Client") for qa in rng.sample(COUNSEL_QA, 2)],
            }
        )
        assessment.append(
            {
                "id": f"asm{s['idx']:02d}",
                "demographics": demo,
                "risk": s["risk"],
                "personality": {"o": 4, "c": 4, "e": 4, "a": 4, "n": 4},
                "symptoms": checklist(pos_a, s["negatives"]),
                "assessment_snippets": [snippet(qa, "Doctor", "Patient") for qa in rng.sample(ASSESS_QA, 3)],
                "counseling_snippets": [],
            }
        )
    # Same-group cross pairs must conflict so stage 1 yields exactly the 12
    # intended pairs: counseling member k reports MARKERS[k] positive and every
    # other member's assessment denies it.
    for s in specs:
        slot = s["idx"] // 4
        counseling[s["idx"]]["symptoms"][MARKERS[slot]] = "positive"
        for k, marker in enumerate(MARKERS):
            if k != slot:
                assessment[s["idx"]]["symptoms"][marker] = "negative"
    return counseling, assessment


def timeline(labels, kind_posts, n, anchor, rng):
    items = []
    for _ in range(n):
        label = rng.choice(labels)
        day = anchor - rng.randint(0, 110)  # some fall outside a 90-day horizon
        score = round(rng.uniform(0.6, 1.0), 3)
        items.append({"day": day, "label": label, "text": kind_posts[label], "score": score})
    # anchor item so the latest day is well defined
    label = rng.choice(labels)
    items.append({"day": anchor, "label": label, "text": kind_posts[label], "score": 0.97})
    return items


def candidate_records(specs):
    cands = []

    def add(demo, persona, symptom_set, note):
        idx = len(cands)
        anchor = 400 + idx * 3
        sym_labels = [s for s in symptom_set if s in SYMPTOM_POSTS] or ["Anxious Mood"]
        events = rng.sample(EVENT_LABELS, 3)
        cands.append(
            {
                "id": f"tw{idx:03d}",
                "demographics": demo,
                "personality": persona,
                "symptom_set": list(symptom_set),
                "symptom_timeline": timeline(sym_labels, SYMPTOM_POSTS, rng.randint(4, 7), anchor, rng),
                "event_timeline": (
                    [] if note == "no-events" else timeline(events, EVENT_POSTS, rng.randint(2, 4), anchor - 1, rng)
                ),
                "_note": note,
            }
        )

    for s in specs[:8]:
        demo, persona = GROUPS[s["group"]], dict(s["persona"])
        add(demo, persona, s["pos_social"][:3], "subset")  # sim_symp 1.0
        if s["idx"] % 2 == 0:
            # 4 of 5 shared: sim_symp exactly 0.8 -> excluded by strict >
            outside = [p for p in PAIRED if p not in s["pos_social"] and p not in s["neg_social"]]
            add(demo, persona, s["pos_social"][:4] + [rng.choice(outside)], "boundary")
        else:
            add(demo, persona, [s["pos_social"][0], s["neg_social"][0]], "conflict")
    for s in specs[8:12]:
        demo = GROUPS[s["group"]]
        add(demo, FAR_PERSONA, s["pos_social"][:2], "far-persona")
        add(demo, dict(s["persona"]), s["pos_social"][:2] + ["Anxious Mood", "Panic Fear"], "subset+social-only")
    for g in range(4):
        add(GROUPS[g], PERSONAS[g], ["Anxious Mood", "Anger Irritability"], "social-only")
    for g in range(4):
        demo = dict(GROUPS[g], marital="widowed")
        add(demo, PERSONAS[g], specs[g]["pos_social"][:2], "marital-mismatch")
    for g in range(4):
        demo = dict(GROUPS[g], gender="Unknown")
        add(demo, PERSONAS[g], specs[g]["pos_social"][:2], "unknown-gender")
    while len(cands) < 40:
        g = rng.randrange(4)
        s = specs[g + 4 * rng.randrange(3)]
        persona = {k: max(1, min(7, v + rng.choice([-1, 0, 1]))) for k, v in s["persona"].items()}
        k = rng.randint(1, 4)
        pool = s["pos_social"] + rng.sample(PAIRED, 2)
        add(GROUPS[g], persona, list(dict.fromkeys(rng.sample(pool, k))), "random")
    return cands


def main(out_dir):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    specs = skeleton_specs()
    counseling, assessment = source_records(specs)
    cands = candidate_records(specs)

    def dump(name, records):
        with open(out / name, "w", encoding="utf-8") as fh:
            for r in records:
                fh.write(json.dumps({k: v for k, v in r.items() if not k.startswith("_")}, ensure_ascii=False) + "\n")

    dump("counseling.jsonl", counseling)
    dump("assessment.jsonl", assessment)
    dump("candidates.jsonl", cands)
    print(f"wrote {len(counseling)} counseling, {len(assessment)} assessment, {len(cands)} candidates to {out}")


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "src/deprofile_forge/data/fixture")
