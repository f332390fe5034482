import json
from importlib import resources
from pathlib import Path

import pytest

from deprofile_forge import vocab

FIXTURE_DIR = Path(str(resources.files("deprofile_forge").joinpath("data/fixture")))
GOLDEN_DIR = Path(__file__).parent / "golden"


def demo(age="18-25", gender="F", employment="student", marital="single"):
    return {"age": age, "gender": gender, "employment": employment, "marital": marital}


def persona(o=4, c=4, e=4, a=4, n=4):
    return {"o": o, "c": c, "e": e, "a": a, "n": n}


def checklist(positive=(), negative=()):
    labels = {k: "not_mentioned" for k in vocab.ASSESSMENT_ATTRIBUTES}
    labels.update({k: "positive" for k in positive})
    labels.update({k: "negative" for k in negative})
    return labels


def skeleton_record(id="s1", positive=(), negative=(), demographics=None, personality=None, risk=(1, 0), **extra):
    rec = {
        "id": id,
        "demographics": demographics or demo(),
        "risk": {"depression": risk[0], "suicide": risk[1]},
        "personality": personality or persona(),
        "symptoms": checklist(positive, negative),
        "assessment_snippets": ["Doctor: How are you sleeping?\nPatient: Badly."],
        "counseling_snippets": ["Counselor: How was your week?\nClient: Long."],
    }
    rec.update(extra)
    return rec


def item(day, label, score=0.9, text=None):
    return {"day": day, "label": label, "text": text if text is not None else f"post about {label}", "score": score}


def candidate_record(id="c1", symptom_set=(), demographics=None, personality=None, symptoms=(), events=()):
    return {
        "id": id,
        "demographics": demographics or demo(),
        "personality": personality or persona(),
        "symptom_set": list(symptom_set),
        "symptom_timeline": list(symptoms),
        "event_timeline": list(events),
    }


def write_jsonl(path, records):
    path.write_text("".join(json.dumps(r) + "\n" for r in records), encoding="utf-8")
    return path


@pytest.fixture
def fixture_dir():
    return FIXTURE_DIR
