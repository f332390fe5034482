"""Closed vocabularies shared by every stage.

Demographic buckets, the assessment-dialogue symptom attributes, the
social-media symptom labels and their pairing onto the assessment side.
"""

from __future__ import annotations

import re

AGE_BUCKETS = ("0-17", "18-25", "26-35", "36-50", "50+", "Unknown")
GENDERS = ("M", "F", "Unknown")
EMPLOYMENT_STATUSES = ("employed", "unemployed", "student", "retired", "Unknown")
MARITAL_STATUSES = ("married", "single", "divorced", "widowed", "Unknown")

UNKNOWN = "Unknown"

OCEAN_TRAITS = (
    "openness",
    "conscientiousness",
    "extraversion",
    "agreeableness",
    "neuroticism",
)
# wire keys in the record files
OCEAN_KEYS = ("o", "c", "e", "a", "n")

# Assessment-dialogue checklist, in canonical order.
ASSESSMENT_ATTRIBUTES = (
    "sleep-light sleep",
    "sleep-difficulty falling asleep",
    "sleep-frequent dreaming",
    "sleep-early awakening",
    "sleep-sleep disturbance",
    "sleep-reduced sleep duration",
    "appetite-binge eating",
    "appetite-significant weight change",
    "appetite-loss of appetite",
    "appetite-appetite disturbance",
    "suicide-hopelessness",
    "suicide-suicidal ideation",
    "suicide-low self-worth",
    "suicide-self-blame",
    "suicide-self-harm tendency",
    "suicide-suicide attempt",
    "screening-mania",
    "screening-family history",
    "somatic-somatic discomfort",
    "somatic-psychomotor agitation",
    "somatic-psychomotor retardation",
    "emotion-depressed mood",
    "emotion-depressed mood over two weeks",
    "emotion-diurnal variation",
    "interest-loss of interest",
    "interest-scope all activities",
    "interest-emotional blunting",
    "interest-cause",
    "interest-loss of interest over two weeks",
    "interest-scope past hobbies",
    "social functioning-difficulty in daily life",
    "social functioning-difficulty in study or work",
    "social functioning-avoid social contact",
    "social functioning-avoid support from family or friends",
    "mental state-fatigue",
    "mental state-memory decline",
    "mental state-lack of confidence",
    "mental state-indecisiveness",
    "mental state-inattention",
)

# social-media label -> assessment attribute
PAIRED_SYMPTOMS = {
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

SOCIAL_ONLY_SYMPTOMS = (
    "Anxious Mood",
    "Autonomic Symptoms",
    "Cardiovascular Symptoms",
    "Gastrointestinal Symptoms",
    "Genitourinary Symptoms",
    "Respiratory Symptoms",
    "Impulsivity",
    "Avoidance Of Stimuli",
    "Compensatory Behaviors To Prevent Weight Gain",
    "Compulsions",
    "Fears Of Being Negatively Evaluated",
    "Flight Of Ideas",
    "Intrusion Symptoms",
    "More Talktive",
    "Obsession",
    "Obsessions",
    "Panic Fear",
    "Do Things Easily Get Painful Consequences",
    "Anger Irritability",
)

SOCIAL_SYMPTOMS = tuple(PAIRED_SYMPTOMS) + SOCIAL_ONLY_SYMPTOMS

_WS = re.compile(r"\s+")
_HYPHEN = re.compile(r"\s*-\s*")
_SOCIAL_BY_KEY = {label.lower(): label for label in SOCIAL_SYMPTOMS}


def normalize_attribute(name: str) -> str:
    """Canonical checklist key: lowercase, single spaces, bare hyphens."""
    name = _WS.sub(" ", name.strip().lower().replace("_", " "))
    return _HYPHEN.sub("-", name)


def canonical_social_label(name: str) -> str | None:
    """Map a social-media label onto its declared spelling, or None."""
    return _SOCIAL_BY_KEY.get(_WS.sub(" ", name.strip().replace("_", " ")).lower())
