import json
import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracles
from conftest import candidate_record, demo, persona, skeleton_record
from deprofile_forge import align, corpus, vocab
from deprofile_forge.align import (
    LENIENT,
    STRICT,
    AlignError,
    MatchScore,
    SymptomTaxonomyMap,
    expand_stage2,
    match_stage1,
    passes_thresholds,
    project_symptoms,
    prune_conflicts,
    sim_pers,
    sim_symp,
)

TAX = SymptomTaxonomyMap.default()


def sk(id="s1", **kw):
    return corpus.skeleton_from_record(skeleton_record(id, **kw))


def cand(id="c1", symptom_set=("Depressed Mood",), **kw):
    return corpus.candidate_from_record(candidate_record(id, symptom_set, **kw))


# --- taxonomy ----------------------------------------------------------------


def test_taxonomy_default_matches_hand_transcription():
    assert TAX.pairs == oracles.PAIRS
    assert len(TAX.shared_categories) == 17
    assert TAX.social_only == set(vocab.SOCIAL_ONLY_SYMPTOMS)


def test_taxonomy_rejects_non_injective():
    with pytest.raises(AlignError, match="injective"):
        SymptomTaxonomyMap({"Depressed Mood": "emotion-depressed mood", "Pessimism": "emotion-depressed mood"})


def test_taxonomy_rejects_unknown_names():
    with pytest.raises(AlignError, match="social-media"):
        SymptomTaxonomyMap({"Sadness": "emotion-depressed mood"})
    with pytest.raises(AlignError, match="assessment"):
        SymptomTaxonomyMap({"Depressed Mood": "emotion-sadness"})


def test_taxonomy_from_file_is_extensible(tmp_path):
    path = tmp_path / "tax.json"
    pairs = dict(oracles.PAIRS, **{"Anxious Mood": "emotion-diurnal variation"})
    path.write_text(json.dumps({"pairs": pairs, "social_only": ["Panic Fear"]}))
    tax = SymptomTaxonomyMap.from_file(path)
    assert len(tax.shared_categories) == 18
    assert project_symptoms({"Anxious Mood"}, tax) == {"emotion-diurnal variation"}


# --- stage 1 -------------------------------------------------------------------


def test_stage1_disjoint_labels_union():
    c = sk("c", positive=["sleep-light sleep"], negative=["screening-mania"])
    a = sk("a", positive=["mental state-fatigue"])
    (merged,) = match_stage1([c], [a])
    assert merged.id == "c+a"
    assert merged.symptoms.positives == {"sleep-light sleep", "mental state-fatigue"}
    assert merged.symptoms.negatives == {"screening-mania"}


def test_stage1_conflict_blocks_match():
    c = sk("c", positive=["mental state-fatigue"])
    a = sk("a", negative=["mental state-fatigue"])
    assert match_stage1([c], [a]) == []


def test_stage1_merge_sources():
    c = sk("c", personality=persona(7, 1, 2, 3, 4), risk=(0, 0))
    a = sk("a", personality=persona(1, 1, 1, 1, 1), risk=(3, 2))
    (m,) = match_stage1([c], [a])
    assert m.personality.as_tuple() == (7, 1, 2, 3, 4)
    assert (m.risk.depression_risk, m.risk.suicide_risk) == (3, 2)
    assert m.counseling_snippets == c.counseling_snippets
    assert m.assessment_snippets == a.assessment_snippets


def test_stage1_three_by_three():
    counseling = [
        sk("c1", positive=["mental state-fatigue"]),
        sk("c2", demographics=demo(gender="M")),
        sk("c3", negative=["sleep-light sleep"]),
    ]
    assessment = [
        sk("a1", negative=["mental state-fatigue"]),
        sk("a2", positive=["sleep-light sleep"]),
        sk("a3", demographics=demo(marital="married")),
    ]
    got = sorted(s.id for s in match_stage1(counseling, assessment))
    raw = lambda xs: [corpus.skeleton_to_record(x) for x in xs]  # noqa: E731
    want = sorted(s["id"] for s in oracles.stage1(raw(counseling), raw(assessment)))
    assert got == want == ["c1+a2", "c3+a1"]


def test_stage1_unknown_policy():
    c = sk("c", demographics=demo(gender="Unknown"))
    a = sk("a", demographics=demo(gender="F"))
    assert match_stage1([c], [a], STRICT) == []
    (m,) = match_stage1([c], [a], LENIENT)
    assert m.demographics.gender == "F"


def test_stage1_fixture_yields_twelve(fixture_dir):
    counseling = corpus.load_skeletons(fixture_dir / "counseling.jsonl")
    assessment = corpus.load_skeletons(fixture_dir / "assessment.jsonl")
    got = match_stage1(counseling, assessment)
    want = oracles.stage1(
        oracles.read_jsonl(fixture_dir / "counseling.jsonl"), oracles.read_jsonl(fixture_dir / "assessment.jsonl")
    )
    assert len(got) == 12
    assert [s.id for s in got] == [w["id"] for w in want]
    for s, w in zip(got, want):
        assert s.symptoms.to_record() == w["symptoms"]


# --- stage 2 primitives ------------------------------------------------------------


def test_prefilter():
    s = sk()
    same = cand("same")
    other_marital = cand("m", demographics=demo(marital="married"))
    unknown = cand("u", demographics=demo(gender="Unknown"))
    assert [c.id for c in align.demographic_prefilter(s, [same, other_marital, unknown])] == ["same"]
    assert [c.id for c in align.demographic_prefilter(s, [same, other_marital, unknown], LENIENT)] == ["same", "u"]


def test_projection():
    assert project_symptoms({"Depressed Mood"}, TAX) == {"emotion-depressed mood"}
    assert project_symptoms({"Anxious Mood"}, TAX) == set()
    assert project_symptoms({"Sleep Disturbance", "Poor Memory"}, TAX) == {
        "sleep-sleep disturbance",
        "mental state-memory decline",
    }
    assert align.unpaired_symptoms({"Anxious Mood", "Pessimism"}, TAX) == {"Anxious Mood"}


def test_projection_strict_unknown_label():
    tax = SymptomTaxonomyMap({"Depressed Mood": "emotion-depressed mood"})
    assert project_symptoms({"Pessimism"}, tax) == set()
    with pytest.raises(AlignError, match="Pessimism"):
        project_symptoms({"Pessimism"}, tax, strict=True)


def test_prune_conflicts():
    s = sk(positive=["mental state-fatigue"], negative=["suicide-suicide attempt"])
    assert prune_conflicts(s, {"suicide-suicide attempt"}) is False
    assert prune_conflicts(s, set()) is True
    assert prune_conflicts(s, {"mental state-fatigue"}) is True


def test_sim_symp_values():
    assert sim_symp({"a", "b", "c"}, {"a", "b"}) == 1.0
    assert sim_symp({"a"}, {"a", "x"}) == 0.5
    with pytest.raises(AlignError):
        sim_symp({"a"}, set())


def test_sim_pers_values():
    assert sim_pers((3, 4, 5, 6, 7), (3, 4, 5, 6, 7)) == pytest.approx(1.0, abs=1e-15)
    assert sim_pers((1,) * 5, (7,) * 5) == pytest.approx(1.0, abs=1e-15)
    # dot = 7+1+1+1+7 = 17; both norms sqrt(49+4) = sqrt(53)
    assert abs(sim_pers((1, 1, 1, 1, 7), (7, 1, 1, 1, 1)) - 17 / 53) < 1e-12


def test_sim_pers_rejects_zero():
    with pytest.raises(AlignError):
        sim_pers((0, 0, 0, 0, 0), (1, 1, 1, 1, 1))


def test_match_score_total_is_plain_sum():
    s = MatchScore(0.75, 0.9)
    assert s.sim_total == 0.75 + 0.9


# --- expand_stage2 ---------------------------------------------------------------


FIVE = ["mental state-fatigue", "emotion-depressed mood", "mental state-inattention", "suicide-hopelessness", "screening-mania"]
FIVE_SOCIAL = ["Decreased Energy Tiredness Fatigue", "Depressed Mood", "Inattention", "Pessimism", "Drastical Shift In Mood And Energy"]


def test_expand_boundary_excluded():
    s = sk(positive=FIVE[:4])
    c = cand("c", FIVE_SOCIAL)  # 4 of 5 shared
    trace = align.ExpansionTrace()
    prof = expand_stage2(s, [c], trace=trace)
    assert 4 / 5 == 0.8
    assert prof.ranked_candidates == ()
    assert trace.dropped == {"c": "below threshold"}


def test_expand_ranking_by_total():
    s = sk(positive=FIVE, personality=persona(4, 4, 4, 4, 4))
    # equal sim_symp 1.0; sim_pers decides
    a = cand("a", FIVE_SOCIAL[:2], personality=persona(4, 4, 4, 4, 4))
    b = cand("b", FIVE_SOCIAL[:1], personality=persona(5, 4, 4, 4, 3))
    prof = expand_stage2(s, [b, a])
    assert [rc.candidate_id for rc in prof.ranked_candidates] == ["a", "b"]
    totals = [rc.score.sim_total for rc in prof.ranked_candidates]
    assert totals == sorted(totals, reverse=True)


def test_expand_tie_break():
    s = sk(positive=FIVE)
    b = cand("b", FIVE_SOCIAL[:1])
    a = cand("a", FIVE_SOCIAL[1:2])
    c = cand("c", FIVE_SOCIAL[2:4])
    assert [rc.candidate_id for rc in expand_stage2(s, [c, b, a]).ranked_candidates] == ["a", "b", "c"]


def test_expand_rank_key_prefers_symptoms_on_equal_total():
    ranked = sorted(
        [align.RankedCandidate("x", MatchScore(0.9, 0.95)), align.RankedCandidate("y", MatchScore(0.95, 0.9))],
        key=align.rank_key,
    )
    assert ranked[0].score.sim_total == ranked[1].score.sim_total
    assert [r.candidate_id for r in ranked] == ["y", "x"]


def test_expand_empty_prefilter():
    prof = expand_stage2(sk(), [cand(demographics=demo(age="50+"))])
    assert prof.ranked_candidates == () and prof.top_candidate_id is None


def test_expand_skips_empty_projection():
    trace = align.ExpansionTrace()
    expand_stage2(sk(positive=FIVE), [cand("c", ["Anxious Mood"])], trace=trace)
    assert trace.dropped == {"c": "no shared-space symptoms"}


def test_unified_profile_record_round_trip():
    s = sk(positive=FIVE)
    prof = expand_stage2(s, [cand("a", FIVE_SOCIAL[:2])])
    rec = json.loads(json.dumps(prof.to_record()))
    assert set(rec) == {"skeleton_id", "candidates", "thresholds", "policy_flags"}
    assert set(rec["candidates"][0]) == {"candidate_id", "sim_symp", "sim_pers", "sim_total"}
    assert align.unified_from_record(rec, {s.id: s}) == prof


def _fixture_pair(fixture_dir):
    counseling = corpus.load_skeletons(fixture_dir / "counseling.jsonl")
    assessment = corpus.load_skeletons(fixture_dir / "assessment.jsonl")
    skeletons = match_stage1(counseling, assessment)
    cands = corpus.load_candidates(fixture_dir / "candidates.jsonl")
    raw_skeletons = [corpus.skeleton_to_record(s) for s in skeletons]
    raw_cands = oracles.read_jsonl(fixture_dir / "candidates.jsonl")
    return skeletons, cands, raw_skeletons, raw_cands


def test_expand_matches_oracle_on_fixture(fixture_dir):
    skeletons, cands, raw_skeletons, raw_cands = _fixture_pair(fixture_dir)
    total = 0
    for s, raw in zip(skeletons, raw_skeletons):
        got = [(r.candidate_id, r.score.sim_symp, r.score.sim_pers) for r in expand_stage2(s, cands).ranked_candidates]
        want = oracles.expand(raw, raw_cands)
        assert [g[0] for g in got] == [w[0] for w in want]
        for g, w in zip(got, want):
            assert abs(g[1] - w[1]) <= 1e-12 and abs(g[2] - w[2]) <= 1e-12
        total += len(got)
    assert total == 14  # frozen from the oracle


def test_expand_monotone_under_removal(fixture_dir):
    skeletons, cands, _, _ = _fixture_pair(fixture_dir)
    for s in skeletons:
        full = expand_stage2(s, cands)
        keep = {r.candidate_id for r in full.ranked_candidates}
        losers = [c for c in cands if c.id not in keep]
        for drop in losers[:5]:
            pool = [c for c in cands if c.id != drop.id]
            assert expand_stage2(s, pool).ranked_candidates == full.ranked_candidates


# --- properties --------------------------------------------------------------

SHARED = sorted(TAX.shared_categories)
ocean_vec = st.tuples(*[st.integers(1, 7)] * 5)


@given(st.sets(st.sampled_from(SHARED)), st.sets(st.sampled_from(SHARED), min_size=1))
def test_sim_symp_range_and_unit_iff_subset(pos, social):
    v = sim_symp(pos, social)
    assert 0.0 <= v <= 1.0
    assert (v == 1.0) == (social <= pos)


@given(ocean_vec, ocean_vec)
def test_sim_pers_symmetric(a, b):
    assert abs(sim_pers(a, b) - sim_pers(b, a)) <= 1e-12
    assert 0.0 < sim_pers(a, b) <= 1.0 + 1e-12


@given(ocean_vec, ocean_vec, st.floats(0.01, 100))
def test_sim_pers_scale_invariant(a, b, c):
    assert math.isclose(sim_pers(a, b), sim_pers([x * c for x in a], [y * c for y in b]), abs_tol=1e-12)


@given(st.lists(st.tuples(st.floats(0, 1), st.floats(-1, 1)), max_size=20))
def test_strict_thresholds(scores):
    for s, p in scores:
        assert passes_thresholds(MatchScore(s, p)) == (s > 0.8 and p > 0.8)
    assert not passes_thresholds(MatchScore(0.8, 0.9))
    assert not passes_thresholds(MatchScore(0.9, 0.8))
