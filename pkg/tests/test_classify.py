import random

import pytest

from docboost.classify import (
    ClassifiedSentence,
    CompositeScorer,
    ContextFlags,
    JaccardContextScorer,
    LexicalSectionScorer,
    SectionLogits,
    classify_sentences,
    detect_context,
    fallback_scorer,
    fallback_scorers,
    fuse_logits,
    predict_sections,
    score_section,
)
from docboost.models import Address, SectionKind, Sentence, SourceKind


def _sentences(texts, source_id="a1", kind=SourceKind.ANSWER_POST):
    return [Sentence(text=t, address=Address(source_id, i), origin_kind=kind)
            for i, t in enumerate(texts)]


# ---------------------------------------------------------------------------
# SectionLogits

def test_logits_argmax_tie_breaks_by_declaration_order():
    assert SectionLogits((2.0, 2.0, 0.0, 0.0)).argmax() is SectionKind.FUNCTIONALITY
    assert SectionLogits((0.0, 1.0, 1.0, 0.0)).argmax() is SectionKind.PARAMETERS
    assert SectionLogits((0.0, 0.0, 0.0, 0.0)).argmax() is SectionKind.FUNCTIONALITY


def test_logits_reject_non_finite():
    with pytest.raises(Exception):
        SectionLogits((float("nan"), 0.0, 0.0, 0.0))
    with pytest.raises(Exception):
        SectionLogits((float("inf"), 0.0, 0.0, 0.0))


# ---------------------------------------------------------------------------
# fallback scorers

def test_lexical_scorer_counts_hits(tanh_api):
    scorer = LexicalSectionScorer()
    logits = scorer.score_section("The default range of the input is [-1, 1].", tanh_api)
    assert logits[SectionKind.PARAMETERS] == 3.0
    assert logits[SectionKind.FUNCTIONALITY] == 0.0
    assert logits[SectionKind.IRRELEVANT] == 0.0
    assert logits.argmax() is SectionKind.PARAMETERS


def test_lexical_scorer_single_hit(tanh_api):
    logits = LexicalSectionScorer().score_section("Pass one argument here.", tanh_api)
    assert logits.argmax() is SectionKind.PARAMETERS


def test_lexical_scorer_phrase_entry(tanh_api):
    scorer = LexicalSectionScorer()
    hit = scorer.score_section("It returns the result quickly.", tanh_api)
    assert hit[SectionKind.FUNCTIONALITY] == 1.0
    miss = scorer.score_section("It returns the results quickly.", tanh_api)
    assert miss[SectionKind.FUNCTIONALITY] == 0.0


def test_lexical_scorer_irrelevant_default(tanh_api):
    logits = LexicalSectionScorer().score_section("Nothing about our topic.", tanh_api)
    assert logits.values == (0.0, 0.0, 0.0, 1.0)
    assert logits.argmax() is SectionKind.IRRELEVANT


def test_lexical_scorer_api_mention_suppresses_irrelevant(tanh_api):
    scorer = LexicalSectionScorer()
    bare = scorer.score_section("torch.nn.Tanh", tanh_api)
    assert bare.values == (0.0, 0.0, 0.0, 0.0)
    assert bare.argmax() is SectionKind.FUNCTIONALITY
    tail = scorer.score_section("Tanh saturates quickly.", tanh_api)
    assert tail[SectionKind.IRRELEVANT] == 0.0


def test_lexical_scorer_custom_lexicons(tanh_api):
    scorer = LexicalSectionScorer({SectionKind.NOTES: ("quirk",)})
    logits = scorer.score_section("A known quirk exists.", tanh_api)
    assert logits[SectionKind.NOTES] == 1.0
    assert logits[SectionKind.PARAMETERS] == 0.0


def test_jaccard_context_scorer():
    scorer = JaccardContextScorer()
    assert scorer.score_context("a b c", "a b d") == pytest.approx(0.5)
    assert scorer.score_context("same words", "same words") == 1.0
    assert scorer.score_context("left only", "right tokens") == 0.0
    assert scorer.score_context("a b", "b a c") == scorer.score_context("b a c", "a b")


def test_fallback_scorers_shape():
    section, context = fallback_scorers()
    assert section.deterministic and context.deterministic
    composite = CompositeScorer(section, context)
    assert composite.deterministic
    assert composite.name == "lexical-fallback+jaccard-fallback"


def test_score_section_op(tanh_api):
    sent = _sentences(["Pass one argument here."])[0]
    logits = score_section(fallback_scorer(), sent, tanh_api)
    assert logits.argmax() is SectionKind.PARAMETERS


# ---------------------------------------------------------------------------
# context detection

def test_detect_context_single_sentence(tanh_api):
    flags = detect_context(fallback_scorer(), _sentences(["Lone sentence."]))
    assert flags == [ContextFlags(False, False, 0.0, 0.0)]


def test_detect_context_identical_neighbors():
    flags = detect_context(fallback_scorer(), _sentences(["same text", "same text"]))
    assert flags[0] == ContextFlags(preceding=False, following=True,
                                    c_preceding=0.0, c_following=1.0)
    assert flags[1] == ContextFlags(preceding=True, following=False,
                                    c_preceding=1.0, c_following=0.0)


def test_detect_context_disjoint_neighbors():
    flags = detect_context(fallback_scorer(), _sentences(["alpha beta", "gamma delta"]))
    assert all(not f.preceding and not f.following for f in flags)


def test_detect_context_threshold():
    sents = _sentences(["a b c", "a b d"])
    at_default = detect_context(fallback_scorer(), sents)
    assert at_default[0].following and at_default[0].c_following == pytest.approx(0.5)
    above = detect_context(fallback_scorer(), sents, threshold=0.6)
    assert not above[0].following and above[0].c_following == 0.0


def test_detect_context_rejects_mixed_sources():
    mixed = _sentences(["one"], source_id="a1") + _sentences(["two"], source_id="a2")
    with pytest.raises(ValueError):
        detect_context(fallback_scorer(), mixed)


# ---------------------------------------------------------------------------
# fusion

def test_fuse_c_zero_keeps_origin():
    origin = SectionLogits((1.0, 2.0, 3.0, 4.0))
    context = SectionLogits((9.0, 9.0, 9.0, 9.0))
    assert fuse_logits(origin, [(0.0, context)]).values == origin.values


def test_fuse_c_one_takes_context():
    origin = SectionLogits((1.0, 2.0, 3.0, 4.0))
    context = SectionLogits((9.0, 8.0, 7.0, 6.0))
    assert fuse_logits(origin, [(1.0, context)]).values == context.values


def test_fuse_half_blend():
    fused = fuse_logits(SectionLogits((1.0, 0.0, 0.0, 0.0)),
                        [(0.5, SectionLogits((0.0, 1.0, 0.0, 0.0)))])
    assert fused.values == (0.5, 0.5, 0.0, 0.0)


def test_fuse_two_contexts_average():
    origin = SectionLogits((1.0, 0.0, 0.0, 0.0))
    fused = fuse_logits(origin, [(1.0, SectionLogits((0.0, 1.0, 0.0, 0.0))),
                                 (0.0, SectionLogits((5.0, 5.0, 5.0, 5.0)))])
    assert fused.values == (0.5, 0.5, 0.0, 0.0)


def test_fuse_requires_context():
    with pytest.raises(ValueError):
        fuse_logits(SectionLogits((0.0, 0.0, 0.0, 0.0)), [])


def test_fuse_boundedness_random():
    rng = random.Random(11)
    for _ in range(100):
        origin = SectionLogits(tuple(rng.uniform(-5, 5) for _ in range(4)))
        contexts = [(rng.random(), SectionLogits(tuple(rng.uniform(-5, 5) for _ in range(4))))
                    for _ in range(rng.randint(1, 2))]
        fused = fuse_logits(origin, contexts)
        for j in range(4):
            bundle = [origin.values[j]] + [l.values[j] for _, l in contexts]
            assert min(bundle) - 1e-12 <= fused.values[j] <= max(bundle) + 1e-12


def test_argmax_shift_invariance(tanh_api):
    rng = random.Random(5)
    for _ in range(50):
        values = tuple(rng.uniform(-3, 3) for _ in range(4))
        shift = rng.uniform(-10, 10)
        shifted = tuple(v + shift for v in values)
        assert SectionLogits(values).argmax() is SectionLogits(shifted).argmax()


# ---------------------------------------------------------------------------
# end-to-end classification

def test_predict_sections_context_free_equals_origin_argmax(tanh_api):
    scorer = fallback_scorer()
    sents = _sentences(["Pass one argument now.", "Deprecated since late releases.",
                        "Totally unrelated chatter."])
    # Adjacent Jaccard stays under 0.5, so no fusion happens anywhere.
    for flag in detect_context(scorer, sents):
        assert not flag.any
    labels = [label for label, _ in predict_sections(scorer, sents, tanh_api)]
    expected = [scorer.score_section(s.text, tanh_api).argmax() for s in sents]
    assert labels == expected


def test_predict_sections_identical_triple_hand_trace(tanh_api):
    # Three copies of one sentence: Jaccard c=1 on every edge, so each
    # fused vector is exactly the concatenated-pair logits. Hand trace:
    # "tanh computes output" -> origin (1,1,0,0); any pair-concat (2,2,0,0);
    # tie-break picks Functionality everywhere.
    scorer = fallback_scorer()
    sents = _sentences(["tanh computes output"] * 3)
    results = classify_sentences(scorer, sents, tanh_api)
    assert [r.label for r in results] == [SectionKind.FUNCTIONALITY] * 3
    assert results[1].logits.values == (2.0, 2.0, 0.0, 0.0)
    assert results[1].flags.preceding and results[1].flags.following


def test_classify_never_crosses_sources(tanh_api):
    a = _sentences(["identical words here"], source_id="a1")
    b = _sentences(["identical words here"], source_id="a2")
    results = classify_sentences(fallback_scorer(), a + b, tanh_api)
    assert all(not r.flags.any for r in results)


def test_classify_preserves_input_order(tanh_api):
    a = _sentences(["alpha one.", "alpha two."], source_id="a1")
    b = _sentences(["beta one."], source_id="b1", kind=SourceKind.VIDEO_CAPTION)
    interleaved = [a[0], b[0], a[1]]
    results = classify_sentences(fallback_scorer(), interleaved, tanh_api)
    assert [r.sentence.text for r in results] == [s.text for s in interleaved]


def test_classify_concat_both_mode_differs(tanh_api):
    sents = _sentences(["input data", "input data", "input data"])
    per_side = classify_sentences(fallback_scorer(), sents, tanh_api)
    joint = classify_sentences(fallback_scorer(), sents, tanh_api, concat_both=True)
    assert per_side[1].logits.values != joint[1].logits.values
    assert per_side[1].label is joint[1].label


def test_classify_deterministic(tanh_api):
    sents = _sentences(["The input range matters.", "It computes fast.",
                        "tanh computes output"])
    first = classify_sentences(fallback_scorer(), sents, tanh_api)
    second = classify_sentences(fallback_scorer(), sents, tanh_api)
    assert [(r.label, r.logits.values) for r in first] == \
        [(r.label, r.logits.values) for r in second]
