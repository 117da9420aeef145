from __future__ import annotations

import pytest

from rwlab.corpus import POLARITIES, Polarity, compute_stats, dump_corpus
from rwlab.synthetic import WINDOW, SyntheticSpec, SyntheticSpecError, _Builder, generate_synthetic

SMALL = SyntheticSpec(n_sentences=200, n_test_sentences=120, n_valid_examples=40, n_contrastive_test=30)


@pytest.fixture(scope="module")
def default_splits():
    return generate_synthetic(SyntheticSpec())


def _bytes(corpora, tmp_path, tag):
    out = []
    for k, c in enumerate(corpora):
        p = tmp_path / f"{tag}{k}.jsonl"
        dump_corpus(c, p)
        out.append(p.read_bytes())
    return out


def test_same_spec_same_bytes(tmp_path):
    a = generate_synthetic(SMALL)
    b = generate_synthetic(SyntheticSpec.from_dict(SMALL.to_dict()))
    assert _bytes(a, tmp_path, "a") == _bytes(b, tmp_path, "b")
    c = generate_synthetic(SyntheticSpec(**{**SMALL.to_dict(), "seed": 8, "polarity_probs": SMALL.polarity_probs}))
    assert _bytes(c, tmp_path, "c") != _bytes(a, tmp_path, "a")


def test_rate_zero_has_no_contrastive():
    spec = SyntheticSpec(**{**SMALL.to_dict(), "contrastive_rate": 0.0, "polarity_probs": SMALL.polarity_probs})
    train, valid, test, test_c = generate_synthetic(spec)
    for c in (train, valid, test):
        assert not any(c.contrastive_flags.values())
    assert len(test_c) == 0


def test_default_rate_within_one_sentence(default_splits):
    train = default_splits[0]
    stats = compute_stats(train)
    spec = SyntheticSpec()
    assert abs(stats.n_contrastive_sentences - spec.contrastive_rate * stats.n_sentences_with_aspect) <= 1
    assert 0.11 <= stats.pct_contrastive / 100 <= 0.13
    assert stats.n_sentences == 1000


def test_split_shapes(default_splits):
    train, valid, test, test_c = default_splits
    assert len(valid) >= 150
    assert len(test.sentence_ids) == 600
    assert all(test_c.contrastive_flags.values())
    assert len(test_c.sentence_ids) >= 80
    ids = [set(c.sentence_ids) for c in (train, valid, test)]
    assert not (ids[0] & ids[1]) and not (ids[0] & ids[2]) and not (ids[1] & ids[2])


def test_contrastive_sentences_have_two_distinct_aspects(default_splits):
    for corpus in default_splits:
        by_id = {e.example_id: e for e in corpus.examples}
        for sid, flag in corpus.contrastive_flags.items():
            members = [by_id[i] for i in corpus.sentence_index[sid]]
            if flag:
                assert len(members) == 2 and members[0].label != members[1].label
                assert members[0].aspect_term != members[1].aspect_term
            else:
                assert 1 <= len(members) <= 2


def test_label_is_decided_by_window_word(default_splits):
    lex = _Builder(SyntheticSpec()).lexicon
    tones = _Builder(SyntheticSpec()).tones
    owner = {w: p for p in POLARITIES for w in lex[p]}
    tone_words = {w for p in POLARITIES for w in tones[p]}
    assert len(owner) == sum(len(v) for v in lex.values()), "lexicons must be disjoint"
    for corpus in default_splits:
        for ex in corpus.examples:
            s, e = ex.aspect_span
            window = list(ex.text[max(0, s - WINDOW) : s]) + list(ex.text[e : e + WINDOW])
            hits = [owner[w] for w in window if w in owner]
            assert hits == [ex.label], (ex.text, ex.aspect_span)
            assert not tone_words & set(window)


def test_text_only_predictor_gets_half_of_pos_neg_pairs(default_splits):
    test_c = default_splits[3]
    by_id = {e.example_id: e for e in test_c.examples}
    for sid in test_c.sentence_ids:
        pair = [by_id[i] for i in test_c.sentence_index[sid]]
        if {p.label for p in pair} != {Polarity.POSITIVE, Polarity.NEGATIVE}:
            continue
        for guess in (Polarity.POSITIVE, Polarity.NEGATIVE):
            assert sum(ex.label == guess for ex in pair) == 1


@pytest.mark.parametrize(
    "field,value",
    [("contrastive_rate", 1.5), ("contrastive_rate", -0.1), ("n_sentences", 0), ("n_positive_words", 0)],
)
def test_invalid_spec(field, value):
    with pytest.raises(SyntheticSpecError):
        SyntheticSpec(**{field: value})
