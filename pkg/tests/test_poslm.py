import math
from collections import Counter
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cipherpos.errors import FormatError
from cipherpos.poslm import (BOS, EOS, PosLanguageModel, UnknownTagError, concat_train,
                             load_lm, save_lm, train_pos_lm)

TAGS = ["DET", "NOUN", "VERB", "ADJ"]
seqs_strategy = st.lists(st.lists(st.sampled_from(TAGS), max_size=8), min_size=1, max_size=12)


def test_single_bigram_small_alpha():
    lm = train_pos_lm([["DET", "NOUN"]], alpha=1e-12)
    assert lm.prob("NOUN", ("DET",)) == pytest.approx(1.0, abs=1e-9)


def test_hand_computed_smoothing():
    lm = train_pos_lm([["A", "B"], ["A", "C"]], alpha=1.0, tagset=["A", "B", "C"])
    assert lm.V == 4
    # (1 + 1) / (2 + 4)
    assert lm.prob("B", ("A",)) == pytest.approx(1 / 3, abs=1e-15)
    # P(A|BOS) = (2 + 1) / (2 + 4)
    assert lm.prob("A", (BOS,)) == pytest.approx(1 / 2, abs=1e-15)


def test_default_order_and_alpha():
    lm = train_pos_lm([["A"]])
    assert lm.order == 2
    assert lm.alpha == 0.1


def test_empty_sequence_log_prob():
    lm = train_pos_lm([["A", "B"], []], alpha=0.5)
    assert lm.sequence_log_prob([]) == pytest.approx(math.log(lm.prob(EOS, (BOS,))))


def test_sequence_log_prob_by_hand():
    lm = train_pos_lm([["DET", "NOUN", "VERB"], ["NOUN", "VERB"], ["DET", "NOUN"]], alpha=0.5)
    # counts: BOS->DET 2, BOS->NOUN 1; DET->NOUN 2; NOUN->VERB 2, NOUN->EOS 1; VERB->EOS 2
    # alpha * V = 2
    p_det = Fraction(5, 2) / 5      # (2 + .5) / (3 + 2)
    p_noun = Fraction(5, 2) / 4     # (2 + .5) / (2 + 2)
    p_eos = Fraction(3, 2) / 5      # (1 + .5) / (3 + 2)
    expected = math.log(p_det) + math.log(p_noun) + math.log(p_eos)
    assert lm.sequence_log_prob(["DET", "NOUN"]) == pytest.approx(expected, abs=1e-12)


def test_large_alpha_tends_to_uniform():
    lm = train_pos_lm([["A", "B"]], alpha=1e12)
    n = 2
    assert lm.sequence_log_prob(["A", "B"]) == pytest.approx((n + 1) * math.log(1 / lm.V), abs=1e-9)


def test_unknown_tag():
    lm = train_pos_lm([["A"]])
    with pytest.raises(UnknownTagError):
        lm.sequence_log_prob(["Z"])


@pytest.mark.parametrize("kwargs", [dict(alpha=0), dict(alpha=-1), dict(order=0)])
def test_bad_parameters(kwargs):
    with pytest.raises(ValueError):
        train_pos_lm([["A"]], **kwargs)


def test_empty_training_set():
    with pytest.raises(ValueError):
        train_pos_lm([])
    with pytest.raises(ValueError):
        concat_train([])


@settings(max_examples=40, deadline=None)
@given(seqs_strategy, st.floats(0.01, 5), st.integers(1, 3))
def test_normalisation_every_history(seqs, alpha, order):
    lm = train_pos_lm(seqs, order=order, alpha=alpha, tagset=TAGS)
    histories = list(lm.counts) + [("ADJ",) * (order - 1), (BOS,) * (order - 1)]
    for h in histories:
        total = math.fsum(lm.prob(t, h) for t in lm.events)
        assert total == pytest.approx(1.0, abs=1e-12)
        assert all(lm.prob(t, h) > 0 for t in lm.events)


def test_unseen_history_is_uniform():
    lm = train_pos_lm([["A", "B"]], alpha=0.3, tagset=["A", "B", "C"])
    assert lm.prob("A", ("C",)) == pytest.approx(1 / lm.V)


@settings(max_examples=30, deadline=None)
@given(seqs_strategy)
def test_log_prob_additive(seqs):
    lm = train_pos_lm(seqs, alpha=0.2, tagset=TAGS)
    total = sum(lm.sequence_log_prob(s) for s in seqs)
    assert total == pytest.approx(math.fsum(lm.sequence_log_prob(s) for s in seqs))
    assert lm.perplexity(seqs) == pytest.approx(
        math.exp(-total / sum(len(s) + 1 for s in seqs)))


def test_scaled_counts():
    seqs = [["A", "B", "A"], ["B"]]
    m = 3
    lm = train_pos_lm(seqs, alpha=0.7)
    lm_m = train_pos_lm(seqs * m, alpha=0.7)
    for h in lm.counts:
        c_h = sum(lm.counts[h].values())
        for t in lm.events:
            expected = (m * lm.counts[h][t] + 0.7) / (m * c_h + 0.7 * lm.V)
            assert lm_m.prob(t, h) == pytest.approx(expected, abs=1e-15)


def test_concat_single_parent_identical():
    seqs = [["A", "B"], ["B", "C", "A"]]
    a = concat_train([seqs], alpha=0.1)
    b = train_pos_lm(seqs, alpha=0.1)
    assert a.counts == b.counts and a.tagset == b.tagset


def test_concat_counts_add():
    p1 = [["A", "B"]]
    p2 = [["C", "C"]]
    lm = concat_train([p1, p2])
    l1, l2 = train_pos_lm(p1), train_pos_lm(p2)
    for h in set(l1.counts) | set(l2.counts):
        assert lm.counts[h] == l1.counts.get(h, Counter()) + l2.counts.get(h, Counter())
    assert lm.tagset == ["A", "B", "C"]


def test_concat_three_parents_matches_flattened():
    parents = [[["NOUN", "VERB"]], [["DET", "NOUN"], ["VERB"]], [["ADJ", "NOUN", "VERB"]]]
    flat = [s for p in parents for s in p]
    a = concat_train(parents, alpha=0.25)
    b = train_pos_lm(flat, alpha=0.25)
    for h in [(BOS,), ("NOUN",), ("ADJ",), ("VERB",)]:
        for t in b.events:
            assert a.prob(t, h) == b.prob(t, h)


def test_transition_arrays_rows_sum_to_one():
    lm = train_pos_lm([["A", "B", "C"], ["C", "A"]], alpha=0.1)
    start, trans, end = lm.transition_arrays()
    assert start.sum() + lm.prob(EOS, (BOS,)) == pytest.approx(1.0, abs=1e-12)
    for i in range(3):
        assert trans[i].sum() + end[i] == pytest.approx(1.0, abs=1e-12)


def test_transition_arrays_reject_trigram():
    with pytest.raises(ValueError):
        train_pos_lm([["A"]], order=3).transition_arrays()


@pytest.mark.parametrize("order", [1, 2, 3])
def test_file_round_trip(tmp_path, order):
    lm = train_pos_lm([["A", "B", "C"], ["C"], ["B", "B"]], order=order, alpha=0.1 + 1e-17,
                      tagset=["A", "B", "C", "D"])
    p = tmp_path / "lm.tsv"
    save_lm(lm, p, {"seed": 42})
    back = load_lm(p)
    assert back.order == lm.order
    assert back.alpha == lm.alpha
    assert back.tagset == lm.tagset
    assert back.counts == lm.counts
    save_lm(back, tmp_path / "again.tsv", {"seed": 42})
    assert (tmp_path / "again.tsv").read_bytes() == p.read_bytes()


def test_bad_lm_file(tmp_path):
    p = tmp_path / "lm.tsv"
    p.write_text("#order=2\nA\tB\t1\n", encoding="utf-8")
    with pytest.raises(FormatError):
        load_lm(p)


def test_invalid_model_construction():
    with pytest.raises(ValueError):
        PosLanguageModel(2, 0.0, ["A"])
