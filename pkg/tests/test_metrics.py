import math
import random
from functools import lru_cache

import pytest

from dasearch.metrics import (
    MetricsError,
    bleu1,
    delta,
    evaluate_system,
    lcs_length,
    micro_bleu1,
    novelty_n,
    repetition_n,
    repetition_position_hist,
    rouge1,
    rougeL,
    zipf_report,
)

from conftest import make_corpus, make_vocab


# --- novelty ------------------------------------------------------------------


def test_novelty_two_of_three_unigrams_novel():
    assert math.isclose(novelty_n(["a", "b", "c"], ["a"], 1), 200 / 3, abs_tol=1e-9)


def test_novelty_verbatim_extract_is_zero():
    source = ["x", "a", "b", "c", "y"]
    for n in (1, 2, 3):
        assert novelty_n(["a", "b", "c"], source, n) == 0.0


def test_novelty_single_novel_trigram_is_hundred():
    assert novelty_n(["x", "y", "z"], ["a", "b"], 3) == 100.0


def test_novelty_undefined_for_short_summary():
    assert novelty_n(["a", "b"], ["a"], 3) is None


# --- repetition ---------------------------------------------------------------


def test_repetition_triple_token():
    assert math.isclose(repetition_n(["a", "a", "a"], 1), 200 / 3, abs_tol=1e-9)


def test_repetition_distinct_tokens_zero():
    assert repetition_n(["a", "b"], 1) == 0.0


def test_repetition_trigram_duplicated_mass():
    toks = ["the", "cat", "sat", "the", "cat", "sat", "the", "cat"]
    assert repetition_n(toks, 3) == 50.0


def test_repetition_zero_iff_all_types_unique():
    rng = random.Random(3)
    for _ in range(50):
        toks = [rng.randrange(6) for _ in range(rng.randint(2, 12))]
        grams = [tuple(toks[i:i + 2]) for i in range(len(toks) - 1)]
        assert (repetition_n(toks, 2) == 0.0) == (len(set(grams)) == len(grams))


# --- delta ----------------------------------------------------------------------


def test_delta_exact_subtraction():
    assert delta(5.0, 5.0) == 0.0
    assert math.isclose(delta(61.04, 101.41), -40.37, abs_tol=1e-9)


def test_delta_sign_convention():
    assert delta(10.0, 30.0) < 0  # model larger than human -> negative


def test_delta_rejects_non_finite():
    with pytest.raises(MetricsError):
        delta(float("nan"), 1.0)


# --- BLEU -----------------------------------------------------------------------


def test_bleu1_identity():
    assert bleu1(["a", "b"], ["a", "b"]) == 1.0


def test_bleu1_clipped_precision():
    assert math.isclose(bleu1(["a", "a", "b"], ["a", "b", "c"]), 2 / 3, abs_tol=1e-9)


def test_bleu1_brevity_penalty_bites():
    score = bleu1(["a"], ["a", "b", "c"])
    assert math.isclose(score, math.exp(1 - 3), abs_tol=1e-12)
    assert score < 1.0


def test_micro_bleu1_pools_counts():
    pairs = [(["a", "a", "b"], ["a", "b", "c"]), (["a"], ["a"])]
    # clipped 2 + 1 = 3 over hyp length 4; ref length 4 -> no brevity penalty
    assert math.isclose(micro_bleu1(pairs), 0.75, abs_tol=1e-12)


# --- ROUGE ----------------------------------------------------------------------


def test_rouge1_identity_and_disjoint():
    assert rouge1(["a", "b"], ["a", "b"]) == (1.0, 1.0, 1.0)
    assert rouge1(["a"], ["b", "c"]) == (0.0, 0.0, 0.0)


def test_rouge1_hand_counts():
    r, p, f = rouge1(["a", "b"], ["a", "c", "d"])
    assert math.isclose(r, 1 / 3, abs_tol=1e-12)
    assert math.isclose(p, 1 / 2, abs_tol=1e-12)
    assert math.isclose(f, 0.4, abs_tol=1e-12)


def test_rouge_precision_recall_symmetry():
    rng = random.Random(4)
    for _ in range(30):
        h = [rng.randrange(5) for _ in range(rng.randint(1, 8))]
        r = [rng.randrange(5) for _ in range(rng.randint(1, 8))]
        assert math.isclose(rouge1(h, r)[1], rouge1(r, h)[0], abs_tol=1e-12)
        assert math.isclose(rougeL(h, r)[1], rougeL(r, h)[0], abs_tol=1e-12)


def test_rougeL_hand_dp():
    r, p, f = rougeL(["a", "b", "c"], ["a", "c", "d"])
    assert math.isclose(r, 2 / 3, abs_tol=1e-12)
    assert math.isclose(p, 2 / 3, abs_tol=1e-12)
    assert math.isclose(f, 2 / 3, abs_tol=1e-12)


def test_rougeL_reversed_distinct_tokens():
    r, _, _ = rougeL(["c", "b", "a"], ["a", "b", "c"])
    assert r == 1 / 3  # LCS length 1


def test_rougeL_identity():
    assert rougeL(["a", "b"], ["a", "b"])[2] == 1.0


def test_lcs_matches_memoized_recursion():
    @lru_cache(maxsize=None)
    def rec(a, b):
        if not a or not b:
            return 0
        if a[-1] == b[-1]:
            return rec(a[:-1], b[:-1]) + 1
        return max(rec(a[:-1], b), rec(a, b[:-1]))

    rng = random.Random(5)
    for _ in range(200):
        a = tuple(rng.randrange(6) for _ in range(rng.randint(0, 20)))
        b = tuple(rng.randrange(6) for _ in range(rng.randint(0, 20)))
        assert lcs_length(a, b) == rec(a, b)


# --- corpus-level reports ---------------------------------------------------------


def test_zipf_report_ranks_by_frequency():
    assert zipf_report([["a", "a", "b"]], 5) == [(1, "a", 2), (2, "b", 1)]
    ranks = zipf_report([["a", "b", "b", "c", "c", "c"]], 10)
    freqs = [f for _, _, f in ranks]
    assert freqs == sorted(freqs, reverse=True)


def test_position_histogram_single_repeat():
    edges, dens = repetition_position_hist([["x", "y", "z", "x", "y", "z"]],
                                           n=3, buckets=10)
    # the repeated trigram starts at index 3 of 4 -> relative position 0.75
    assert dens[7] == 1.0
    assert sum(dens) == 1.0


def test_position_histogram_clean_summaries_contribute_nothing():
    _, dens = repetition_position_hist([["a", "b", "c", "d"]], n=3, buckets=4)
    assert sum(dens) == 0.0


def test_relabeling_invariance():
    rng = random.Random(6)
    mapping = {i: 100 + i for i in range(6)}
    for _ in range(30):
        summary = [rng.randrange(6) for _ in range(rng.randint(3, 10))]
        source = [rng.randrange(6) for _ in range(rng.randint(3, 10))]
        relabeled_s = [mapping[t] for t in summary]
        relabeled_x = [mapping[t] for t in source]
        for n in (1, 2, 3):
            assert novelty_n(summary, source, n) == novelty_n(relabeled_s, relabeled_x, n)
            assert repetition_n(summary, n) == repetition_n(relabeled_s, n)


# --- evaluate_system --------------------------------------------------------------


@pytest.fixture
def hand_corpus():
    vocab = make_vocab("a", "b", "c", "d", "x")
    return make_corpus(vocab, [
        ("p0", ["a", "b", "c", "d"], ["a", "b", "c"]),
        ("p1", ["b", "c", "d", "a"], ["b", "c", "d"]),
        ("p2", ["c", "d", "a", "b"], ["c", "d", "x"]),
    ])


def test_self_evaluation_is_perfect(hand_corpus):
    gens = {p.id: p.reference for p in hand_corpus.pairs}
    report = evaluate_system(gens, hand_corpus, system="self")
    assert report.d_len == report.d_nov1 == report.d_rep1 == report.d_rep3 == 0.0
    assert report.bleu1 == 100.0
    assert report.rouge1_f == 100.0


def test_report_matches_per_pair_recomputation(hand_corpus):
    gens = {"p0": (3, 4), "p1": (4, 5, 6), "p2": (5,)}
    report = evaluate_system(gens, hand_corpus)
    pairs = hand_corpus.pairs
    assert report.len_mean == sum(len(gens[p.id]) for p in pairs) / 3
    expected_b1 = 100.0 * sum(bleu1(gens[p.id], p.reference) for p in pairs) / 3
    assert math.isclose(report.bleu1, expected_b1, abs_tol=1e-9)
    expected_rl = 100.0 * sum(rougeL(gens[p.id], p.reference)[2] for p in pairs) / 3
    assert math.isclose(report.rougeL_f, expected_rl, abs_tol=1e-9)
    expected_nov1 = sum(novelty_n(gens[p.id], p.source, 1) for p in pairs) / 3
    human_nov1 = sum(novelty_n(p.reference, p.source, 1) for p in pairs) / 3
    assert math.isclose(report.nov1, expected_nov1, abs_tol=1e-9)
    assert math.isclose(report.d_nov1, human_nov1 - expected_nov1, abs_tol=1e-9)


def test_report_deterministic(hand_corpus):
    gens = {p.id: p.reference[:2] for p in hand_corpus.pairs}
    assert evaluate_system(gens, hand_corpus) == evaluate_system(gens, hand_corpus)


def test_missing_generation_lists_ids(hand_corpus):
    with pytest.raises(MetricsError, match="p2"):
        evaluate_system({"p0": (3,), "p1": (3,)}, hand_corpus)


def test_bleu_micro_flag_changes_aggregation(hand_corpus):
    gens = {"p0": (3, 3, 4), "p1": (4,), "p2": (5, 6)}
    macro = evaluate_system(gens, hand_corpus)
    micro = evaluate_system(gens, hand_corpus, bleu_micro=True)
    expected = 100.0 * micro_bleu1([(gens[p.id], p.reference)
                                    for p in hand_corpus.pairs])
    assert math.isclose(micro.bleu1, expected, abs_tol=1e-9)
    assert micro.bleu1 != macro.bleu1


def test_pooled_flag_pools_instances(hand_corpus):
    gens = {"p0": (3, 3), "p1": (4, 4, 5, 6), "p2": (5,)}
    pooled = evaluate_system(gens, hand_corpus, pooled=True)
    # rep-1 duplicates: 1 of 2, 1 of 4, 0 of 1 -> 2 of 7 instances
    assert math.isclose(pooled.rep1, 200.0 / 7, abs_tol=1e-9)
    macro = evaluate_system(gens, hand_corpus)
    # macro averages per summary instead: mean(50, 25, 0) = 25
    assert math.isclose(macro.rep1, 25.0, abs_tol=1e-9)
    assert not math.isclose(pooled.rep1, macro.rep1, abs_tol=1e-9)


def test_percentage_metrics_bounded(hand_corpus):
    gens = {"p0": (3, 3, 3, 3), "p1": (6, 6), "p2": (4, 5)}
    report = evaluate_system(gens, hand_corpus)
    for value in (report.nov1, report.nov3, report.rep1, report.rep3,
                  report.bleu1, report.rouge1_f, report.rougeL_f):
        assert 0.0 <= value <= 100.0
