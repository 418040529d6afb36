import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from refbias.align import (align_words, alignment_cost, exact_index_match, levenshtein, order_correlation,
                           rows_to_csv, split_concat_counts, under_correction_rows, word_change)
from refbias.corpus import tokenize

VOCAB = ["a", "an", "the", "cat", "cats", "sat", "sit", "on", "mat", "x", "dog"]
words = st.lists(st.sampled_from(VOCAB), max_size=6)


def brute_force_cost(src, tgt):
    """Minimum cost over every partial injective matching."""
    best = alignment_cost(src, tgt, (None,) * len(src))
    m = len(tgt)
    for k in range(1, min(len(src), m) + 1):
        for rows in itertools.combinations(range(len(src)), k):
            for cols in itertools.permutations(range(m), k):
                mapping = [None] * len(src)
                for r, c in zip(rows, cols):
                    mapping[r] = c
                best = min(best, alignment_cost(src, tgt, mapping))
    return best


class TestLevenshtein:
    @pytest.mark.parametrize("a,b,d", [("", "", 0), ("a", "", 1), ("kitten", "sitting", 3),
                                       ("the", "a", 3), ("cat", "cats", 1)])
    def test_known(self, a, b, d):
        assert levenshtein(a, b) == d == levenshtein(b, a)


class TestAlignWords:
    def test_identity(self):
        a = align_words(["a", "b", "c"], ["a", "b", "c"])
        assert a.mapping == (0, 1, 2) and a.cost == 0

    def test_deletion(self):
        a = align_words(["a", "b"], ["a"])
        assert a.mapping == (0, None) and a.cost == 1

    def test_substitution_matches_brute_force(self):
        src, tgt = ["the", "cat", "sat"], ["a", "cat", "sat"]
        a = align_words(src, tgt)
        assert a.mapping == (0, 1, 2)
        assert a.cost == brute_force_cost(src, tgt) == 3

    def test_empty_sides(self):
        assert align_words([], []).cost == 0
        a = align_words(["ab"], [])
        assert a.mapping == (None,) and a.cost == 2
        assert align_words([], ["abc"]).unaligned_targets == [0]

    def test_ties_prefer_non_crossing(self):
        # either "a" can take the single target; the positional tie-break keeps the first
        assert align_words(["a", "b", "a"], ["a"]).mapping == (0, None, None)
        assert align_words(["x", "a", "a"], ["x", "a", "a"]).mapping == (0, 1, 2)

    def test_random_pairs_match_brute_force(self):
        rng = np.random.default_rng(7)
        for _ in range(500):
            src = list(rng.choice(VOCAB, size=rng.integers(0, 7)))
            tgt = list(rng.choice(VOCAB, size=rng.integers(0, 7)))
            assert align_words(src, tgt).cost == brute_force_cost(src, tgt)

    @given(words, words)
    def test_injective_and_bounded(self, src, tgt):
        a = align_words(src, tgt)
        used = [j for j in a.mapping if j is not None]
        assert len(used) == len(set(used))
        assert a.cost == alignment_cost(src, tgt, a.mapping)
        assert a.cost <= sum(map(len, src)) + sum(map(len, tgt))


class TestWordChange:
    @pytest.mark.parametrize("src,tgt,wc", [("a b c", "a b c", 0), ("a b c", "a x c", 1),
                                            ("a b c", "a c", 1), ("a c", "a b c", 1),
                                            ("the cat sat", "a cat sat on", 2)])
    def test_examples(self, src, tgt, wc):
        assert word_change(src.split(), tgt.split()) == wc

    @given(words)
    def test_self_is_zero(self, s):
        assert word_change(s, s) == 0

    @given(words, words)
    def test_positive_when_different(self, s, t):
        assert (word_change(s, t) >= 1) == (s != t)


class TestOrderCorrelation:
    def test_identity(self):
        assert order_correlation("a b c".split(), "a b c".split()) == 1.0

    def test_reversal(self):
        assert order_correlation("a b c".split(), "c b a".split()) == -1.0

    def test_single_swap(self):
        # 1 - 6 * (0 + 1 + 1) / (3 * 8)
        assert order_correlation("a b c".split(), "a c b".split()) == 0.5

    def test_undefined_below_two_pairs(self):
        assert order_correlation(["a"], ["a"]) is None
        assert order_correlation([], ["a", "b"]) is None

    def test_relabeling_invariance(self):
        assert order_correlation("p q r".split(), "p r q".split()) == \
            order_correlation("a b c".split(), "a c b".split())


class TestSegmentation:
    def test_split(self):
        assert split_concat_counts(["a b ."], ["a . b ."]) == (1, 0)

    def test_concat(self):
        assert split_concat_counts(["a . b ."], ["a b ."]) == (0, 1)

    def test_same(self):
        assert split_concat_counts(["a b .", "c !"], ["a c .", "d ?"]) == (0, 0)

    def test_untokenized_text(self):
        assert split_concat_counts(["I came. I saw."], ["I came and saw."]) == (0, 1)


class TestExactIndexMatch:
    def test_same_changed_index(self):
        assert exact_index_match("a b c".split(), "a x c".split(), "a y c".split())

    def test_changed_vs_unchanged(self):
        assert not exact_index_match("a b c".split(), "a x c".split(), "a b c".split())

    def test_deletion_counts_as_change(self):
        assert exact_index_match("a b c".split(), "a c".split(), "a z c".split())

    @given(words, words, words)
    def test_reflexive_and_symmetric(self, x, c, d):
        assert exact_index_match(x, c, c)
        assert exact_index_match(x, c, d) == exact_index_match(x, d, c)


class TestUnderCorrectionReport:
    def test_rows_and_csv(self):
        rows = under_correction_rows(["He go home .", "A b . C d ."], ["He goes home .", "A b c d ."])
        assert [r.word_change for r in rows] == [1, 1]
        assert (rows[1].split, rows[1].concat) == (0, 1)
        text = rows_to_csv(rows)
        assert text.splitlines()[0] == "index,word_change,rho,split,concat"
        assert text.splitlines()[1] == "0,1,1.0,0,0"

    def test_punctuation_ignored_for_word_change(self):
        (row,) = under_correction_rows(["He left"], ["He left ."])
        assert row.word_change == 0
        assert tokenize("He left .").tokens[-1] == "."
