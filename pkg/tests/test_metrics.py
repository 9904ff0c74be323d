"""WER, CER, and BLEU-4 against brute-force oracles and hand-worked values."""

import math

import numpy as np
from numpy.testing import assert_allclose

from dmlm import bleu4, cer, corpus_bleu4, edit_distance, wer


def oracle_edit_distance(a, b):
    """Textbook dynamic program, quadratic space."""
    la, lb = len(a), len(b)
    dp = [[0] * (lb + 1) for _ in range(la + 1)]
    for i in range(la + 1):
        dp[i][0] = i
    for j in range(lb + 1):
        dp[0][j] = j
    for i in range(1, la + 1):
        for j in range(1, lb + 1):
            cost = 0 if a[i - 1] == b[j - 1] else 1
            dp[i][j] = min(dp[i - 1][j] + 1, dp[i][j - 1] + 1, dp[i - 1][j - 1] + cost)
    return dp[la][lb]


class TestEditDistance:
    def test_matches_oracle_on_random_pairs(self, rng):
        alphabet = "abcde"
        for _ in range(500):
            a = "".join(alphabet[i] for i in rng.integers(5, size=rng.integers(0, 12)))
            b = "".join(alphabet[i] for i in rng.integers(5, size=rng.integers(0, 12)))
            assert edit_distance(a, b) == oracle_edit_distance(a, b)

    def test_known_values(self):
        assert edit_distance("kitten", "sitting") == 3
        assert edit_distance("", "abc") == 3
        assert edit_distance("abc", "") == 3
        assert edit_distance("same", "same") == 0

    def test_arbitrary_tokens(self):
        assert edit_distance(["green", "eggs"], ["green", "ham"]) == 1
        assert edit_distance([1, 2, 3], [1, 3]) == 1


class TestWer:
    def test_basic(self):
        assert wer("the cat sat", "the cat sat") == 0.0
        assert wer("the cat sat", "the dog sat") == 1 / 3

    def test_string_and_list_inputs_agree(self):
        assert wer("a b c", ["a", "b", "c"]) == 0.0

    def test_exceeds_one(self):
        # one reference word, eight hypothesis words: 1 sub + 7 ins
        assert wer("a", "b c d e f g h i") == 8.0

    def test_seven_case(self):
        assert wer("a", "b c d e f g h") == 7.0

    def test_empty_reference_convention(self):
        assert wer("", "x y z") == 3.0
        assert wer("", "") == 0.0

    def test_matches_oracle_ratio(self, rng):
        words = ["ab", "cd", "ef", "gh"]
        for _ in range(200):
            ref = [words[i] for i in rng.integers(4, size=rng.integers(0, 8))]
            hyp = [words[i] for i in rng.integers(4, size=rng.integers(0, 8))]
            expect = oracle_edit_distance(ref, hyp) / max(1, len(ref))
            assert wer(ref, hyp) == expect


class TestCer:
    def test_character_granularity(self):
        assert cer("abc", "axc") == 1 / 3
        assert cer("ab", "ab ") == 0.5  # space counts as a character

    def test_empty_reference(self):
        assert cer("", "xy") == 2.0

    def test_matches_oracle(self, rng):
        alphabet = "ab "
        for _ in range(200):
            ref = "".join(alphabet[i] for i in rng.integers(3, size=rng.integers(0, 10)))
            hyp = "".join(alphabet[i] for i in rng.integers(3, size=rng.integers(0, 10)))
            assert cer(ref, hyp) == oracle_edit_distance(ref, hyp) / max(1, len(ref))


def oracle_bleu(refs, hyp, smooth):
    """Direct transcription of the BLEU-4 definition."""
    hyp = hyp.split() if isinstance(hyp, str) else list(hyp)
    refs = [r.split() if isinstance(r, str) else list(r) for r in refs]
    if not hyp:
        return 0.0
    log_sum = 0.0
    for n in range(1, 5):
        hyp_ngrams = [tuple(hyp[i:i + n]) for i in range(len(hyp) - n + 1)]
        matched = 0
        for g in set(hyp_ngrams):
            best = max((sum(1 for i in range(len(r) - n + 1) if tuple(r[i:i + n]) == g)
                        for r in refs), default=0)
            matched += min(hyp_ngrams.count(g), best)
        total = len(hyp_ngrams)
        if smooth and n >= 2:
            matched, total = matched + 1, total + 1
        if matched == 0 or total == 0:
            return 0.0
        log_sum += math.log(matched / total)
    ref_len = min((abs(len(r) - len(hyp)), len(r)) for r in refs)[1]
    bp = 1.0 if len(hyp) >= ref_len else math.exp(1.0 - ref_len / len(hyp))
    return bp * math.exp(log_sum / 4.0) * 100.0


class TestBleu4:
    def test_perfect_match_scores_100(self):
        assert_allclose(bleu4(["the cat sat on the mat"],
                              "the cat sat on the mat", smooth=False), 100.0)

    def test_hand_worked_example(self):
        # hyp: "the the the", ref: "the cat": clipped unigram matches = 1
        # (ref has one "the"), so p1 = 1/3; no bigram matches; smoothing
        # gives p2 = 1/3, p3 = 1/2, p4 = 1/1; bp = exp(1 - 2/3)
        hyp = "the the the"
        ref = "the cat"
        p = (1 / 3) * (1 / 3) * (1 / 2) * 1.0
        expect = math.exp(1 - 2 / 3) * p ** 0.25 * 100.0
        # hyp longer than ref, so no brevity penalty
        expect = p ** 0.25 * 100.0
        assert_allclose(bleu4([ref], hyp), expect, rtol=1e-12)

    def test_empty_hypothesis_scores_zero(self):
        assert bleu4(["anything"], "") == 0.0

    def test_no_match_unsmoothed_is_zero(self):
        assert bleu4(["a b c d"], "x y z w", smooth=False) == 0.0

    def test_brevity_penalty_uses_closest_reference(self):
        # hyp of length 2; refs of lengths 2 and 6: closest is 2, no penalty
        score_close = bleu4(["a b", "a b c d e f"], "a b")
        assert_allclose(score_close, bleu4(["a b"], "a b"), rtol=1e-12)

    def test_closest_tie_prefers_shorter(self):
        # hyp length 3, refs lengths 2 and 4 are equally distant; shorter
        # wins, so hyp >= ref_len and there is no penalty
        hyp = "a b c"
        stats_score = bleu4(["a b", "a b c d"], hyp)
        no_penalty = bleu4(["a b"], hyp)
        # matching n-grams differ between refs, so compare to the oracle
        assert_allclose(stats_score, oracle_bleu(["a b", "a b c d"], hyp, True),
                        rtol=1e-12)
        assert no_penalty > 0

    def test_matches_oracle_on_random_pairs(self, rng):
        vocab = ["a", "b", "c", "d"]
        for _ in range(300):
            hyp = [vocab[i] for i in rng.integers(4, size=rng.integers(1, 10))]
            refs = [[vocab[i] for i in rng.integers(4, size=rng.integers(1, 10))]
                    for _ in range(int(rng.integers(1, 3)))]
            for smooth in (True, False):
                assert_allclose(bleu4(refs, hyp, smooth=smooth),
                                oracle_bleu(refs, hyp, smooth), rtol=1e-12)


class TestCorpusBleu4:
    def test_pools_counts_not_scores(self):
        refs = ["the cat", "a dog barked loudly today"]
        hyps = ["the cat", "a dog barked loudly today"]
        assert_allclose(corpus_bleu4(refs, hyps, smooth=False), 100.0)

    def test_differs_from_mean_of_sentence_scores(self):
        refs = ["a b c d e", "x y"]
        hyps = ["a b c d e", "x q"]
        corpus = corpus_bleu4(refs, hyps)
        mean = (bleu4([refs[0]], hyps[0]) + bleu4([refs[1]], hyps[1])) / 2
        assert corpus != mean

    def test_matches_pooled_oracle(self, rng):
        vocab = ["a", "b", "c"]
        refs, hyps = [], []
        for _ in range(20):
            refs.append([vocab[i] for i in rng.integers(3, size=rng.integers(1, 8))])
            hyps.append([vocab[i] for i in rng.integers(3, size=rng.integers(1, 8))])
        pooled = [0, 0, 0, 0, 0, 0, 0, 0]  # matched/total per order
        hyp_total = ref_total = 0
        for ref, hyp in zip(refs, hyps):
            for n in range(1, 5):
                hg = [tuple(hyp[i:i + n]) for i in range(len(hyp) - n + 1)]
                matched = 0
                for g in set(hg):
                    rc = sum(1 for i in range(len(ref) - n + 1) if tuple(ref[i:i + n]) == g)
                    matched += min(hg.count(g), rc)
                pooled[2 * (n - 1)] += matched
                pooled[2 * (n - 1) + 1] += len(hg)
            hyp_total += len(hyp)
            ref_total += len(ref)
        log_sum = 0.0
        ok = True
        for n in range(1, 5):
            matched, total = pooled[2 * (n - 1)], pooled[2 * (n - 1) + 1]
            if n >= 2:
                matched, total = matched + 1, total + 1
            if matched == 0 or total == 0:
                ok = False
                break
            log_sum += math.log(matched / total)
        if ok:
            bp = 1.0 if hyp_total >= ref_total else math.exp(1 - ref_total / hyp_total)
            expect = bp * math.exp(log_sum / 4) * 100.0
            assert_allclose(corpus_bleu4(refs, hyps), expect, rtol=1e-12)
