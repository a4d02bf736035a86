import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import AMBIGUOUS, CUE_WORDS
from cslid.inference import EmptyInput, LabelSubset, WordLogitMatrix, full_subset, restrict_labels
from cslid.masklid import (
    ConfigError,
    MaskLIDConfig,
    MaskState,
    Termination,
    column_ranks,
    joined_byte_len,
    masklid,
    residual_byte_len,
    top_rank_member,
    validate_feature_set,
)

A, B, C = "aaa_Latn", "bbb_Latn", "ccc_Latn"
SMALL = dict(alpha=1, beta=2, tau=10, lam=2)


def cfg(**kw):
    return MaskLIDConfig(**{**SMALL, **kw})


def matrix(values):
    values = np.asarray(values, dtype=np.float64)
    n, w = values.shape
    sub = LabelSubset(tuple(range(n)), tuple(f"l{i}" for i in range(n)))
    return WordLogitMatrix(sub, tuple(f"w{t}" for t in range(w)), np.zeros((w, 1)), values)


class TestConfig:
    def test_defaults(self):
        c = MaskLIDConfig()
        assert (c.alpha, c.beta, c.tau, c.lam) == (3, 15, 20, 2)
        assert c.feature_set_confidence == 0.9
        assert c.beta_retry_factor == 2
        assert c.step1_confidence is None

    @pytest.mark.parametrize("alpha,beta", [(3, 3), (5, 2), (0, 4)])
    def test_beta_must_exceed_alpha(self, alpha, beta):
        with pytest.raises(ConfigError):
            MaskLIDConfig(alpha=alpha, beta=beta)

    @pytest.mark.parametrize("kw", [dict(tau=-1), dict(lam=0), dict(feature_set_confidence=0),
                                    dict(feature_set_confidence=1.5), dict(beta_retry_factor=0)])
    def test_invalid(self, kw):
        with pytest.raises(ConfigError):
            MaskLIDConfig(**kw)

    @given(st.integers(1, 50), st.integers(1, 50))
    def test_invariant_enforced(self, a, b):
        if b > a:
            assert MaskLIDConfig(alpha=a, beta=b).beta > a
        else:
            with pytest.raises(ConfigError):
                MaskLIDConfig(alpha=a, beta=b)

    def test_from_file(self, tmp_path):
        p = tmp_path / "masklid.conf"
        p.write_text("# tuned\nalpha = 2\nbeta=9\nlambda = 3  # up to three languages\nconf = 0.8\n", encoding="utf-8")
        c = MaskLIDConfig.from_file(p)
        assert (c.alpha, c.beta, c.lam, c.feature_set_confidence, c.tau) == (2, 9, 3, 0.8, 20)

    def test_from_file_errors(self, tmp_path):
        p = tmp_path / "bad.conf"
        p.write_text("alpha 2\n", encoding="utf-8")
        with pytest.raises(ConfigError):
            MaskLIDConfig.from_file(p)
        p.write_text("gamma = 2\n", encoding="utf-8")
        with pytest.raises(ConfigError):
            MaskLIDConfig.from_file(p)
        p.write_text("alpha = x\n", encoding="utf-8")
        with pytest.raises(ConfigError):
            MaskLIDConfig.from_file(p)

    def test_overrides_keep_base(self):
        base = MaskLIDConfig(alpha=2, beta=9)
        c = MaskLIDConfig.from_mapping({"alpha": None, "tau": "25"}, base=base)
        assert (c.alpha, c.beta, c.tau) == (2, 9, 25)


class TestTopRankMember:
    def test_brute_force_column(self):
        V = matrix([[3.0], [2.0], [1.0]])
        # sorted column: 3, 2, 1 -> value 1.0 has rank 2
        assert not top_rank_member(V, 2, 0, 2)
        assert top_rank_member(V, 1, 0, 2)
        assert top_rank_member(V, 0, 0, 1)

    def test_k_equal_n_always_true(self):
        V = matrix(np.random.default_rng(1).normal(size=(5, 7)))
        assert all(top_rank_member(V, r, t, 5) for r in range(5) for t in range(7))

    def test_ties_prefer_lower_label_index(self):
        V = matrix([[1.0], [1.0], [1.0]])
        assert top_rank_member(V, 0, 0, 1)
        assert not top_rank_member(V, 1, 0, 1)
        assert top_rank_member(V, 1, 0, 2)

    @given(st.lists(st.lists(st.integers(-3, 3), min_size=4, max_size=4), min_size=2, max_size=6),
           st.integers(1, 6), st.integers(-5, 5))
    def test_agrees_with_sort_and_shift_invariant(self, rows, k, shift):
        V = matrix(rows)
        n = len(rows)
        for t in range(4):
            order = sorted(range(n), key=lambda r: (-rows[r][t], r))
            for r in range(n):
                expected = order.index(r) < k
                assert top_rank_member(V, r, t, k) == expected
                assert (column_ranks(V, r)[t] < k) == expected
        shifted = matrix(np.asarray(rows) + shift)
        for r in range(n):
            np.testing.assert_array_equal(column_ranks(V, r), column_ranks(shifted, r))

    def test_k_must_be_positive(self):
        with pytest.raises(ValueError):
            top_rank_member(matrix([[1.0]]), 0, 0, 0)


class TestResidual:
    def test_hand_count(self):
        s = MaskState(["abcde", "fgh", "ijkl"])
        s.mask([1])
        assert residual_byte_len(s) == 5 + 1 + 4

    def test_all_and_none_masked(self):
        s = MaskState(["bir", "kahve", "dükkanında"])
        assert residual_byte_len(s) == len("bir kahve dükkanında".encode())
        s.mask([0, 1, 2])
        assert residual_byte_len(s) == 0

    def test_masking_is_monotone_and_shrinks(self):
        s = MaskState(["a", "bb", "ccc"])
        before = residual_byte_len(s)
        assert s.mask([2]) == 1
        assert s.mask([2]) == 0
        assert residual_byte_len(s) < before
        assert s.masked == [False, False, True]

    def test_joined_byte_len(self):
        assert joined_byte_len([]) == 0
        assert joined_byte_len(["ş"]) == 2


class TestValidateFeatureSet:
    def test_empty_rejected(self, cue_model):
        assert validate_feature_set([], A, cue_model, full_subset(cue_model), cfg()) == (False, 0.0)

    def test_long_confident_set_accepted(self, cue_model):
        ok, p = validate_feature_set(["bbbb", "baba", "bcbc"], B, cue_model, full_subset(cue_model), cfg())
        assert ok and p >= 0.9

    def test_other_label_rejected_regardless_of_length(self, cue_model):
        words = ["bbbb", "baba", "bcbc", "bdbd", "bebe"]
        ok, p = validate_feature_set(words, A, cue_model, full_subset(cue_model), cfg(tau=1))
        assert not ok and p < 0.9

    def test_short_set_rejected(self, cue_model):
        ok, p = validate_feature_set(["bbbb", "baba"], B, cue_model, full_subset(cue_model), cfg(tau=10))
        assert not ok and p >= 0.9  # confident, but only 9 bytes


class TestMaskLID:
    def test_two_languages(self, cue_model):
        res = masklid("aaaa abab acac adad bbbb baba bcbc", cue_model, full_subset(cue_model), cfg())
        assert res.labels == [A, B]
        a, b = res.assignments
        assert a.words == ("aaaa", "abab", "acac", "adad") and a.iteration == 1
        assert b.words == ("bbbb", "baba", "bcbc") and b.iteration == 2
        assert b.word_indices == (4, 5, 6)
        assert res.termination is Termination.RESIDUAL_TOO_SHORT

    def test_positions_do_not_matter(self, cue_model):
        res = masklid("bbbb aaaa baba abab acac bcbc adad", cue_model, full_subset(cue_model), cfg())
        assert res.labels == [A, B]
        assert res.assignments[1].words == ("bbbb", "baba", "bcbc")

    def test_monolingual(self, cue_model):
        res = masklid("aaaa abab acac adad aeae", cue_model, full_subset(cue_model), cfg())
        assert res.labels == [A]
        assert res.termination is Termination.RESIDUAL_TOO_SHORT

    def test_short_insert_is_not_reported(self, cue_model):
        # the lone "bbbb" is below tau once the dominant words are masked
        res = masklid("aaaa abab acac adad aeae bbbb", cue_model, full_subset(cue_model), cfg())
        assert res.labels == [A]
        assert res.termination is Termination.RESIDUAL_TOO_SHORT

    def test_beta_retry_widens_assignment(self, cue_model):
        # the three aaa words span 14 bytes < tau=15; doubling beta admits "bbbb"
        sentence = "aaaa abab acac bbbb"
        res = masklid(sentence, cue_model, full_subset(cue_model), cfg(tau=15))
        assert res.labels == [A]
        assert res.assignments[0].words == ("aaaa", "abab", "acac", "bbbb")
        no_retry = masklid(sentence, cue_model, full_subset(cue_model), cfg(tau=15, beta_retry_factor=1))
        assert no_retry.labels == []
        assert no_retry.rounds[0].label == A and not no_retry.rounds[0].accepted

    def test_beta_retry_never_masks_more(self, cue_model):
        res = masklid("aaaa abab acac bbbb", cue_model, full_subset(cue_model), cfg(tau=15))
        assert res.rounds[0].masked == (0, 1, 2)

    def test_rejected_round_still_masks(self, cue_model):
        # aaa wins round one on many short words but its set is not confident
        sentence = "av aw ax ay az bbbb baba bcbc bdbd"
        res = masklid(sentence, cue_model, full_subset(cue_model), cfg(tau=15))
        first, second = res.rounds
        assert first.label == A and not first.accepted
        assert first.masked == (0, 1, 2, 3, 4)
        assert second.label == B and second.accepted
        assert res.labels == [B]
        assert res.assignments[0].iteration == 2

    def test_repeat_language_terminates(self, cue_model):
        sentence = "aaaa abab acac mixb mixc mixb mixc"
        res = masklid(sentence, cue_model, full_subset(cue_model), cfg(lam=3))
        assert res.labels == [A]
        assert res.termination is Termination.REPEAT_LANGUAGE
        assert [r.label for r in res.rounds] == [A]
        assert len(res.rounds) == 1

    def test_no_progress_terminates(self, cue_model):
        # aaa never ranks first in any column, so nothing gets masked
        res = masklid("mixb mixc mixb mixc mixb", cue_model, full_subset(cue_model), cfg(lam=5))
        assert len(res.rounds) == 1
        assert res.rounds[0].masked == ()
        assert res.termination in (Termination.REPEAT_LANGUAGE, Termination.LOW_CONFIDENCE_FEATURE_SET)

    def test_lambda_bound(self, cue_model):
        sentence = "aaaa abab acac adad aeae bbbb baba bcbc bdbd cccc caca cbcb"
        three = masklid(sentence, cue_model, full_subset(cue_model), cfg(lam=3, tau=5, feature_set_confidence=0.7))
        assert three.labels == [A, B, C]
        two = masklid(sentence, cue_model, full_subset(cue_model), cfg(lam=2, tau=5, feature_set_confidence=0.7))
        assert two.labels == [A, B]
        assert two.termination is Termination.LAMBDA_REACHED
        one = masklid(sentence, cue_model, full_subset(cue_model), cfg(lam=1, tau=5))
        assert len(one.labels) == 1
        assert one.termination is Termination.LAMBDA_REACHED

    def test_step1_confidence(self, cue_model):
        res = masklid("mixb mixc", cue_model, full_subset(cue_model), cfg(step1_confidence=0.99))
        assert res.labels == []
        assert res.termination is Termination.LOW_CONFIDENCE_PREDICTION

    def test_restricted_subset(self, cue_model):
        # bbb is outside the subset, so its words fall to ccc, which cannot
        # reach the confidence on them
        sub, _ = restrict_labels(cue_model, [A, C])
        res = masklid("aaaa abab acac adad bbbb baba bcbc", cue_model, sub, cfg(beta=2))
        assert res.labels == [A]
        assert [r.label for r in res.rounds] == [A, C]
        assert not res.rounds[1].accepted

    def test_empty(self, cue_model):
        with pytest.raises(EmptyInput):
            masklid("  ", cue_model, full_subset(cue_model))

    def test_to_dict(self, cue_model):
        d = masklid("aaaa abab acac adad bbbb baba bcbc", cue_model, full_subset(cue_model), cfg()).to_dict()
        assert d["labels"] == [A, B]
        assert d["assignments"][1]["words"] == ["bbbb", "baba", "bcbc"]
        assert d["termination"] == "residual_too_short"


VOCAB = [w for ws in CUE_WORDS.values() for w in ws] + list(AMBIGUOUS) + ["zzzz"]


@settings(max_examples=150, deadline=None)
@given(st.lists(st.sampled_from(VOCAB), min_size=1, max_size=14),
       st.integers(1, 2), st.integers(0, 25), st.integers(1, 4), st.sampled_from([0.5, 0.9, 0.99]))
def test_invariants(cue_model, words, alpha, tau, lam, conf):
    c = MaskLIDConfig(alpha=alpha, beta=alpha + 1, tau=tau, lam=lam, feature_set_confidence=conf)
    sub = full_subset(cue_model)
    sentence = " ".join(words)
    res = masklid(sentence, cue_model, sub, c)

    assert len(res.rounds) <= lam
    assert len(res.labels) <= lam
    assert len(set(res.labels)) == len(res.labels)
    for a in res.assignments:
        assert a.byte_length >= tau
        assert a.probability >= conf
        assert a.byte_length == joined_byte_len(a.words)
    masked_before = set()
    for r in res.rounds:
        assert masked_before <= set(r.masked)
        # words assigned in a round were unmasked when the round started
        assert not masked_before & set(r.assigned)
        masked_before = set(r.masked)
    again = masklid(sentence, cue_model, sub, c)
    assert again == res
