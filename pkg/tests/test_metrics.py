"""Accuracy and similarity metric oracles."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from eegunlearn import bca, ncc, rca


def brute_force_scores(pred, true):
    """Independent per-class counter used as the metric oracle."""
    classes = sorted(set(true))
    per_class = []
    for k in classes:
        hit = sum(1 for p, t in zip(pred, true) if t == k and p == k)
        total = sum(1 for t in true if t == k)
        per_class.append(hit / total)
    raw = sum(1 for p, t in zip(pred, true) if p == t) / len(true)
    return sum(per_class) / len(per_class), raw, per_class


class TestRca:
    def test_identity(self):
        assert rca([1, 2, 3], [1, 2, 3]) == 1.0

    def test_all_wrong(self):
        assert rca([2, 3, 1], [1, 2, 3]) == 0.0

    def test_hand_count(self):
        assert rca([1, 1, 2, 2], [1, 2, 2, 2]) == 0.75

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            rca([1, 2], [1, 2, 3])

    def test_empty(self):
        with pytest.raises(ValueError):
            rca([], [])


class TestBca:
    def test_balanced_equals_rca(self):
        pred = [1, 2, 1, 2, 1, 2]
        true = [1, 1, 1, 2, 2, 2]
        report = bca(pred, true)
        assert report.bca == report.rca

    def test_degenerate_two_class_predictor(self):
        # Predicting class 1 everywhere scores 0.5 for any class mix.
        for true in ([1, 1, 2], [1, 2, 2, 2], [1, 2]):
            assert bca([1] * len(true), true).bca == 0.5

    def test_hand_count(self):
        report = bca([1, 1, 2, 2], [1, 2, 1, 2])
        assert report.per_class_rca == (0.5, 0.5)
        assert report.bca == 0.5

    def test_chance_and_classes(self):
        report = bca([1, 2, 3], [3, 2, 1])
        assert report.classes == (1, 2, 3)
        assert report.chance == pytest.approx(1.0 / 3.0)
        assert report.n_classes == 3

    def test_classes_come_from_truth(self):
        # A predicted label absent from the truth adds no class.
        report = bca([9, 1], [1, 1])
        assert report.classes == (1,)
        assert report.bca == 0.5

    @given(st.lists(st.integers(1, 5), min_size=1, max_size=60).flatmap(
        lambda true: st.tuples(
            st.just(true),
            st.lists(st.integers(1, 5), min_size=len(true),
                     max_size=len(true)))))
    @settings(max_examples=200, deadline=None)
    def test_matches_brute_force(self, case):
        true, pred = case
        report = bca(pred, true)
        want_bca, want_rca, want_pc = brute_force_scores(pred, true)
        assert report.bca == want_bca
        assert report.rca == want_rca
        assert list(report.per_class_rca) == want_pc
        assert 0.0 <= report.bca <= 1.0


class TestNcc:
    def test_self_similarity(self, rng):
        x = rng.standard_normal((4, 32))
        assert ncc(x, x) == 1.0

    def test_negation(self, rng):
        x = rng.standard_normal((4, 32))
        assert ncc(x, -x) == -1.0

    def test_affine_invariance(self, rng):
        x = rng.standard_normal((4, 32))
        assert ncc(x, 2.0 * x + 7.0) == pytest.approx(1.0)

    def test_constant_input_rejected(self):
        with pytest.raises(ValueError):
            ncc(np.ones(8), np.arange(8))

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            ncc(np.ones(8), np.ones(9))

    @given(st.integers(0, 2 ** 31 - 1))
    @settings(max_examples=50, deadline=None)
    def test_bounded(self, seed):
        gen = np.random.default_rng(seed)
        a = gen.standard_normal(16)
        b = gen.standard_normal(16)
        assert -1.0 <= ncc(a, b) <= 1.0
