"""Classical feature extraction and traditional classifiers."""

import numpy as np
import pytest

from eegunlearn import (FeatureSpec, GbtConfig, classic_uid_eval, extract,
                        gbt_fit, gbt_predict, lda_fit, lda_predict)
from eegunlearn.classic import (LOG_FLOOR, ar_coefficients,
                                extract_dataset, stft_energies,
                                wavelet_packet_energies)


class TestWavelet:
    def test_energy_conservation(self, rng):
        x = rng.standard_normal((4, 256))
        for depth in (1, 2, 3):
            energies = wavelet_packet_energies(x, depth)
            assert energies.shape == (4, 2 ** depth)
            total = energies.sum(axis=-1)
            signal = np.sum(x.astype(np.float64) ** 2, axis=-1)
            assert np.allclose(total, signal, rtol=1e-6)

    def test_zero_signal_hits_log_floor(self):
        feats = extract(np.zeros((2, 64)), FeatureSpec("wavelet"))
        assert np.allclose(feats, np.log(LOG_FLOOR))

    def test_indivisible_length_rejected(self, rng):
        with pytest.raises(ValueError, match="divisible"):
            wavelet_packet_energies(rng.standard_normal((2, 100)), 3)

    def test_too_short_rejected(self, rng):
        with pytest.raises(ValueError, match="too short"):
            wavelet_packet_energies(rng.standard_normal((2, 32)), 3)

    def test_deterministic(self, rng):
        x = rng.standard_normal((3, 128))
        a = extract(x, FeatureSpec("wavelet"))
        b = extract(x, FeatureSpec("wavelet"))
        assert np.array_equal(a, b)


class TestStft:
    def test_sinusoid_concentrates_at_bin_center(self):
        # 8 cycles in a 64-sample window sit exactly on bin 8.
        t = 256
        window = 64
        x = np.sin(2 * np.pi * 8 * np.arange(t) / window)[None, :]
        grid = stft_energies(x, window=window, hop=32)
        bin_energy = grid[0, :, 8].sum()
        assert bin_energy >= 0.9 * grid.sum()

    def test_zero_signal_hits_log_floor(self):
        feats = extract(np.zeros((2, 64)), FeatureSpec("stft"))
        assert np.allclose(feats, np.log(LOG_FLOOR))

    def test_shapes(self, rng):
        grid = stft_energies(rng.standard_normal((3, 128)), window=32,
                             hop=16)
        assert grid.shape == (3, 7, 17)

    def test_invalid_window(self, rng):
        x = rng.standard_normal((2, 64))
        with pytest.raises(ValueError):
            stft_energies(x, window=65, hop=8)
        with pytest.raises(ValueError):
            stft_energies(x, window=16, hop=0)


class TestAr:
    def test_ar1_coefficient_recovered(self):
        from scipy.signal import lfilter
        gen = np.random.default_rng(0)
        x = lfilter([1.0], [1.0, -0.9], gen.standard_normal(200_000))
        coeffs = ar_coefficients(x, 6)
        assert coeffs[0] == pytest.approx(0.9, abs=0.02)

    def test_zero_signal(self):
        assert np.array_equal(ar_coefficients(np.zeros(64), 4), np.zeros(4))

    def test_series_too_short(self):
        with pytest.raises(ValueError, match="too short"):
            ar_coefficients(np.zeros(4), 6)

    def test_feature_vector_shape(self, rng):
        feats = extract(rng.standard_normal((5, 64)), FeatureSpec("ar"))
        assert feats.shape == (5 * 6,)


class TestFeatureSpec:
    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            FeatureSpec("cepstrum")

    def test_extract_requires_2d(self, rng):
        with pytest.raises(ValueError):
            extract(rng.standard_normal(64), FeatureSpec("ar"))

    def test_extract_dataset_stacks_rows(self, tiny_dataset):
        feats = extract_dataset(tiny_dataset, FeatureSpec("ar"))
        assert feats.shape == (tiny_dataset.n_trials,
                               tiny_dataset.n_channels * 6)


def gaussian_clusters(rng, n_per=40, spread=0.5, separation=10.0):
    a = rng.standard_normal((n_per, 4)) * spread
    b = rng.standard_normal((n_per, 4)) * spread + separation
    x = np.vstack([a, b])
    y = np.array([1] * n_per + [2] * n_per)
    return x, y


class TestLda:
    def test_separated_clusters(self, rng):
        x, y = gaussian_clusters(rng)
        model = lda_fit(x, y)
        assert np.array_equal(lda_predict(model, x), y)

    def test_identical_distributions_near_chance(self, rng):
        x = rng.standard_normal((400, 6))
        y = np.tile([1, 2], 200)
        model = lda_fit(x[:200], y[:200])
        from eegunlearn import bca
        score = bca(lda_predict(model, x[200:]), y[200:]).bca
        assert abs(score - 0.5) <= 0.10

    def test_singular_covariance_with_ridge(self, rng):
        x, y = gaussian_clusters(rng)
        x = np.hstack([x, x[:, :1]])  # duplicated feature
        model = lda_fit(x, y, ridge=1e-3)
        assert np.array_equal(lda_predict(model, x), y)

    def test_scale_equivariant_decisions(self, rng):
        x, y = gaussian_clusters(rng, separation=3.0, spread=2.0)
        xt = rng.standard_normal((30, 4)) + 1.5
        base = lda_predict(lda_fit(x, y), xt)
        scaled = lda_predict(lda_fit(1000.0 * x, y), 1000.0 * xt)
        assert np.array_equal(base, scaled)

    def test_single_class_rejected(self, rng):
        with pytest.raises(ValueError):
            lda_fit(rng.standard_normal((5, 3)), np.ones(5))

    def test_kind_checked(self, rng):
        x, y = gaussian_clusters(rng)
        model = lda_fit(x, y)
        with pytest.raises(ValueError):
            gbt_predict(model, x)


class TestGbt:
    def test_xor_capacity(self, rng):
        x = rng.uniform(-1, 1, size=(200, 2))
        y = np.where(x[:, 0] * x[:, 1] > 0, 1, 2)
        model = gbt_fit(x, y, GbtConfig(n_trees=30, depth=3))
        acc = np.mean(gbt_predict(model, x) == y)
        assert acc >= 0.95

    def test_zero_trees_predicts_majority(self, rng):
        x = rng.standard_normal((10, 3))
        y = np.array([1] * 7 + [2] * 3)
        model = gbt_fit(x, y, GbtConfig(n_trees=0))
        assert np.array_equal(gbt_predict(model, x), np.ones(10))

    def test_sample_order_invariant(self, rng):
        x = rng.standard_normal((60, 4))
        y = rng.integers(1, 4, size=60)
        xt = rng.standard_normal((20, 4))
        base = gbt_predict(gbt_fit(x, y, GbtConfig(n_trees=10)), xt)
        perm = rng.permutation(60)
        shuffled = gbt_predict(gbt_fit(x[perm], y[perm],
                                       GbtConfig(n_trees=10)), xt)
        assert np.array_equal(base, shuffled)

    def test_deterministic(self, rng):
        x = rng.standard_normal((50, 3))
        y = rng.integers(1, 3, size=50)
        a = gbt_predict(gbt_fit(x, y), x)
        b = gbt_predict(gbt_fit(x, y), x)
        assert np.array_equal(a, b)

    def test_single_class_rejected(self, rng):
        with pytest.raises(ValueError):
            gbt_fit(rng.standard_normal((5, 3)), np.ones(5))


class TestClassicUidEval:
    def test_resubstitution_on_separable_data(self, tiny_split):
        tr, _ = tiny_split
        score = classic_uid_eval(tr, tr, FeatureSpec("ar"), "lda")
        assert score >= 0.9

    def test_gbt_pipeline_runs(self, tiny_split):
        tr, te = tiny_split
        score = classic_uid_eval(tr, te, FeatureSpec("ar"), "gbt",
                                 gbt_cfg=GbtConfig(n_trees=5))
        assert 0.0 <= score <= 1.0

    def test_geometry_mismatch(self, tiny_split):
        tr, _ = tiny_split
        shorter = tr.with_trials(np.asarray(tr.trials[:, :, :32]))
        with pytest.raises(ValueError, match="geometry"):
            classic_uid_eval(tr, shorter, FeatureSpec("ar"), "lda")

    def test_unknown_model_kind(self, tiny_split):
        tr, _ = tiny_split
        with pytest.raises(ValueError, match="model kind"):
            classic_uid_eval(tr, tr, FeatureSpec("ar"), "svm")
