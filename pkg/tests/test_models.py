"""Classifier families, the cross-entropy oracle, training, persistence."""

import numpy as np
import pytest
import torch

from eegunlearn import (ArchitectureSpec, TrainConfig, bca, build, ce_loss,
                        ce_loss_grad, load_classifier, predict,
                        save_classifier, train)
from eegunlearn.models import (FAMILIES, GeometryError, TrainedClassifier,
                               logits)


def params_of(module):
    return [p.detach().clone() for p in module.parameters()]


def params_equal(a, b):
    return all(torch.equal(x, y) for x, y in zip(a, b))


class TestCeLoss:
    def test_uniform_logits(self):
        for k in (2, 5, 8):
            z = np.zeros((4, k))
            y = np.arange(4) % k + 1
            assert ce_loss(z, y) == pytest.approx(np.log(k))

    def test_saturated_logits(self):
        z = np.zeros((3, 4))
        y = np.array([1, 2, 3])
        z[np.arange(3), y - 1] = 1000.0
        assert ce_loss(z, y) == pytest.approx(0.0, abs=1e-12)

    def test_label_range_checked(self):
        with pytest.raises(ValueError):
            ce_loss(np.zeros((2, 3)), [0, 1])
        with pytest.raises(ValueError):
            ce_loss_grad(np.zeros((2, 3)), [1, 4])

    def test_gradient_matches_central_differences(self, rng):
        z = rng.standard_normal((6, 5))
        y = rng.integers(1, 6, size=6)
        grad = ce_loss_grad(z, y)
        eps = 1e-6
        for i in range(z.shape[0]):
            for j in range(z.shape[1]):
                zp, zm = z.copy(), z.copy()
                zp[i, j] += eps
                zm[i, j] -= eps
                fd = (ce_loss(zp, y) - ce_loss(zm, y)) / (2 * eps)
                denom = max(abs(fd), abs(grad[i, j]), 1e-12)
                assert abs(fd - grad[i, j]) / denom < 1e-6 or \
                    abs(fd - grad[i, j]) < 1e-10


class TestBuild:
    @pytest.mark.parametrize("family,t", [("eegnet", 64),
                                          ("shallowcnn", 64),
                                          ("deepcnn", 160)])
    def test_forward_shape(self, family, t):
        spec = ArchitectureSpec(family, 4, t, 3)
        model = build(spec, seed=0)
        model.eval()
        with torch.no_grad():
            out = model(torch.zeros(4, 4, t))
        assert out.shape == (4, 3)

    def test_seeded_init_deterministic(self):
        spec = ArchitectureSpec("eegnet", 4, 64, 3)
        a = build(spec, seed=3)
        b = build(spec, seed=3)
        assert params_equal(params_of(a), params_of(b))

    def test_different_seeds_differ(self):
        spec = ArchitectureSpec("eegnet", 4, 64, 3)
        a = build(spec, seed=3)
        b = build(spec, seed=4)
        assert not params_equal(params_of(a), params_of(b))

    @pytest.mark.parametrize("family,t", [("eegnet", 16),
                                          ("deepcnn", 64),
                                          ("shallowcnn", 8)])
    def test_geometry_errors(self, family, t):
        with pytest.raises(GeometryError):
            build(ArchitectureSpec(family, 4, t, 3), seed=0)

    def test_unknown_family(self):
        with pytest.raises(ValueError):
            ArchitectureSpec("mlp", 4, 64, 3)

    def test_single_output_rejected(self):
        with pytest.raises(ValueError):
            ArchitectureSpec("eegnet", 4, 64, 1)

    def test_all_families_registered(self):
        assert FAMILIES == ("eegnet", "deepcnn", "shallowcnn")


class TestTrain:
    def test_deterministic(self, tiny_split):
        tr, _ = tiny_split
        spec = ArchitectureSpec("eegnet", tr.n_channels, tr.n_samples,
                                tr.n_classes)
        cfg = TrainConfig(epochs=3, seed=9, target="task")
        a = train(spec, tr, cfg)
        b = train(spec, tr, cfg)
        assert params_equal(params_of(a.module), params_of(b.module))
        assert a.history == b.history

    def test_overfits_separable_data(self, tiny_split):
        tr, _ = tiny_split
        spec = ArchitectureSpec("eegnet", tr.n_channels, tr.n_samples,
                                tr.n_classes)
        clf = train(spec, tr, TrainConfig(epochs=60, seed=0, target="task"))
        score = bca(predict(clf, tr.trials), tr.task_labels)
        assert score.bca == 1.0

    def test_output_mismatch_rejected(self, tiny_split):
        tr, _ = tiny_split
        spec = ArchitectureSpec("eegnet", tr.n_channels, tr.n_samples,
                                tr.n_classes + 5)
        with pytest.raises(ValueError, match="n_outputs"):
            train(spec, tr, TrainConfig(epochs=1, target="task"))

    def test_history_length(self, tiny_split):
        tr, _ = tiny_split
        spec = ArchitectureSpec("eegnet", tr.n_channels, tr.n_samples,
                                tr.n_users)
        clf = train(spec, tr, TrainConfig(epochs=4, seed=0, target="uid"))
        assert len(clf.history) == 4

    def test_identity_batch_transform_matches_plain(self, tiny_split):
        tr, _ = tiny_split
        spec = ArchitectureSpec("eegnet", tr.n_channels, tr.n_samples,
                                tr.n_classes)
        cfg = TrainConfig(epochs=2, seed=1, target="task")
        plain = train(spec, tr, cfg)
        hooked = train(spec, tr, cfg, batch_transform=lambda m, xb, yb: xb)
        assert params_equal(params_of(plain.module),
                            params_of(hooked.module))


class _ConstantLogits(torch.nn.Module):
    def __init__(self, n_outputs):
        super().__init__()
        self.n_outputs = n_outputs

    def forward(self, x):
        return torch.zeros(len(x), self.n_outputs)


class TestPredict:
    def test_single_trial_in_range(self, tiny_split):
        tr, _ = tiny_split
        spec = ArchitectureSpec("eegnet", tr.n_channels, tr.n_samples,
                                tr.n_classes)
        clf = train(spec, tr, TrainConfig(epochs=1, seed=0, target="task"))
        label = predict(clf, tr.trials[0])
        assert label.shape == (1,)
        assert 1 <= label[0] <= tr.n_classes

    def test_batch_partition_invariance(self, tiny_split):
        tr, _ = tiny_split
        spec = ArchitectureSpec("eegnet", tr.n_channels, tr.n_samples,
                                tr.n_classes)
        clf = train(spec, tr, TrainConfig(epochs=1, seed=0, target="task"))
        batched = logits(clf, tr.trials, batch_size=7)
        single = np.concatenate([logits(clf, x[None]) for x in tr.trials])
        # CPU conv kernels reorder reductions across batch shapes, so the
        # agreement is to float32 resolution rather than bit-exact.
        assert np.allclose(batched, single, rtol=1e-5, atol=1e-6)

    def test_tie_breaks_to_lowest_index(self):
        spec = ArchitectureSpec("eegnet", 4, 64, 3)
        clf = TrainedClassifier(spec=spec, module=_ConstantLogits(3),
                                target="task", history=())
        assert predict(clf, np.zeros((5, 4, 64))).tolist() == [1] * 5

    def test_geometry_mismatch(self, tiny_split):
        tr, _ = tiny_split
        spec = ArchitectureSpec("eegnet", tr.n_channels, tr.n_samples,
                                tr.n_classes)
        clf = train(spec, tr, TrainConfig(epochs=1, seed=0, target="task"))
        with pytest.raises(ValueError, match="geometry"):
            predict(clf, np.zeros((2, tr.n_channels, tr.n_samples + 1)))


class TestPersistence:
    def test_round_trip(self, tiny_split, tmp_path):
        tr, te = tiny_split
        spec = ArchitectureSpec("eegnet", tr.n_channels, tr.n_samples,
                                tr.n_users)
        clf = train(spec, tr, TrainConfig(epochs=2, seed=0, target="uid"))
        save_classifier(clf, tmp_path / "m")
        loaded = load_classifier(tmp_path / "m")
        assert loaded.spec == clf.spec
        assert loaded.target == "uid"
        assert loaded.history == clf.history
        assert np.array_equal(predict(loaded, te.trials),
                              predict(clf, te.trials))

    def test_corrupt_params_rejected(self, tiny_split, tmp_path):
        tr, _ = tiny_split
        spec = ArchitectureSpec("eegnet", tr.n_channels, tr.n_samples,
                                tr.n_users)
        clf = train(spec, tr, TrainConfig(epochs=1, seed=0, target="uid"))
        save_classifier(clf, tmp_path / "m")
        raw = (tmp_path / "m" / "params.f32").read_bytes()
        (tmp_path / "m" / "params.f32").write_bytes(raw + b"\0\0\0\0")
        with pytest.raises(ValueError):
            load_classifier(tmp_path / "m")
