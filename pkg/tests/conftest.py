"""Shared fixtures: small synthetic datasets sized for fast unit tests."""

import numpy as np
import pytest

from eegunlearn import SynthConfig, SplitSpec, split_by_session, synth_generate

#: Small dataset geometry used by the fast unit tests: 3 users, 2 classes,
#: 4 channels, 64 samples, 2 sessions.
TINY_SYNTH = SynthConfig(
    n_users=3, n_classes=2, n_channels=4, n_samples=64,
    trials_per_user_per_class=8, n_sessions=2,
    user_signature_strength=1.5, task_signature_strength=1.5,
    noise_floor=1.0, seed=7, user_band=(8.0, 20.0))


@pytest.fixture(scope="session")
def tiny_dataset():
    return synth_generate(TINY_SYNTH)


@pytest.fixture(scope="session")
def tiny_split(tiny_dataset):
    spec = SplitSpec(train_sessions=frozenset({1}),
                     test_sessions=frozenset({2}))
    return split_by_session(tiny_dataset, spec)


@pytest.fixture()
def rng():
    return np.random.default_rng(12345)
