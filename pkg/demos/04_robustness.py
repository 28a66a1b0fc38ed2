"""Attack the protection: adversarial training and data transformations.

A party that suspects the data is perturbed might train with PGD
adversarial examples, apply a surface Laplacian, randomly shift trials in
time, or shuffle temporal segments before training. This demo runs each
counter-measure against an SN-protected training set and reports the
resulting identity score.
"""

import numpy as np

from eegunlearn import (ArchitectureSpec, PgdConfig, SplitSpec, SynthConfig,
                        TrainConfig, adversarial_train, apply_perturbation,
                        bca, gen_sn, predict, surface_laplacian,
                        split_by_session, synth_generate, temporal_shift,
                        temporal_recombination, train)

data = synth_generate(SynthConfig(n_users=4, n_classes=2, n_channels=8,
                                  n_samples=128,
                                  trials_per_user_per_class=20, seed=3))
tr, te = split_by_session(data, SplitSpec(frozenset({1}), frozenset({2})))
protected = apply_perturbation(tr, gen_sn(tr, 0.5, seed=0))

spec = ArchitectureSpec("eegnet", tr.n_channels, tr.n_samples, tr.n_users)
cfg = TrainConfig(epochs=30, seed=1, target="uid")


def uid_score(clf):
    return bca(predict(clf, te.trials), te.user_labels).bca


print(f"chance = {1 / tr.n_users:.2f}")
print(f"plain training:        {uid_score(train(spec, protected, cfg)):.3f}")

at = adversarial_train(spec, protected, PgdConfig(epsilon=0.05, n_steps=3),
                       cfg)
print(f"adversarial training:  {uid_score(at):.3f}")

sl = train(spec, surface_laplacian(protected), cfg)
print(f"surface laplacian:     {uid_score(sl):.3f}")

shifted = protected.with_trials(np.stack(
    [temporal_shift(x, 16, seed=100 + i)
     for i, x in enumerate(protected.trials)]))
print(f"temporal shift:        {uid_score(train(spec, shifted, cfg)):.3f}")

shuffled = protected.with_trials(np.stack(
    [temporal_recombination(x, 8, 200 + i)
     for i, x in enumerate(protected.trials)]))
print(f"temporal recombination:{uid_score(train(spec, shuffled, cfg)):.3f}")
