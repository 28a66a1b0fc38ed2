"""Attack, defense, and data-transformation machinery.

PGD adversarial examples and adversarial training stress the
perturbations from the attacker side; surface Laplacian, temporal shift,
and temporal recombination stress them from the preprocessing side.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F

from eegunlearn import models as _models
from eegunlearn.dataio import LabeledDataset
from eegunlearn.perturb import trans_shuffle

# Temporal recombination is the segment-shuffle transform under its
# preprocessing name.
temporal_recombination = trans_shuffle


@dataclass(frozen=True)
class PgdConfig:
    """Projected gradient descent settings.

    ``epsilon`` and ``step_size`` are fractions of each trial's standard
    deviation; ``step_size`` defaults to epsilon/4.
    """

    epsilon: float
    n_steps: int = 10
    step_size: float | None = None
    random_start: bool = True

    def __post_init__(self):
        if self.epsilon < 0:
            raise ValueError("epsilon must be >= 0")
        if self.n_steps < 1:
            raise ValueError("n_steps must be >= 1")

    @property
    def effective_step(self) -> float:
        return self.step_size if self.step_size is not None \
            else self.epsilon / 4.0


@dataclass(frozen=True)
class Montage:
    """Ordered channel names with 2-D or 3-D scalp coordinates."""

    names: tuple[str, ...]
    positions: np.ndarray

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=np.float64)
        if pos.ndim != 2 or pos.shape[1] not in (2, 3):
            raise ValueError("positions must be [C, 2] or [C, 3]")
        if pos.shape[0] != len(self.names):
            raise ValueError("positions count disagrees with channel names")
        pos.flags.writeable = False
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "names", tuple(self.names))


def load_montage(path) -> Montage:
    """Read a montage.json file: {"names": [...], "positions": [[..], ..]}."""
    meta = json.loads(Path(path).read_text(encoding="utf-8"))
    return Montage(names=tuple(meta["names"]),
                   positions=np.asarray(meta["positions"]))


def save_montage(montage: Montage, path) -> None:
    Path(path).write_text(json.dumps(
        {"names": list(montage.names),
         "positions": montage.positions.tolist()},
        sort_keys=True, separators=(",", ":")) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# PGD and adversarial training

def _pgd_torch(model: torch.nn.Module, xb: torch.Tensor, yb: torch.Tensor,
               cfg: PgdConfig) -> torch.Tensor:
    """Linf PGD on a batch; ``yb`` is 0-based. Returns a detached batch."""
    if cfg.epsilon == 0:
        return xb
    was_training = model.training
    model.eval()
    scale = xb.detach().reshape(len(xb), -1).std(dim=1,
                                                 unbiased=False).view(-1, 1, 1)
    eps = cfg.epsilon * scale
    step = cfg.effective_step * scale
    x0 = xb.detach()
    if cfg.random_start:
        x = x0 + torch.empty_like(x0).uniform_(-1.0, 1.0) * eps
    else:
        x = x0.clone()
    for _ in range(cfg.n_steps):
        x = x.detach().requires_grad_(True)
        loss = F.cross_entropy(model(x), yb)
        grad, = torch.autograd.grad(loss, x)
        if not torch.isfinite(grad).all():
            raise RuntimeError("non-finite PGD gradients")
        x = x.detach() + step * grad.sign()
        x = torch.clamp(x, x0 - eps, x0 + eps)
        assert bool(((x - x0).abs() <= eps + 1e-6 * scale).all())
    if was_training:
        model.train()
    return x.detach()


def pgd_attack(classifier: _models.TrainedClassifier, trials, labels,
               cfg: PgdConfig) -> np.ndarray:
    """Adversarial counterparts of the given trials (1-based labels).

    The perturbation is bounded per trial by epsilon times that trial's
    standard deviation; the input is untouched.
    """
    x = np.array(trials, dtype=np.float32)
    if x.shape[1:] != (classifier.spec.n_channels, classifier.spec.n_samples):
        raise ValueError(f"trial geometry {x.shape[1:]} does not match "
                         "classifier")
    y = torch.from_numpy(np.asarray(labels, dtype=np.int64) - 1)
    xb = torch.from_numpy(np.ascontiguousarray(x))
    out = _pgd_torch(classifier.module, xb, y, cfg)
    return out.numpy().copy()


def adversarial_train(spec: _models.ArchitectureSpec,
                      dataset: LabeledDataset, pgd_cfg: PgdConfig,
                      train_cfg: _models.TrainConfig
                      ) -> _models.TrainedClassifier:
    """Train with each mini-batch replaced by its PGD-attacked version.

    At epsilon 0 this degenerates to plain training (identical parameters
    for the same seed).
    """
    def attack(model, xb, yb):
        return _pgd_torch(model, xb, yb, pgd_cfg)

    return _models.train(spec, dataset, train_cfg, batch_transform=attack)


# ---------------------------------------------------------------------------
# Data transformations

def surface_laplacian(dataset: LabeledDataset,
                      montage: Montage | None = None) -> LabeledDataset:
    """Subtract each channel's neighborhood mean.

    Neighbors are the 4 nearest channels by montage distance; without a
    montage every other channel counts as a neighbor (common-average
    difference).
    """
    c = dataset.n_channels
    if c < 4:
        raise ValueError(
            f"surface Laplacian needs at least 4 channels, got {c}")
    weights = np.zeros((c, c))
    if montage is None:
        weights[:] = 1.0 / (c - 1)
        np.fill_diagonal(weights, 0.0)
    else:
        if montage.positions.shape[0] != c:
            raise ValueError(f"montage has {montage.positions.shape[0]} "
                             f"channels, dataset has {c}")
        dist = np.linalg.norm(
            montage.positions[:, None] - montage.positions[None, :], axis=-1)
        np.fill_diagonal(dist, np.inf)
        k = min(4, c - 1)
        for i in range(c):
            nbr = np.argsort(dist[i], kind="stable")[:k]
            weights[i, nbr] = 1.0 / k
    operator = np.eye(c) - weights
    out = np.einsum("cd,ndt->nct",
                    operator, np.asarray(dataset.trials, dtype=np.float64))
    return dataset.with_trials(out.astype(np.float32))


def temporal_shift(trial: np.ndarray, max_offset: int, seed: int) -> np.ndarray:
    """Circularly shift a trial by a random offset in [-max_offset, max_offset].

    All channels shift identically; sample multisets per channel are
    preserved.
    """
    trial = np.asarray(trial)
    t = trial.shape[-1]
    if not 0 <= max_offset < t:
        raise ValueError(f"max_offset must lie in [0, {t - 1}], "
                         f"got {max_offset}")
    offset = int(np.random.default_rng(seed).integers(-max_offset,
                                                      max_offset + 1))
    return np.roll(trial, offset, axis=-1)
