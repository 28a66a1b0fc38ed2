"""Compact convolutional classifiers for task and user identification.

Three families are provided: a compact depthwise/separable network
("eegnet"), a deeper three-block CNN ("deepcnn"), and a wide single-block
variant with square/log activations ("shallowcnn"). All operate on
[B, C, T] float32 trials and emit [B, n_outputs] logits. Layer widths are
committed defaults scaled by the input geometry.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from eegunlearn.dataio import LabeledDataset

FAMILIES = ("eegnet", "deepcnn", "shallowcnn")


class GeometryError(ValueError):
    """Input geometry too small for a family's convolution/pooling stack."""


@dataclass(frozen=True)
class ArchitectureSpec:
    """Architecture family plus input geometry and output width."""

    family: str
    n_channels: int
    n_samples: int
    n_outputs: int
    dropout: float = 0.25
    width_scale: float = 1.0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}; "
                             f"expected one of {FAMILIES}")
        if self.n_outputs < 2:
            raise ValueError("n_outputs must be >= 2")
        if self.n_channels < 1 or self.n_samples < 1:
            raise ValueError("geometry must be positive")


@dataclass(frozen=True)
class TrainConfig:
    """Supervised training schedule shared by all families."""

    epochs: int = 100
    learning_rate: float = 0.01
    decay_epoch: int = 50
    decay_factor: float = 0.1
    batch_size: int = 128
    seed: int = 0
    target: str = "task"

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.target not in ("task", "uid"):
            raise ValueError("target must be 'task' or 'uid'")


@dataclass
class TrainedClassifier:
    """Frozen result of a training run."""

    spec: ArchitectureSpec
    module: nn.Module
    target: str
    history: tuple[float, ...]


def _conv_out(length: int, kernel: int, stride: int = 1) -> int:
    return (length - kernel) // stride + 1


class _EEGNetFamily(nn.Module):
    """Temporal conv + depthwise spatial conv + separable conv."""

    def __init__(self, spec: ArchitectureSpec):
        super().__init__()
        c, t = spec.n_channels, spec.n_samples
        f1 = max(4, int(8 * spec.width_scale))
        depth = 2
        f2 = f1 * depth
        k1 = min(64, max(4, t // 4))
        if t < 32:
            raise GeometryError(
                f"eegnet needs n_samples >= 32 for its pooling stack, got {t}")
        self.block1 = nn.Sequential(
            nn.Conv2d(1, f1, (1, k1), padding=(0, k1 // 2), bias=False),
            nn.BatchNorm2d(f1),
            nn.Conv2d(f1, f2, (c, 1), groups=f1, bias=False),
            nn.BatchNorm2d(f2),
            nn.ELU(),
            nn.AvgPool2d((1, 4)),
            nn.Dropout(spec.dropout),
        )
        self.block2 = nn.Sequential(
            nn.Conv2d(f2, f2, (1, 16), padding=(0, 8), groups=f2, bias=False),
            nn.Conv2d(f2, f2, (1, 1), bias=False),
            nn.BatchNorm2d(f2),
            nn.ELU(),
            nn.AvgPool2d((1, 8)),
            nn.Dropout(spec.dropout),
        )
        t1 = (t + 2 * (k1 // 2) - k1 + 1) // 4
        t2 = (t1 + 2 * 8 - 16 + 1) // 8
        if t2 < 1:
            raise GeometryError(f"eegnet pooled length collapsed for T={t}")
        self.classify = nn.Linear(f2 * t2, spec.n_outputs)

    def forward(self, x):
        x = x.unsqueeze(1)
        x = self.block1(x)
        x = self.block2(x)
        return self.classify(x.flatten(1))


class _DeepCNNFamily(nn.Module):
    """Three convolutional blocks with max pooling, then a linear head."""

    def __init__(self, spec: ArchitectureSpec):
        super().__init__()
        c, t = spec.n_channels, spec.n_samples
        w = [max(8, int(round(f * spec.width_scale))) for f in (25, 50, 100)]
        k = 10
        lengths = [t]
        for _ in range(3):
            conv = lengths[-1] - k + 1
            if conv < 3:
                raise GeometryError(
                    f"deepcnn needs n_samples >= ~90, got {t}")
            lengths.append(conv // 3)
        self.block1 = nn.Sequential(
            nn.Conv2d(1, w[0], (1, k), bias=False),
            nn.Conv2d(w[0], w[0], (c, 1), bias=False),
            nn.BatchNorm2d(w[0]),
            nn.ELU(),
            nn.MaxPool2d((1, 3)),
            nn.Dropout(spec.dropout),
        )
        self.block2 = nn.Sequential(
            nn.Conv2d(w[0], w[1], (1, k), bias=False),
            nn.BatchNorm2d(w[1]),
            nn.ELU(),
            nn.MaxPool2d((1, 3)),
            nn.Dropout(spec.dropout),
        )
        self.block3 = nn.Sequential(
            nn.Conv2d(w[1], w[2], (1, k), bias=False),
            nn.BatchNorm2d(w[2]),
            nn.ELU(),
            nn.MaxPool2d((1, 3)),
            nn.Dropout(spec.dropout),
        )
        self.classify = nn.Linear(w[2] * lengths[-1], spec.n_outputs)

    def forward(self, x):
        x = x.unsqueeze(1)
        x = self.block1(x)
        x = self.block2(x)
        x = self.block3(x)
        return self.classify(x.flatten(1))


class _Square(nn.Module):
    def forward(self, x):
        return x * x


class _Log(nn.Module):
    def forward(self, x):
        return torch.log(torch.clamp(x, min=1e-6))


class _ShallowCNNFamily(nn.Module):
    """Wide temporal+spatial conv with square/log band-power activations."""

    def __init__(self, spec: ArchitectureSpec):
        super().__init__()
        c, t = spec.n_channels, spec.n_samples
        w = max(8, int(40 * spec.width_scale))
        k = min(25, max(5, t // 10))
        pool = min(75, max(8, t // 4))
        stride = max(2, pool // 5)
        t1 = _conv_out(t, k)
        if t1 < pool:
            raise GeometryError(
                f"shallowcnn needs n_samples >= ~{k + pool}, got {t}")
        t2 = _conv_out(t1, pool, stride)
        self.features = nn.Sequential(
            nn.Conv2d(1, w, (1, k), bias=False),
            nn.Conv2d(w, w, (c, 1), bias=False),
            nn.BatchNorm2d(w),
            _Square(),
            nn.AvgPool2d((1, pool), stride=(1, stride)),
            _Log(),
            nn.Dropout(spec.dropout),
        )
        self.classify = nn.Linear(w * t2, spec.n_outputs)

    def forward(self, x):
        x = x.unsqueeze(1)
        x = self.features(x)
        return self.classify(x.flatten(1))


_FAMILY_CLASSES = {
    "eegnet": _EEGNetFamily,
    "deepcnn": _DeepCNNFamily,
    "shallowcnn": _ShallowCNNFamily,
}


def build(spec: ArchitectureSpec, seed: int = 0) -> nn.Module:
    """Construct an untrained classifier with seed-deterministic init."""
    torch.manual_seed(seed)
    return _FAMILY_CLASSES[spec.family](spec)


# ---------------------------------------------------------------------------
# Cross-entropy with a closed-form gradient (used by the oracle tests)

def _check_labels(labels: np.ndarray, k: int):
    if labels.min() < 1 or labels.max() > k:
        raise ValueError(f"labels must lie in {{1..{k}}}, got "
                         f"[{labels.min()}, {labels.max()}]")


def ce_loss(logits, labels) -> float:
    """Mean negative log-softmax probability of the true (1-based) labels."""
    z = np.asarray(logits, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    _check_labels(y, z.shape[1])
    z = z - z.max(axis=1, keepdims=True)
    log_probs = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    return float(-log_probs[np.arange(len(y)), y - 1].mean())


def ce_loss_grad(logits, labels) -> np.ndarray:
    """Gradient of :func:`ce_loss` with respect to the logits."""
    z = np.asarray(logits, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    _check_labels(y, z.shape[1])
    z = z - z.max(axis=1, keepdims=True)
    p = np.exp(z)
    p /= p.sum(axis=1, keepdims=True)
    p[np.arange(len(y)), y - 1] -= 1.0
    return p / len(y)


# ---------------------------------------------------------------------------
# Training / inference

def _targets(dataset: LabeledDataset, target: str) -> tuple[np.ndarray, int]:
    if target == "task":
        return dataset.task_labels, dataset.n_classes
    return dataset.user_labels, dataset.n_users


def train(spec: ArchitectureSpec, dataset: LabeledDataset, cfg: TrainConfig,
          batch_transform=None) -> TrainedClassifier:
    """Train a classifier on the dataset with the Adam schedule in ``cfg``.

    ``batch_transform(model, xb, yb) -> xb`` optionally replaces each
    mini-batch before the gradient step (used for adversarial training).
    Deterministic given the config seed.
    """
    labels, n_out = _targets(dataset, cfg.target)
    if spec.n_outputs != n_out:
        raise ValueError(f"spec.n_outputs={spec.n_outputs} but target "
                         f"{cfg.target!r} has {n_out} classes")
    model = build(spec, seed=cfg.seed)
    torch.manual_seed(cfg.seed + 1)  # batch order + dropout stream
    x = torch.from_numpy(dataset.trials.copy())
    y = torch.from_numpy(np.ascontiguousarray(labels - 1))
    opt = torch.optim.Adam(model.parameters(), lr=cfg.learning_rate)
    sched = torch.optim.lr_scheduler.MultiStepLR(
        opt, milestones=[cfg.decay_epoch], gamma=cfg.decay_factor)
    n = len(y)
    history = []
    model.train()
    for epoch in range(cfg.epochs):
        order = torch.randperm(n)
        total = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            xb, yb = x[idx], y[idx]
            if batch_transform is not None:
                xb = batch_transform(model, xb, yb)
                model.train()
            opt.zero_grad()
            loss = F.cross_entropy(model(xb), yb)
            if not torch.isfinite(loss):
                raise RuntimeError(
                    f"non-finite training loss at epoch {epoch + 1} "
                    f"(lr={sched.get_last_lr()[0]:g}, target={cfg.target})")
            loss.backward()
            opt.step()
            total += loss.item() * len(idx)
        sched.step()
        history.append(total / n)
    model.eval()
    return TrainedClassifier(spec=spec, module=model, target=cfg.target,
                             history=tuple(history))


def logits(classifier: TrainedClassifier, trials,
           batch_size: int = 256) -> np.ndarray:
    """Forward pass returning [N, n_outputs] logits."""
    x = np.array(trials, dtype=np.float32)
    if x.ndim == 2:
        x = x[None]
    if x.shape[1:] != (classifier.spec.n_channels, classifier.spec.n_samples):
        raise ValueError(
            f"trial geometry {x.shape[1:]} does not match classifier "
            f"({classifier.spec.n_channels}, {classifier.spec.n_samples})")
    classifier.module.eval()
    out = []
    with torch.no_grad():
        for start in range(0, len(x), batch_size):
            xb = torch.from_numpy(x[start:start + batch_size])
            out.append(classifier.module(xb).numpy())
    return np.concatenate(out, axis=0)


def predict(classifier: TrainedClassifier, trials) -> np.ndarray:
    """Predicted 1-based labels; ties break toward the lowest class index."""
    z = logits(classifier, trials)
    return np.argmax(z, axis=1) + 1


# ---------------------------------------------------------------------------
# Persistence: model_meta.json + params.f32 (flat float32 state vector)

def save_classifier(classifier: TrainedClassifier, path) -> None:
    """Write model_meta.json + params.f32 (state_dict order, float32)."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    state = classifier.module.state_dict()
    entries = []
    chunks = []
    for name, tensor in state.items():
        if tensor.is_floating_point():
            entries.append({"name": name, "shape": list(tensor.shape),
                            "kind": "f32"})
            chunks.append(tensor.detach().numpy().astype("<f4").ravel())
        else:
            entries.append({"name": name, "shape": list(tensor.shape),
                            "kind": "int", "values": tensor.tolist()})
    spec = classifier.spec
    meta = {
        "family": spec.family,
        "n_channels": spec.n_channels,
        "n_samples": spec.n_samples,
        "n_outputs": spec.n_outputs,
        "dropout": spec.dropout,
        "width_scale": spec.width_scale,
        "target": classifier.target,
        "history": list(classifier.history),
        "params": entries,
    }
    (path / "model_meta.json").write_text(
        json.dumps(meta, sort_keys=True, separators=(",", ":")) + "\n",
        encoding="utf-8")
    flat = (np.concatenate(chunks) if chunks
            else np.zeros(0, dtype="<f4"))
    (path / "params.f32").write_bytes(flat.astype("<f4").tobytes())


def load_classifier(path) -> TrainedClassifier:
    """Read a classifier written by :func:`save_classifier`."""
    path = Path(path)
    meta = json.loads((path / "model_meta.json").read_text(encoding="utf-8"))
    spec = ArchitectureSpec(
        family=meta["family"], n_channels=meta["n_channels"],
        n_samples=meta["n_samples"], n_outputs=meta["n_outputs"],
        dropout=meta["dropout"], width_scale=meta["width_scale"])
    model = build(spec, seed=0)
    flat = np.frombuffer((path / "params.f32").read_bytes(), dtype="<f4")
    state = {}
    offset = 0
    for entry in meta["params"]:
        shape = tuple(entry["shape"])
        if entry["kind"] == "f32":
            size = int(np.prod(shape)) if shape else 1
            block = flat[offset:offset + size].reshape(shape)
            state[entry["name"]] = torch.from_numpy(block.copy())
            offset += size
        else:
            state[entry["name"]] = torch.tensor(entry["values"],
                                                dtype=torch.int64)
    if offset != flat.size:
        raise ValueError(f"params.f32 holds {flat.size} values, "
                         f"meta describes {offset}")
    model.load_state_dict(state)
    model.eval()
    return TrainedClassifier(spec=spec, module=model, target=meta["target"],
                             history=tuple(meta["history"]))
