"""Scoring: raw/balanced classification accuracy and trial similarity."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class ScoreReport:
    """Balanced accuracy report over the classes present in the truth."""

    bca: float
    rca: float
    per_class_rca: tuple[float, ...]
    classes: tuple[int, ...]
    chance: float

    @property
    def n_classes(self) -> int:
        return len(self.classes)


def rca(pred, true) -> float:
    """Raw classification accuracy: fraction of exact label matches."""
    pred = np.asarray(pred)
    true = np.asarray(true)
    if pred.shape != true.shape:
        raise ValueError(f"length mismatch: {pred.shape} vs {true.shape}")
    if pred.size == 0:
        raise ValueError("empty input")
    return float(np.mean(pred == true))


def bca(pred, true) -> ScoreReport:
    """Balanced accuracy: per-class recall averaged uniformly.

    Classes are the distinct labels present in ``true``; with balanced
    classes this reduces to plain accuracy.
    """
    pred = np.asarray(pred)
    true = np.asarray(true)
    if pred.shape != true.shape:
        raise ValueError(f"length mismatch: {pred.shape} vs {true.shape}")
    if true.size == 0:
        raise ValueError("empty input")
    classes = np.unique(true)
    per_class = [float(np.mean(pred[true == k] == k)) for k in classes]
    return ScoreReport(
        bca=float(np.mean(per_class)),
        rca=rca(pred, true),
        per_class_rca=tuple(per_class),
        classes=tuple(int(k) for k in classes),
        chance=1.0 / len(classes),
    )


def ncc(x, x_prime) -> float:
    """Normalized cross-correlation between two trials, pooled over entries.

    Both inputs are flattened, mean-removed, and norm-scaled; the result
    lies in [-1, 1] and is invariant to positive affine transforms.
    """
    a = np.asarray(x, dtype=np.float64).ravel()
    b = np.asarray(x_prime, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    a = a - a.mean()
    b = b - b.mean()
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise ValueError("ncc undefined for constant input")
    return float(np.clip(np.dot(a, b) / (na * nb), -1.0, 1.0))
