"""Traditional user-identification pipeline.

Feature families: wavelet-packet subband log-energies (periodized
orthogonal Daubechies-4), short-time Fourier log band energies, and
autoregressive coefficients via Yule-Walker. Classifiers: regularized
linear discriminant analysis and in-repo gradient-boosted trees with a
softmax objective.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_toeplitz

from eegunlearn.dataio import LabeledDataset
from eegunlearn.metrics import bca as _bca

LOG_FLOOR = 1e-12

# Daubechies-4 orthonormal scaling filter (8 taps, sum = sqrt(2)).
_DB4_H = np.array([
    0.23037781330885523, 0.7148465705525415, 0.6308807679295904,
    -0.02798376941698385, -0.18703481171888114, 0.030841381835986965,
    0.032883011666982945, -0.010597401784997278])
_DB4_G = (_DB4_H[::-1] * np.array([1.0 if i % 2 == 0 else -1.0
                                   for i in range(len(_DB4_H))]))


@dataclass(frozen=True)
class FeatureSpec:
    """Which feature family to extract, with committed default parameters."""

    kind: str
    wavelet_depth: int = 3
    stft_window: int | None = None  # default T // 8
    stft_hop: int | None = None     # default T // 16
    ar_order: int = 6

    def __post_init__(self):
        if self.kind not in ("wavelet", "stft", "ar"):
            raise ValueError(f"unknown feature kind {self.kind!r}")
        if self.wavelet_depth < 1:
            raise ValueError("wavelet_depth must be >= 1")
        if self.ar_order < 1:
            raise ValueError("ar_order must be >= 1")


@dataclass(frozen=True)
class GbtConfig:
    """Gradient-boosted-trees hyperparameters."""

    n_trees: int = 100
    depth: int = 3
    learning_rate: float = 0.1
    reg_lambda: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.n_trees < 0:
            raise ValueError("n_trees must be >= 0")
        if self.depth < 1:
            raise ValueError("depth must be >= 1")


@dataclass
class ClassicModel:
    """A fitted traditional classifier ('lda' or 'gbt')."""

    kind: str
    classes: np.ndarray
    state: dict


# ---------------------------------------------------------------------------
# Feature extraction

def _periodized_split(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """One level of the periodized orthogonal analysis transform.

    ``x`` is [..., T] with T even; returns approximation and detail
    coefficients of length T/2 each.
    """
    t = x.shape[-1]
    even = np.arange(0, t, 2)
    a = np.zeros(x.shape[:-1] + (t // 2,))
    d = np.zeros_like(a)
    for n in range(len(_DB4_H)):
        col = x[..., (even + n) % t]
        a += _DB4_H[n] * col
        d += _DB4_G[n] * col
    return a, d


def wavelet_packet_energies(trial: np.ndarray, depth: int) -> np.ndarray:
    """Leaf-subband energies of a full wavelet packet tree, per channel.

    Returns [C, 2**depth]; the transform is orthogonal, so the leaf
    energies of each channel sum to that channel's signal energy.
    """
    x = np.asarray(trial, dtype=np.float64)
    t = x.shape[-1]
    if t % (1 << depth) != 0:
        raise ValueError(f"n_samples {t} must be divisible by 2^{depth}")
    if (t >> depth) < len(_DB4_H):
        raise ValueError(f"trial too short for wavelet depth {depth}")
    nodes = [x]
    for _ in range(depth):
        nxt = []
        for node in nodes:
            a, d = _periodized_split(node)
            nxt.extend([a, d])
        nodes = nxt
    return np.stack([np.sum(n * n, axis=-1) for n in nodes], axis=-1)


def stft_energies(trial: np.ndarray, window: int, hop: int) -> np.ndarray:
    """Rectangular-window short-time power spectrum, [C, frames, bins]."""
    x = np.asarray(trial, dtype=np.float64)
    t = x.shape[-1]
    if not 1 <= window <= t:
        raise ValueError(f"stft window must lie in [1, {t}], got {window}")
    if hop < 1:
        raise ValueError("stft hop must be >= 1")
    starts = range(0, t - window + 1, hop)
    frames = np.stack([x[..., s:s + window] for s in starts], axis=-2)
    spec = np.fft.rfft(frames, axis=-1)
    return (spec.real ** 2 + spec.imag ** 2)


def ar_coefficients(series: np.ndarray, order: int) -> np.ndarray:
    """Yule-Walker AR coefficients of a 1-D series (biased autocovariance)."""
    x = np.asarray(series, dtype=np.float64)
    n = x.size
    if n <= order:
        raise ValueError(f"series length {n} too short for AR({order})")
    x = x - x.mean()
    r = np.array([np.dot(x[:n - k], x[k:]) / n for k in range(order + 1)])
    if r[0] <= 0:
        return np.zeros(order)
    return solve_toeplitz((r[:order], r[:order]), r[1:order + 1])


def extract(trial: np.ndarray, spec: FeatureSpec) -> np.ndarray:
    """Deterministic feature vector for one [C, T] trial."""
    trial = np.asarray(trial, dtype=np.float64)
    if trial.ndim != 2:
        raise ValueError(f"trial must be [C, T], got shape {trial.shape}")
    t = trial.shape[-1]
    if spec.kind == "wavelet":
        energies = wavelet_packet_energies(trial, spec.wavelet_depth)
        return np.log(np.maximum(energies, LOG_FLOOR)).ravel()
    if spec.kind == "stft":
        window = spec.stft_window or max(4, t // 8)
        hop = spec.stft_hop or max(1, t // 16)
        grid = stft_energies(trial, window, hop)
        return np.log(np.maximum(grid, LOG_FLOOR)).ravel()
    return np.concatenate([ar_coefficients(ch, spec.ar_order)
                           for ch in trial])


def extract_dataset(dataset: LabeledDataset, spec: FeatureSpec) -> np.ndarray:
    """Feature matrix [N, F] for every trial in the dataset."""
    return np.stack([extract(x, spec) for x in dataset.trials])


# ---------------------------------------------------------------------------
# Linear discriminant analysis

def lda_fit(features: np.ndarray, labels: np.ndarray,
            ridge: float = 1e-3) -> ClassicModel:
    """Fit LDA with a shared within-class covariance plus scaled ridge.

    The ridge is scaled by the mean covariance diagonal, which keeps
    decisions equivariant under feature rescaling.
    """
    x = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels)
    if ridge < 0:
        raise ValueError("ridge must be >= 0")
    classes = np.unique(y)
    if len(classes) < 2:
        raise ValueError("lda needs at least 2 classes")
    if len(x) < len(classes):
        raise ValueError(f"{len(x)} samples for {len(classes)} classes")
    means = np.stack([x[y == k].mean(axis=0) for k in classes])
    centered = x - means[np.searchsorted(classes, y)]
    cov = centered.T @ centered / len(x)
    scale = np.mean(np.diag(cov))
    reg = cov + ridge * (scale if scale > 0 else 1.0) * np.eye(x.shape[1])
    coef = np.linalg.solve(reg, means.T).T          # [K, F]
    intercept = -0.5 * np.einsum("kf,kf->k", means, coef)
    return ClassicModel(kind="lda", classes=classes,
                        state={"coef": coef, "intercept": intercept})


def lda_predict(model: ClassicModel, features: np.ndarray) -> np.ndarray:
    """Labels by highest discriminant score; ties go to the lowest class."""
    if model.kind != "lda":
        raise ValueError(f"not an lda model: {model.kind}")
    x = np.asarray(features, dtype=np.float64)
    scores = x @ model.state["coef"].T + model.state["intercept"]
    return model.classes[np.argmax(scores, axis=1)]


# ---------------------------------------------------------------------------
# Gradient-boosted trees (softmax objective, depth-limited)

def _best_split(x: np.ndarray, g: np.ndarray, h: np.ndarray,
                idx: np.ndarray, reg: float):
    """Best (feature, threshold, gain) over the node's samples.

    Split search is independent of sample order: candidates sit between
    strictly distinct sorted values and ties in gain resolve toward the
    lowest feature index and threshold.
    """
    g_tot, h_tot = g[idx].sum(), h[idx].sum()
    parent = g_tot * g_tot / (h_tot + reg)
    best = (None, 0.0, 1e-12)
    for j in range(x.shape[1]):
        vals = x[idx, j]
        order = np.argsort(vals, kind="stable")
        sv = vals[order]
        cg = np.cumsum(g[idx][order])
        ch = np.cumsum(h[idx][order])
        distinct = np.flatnonzero(sv[1:] > sv[:-1])
        if distinct.size == 0:
            continue
        gl, hl = cg[distinct], ch[distinct]
        gr, hr = g_tot - gl, h_tot - hl
        gains = gl * gl / (hl + reg) + gr * gr / (hr + reg) - parent
        k = int(np.argmax(gains))
        if gains[k] > best[2]:
            thr = 0.5 * (sv[distinct[k]] + sv[distinct[k] + 1])
            best = (j, thr, float(gains[k]))
    return best


def _build_tree(x, g, h, idx, depth, reg):
    g_tot, h_tot = g[idx].sum(), h[idx].sum()
    leaf = {"value": -g_tot / (h_tot + reg)}
    if depth == 0 or idx.size < 2:
        return leaf
    feat, thr, _ = _best_split(x, g, h, idx, reg)
    if feat is None:
        return leaf
    left = idx[x[idx, feat] <= thr]
    right = idx[x[idx, feat] > thr]
    if left.size == 0 or right.size == 0:
        return leaf
    return {"feature": int(feat), "threshold": float(thr),
            "left": _build_tree(x, g, h, left, depth - 1, reg),
            "right": _build_tree(x, g, h, right, depth - 1, reg)}


def _tree_apply(tree, x: np.ndarray) -> np.ndarray:
    out = np.zeros(len(x))
    stack = [(tree, np.arange(len(x)))]
    while stack:
        node, idx = stack.pop()
        if "value" in node:
            out[idx] = node["value"]
            continue
        mask = x[idx, node["feature"]] <= node["threshold"]
        stack.append((node["left"], idx[mask]))
        stack.append((node["right"], idx[~mask]))
    return out


def gbt_fit(features: np.ndarray, labels: np.ndarray,
            cfg: GbtConfig = GbtConfig()) -> ClassicModel:
    """Stagewise boosted trees with a softmax objective, one tree per class
    per round. Deterministic; with zero trees the model falls back to the
    class log-priors (majority class)."""
    x = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels)
    classes = np.unique(y)
    if len(classes) < 2:
        raise ValueError("gbt needs at least 2 classes")
    yk = np.searchsorted(classes, y)
    n, k = len(y), len(classes)
    priors = np.bincount(yk, minlength=k) / n
    base = np.log(np.maximum(priors, 1e-12))
    scores = np.tile(base, (n, 1))
    rounds = []
    for _ in range(cfg.n_trees):
        z = scores - scores.max(axis=1, keepdims=True)
        p = np.exp(z)
        p /= p.sum(axis=1, keepdims=True)
        onehot = np.zeros_like(p)
        onehot[np.arange(n), yk] = 1.0
        grad = p - onehot
        hess = p * (1.0 - p)
        trees = []
        for c in range(k):
            tree = _build_tree(x, grad[:, c], hess[:, c], np.arange(n),
                               cfg.depth, cfg.reg_lambda)
            trees.append(tree)
            scores[:, c] += cfg.learning_rate * _tree_apply(tree, x)
        rounds.append(trees)
    return ClassicModel(kind="gbt", classes=classes,
                        state={"base": base, "rounds": rounds,
                               "learning_rate": cfg.learning_rate})


def gbt_predict(model: ClassicModel, features: np.ndarray) -> np.ndarray:
    if model.kind != "gbt":
        raise ValueError(f"not a gbt model: {model.kind}")
    x = np.asarray(features, dtype=np.float64)
    scores = np.tile(model.state["base"], (len(x), 1))
    for trees in model.state["rounds"]:
        for c, tree in enumerate(trees):
            scores[:, c] += model.state["learning_rate"] * _tree_apply(tree, x)
    return model.classes[np.argmax(scores, axis=1)]


# ---------------------------------------------------------------------------
# End-to-end evaluation

def classic_uid_eval(train: LabeledDataset, test: LabeledDataset,
                     feature_spec: FeatureSpec, model_kind: str,
                     gbt_cfg: GbtConfig = GbtConfig(),
                     ridge: float = 1e-3) -> float:
    """Extract features, fit a traditional UID model, return test BCA."""
    if (train.n_channels, train.n_samples) != (test.n_channels,
                                               test.n_samples):
        raise ValueError("train/test geometry mismatch")
    xtr = extract_dataset(train, feature_spec)
    xte = extract_dataset(test, feature_spec)
    if model_kind == "lda":
        model = lda_fit(xtr, train.user_labels, ridge=ridge)
        pred = lda_predict(model, xte)
    elif model_kind == "gbt":
        model = gbt_fit(xtr, train.user_labels, cfg=gbt_cfg)
        pred = gbt_predict(model, xte)
    else:
        raise ValueError(f"unknown model kind {model_kind!r}")
    return _bca(pred, test.user_labels).bca
