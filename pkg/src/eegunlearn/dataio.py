"""Dataset model, bundle persistence, splitting, and synthetic EEG generation.

A dataset is an immutable collection of EEG trials with task labels, user
labels, and session ids. On disk a dataset is a directory bundle holding
``meta.json`` plus a raw little-endian float32 ``trials.f32`` file, so the
format is bit-exact and language neutral.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy import signal as _signal

FORMAT_VERSION = 1


class BundleError(ValueError):
    """Raised when a dataset bundle is missing, malformed, or inconsistent.

    ``field_name`` names the metadata field or file that violated the
    contract.
    """

    def __init__(self, field_name: str, message: str):
        self.field_name = field_name
        super().__init__(f"{field_name}: {message}")


class DatasetValidationError(ValueError):
    """Raised when in-memory dataset invariants are violated."""


def _as_readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class LabeledDataset:
    """Immutable EEG dataset: trials [N, C, T] with task/user/session labels.

    Task labels live in {1..K}, user labels in {1..U}; both are 1-based and
    every class and user must occur at least once. Trials are stored as
    float32 so that bundle persistence round-trips bit-exactly.
    """

    trials: np.ndarray
    task_labels: np.ndarray
    user_labels: np.ndarray
    session_ids: np.ndarray
    sampling_rate: float
    class_names: tuple[str, ...] = ()
    user_names: tuple[str, ...] = ()

    def __post_init__(self):
        trials = _as_readonly(np.asarray(self.trials, dtype=np.float32))
        if trials.ndim != 3:
            raise DatasetValidationError(
                f"trials must be [N, C, T], got shape {trials.shape}")
        n = trials.shape[0]
        task = _as_readonly(np.asarray(self.task_labels, dtype=np.int64))
        user = _as_readonly(np.asarray(self.user_labels, dtype=np.int64))
        sess = _as_readonly(np.asarray(self.session_ids, dtype=np.int64))
        for name, vec in (("task_labels", task), ("user_labels", user),
                          ("session_ids", sess)):
            if vec.shape != (n,):
                raise DatasetValidationError(
                    f"{name} must have length N={n}, got shape {vec.shape}")
        if not np.isfinite(trials).all():
            raise DatasetValidationError("trials contain non-finite values")

        class_names = tuple(self.class_names) or tuple(
            f"class_{k}" for k in range(1, int(task.max(initial=0)) + 1))
        user_names = tuple(self.user_names) or tuple(
            f"user_{u}" for u in range(1, int(user.max(initial=0)) + 1))
        _check_labels("task_labels", task, len(class_names))
        _check_labels("user_labels", user, len(user_names))

        object.__setattr__(self, "trials", trials)
        object.__setattr__(self, "task_labels", task)
        object.__setattr__(self, "user_labels", user)
        object.__setattr__(self, "session_ids", sess)
        object.__setattr__(self, "sampling_rate", float(self.sampling_rate))
        object.__setattr__(self, "class_names", class_names)
        object.__setattr__(self, "user_names", user_names)

    @property
    def n_trials(self) -> int:
        return self.trials.shape[0]

    @property
    def n_channels(self) -> int:
        return self.trials.shape[1]

    @property
    def n_samples(self) -> int:
        return self.trials.shape[2]

    @property
    def n_classes(self) -> int:
        return len(self.class_names)

    @property
    def n_users(self) -> int:
        return len(self.user_names)

    @property
    def sessions(self) -> tuple[int, ...]:
        return tuple(sorted(set(self.session_ids.tolist())))

    def subset(self, index: np.ndarray) -> "LabeledDataset":
        """New dataset holding the selected trials, in the given order."""
        return replace(
            self,
            trials=self.trials[index],
            task_labels=self.task_labels[index],
            user_labels=self.user_labels[index],
            session_ids=self.session_ids[index],
        )

    def with_trials(self, trials: np.ndarray) -> "LabeledDataset":
        """New dataset with replaced trial data, labels unchanged."""
        return replace(self, trials=trials)

    def __eq__(self, other) -> bool:
        if not isinstance(other, LabeledDataset):
            return NotImplemented
        return (
            np.array_equal(self.trials, other.trials)
            and np.array_equal(self.task_labels, other.task_labels)
            and np.array_equal(self.user_labels, other.user_labels)
            and np.array_equal(self.session_ids, other.session_ids)
            and self.sampling_rate == other.sampling_rate
            and self.class_names == other.class_names
            and self.user_names == other.user_names
        )


def _check_labels(name: str, labels: np.ndarray, count: int):
    if labels.size == 0:
        raise DatasetValidationError(f"{name}: empty dataset")
    if labels.min() < 1 or labels.max() > count:
        raise DatasetValidationError(
            f"{name}: values must lie in {{1..{count}}}, "
            f"got range [{labels.min()}, {labels.max()}]")
    present = set(labels.tolist())
    missing = sorted(set(range(1, count + 1)) - present)
    if missing:
        raise DatasetValidationError(
            f"{name}: labels {missing} have no trials")


@dataclass(frozen=True)
class SplitSpec:
    """Cross-session split: which session ids are train vs test."""

    train_sessions: frozenset[int]
    test_sessions: frozenset[int]

    def __post_init__(self):
        object.__setattr__(self, "train_sessions",
                           frozenset(self.train_sessions))
        object.__setattr__(self, "test_sessions",
                           frozenset(self.test_sessions))
        overlap = self.train_sessions & self.test_sessions
        if overlap:
            raise ValueError(f"train/test sessions overlap: {sorted(overlap)}")


def split_by_session(dataset: LabeledDataset,
                     spec: SplitSpec) -> tuple[LabeledDataset, LabeledDataset]:
    """Partition trials by session id, preserving input order in each half."""
    present = set(dataset.session_ids.tolist())
    referenced = spec.train_sessions | spec.test_sessions
    unknown = referenced - present
    if unknown:
        raise ValueError(f"unknown session ids {sorted(unknown)}; "
                         f"dataset has {sorted(present)}")
    uncovered = present - referenced
    if uncovered:
        raise ValueError(f"sessions {sorted(uncovered)} assigned to "
                         "neither train nor test")
    in_train = np.isin(dataset.session_ids,
                       np.array(sorted(spec.train_sessions)))
    return dataset.subset(np.flatnonzero(in_train)), \
        dataset.subset(np.flatnonzero(~in_train))


def user_std(dataset: LabeledDataset, user: int) -> float:
    """Population std over all samples of one user's trials.

    Pools all channels, time points, and trials of the user into a single
    scalar; this is the amplitude unit for perturbation presets.
    """
    if user < 1 or user > dataset.n_users:
        raise ValueError(f"unknown user {user}; dataset has "
                         f"users 1..{dataset.n_users}")
    x = dataset.trials[dataset.user_labels == user]
    return float(np.std(np.asarray(x, dtype=np.float64)))


# ---------------------------------------------------------------------------
# Bundle persistence

def save_bundle(dataset: LabeledDataset, path) -> None:
    """Write a dataset bundle (meta.json + trials.f32) to a directory.

    Byte output is deterministic for identical inputs.
    """
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    meta = {
        "format_version": FORMAT_VERSION,
        "n_trials": dataset.n_trials,
        "n_channels": dataset.n_channels,
        "n_samples": dataset.n_samples,
        "sampling_rate_hz": dataset.sampling_rate,
        "n_classes": dataset.n_classes,
        "n_users": dataset.n_users,
        "task_labels": dataset.task_labels.tolist(),
        "user_labels": dataset.user_labels.tolist(),
        "session_ids": dataset.session_ids.tolist(),
        "class_names": list(dataset.class_names),
        "user_names": list(dataset.user_names),
    }
    (path / "meta.json").write_text(
        json.dumps(meta, sort_keys=True, separators=(",", ":")) + "\n",
        encoding="utf-8")
    (path / "trials.f32").write_bytes(
        np.ascontiguousarray(dataset.trials, dtype="<f4").tobytes())


def load_bundle(path) -> LabeledDataset:
    """Read a dataset bundle written by :func:`save_bundle`, bit-exactly."""
    path = Path(path)
    meta_path = path / "meta.json"
    trials_path = path / "trials.f32"
    if not meta_path.is_file():
        raise BundleError("meta.json", f"missing in {path}")
    if not trials_path.is_file():
        raise BundleError("trials.f32", f"missing in {path}")
    try:
        meta = json.loads(meta_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise BundleError("meta.json", f"invalid JSON: {e}") from e

    required = ["format_version", "n_trials", "n_channels", "n_samples",
                "sampling_rate_hz", "n_classes", "n_users", "task_labels",
                "user_labels", "session_ids"]
    for key in required:
        if key not in meta:
            raise BundleError(key, "missing from meta.json")
    if meta["format_version"] != FORMAT_VERSION:
        raise BundleError("format_version",
                          f"unsupported version {meta['format_version']}")

    n, c, t = meta["n_trials"], meta["n_channels"], meta["n_samples"]
    raw = np.frombuffer(trials_path.read_bytes(), dtype="<f4")
    if raw.size != n * c * t:
        raise BundleError(
            "trials.f32",
            f"expected {n}*{c}*{t}={n * c * t} float32 values, "
            f"found {raw.size}")
    trials = raw.reshape(n, c, t)
    if not np.isfinite(trials).all():
        raise BundleError("trials.f32", "contains non-finite values")

    class_names = tuple(meta.get("class_names") or
                        (f"class_{k}" for k in range(1, meta["n_classes"] + 1)))
    user_names = tuple(meta.get("user_names") or
                       (f"user_{u}" for u in range(1, meta["n_users"] + 1)))
    if len(class_names) != meta["n_classes"]:
        raise BundleError("class_names", "length disagrees with n_classes")
    if len(user_names) != meta["n_users"]:
        raise BundleError("user_names", "length disagrees with n_users")
    try:
        return LabeledDataset(
            trials=trials,
            task_labels=np.asarray(meta["task_labels"], dtype=np.int64),
            user_labels=np.asarray(meta["user_labels"], dtype=np.int64),
            session_ids=np.asarray(meta["session_ids"], dtype=np.int64),
            sampling_rate=float(meta["sampling_rate_hz"]),
            class_names=class_names,
            user_names=user_names,
        )
    except DatasetValidationError as e:
        raise BundleError("meta.json", str(e)) from e


# ---------------------------------------------------------------------------
# Synthetic data

@dataclass(frozen=True)
class SynthConfig:
    """Recipe for a synthetic EEG dataset with planted user/task signatures.

    Each user gets a fixed spatial mixing vector and a user-specific
    narrowband oscillation; each class scales the power of a task
    oscillation on a fixed channel subset; broadband Gaussian noise is
    added on top. Sessions are assigned round-robin per user.
    """

    n_users: int = 8
    n_classes: int = 2
    n_channels: int = 16
    n_samples: int = 256
    trials_per_user_per_class: int = 50
    n_sessions: int = 2
    user_signature_strength: float = 1.0
    task_signature_strength: float = 1.0
    noise_floor: float = 1.0
    seed: int = 0
    sampling_rate: float = 128.0
    user_band: tuple[float, float] = (9.0, 14.0)
    task_freq: float = 24.0

    def __post_init__(self):
        for name in ("n_users", "n_classes", "n_channels", "n_samples",
                     "trials_per_user_per_class", "n_sessions"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        for name in ("user_signature_strength", "task_signature_strength",
                     "noise_floor"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")


#: Committed desk-scale reference configuration used throughout the tests:
#: 8 users x 2 classes, 16 channels, 256 samples, 100 trials per user over
#: 2 sessions (UID chance 12.5%, task chance 50%).
REFERENCE_SYNTH = SynthConfig(
    n_users=8,
    n_classes=2,
    n_channels=16,
    n_samples=256,
    trials_per_user_per_class=50,
    n_sessions=2,
    user_signature_strength=0.7,
    task_signature_strength=0.5,
    noise_floor=1.0,
    seed=2024,
    user_band=(8.0, 16.0),
)


def synth_generate(config: SynthConfig) -> LabeledDataset:
    """Generate a deterministic synthetic dataset per the config recipe."""
    rng = np.random.default_rng(np.random.SeedSequence(config.seed))
    c, t = config.n_channels, config.n_samples
    u_count, k_count = config.n_users, config.n_classes
    fs = config.sampling_rate
    time = np.arange(t) / fs

    # Per-user spatial mixing vectors on the unit sphere.
    mixing = rng.standard_normal((u_count, c))
    mixing /= np.linalg.norm(mixing, axis=1, keepdims=True)
    # User oscillation frequencies evenly spaced in the user band.
    lo, hi = config.user_band
    if u_count == 1:
        user_freqs = np.array([(lo + hi) / 2.0])
    else:
        user_freqs = lo + (hi - lo) * np.arange(u_count) / (u_count - 1)
    # Class signatures scale task-band power on the leading channel subset.
    task_channels = np.arange(max(1, c // 4))
    class_amps = 0.5 + np.arange(k_count)

    trials = []
    task_labels = []
    user_labels = []
    session_ids = []
    for u in range(1, u_count + 1):
        trial_idx = 0
        for k in range(1, k_count + 1):
            for _ in range(config.trials_per_user_per_class):
                phase_u = rng.uniform(0, 2 * np.pi)
                phase_k = rng.uniform(0, 2 * np.pi)
                noise = rng.standard_normal((c, t))
                osc_u = np.sin(2 * np.pi * user_freqs[u - 1] * time + phase_u)
                x = config.user_signature_strength * np.outer(
                    mixing[u - 1], osc_u)
                osc_k = np.sin(2 * np.pi * config.task_freq * time + phase_k)
                x[task_channels] += (config.task_signature_strength *
                                     class_amps[k - 1] * osc_k)
                x += config.noise_floor * noise
                trials.append(x)
                task_labels.append(k)
                user_labels.append(u)
                session_ids.append(trial_idx % config.n_sessions + 1)
                trial_idx += 1
    return LabeledDataset(
        trials=np.asarray(trials, dtype=np.float32),
        task_labels=np.asarray(task_labels),
        user_labels=np.asarray(user_labels),
        session_ids=np.asarray(session_ids),
        sampling_rate=fs,
    )


# ---------------------------------------------------------------------------
# Generic preprocessing

def bandpass_downsample(dataset: LabeledDataset, low_hz: float,
                        high_hz: float, target_rate: float) -> LabeledDataset:
    """Zero-phase band-pass filter then integer-factor decimation."""
    fs = dataset.sampling_rate
    nyq = fs / 2.0
    if not (0 < low_hz < high_hz < nyq):
        raise ValueError(
            f"band [{low_hz}, {high_hz}] Hz invalid for Nyquist {nyq} Hz")
    if target_rate > fs:
        raise ValueError(f"target_rate {target_rate} exceeds "
                         f"sampling rate {fs}")
    factor = fs / target_rate
    if abs(factor - round(factor)) > 1e-9:
        raise ValueError(f"sampling_rate/target_rate must be an integer, "
                         f"got {factor}")
    factor = int(round(factor))
    if factor > 1 and high_hz >= target_rate / 2.0:
        raise ValueError(f"high_hz {high_hz} at or above target "
                         f"Nyquist {target_rate / 2.0}")

    sos = _signal.butter(4, [low_hz, high_hz], btype="bandpass",
                         fs=fs, output="sos")
    filtered = _signal.sosfiltfilt(
        sos, np.asarray(dataset.trials, dtype=np.float64), axis=-1)
    decimated = filtered[:, :, ::factor]
    return replace(dataset,
                   trials=decimated.astype(np.float32),
                   sampling_rate=float(target_rate))
