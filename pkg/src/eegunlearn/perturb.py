"""User-wise privacy-preserving perturbations: RAND, SN, EMIN, EMAX.

Each method produces one additive matrix per user, scaled by a multiple of
that user's pooled standard deviation. RAND draws uniform noise, SN builds
a coded square wave with per-channel amplitude variation, and EMIN/EMAX
optimize the noise through a substitute user-identification model with a
tanh amplitude constraint.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F

from eegunlearn import models as _models
from eegunlearn.dataio import LabeledDataset, user_std

METHODS = ("RAND", "SN", "EMIN", "EMAX")

#: Amplitude multiplier presets (method -> multiple of user std).
AMPLITUDE_PRESETS = {
    "mi": {"RAND": 0.5, "SN": 0.5, "EMIN": 0.3, "EMAX": 0.3},
    "erp": {"RAND": 1.0, "SN": 1.0, "EMIN": 1.0, "EMAX": 1.0},
    "ern": {"RAND": 1.0, "SN": 1.0, "EMIN": 0.5, "EMAX": 0.5},
}


@dataclass(frozen=True)
class PerturbationSet:
    """Per-user perturbation matrices with method and amplitude metadata.

    Amplitude contracts are validated at construction: RAND entries lie in
    [-a, a], SN in [-1.5a, 1.5a], and EMIN/EMAX strictly inside (-a, a)
    where a is the per-user absolute amplitude (f32 comparison, matching
    the stored dtype).
    """

    deltas: dict[int, np.ndarray]
    method: str
    alpha_per_user: dict[int, float]
    alpha_multiplier: float
    seed: int

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}")
        if set(self.deltas) != set(self.alpha_per_user):
            raise ValueError("deltas and alpha_per_user cover different users")
        deltas = {}
        shape = None
        for u in sorted(self.deltas):
            d = np.asarray(self.deltas[u], dtype=np.float32)
            if d.ndim != 2:
                raise ValueError(f"delta for user {u} must be [C, T]")
            if shape is None:
                shape = d.shape
            elif d.shape != shape:
                raise ValueError(f"delta shape mismatch for user {u}: "
                                 f"{d.shape} vs {shape}")
            d = np.ascontiguousarray(d)
            d.flags.writeable = False
            deltas[u] = d
            self._check_amplitude(u, d, float(self.alpha_per_user[u]))
        object.__setattr__(self, "deltas", deltas)
        object.__setattr__(self, "alpha_per_user",
                           {u: float(a) for u, a in self.alpha_per_user.items()})

    def _check_amplitude(self, u: int, d: np.ndarray, alpha: float):
        peak = float(np.abs(d).max()) if d.size else 0.0
        a32 = float(np.float32(alpha))
        if self.method == "RAND":
            ok = peak <= a32
        elif self.method == "SN":
            ok = peak <= float(np.float32(1.5 * alpha))
        else:  # EMIN / EMAX: strict, except the degenerate zero amplitude
            ok = peak < a32 or (alpha == 0.0 and peak == 0.0)
        if not ok:
            raise ValueError(
                f"{self.method} amplitude contract violated for user {u}: "
                f"max |delta| = {peak!r}, alpha = {a32!r}")

    @property
    def shape(self) -> tuple[int, int]:
        return next(iter(self.deltas.values())).shape

    @property
    def users(self) -> tuple[int, ...]:
        return tuple(sorted(self.deltas))


@dataclass(frozen=True)
class SnCode:
    """A user's SN code: integer, signed 10-bit expansion, channel amps."""

    code_int: int
    signed_bits: tuple[int, ...]
    channel_amps: tuple[float, ...]

    def __post_init__(self):
        if not 0 <= self.code_int <= 1023:
            raise ValueError(f"code_int must lie in [0, 1023], "
                             f"got {self.code_int}")
        expected = _signed_bits(self.code_int)
        if tuple(self.signed_bits) != expected:
            raise ValueError("signed_bits is not the signed binary "
                             f"expansion of {self.code_int}")
        if any(not 0.5 <= a <= 1.5 for a in self.channel_amps):
            raise ValueError("channel_amps must lie in [0.5, 1.5]")


@dataclass(frozen=True)
class NoiseOptConfig:
    """Settings for the EMIN/EMAX noise optimization."""

    epochs: int = 100
    learning_rate: float = 0.01
    n_segments: int = 8
    use_trans: bool = True
    n_substitutes: int = 3
    use_ensemble: bool = True
    substitute_arch: str = "eegnet"
    seed: int = 0
    batch_size: int = 128
    substitute_epochs: int = 100
    alternate_model_steps: int = 0  # 0 = substitute model stays fixed (EMIN)

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.n_segments < 1:
            raise ValueError("n_segments must be >= 1")
        if self.n_substitutes < 1:
            raise ValueError("n_substitutes must be >= 1")


def _alphas(train: LabeledDataset, multiplier: float) -> dict[int, float]:
    if multiplier < 0:
        raise ValueError("alpha_multiplier must be >= 0")
    return {u: multiplier * user_std(train, u)
            for u in range(1, train.n_users + 1)}


# ---------------------------------------------------------------------------
# RAND

def gen_rand(train: LabeledDataset, alpha_multiplier: float,
             seed: int) -> PerturbationSet:
    """Per-user uniform noise in [-alpha_u, alpha_u], independent per user."""
    alphas = _alphas(train, alpha_multiplier)
    c, t = train.n_channels, train.n_samples
    deltas = {}
    for u in sorted(alphas):
        rng = np.random.default_rng(np.random.SeedSequence([seed, u]))
        base = rng.uniform(-1.0, 1.0, size=(c, t)).astype(np.float32)
        deltas[u] = np.float32(alphas[u]) * base
    return PerturbationSet(deltas=deltas, method="RAND",
                           alpha_per_user=alphas,
                           alpha_multiplier=alpha_multiplier, seed=seed)


# ---------------------------------------------------------------------------
# SN

def _signed_bits(code_int: int) -> tuple[int, ...]:
    return tuple(1 if (code_int >> (9 - i)) & 1 else -1 for i in range(10))


def sn_waveform(code_int: int, t: int) -> np.ndarray:
    """Signed square wave: 10-bit code, each digit repeated 10x, tiled to t.

    The 100-sample base wave is cyclically repeated (or clipped) to the
    requested length.
    """
    if not 0 <= code_int <= 1023:
        raise ValueError(f"code_int must lie in [0, 1023], got {code_int}")
    if t < 1:
        raise ValueError("t must be >= 1")
    base = np.repeat(np.array(_signed_bits(code_int), dtype=np.float32), 10)
    reps = int(np.ceil(t / base.size))
    return np.tile(base, reps)[:t]


def gen_sn(train: LabeledDataset, alpha_multiplier: float, seed: int,
           channel_variation: bool = True) -> PerturbationSet:
    """Coded square-wave perturbation, rank one per user.

    Each user receives a distinct random code; per-channel amplitudes are
    drawn from [0.5, 1.5] (all ones when ``channel_variation`` is off).
    """
    alphas = _alphas(train, alpha_multiplier)
    u_count = train.n_users
    if u_count > 1024:
        raise ValueError(f"cannot assign distinct 10-bit codes to "
                         f"{u_count} users (max 1024)")
    c, t = train.n_channels, train.n_samples
    rng = np.random.default_rng(np.random.SeedSequence([seed]))
    codes = rng.choice(1024, size=u_count, replace=False)
    deltas = {}
    codebook = {}
    for i, u in enumerate(sorted(alphas)):
        wave = sn_waveform(int(codes[i]), t)
        if channel_variation:
            amps = rng.uniform(0.5, 1.5, size=c).astype(np.float32)
        else:
            amps = np.ones(c, dtype=np.float32)
        codebook[u] = SnCode(code_int=int(codes[i]),
                             signed_bits=_signed_bits(int(codes[i])),
                             channel_amps=tuple(float(a) for a in amps))
        deltas[u] = np.float32(alphas[u]) * np.outer(amps, wave)
    pset = PerturbationSet(deltas=deltas, method="SN", alpha_per_user=alphas,
                           alpha_multiplier=alpha_multiplier, seed=seed)
    object.__setattr__(pset, "sn_codes", codebook)
    return pset


# ---------------------------------------------------------------------------
# Segment shuffle transform (also exported as temporal recombination)

def _segment_index(t: int, n_segments: int, perm: np.ndarray) -> np.ndarray:
    """Time index that concatenates the segments in permuted order."""
    bounds = np.array_split(np.arange(t), n_segments)
    return np.concatenate([bounds[p] for p in perm])


def trans_shuffle(trial: np.ndarray, n_segments: int,
                  seed: int) -> np.ndarray:
    """Cut a [C, T] trial into contiguous segments and permute their order.

    Segments are near-equal with the remainder spread over the leading
    segments; all channels are permuted identically.
    """
    trial = np.asarray(trial)
    t = trial.shape[-1]
    if not 1 <= n_segments <= t:
        raise ValueError(f"n_segments must lie in [1, {t}], "
                         f"got {n_segments}")
    perm = np.random.default_rng(seed).permutation(n_segments)
    return trial[..., _segment_index(t, n_segments, perm)]


# ---------------------------------------------------------------------------
# tanh amplitude constraint

def tanh_reparam(lambda_matrix: np.ndarray, alpha: float) -> np.ndarray:
    """Map unconstrained values to a strictly amplitude-bounded perturbation."""
    lam = np.asarray(lambda_matrix, dtype=np.float64)
    if not np.isfinite(lam).all():
        raise ValueError("lambda matrix contains non-finite values")
    if alpha < 0:
        raise ValueError("alpha must be >= 0")
    return _clip_strict(alpha * np.tanh(lam), alpha)


def _clip_strict(delta: np.ndarray, alpha: float) -> np.ndarray:
    # Guards against tanh saturating to exactly 1 in floating point.
    if alpha == 0:
        return np.zeros_like(delta)
    bound = np.nextafter(np.asarray(alpha, dtype=delta.dtype), 0)
    return np.clip(delta, -bound, bound)


# ---------------------------------------------------------------------------
# EMIN / EMAX optimization

def noise_objective(model_list, lambdas: torch.Tensor, trials: torch.Tensor,
                    user_idx: torch.Tensor, alphas: torch.Tensor,
                    perm_index: torch.Tensor | None,
                    maximize: bool = False) -> torch.Tensor:
    """Cross-entropy objective of the noise optimization, as a torch scalar.

    ``lambdas`` is [U, C, T]; ``alphas`` is [U]; ``user_idx`` holds 0-based
    user indices per trial; ``perm_index`` is an optional [B, T] time index
    implementing the segment shuffle. For EMAX (``maximize``) the summed
    substitute losses are negated so the result is always minimized.
    """
    delta = alphas[user_idx].view(-1, 1, 1) * torch.tanh(lambdas[user_idx])
    x = trials + delta
    if perm_index is not None:
        x = torch.gather(x, 2, perm_index.unsqueeze(1).expand_as(x))
    total = None
    for model in model_list:
        loss = F.cross_entropy(model(x), user_idx)
        total = loss if total is None else total + loss
    return -total if maximize else total


def _build_substitute(train: LabeledDataset, cfg: NoiseOptConfig,
                      seed: int) -> torch.nn.Module:
    spec = _models.ArchitectureSpec(
        family=cfg.substitute_arch, n_channels=train.n_channels,
        n_samples=train.n_samples, n_outputs=train.n_users)
    model = _models.build(spec, seed=seed)
    model.eval()
    return model


def _batch_perms(rng: np.random.Generator, batch: int, t: int,
                 n_segments: int) -> torch.Tensor:
    idx = np.empty((batch, t), dtype=np.int64)
    for i in range(batch):
        perm = rng.permutation(n_segments)
        idx[i] = _segment_index(t, n_segments, perm)
    return torch.from_numpy(idx)


def _optimize_noise(train: LabeledDataset, alphas: dict[int, float],
                    cfg: NoiseOptConfig, model_list, maximize: bool,
                    trainable_model: torch.nn.Module | None = None
                    ) -> tuple[np.ndarray, list[float]]:
    """Adam over Lambda [U, C, T]; returns (lambdas, objective history).

    The history holds the evaluated objective before the first update and
    after every epoch (positive CE sums, regardless of optimization sign).
    """
    u_count, c, t = train.n_users, train.n_channels, train.n_samples
    x = torch.from_numpy(train.trials.copy())
    uid = torch.from_numpy(np.ascontiguousarray(train.user_labels - 1))
    alpha_t = torch.tensor([alphas[u] for u in range(1, u_count + 1)],
                           dtype=torch.float32)
    lambdas = torch.zeros((u_count, c, t), requires_grad=True)
    opt = torch.optim.Adam([lambdas], lr=cfg.learning_rate)
    model_opt = None
    if trainable_model is not None:
        model_opt = torch.optim.Adam(trainable_model.parameters(),
                                     lr=cfg.learning_rate)
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 1]))
    order_gen = torch.Generator().manual_seed(cfg.seed + 17)
    n = len(uid)

    def evaluate() -> float:
        with torch.no_grad():
            total = 0.0
            for start in range(0, n, cfg.batch_size):
                xb = x[start:start + cfg.batch_size]
                ub = uid[start:start + cfg.batch_size]
                perms = (_batch_perms(rng, len(ub), t, cfg.n_segments)
                         if cfg.use_trans else None)
                val = noise_objective(model_list, lambdas, xb, ub,
                                      alpha_t, perms, maximize=False)
                total += float(val) * len(ub)
            return total / n

    history = [evaluate()]
    for epoch in range(cfg.epochs):
        model_phase = (cfg.alternate_model_steps > 0 and
                       (epoch // cfg.alternate_model_steps) % 2 == 1)
        order = torch.randperm(n, generator=order_gen)
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            xb, ub = x[idx], uid[idx]
            perms = (_batch_perms(rng, len(ub), t, cfg.n_segments)
                     if cfg.use_trans else None)
            if model_phase:
                model_opt.zero_grad()
                loss = noise_objective(model_list, lambdas.detach(), xb, ub,
                                       alpha_t, perms, maximize=False)
            else:
                opt.zero_grad()
                loss = noise_objective(model_list, lambdas, xb, ub,
                                       alpha_t, perms, maximize=maximize)
            if not torch.isfinite(loss):
                raise RuntimeError(
                    f"noise optimization diverged at epoch {epoch + 1} "
                    f"(objective non-finite, maximize={maximize})")
            loss.backward()
            (model_opt if model_phase else opt).step()
        history.append(evaluate())
    return lambdas.detach().numpy(), history


def _finish_set(train: LabeledDataset, lambdas: np.ndarray,
                alphas: dict[int, float], method: str, multiplier: float,
                seed: int, history: list[float]) -> PerturbationSet:
    deltas = {}
    for u in range(1, train.n_users + 1):
        a32 = np.float32(alphas[u])
        d = (a32 * np.tanh(lambdas[u - 1])).astype(np.float32)
        deltas[u] = _clip_strict(d, float(a32))
    pset = PerturbationSet(deltas=deltas, method=method,
                           alpha_per_user=alphas,
                           alpha_multiplier=multiplier, seed=seed)
    object.__setattr__(pset, "objective_history", tuple(history))
    return pset


def gen_emin(train: LabeledDataset, alpha_multiplier: float,
             cfg: NoiseOptConfig) -> PerturbationSet:
    """Error-minimizing noise against a randomly initialized UID model.

    The substitute model stays fixed by default; set
    ``cfg.alternate_model_steps`` to alternate model and noise updates.
    """
    if train.n_users < 2:
        raise ValueError("EMIN needs at least 2 users")
    alphas = _alphas(train, alpha_multiplier)
    model = _build_substitute(train, cfg, seed=cfg.seed)
    trainable = model if cfg.alternate_model_steps > 0 else None
    if trainable is not None:
        trainable.train()
    lambdas, history = _optimize_noise(train, alphas, cfg, [model],
                                       maximize=False,
                                       trainable_model=trainable)
    return _finish_set(train, lambdas, alphas, "EMIN", alpha_multiplier,
                       cfg.seed, history)


def gen_emax(train: LabeledDataset, alpha_multiplier: float,
             cfg: NoiseOptConfig) -> PerturbationSet:
    """Error-maximizing noise against substitute models trained on clean data.

    ``cfg.use_ensemble`` off forces a single substitute. The segment
    shuffle is not used here; substitutes see the raw perturbed trials.
    """
    if train.n_users < 2:
        raise ValueError("EMAX needs at least 2 users")
    alphas = _alphas(train, alpha_multiplier)
    m = cfg.n_substitutes if cfg.use_ensemble else 1
    subs = []
    for i in range(m):
        spec = _models.ArchitectureSpec(
            family=cfg.substitute_arch, n_channels=train.n_channels,
            n_samples=train.n_samples, n_outputs=train.n_users)
        tc = _models.TrainConfig(epochs=cfg.substitute_epochs,
                                 seed=cfg.seed + 1000 * (i + 1),
                                 target="uid")
        subs.append(_models.train(spec, train, tc).module)
    for s in subs:
        s.eval()
    emax_cfg = NoiseOptConfig(
        epochs=cfg.epochs, learning_rate=cfg.learning_rate,
        n_segments=cfg.n_segments, use_trans=False,
        n_substitutes=m, use_ensemble=cfg.use_ensemble,
        substitute_arch=cfg.substitute_arch, seed=cfg.seed,
        batch_size=cfg.batch_size, substitute_epochs=cfg.substitute_epochs)
    lambdas, history = _optimize_noise(train, alphas, emax_cfg, subs,
                                       maximize=True)
    return _finish_set(train, lambdas, alphas, "EMAX", alpha_multiplier,
                       cfg.seed, history)


# ---------------------------------------------------------------------------
# Application and persistence

def apply_perturbation(train: LabeledDataset,
                       pset: PerturbationSet) -> LabeledDataset:
    """Add each user's delta to all of that user's trials."""
    users = set(np.unique(train.user_labels).tolist())
    missing = users - set(pset.deltas)
    if missing:
        raise ValueError(f"perturbation set missing users {sorted(missing)}")
    if pset.shape != (train.n_channels, train.n_samples):
        raise ValueError(f"delta shape {pset.shape} does not match "
                         f"trials ({train.n_channels}, {train.n_samples})")
    stack = np.stack([pset.deltas[int(u)] for u in train.user_labels])
    return train.with_trials(train.trials + stack)


def save_perturbation(pset: PerturbationSet, path) -> None:
    """Write perturb_meta.json + deltas.f32 (user-id ascending order)."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    users = pset.users
    c, t = pset.shape
    meta = {
        "format_version": 1,
        "method": pset.method,
        "alpha_multiplier": pset.alpha_multiplier,
        "seed": pset.seed,
        "users": list(users),
        "alpha_per_user": {str(u): pset.alpha_per_user[u] for u in users},
        "n_channels": c,
        "n_samples": t,
    }
    (path / "perturb_meta.json").write_text(
        json.dumps(meta, sort_keys=True, separators=(",", ":")) + "\n",
        encoding="utf-8")
    block = np.stack([pset.deltas[u] for u in users]).astype("<f4")
    (path / "deltas.f32").write_bytes(block.tobytes())


def load_perturbation(path) -> PerturbationSet:
    """Read a perturbation bundle written by :func:`save_perturbation`."""
    path = Path(path)
    meta = json.loads((path / "perturb_meta.json").read_text(encoding="utf-8"))
    users = [int(u) for u in meta["users"]]
    c, t = meta["n_channels"], meta["n_samples"]
    raw = np.frombuffer((path / "deltas.f32").read_bytes(), dtype="<f4")
    if raw.size != len(users) * c * t:
        raise ValueError(f"deltas.f32 holds {raw.size} values, expected "
                         f"{len(users) * c * t}")
    block = raw.reshape(len(users), c, t)
    return PerturbationSet(
        deltas={u: block[i] for i, u in enumerate(users)},
        method=meta["method"],
        alpha_per_user={u: float(meta["alpha_per_user"][str(u)])
                        for u in users},
        alpha_multiplier=float(meta["alpha_multiplier"]),
        seed=int(meta["seed"]))
