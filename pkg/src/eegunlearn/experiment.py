"""Config-driven experiment matrix.

Builds a train/test split, perturbs the training data only, trains
task/UID models under optional defenses and transformations, evaluates on
clean test data, and emits CSV tables plus SVG plots. Test trials are
checksummed around every cell to prove they were never modified.
"""

from __future__ import annotations

import hashlib
import itertools
import traceback
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np
import yaml

from eegunlearn import classic as _classic
from eegunlearn import models as _models
from eegunlearn import perturb as _perturb
from eegunlearn import robustness as _robust
from eegunlearn.dataio import (LabeledDataset, SplitSpec, SynthConfig,
                               load_bundle, split_by_session, synth_generate)
from eegunlearn.metrics import bca as _bca

CONFIG_VERSION = 1
CSV_COLUMNS = ("dataset", "method", "model", "target", "defense",
               "transform", "repeat", "bca")


@dataclass(frozen=True)
class ExperimentConfig:
    """Full description of one experiment matrix."""

    name: str = "experiment"
    dataset_path: str | None = None
    synth: SynthConfig | None = None
    train_sessions: tuple[int, ...] = (1,)
    test_sessions: tuple[int, ...] = (2,)
    methods: tuple[str, ...] = ()
    amplitude_preset: str = "mi"
    multipliers: dict | None = None
    model_families: tuple[str, ...] = ("eegnet",)
    targets: tuple[str, ...] = ("task", "uid")
    defenses: tuple[str, ...] = ("none",)
    at_epsilons: tuple[float, ...] = (0.0, 0.01, 0.02, 0.05, 0.1)
    transforms: tuple[str, ...] = ("none",)
    classic_pipelines: tuple[str, ...] = ()
    n_repeats: int = 5
    base_seed: int = 0
    epochs: int = 100
    noise_epochs: int = 100
    substitute_epochs: int = 100
    pgd_steps: int = 10
    tr_segments: int = 8
    ts_max_offset: int | None = None

    def __post_init__(self):
        if self.n_repeats < 1:
            raise ValueError("n_repeats must be >= 1")
        if (self.dataset_path is None) == (self.synth is None):
            raise ValueError("exactly one of dataset_path/synth is required")
        for m in self.methods:
            if m not in _perturb.METHODS:
                raise ValueError(f"unknown method {m!r}")
        if not self.model_families and not self.classic_pipelines:
            raise ValueError("no models or classic pipelines configured")
        object.__setattr__(self, "methods", tuple(self.methods))
        object.__setattr__(self, "train_sessions",
                           tuple(self.train_sessions))
        object.__setattr__(self, "test_sessions", tuple(self.test_sessions))
        object.__setattr__(self, "model_families",
                           tuple(self.model_families))
        object.__setattr__(self, "targets", tuple(self.targets))
        object.__setattr__(self, "defenses", tuple(self.defenses))
        object.__setattr__(self, "at_epsilons", tuple(self.at_epsilons))
        object.__setattr__(self, "transforms", tuple(self.transforms))
        object.__setattr__(self, "classic_pipelines",
                           tuple(self.classic_pipelines))

    def multiplier_for(self, method: str) -> float:
        if self.multipliers and method in self.multipliers:
            return float(self.multipliers[method])
        return _perturb.AMPLITUDE_PRESETS[self.amplitude_preset][method]

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        doc = dict(doc)
        version = doc.pop("config_version", CONFIG_VERSION)
        if version != CONFIG_VERSION:
            raise ValueError(f"unsupported config_version {version}")
        if doc.get("synth") is not None:
            synth = doc["synth"]
            if isinstance(synth, dict):
                if "user_band" in synth:
                    synth["user_band"] = tuple(synth["user_band"])
                doc["synth"] = SynthConfig(**synth)
        for key in ("train_sessions", "test_sessions", "methods",
                    "model_families", "targets", "defenses", "at_epsilons",
                    "transforms", "classic_pipelines"):
            if key in doc and doc[key] is not None:
                doc[key] = tuple(doc[key])
        return cls(**doc)

    def to_dict(self) -> dict:
        doc = asdict(self)
        doc["config_version"] = CONFIG_VERSION
        return doc

    @classmethod
    def from_yaml(cls, path) -> "ExperimentConfig":
        return cls.from_dict(yaml.safe_load(Path(path).read_text()))


@dataclass(frozen=True)
class CellResult:
    dataset: str
    method: str
    model: str
    target: str
    defense: str
    transform: str
    repeat: int
    seed: int
    bca: float
    error: str | None = None

    @property
    def cell_id(self) -> str:
        return "|".join((self.dataset, self.method, self.model, self.target,
                         self.defense, self.transform))


@dataclass
class ExperimentReport:
    """All per-repeat BCA rows plus the protocol-guard verdict."""

    config: ExperimentConfig | None
    rows: list
    test_checksum_ok: bool = True

    @property
    def failed(self) -> list:
        return [r for r in self.rows if r.error is not None]

    def aggregates(self) -> list[tuple[str, float, float]]:
        """(cell_id, mean bca, std bca) in first-seen cell order."""
        order = []
        groups = {}
        for r in self.rows:
            if r.cell_id not in groups:
                groups[r.cell_id] = []
                order.append(r.cell_id)
            groups[r.cell_id].append(r.bca)
        out = []
        for cid in order:
            vals = np.asarray(groups[cid], dtype=np.float64)
            out.append((cid, float(np.mean(vals)), float(np.std(vals))))
        return out

    def mean_bca(self, **filters) -> float:
        vals = [r.bca for r in self.rows
                if all(getattr(r, k) == v for k, v in filters.items())]
        if not vals:
            raise KeyError(f"no rows matching {filters}")
        return float(np.mean(vals))

    def reduction_rows(self) -> list[dict]:
        """Clean-minus-perturbed mean BCA per (model, target, method)."""
        out = []
        combos = sorted({(r.model, r.target, r.defense, r.transform)
                         for r in self.rows})
        for model, target, defense, transform in combos:
            try:
                clean = self.mean_bca(model=model, target=target,
                                      defense=defense, transform=transform,
                                      method="none")
            except KeyError:
                continue
            methods = sorted({r.method for r in self.rows
                              if r.model == model and r.target == target
                              and r.defense == defense
                              and r.transform == transform
                              and r.method != "none"})
            for method in methods:
                perturbed = self.mean_bca(model=model, target=target,
                                          defense=defense,
                                          transform=transform, method=method)
                out.append({"model": model, "target": target,
                            "defense": defense, "transform": transform,
                            "method": method, "clean_bca": clean,
                            "perturbed_bca": perturbed,
                            "reduction": clean - perturbed})
        return out


def derive_seed(base_seed: int, cell_id: str, repeat: int) -> int:
    """Stable per-repeat seed from the base seed and a cell identifier."""
    digest = hashlib.blake2b(
        f"{base_seed}|{cell_id}|{repeat}".encode(), digest_size=8).digest()
    return int.from_bytes(digest, "little") % (2 ** 31)


def _sha256(a: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(a).tobytes()).hexdigest()


def _load_dataset(config: ExperimentConfig) -> tuple[str, LabeledDataset]:
    if config.dataset_path is not None:
        return Path(config.dataset_path).name, load_bundle(config.dataset_path)
    return "synth", synth_generate(config.synth)


def _make_pset(method: str, train: LabeledDataset, config: ExperimentConfig,
               seed: int) -> _perturb.PerturbationSet:
    mult = config.multiplier_for(method)
    if method == "RAND":
        return _perturb.gen_rand(train, mult, seed)
    if method == "SN":
        return _perturb.gen_sn(train, mult, seed)
    noise_cfg = _perturb.NoiseOptConfig(
        epochs=config.noise_epochs, seed=seed,
        substitute_epochs=config.substitute_epochs,
        n_segments=config.tr_segments)
    if method == "EMIN":
        return _perturb.gen_emin(train, mult, noise_cfg)
    return _perturb.gen_emax(train, mult, noise_cfg)


def _apply_transform(train: LabeledDataset, transform: str,
                     config: ExperimentConfig, seed: int) -> LabeledDataset:
    if transform == "none":
        return train
    if transform == "sl":
        return _robust.surface_laplacian(train)
    t = train.n_samples
    if transform == "ts":
        max_offset = config.ts_max_offset or t // 4
        trials = np.stack([
            _robust.temporal_shift(x, max_offset, derive_seed(seed, "ts", i))
            for i, x in enumerate(train.trials)])
        return train.with_trials(trials)
    if transform == "tr":
        trials = np.stack([
            _robust.temporal_recombination(x, config.tr_segments,
                                           derive_seed(seed, "tr", i))
            for i, x in enumerate(train.trials)])
        return train.with_trials(trials)
    raise ValueError(f"unknown transform {transform!r}")


def _run_cnn_cell(train, test, model_family, target, defense, config, seed):
    n_out = test.n_classes if target == "task" else test.n_users
    spec = _models.ArchitectureSpec(
        family=model_family, n_channels=train.n_channels,
        n_samples=train.n_samples, n_outputs=n_out)
    train_cfg = _models.TrainConfig(epochs=config.epochs, seed=seed,
                                    target=target)
    if defense.startswith("at:"):
        eps = float(defense.split(":", 1)[1])
        pgd = _robust.PgdConfig(epsilon=eps, n_steps=config.pgd_steps)
        clf = _robust.adversarial_train(spec, train, pgd, train_cfg)
    else:
        clf = _models.train(spec, train, train_cfg)
    pred = _models.predict(clf, test.trials)
    truth = test.task_labels if target == "task" else test.user_labels
    return _bca(pred, truth).bca


def _run_classic_cell(train, test, pipeline: str) -> float:
    feature, model_kind = pipeline.split("+", 1)
    return _classic.classic_uid_eval(train, test,
                                     _classic.FeatureSpec(kind=feature),
                                     model_kind)


def _expand_defenses(config: ExperimentConfig) -> list[str]:
    out = []
    for d in config.defenses:
        if d == "none":
            out.append("none")
        elif d == "at":
            out.extend(f"at:{eps:g}" for eps in config.at_epsilons)
        else:
            raise ValueError(f"unknown defense {d!r}")
    return out


def run_experiment(config: ExperimentConfig,
                   progress=None) -> ExperimentReport:
    """Run every configured cell for every repeat; failures mark their rows
    and the run continues. Deterministic given the base seed."""
    dataset_name, dataset = _load_dataset(config)
    spec = SplitSpec(train_sessions=frozenset(config.train_sessions),
                     test_sessions=frozenset(config.test_sessions))
    train, test = split_by_session(dataset, spec)
    test_digest = _sha256(test.trials)

    defenses = _expand_defenses(config)
    methods = ("none",) + config.methods
    cells = []
    for model, target, method, defense, transform in itertools.product(
            config.model_families, config.targets, methods, defenses,
            config.transforms):
        cells.append((method, model, target, defense, transform))
    for pipeline, method in itertools.product(config.classic_pipelines,
                                              methods):
        cells.append((method, pipeline, "uid", "none", "none"))

    # Perturbation sets are shared across cells per (method, repeat): every
    # model/defense/transform sees the same perturbed training data.
    pset_cache: dict = {}
    rows = []
    guard_ok = True
    for method, model, target, defense, transform in cells:
        cell_id = "|".join((dataset_name, method, model, target, defense,
                            transform))
        for repeat in range(1, config.n_repeats + 1):
            seed = derive_seed(config.base_seed, cell_id, repeat)
            if progress:
                progress(f"{cell_id} repeat {repeat}")
            try:
                if method == "none":
                    perturbed = train
                else:
                    key = (method, repeat)
                    if key not in pset_cache:
                        pseed = derive_seed(config.base_seed,
                                            f"perturb|{method}", repeat)
                        pset_cache[key] = _make_pset(method, train, config,
                                                     pseed)
                    perturbed = _perturb.apply_perturbation(train,
                                                            pset_cache[key])
                transformed = _apply_transform(perturbed, transform, config,
                                               seed)
                if model in _models.FAMILIES:
                    score = _run_cnn_cell(transformed, test, model, target,
                                          defense, config, seed)
                else:
                    score = _run_classic_cell(transformed, test, model)
                rows.append(CellResult(dataset_name, method, model, target,
                                       defense, transform, repeat, seed,
                                       float(score)))
            except Exception:
                rows.append(CellResult(dataset_name, method, model, target,
                                       defense, transform, repeat, seed,
                                       float("nan"),
                                       error=traceback.format_exc(limit=3)))
            if _sha256(test.trials) != test_digest:
                guard_ok = False
    return ExperimentReport(config=config, rows=rows,
                            test_checksum_ok=guard_ok)


# ---------------------------------------------------------------------------
# Reporting

def report_csv(report: ExperimentReport, path) -> None:
    """Fixed-column CSV: per-repeat rows then mean/std aggregate rows."""
    lines = [",".join(CSV_COLUMNS)]
    for r in report.rows:
        lines.append(",".join((r.dataset, r.method, r.model, r.target,
                               r.defense, r.transform, str(r.repeat),
                               repr(r.bca))))
    for cell_id, mean, std in report.aggregates():
        parts = cell_id.split("|")
        lines.append(",".join(parts + ["mean", f"{mean:.6f}"]))
        lines.append(",".join(parts + ["std", f"{std:.6f}"]))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def report_from_csv(path) -> ExperimentReport:
    """Rebuild a report (per-repeat rows only) from a CSV file."""
    rows = []
    lines = Path(path).read_text(encoding="utf-8").strip().splitlines()
    if lines and lines[0] == ",".join(CSV_COLUMNS):
        lines = lines[1:]
    for line in lines:
        parts = line.split(",")
        if len(parts) != len(CSV_COLUMNS) or parts[6] in ("mean", "std"):
            continue
        rows.append(CellResult(parts[0], parts[1], parts[2], parts[3],
                               parts[4], parts[5], int(parts[6]), 0,
                               float(parts[7])))
    return ExperimentReport(config=None, rows=rows)


def summary_csv(report: ExperimentReport, path) -> None:
    """Clean vs perturbed mean BCA with the reduction column."""
    lines = ["model,target,defense,transform,method,"
             "clean_bca,perturbed_bca,reduction"]
    for row in report.reduction_rows():
        lines.append(",".join((row["model"], row["target"], row["defense"],
                               row["transform"], row["method"],
                               f"{row['clean_bca']:.6f}",
                               f"{row['perturbed_bca']:.6f}",
                               f"{row['reduction']:.6f}")))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def report_plots(report: ExperimentReport, directory) -> list[Path]:
    """SVG plots: BCA-vs-epsilon polylines per AT sweep, grouped bars per
    transform sweep. Returns the written paths."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    written = []
    rows = report.rows
    methods = []
    for r in rows:
        if r.method not in methods:
            methods.append(r.method)

    # AT sweeps: one figure per (model, target, transform).
    at_rows = [r for r in rows if r.defense.startswith("at:")]
    for model, target, transform in sorted({(r.model, r.target, r.transform)
                                            for r in at_rows}):
        fig, ax = plt.subplots(figsize=(5, 3.5))
        for method in methods:
            pts = {}
            for r in at_rows:
                if (r.model, r.target, r.transform,
                        r.method) == (model, target, transform, method):
                    pts.setdefault(float(r.defense.split(":")[1]),
                                   []).append(r.bca)
            if not pts:
                continue
            eps = sorted(pts)
            ax.plot(eps, [float(np.mean(pts[e])) for e in eps],
                    marker="o", label=method)
        ax.set_xlabel("PGD epsilon (fraction of std)")
        ax.set_ylabel("test BCA")
        ax.set_title(f"adversarial training: {model} / {target}")
        ax.legend(fontsize=8)
        fig.tight_layout()
        out = directory / f"at_{model}_{target}_{transform}.svg"
        fig.savefig(out)
        plt.close(fig)
        written.append(out)

    # Transform sweeps: grouped bars per (model, target), defense none.
    plain = [r for r in rows if r.defense == "none"]
    transforms = sorted({r.transform for r in plain})
    if len(transforms) > 1:
        for model, target in sorted({(r.model, r.target) for r in plain}):
            fig, ax = plt.subplots(figsize=(6, 3.5))
            width = 0.8 / max(1, len(methods))
            for i, method in enumerate(methods):
                means = []
                for tr in transforms:
                    vals = [r.bca for r in plain
                            if (r.model, r.target, r.transform, r.method)
                            == (model, target, tr, method)]
                    means.append(float(np.mean(vals)) if vals else np.nan)
                x = np.arange(len(transforms)) + i * width
                ax.bar(x, means, width=width, label=method)
            ax.set_xticks(np.arange(len(transforms)) + 0.4 - width / 2)
            ax.set_xticklabels(transforms)
            ax.set_ylabel("test BCA")
            ax.set_title(f"transforms: {model} / {target}")
            ax.legend(fontsize=8)
            fig.tight_layout()
            out = directory / f"transforms_{model}_{target}.svg"
            fig.savefig(out)
            plt.close(fig)
            written.append(out)
    return written
