"""Command line interface.

Subcommands wire the library operations together: ``synth`` writes a
synthetic dataset bundle, ``generate`` computes and applies a perturbation,
``train``/``eval`` handle classifiers, ``robustness`` runs defenses and
transformations, and ``eval --config`` / ``report`` drive the full
experiment matrix with CSV and SVG output.
"""

from __future__ import annotations

import dataclasses
import json
import sys
from pathlib import Path

import click
import numpy as np

from eegunlearn import classic as _classic
from eegunlearn import dataio as _dataio
from eegunlearn import experiment as _experiment
from eegunlearn import models as _models
from eegunlearn import perturb as _perturb
from eegunlearn import robustness as _robust
from eegunlearn.metrics import bca as _bca


@click.group()
def main():
    """Make user identity in EEG training data unlearnable, and verify it."""


def _load_split(data, train_sessions, test_sessions):
    dataset = _dataio.load_bundle(data)
    if train_sessions is None and test_sessions is None:
        return dataset, None
    sessions = set(dataset.sessions)
    tr = set(_parse_ids(train_sessions)) if train_sessions else set()
    te = set(_parse_ids(test_sessions)) if test_sessions else sessions - tr
    if not tr:
        tr = sessions - te
    spec = _dataio.SplitSpec(train_sessions=frozenset(tr),
                             test_sessions=frozenset(te))
    return _dataio.split_by_session(dataset, spec)


def _parse_ids(text):
    return [int(x) for x in str(text).replace(",", " ").split()]


@main.command()
@click.option("--preset", type=click.Choice(["reference"]), default=None,
              help="Use the committed reference configuration.")
@click.option("--users", type=int, default=8)
@click.option("--classes", type=int, default=2)
@click.option("--channels", type=int, default=16)
@click.option("--samples", type=int, default=256)
@click.option("--trials-per-user-per-class", type=int, default=50)
@click.option("--sessions", type=int, default=2)
@click.option("--seed", type=int, default=0)
@click.option("--out", required=True, type=click.Path())
def synth(preset, users, classes, channels, samples,
          trials_per_user_per_class, sessions, seed, out):
    """Generate a synthetic dataset bundle."""
    if preset == "reference":
        cfg = _dataio.REFERENCE_SYNTH
    else:
        cfg = _dataio.SynthConfig(
            n_users=users, n_classes=classes, n_channels=channels,
            n_samples=samples,
            trials_per_user_per_class=trials_per_user_per_class,
            n_sessions=sessions, seed=seed)
    dataset = _dataio.synth_generate(cfg)
    _dataio.save_bundle(dataset, out)
    click.echo(f"wrote {dataset.n_trials} trials "
               f"({dataset.n_users} users, {dataset.n_classes} classes) "
               f"to {out}")


@main.command()
@click.option("--method", required=True,
              type=click.Choice(list(_perturb.METHODS)))
@click.option("--in", "data", required=True, type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path())
@click.option("--alpha", type=float, default=None,
              help="Amplitude multiplier (overrides --preset).")
@click.option("--preset", type=click.Choice(list(_perturb.AMPLITUDE_PRESETS)),
              default="mi")
@click.option("--seed", type=int, default=0)
@click.option("--epochs", type=int, default=100,
              help="EMIN/EMAX noise optimization epochs.")
@click.option("--segments", type=int, default=8,
              help="Segment count for the shuffle transform in EMIN.")
@click.option("--no-trans", is_flag=True, help="Disable trans() in EMIN.")
@click.option("--substitutes", type=int, default=3,
              help="EMAX substitute model count.")
@click.option("--substitute-epochs", type=int, default=100)
@click.option("--no-ensemble", is_flag=True,
              help="Single substitute model in EMAX.")
@click.option("--no-channel-variation", is_flag=True,
              help="Constant per-channel amplitude in SN.")
@click.option("--train-sessions", default=None,
              help="Restrict perturbation fitting to these sessions.")
def generate(method, data, out, alpha, preset, seed, epochs, segments,
             no_trans, substitutes, substitute_epochs, no_ensemble,
             no_channel_variation, train_sessions):
    """Compute a user-wise perturbation and write the perturbed dataset.

    The output directory holds both the perturbed dataset bundle and the
    perturbation bundle (perturb_meta.json + deltas.f32).
    """
    if train_sessions:
        train, _ = _load_split(data, train_sessions, None)
    else:
        train = _dataio.load_bundle(data)
    mult = alpha if alpha is not None \
        else _perturb.AMPLITUDE_PRESETS[preset][method]
    if method == "RAND":
        pset = _perturb.gen_rand(train, mult, seed)
    elif method == "SN":
        pset = _perturb.gen_sn(train, mult, seed,
                               channel_variation=not no_channel_variation)
    else:
        cfg = _perturb.NoiseOptConfig(
            epochs=epochs, n_segments=segments, use_trans=not no_trans,
            n_substitutes=substitutes, use_ensemble=not no_ensemble,
            substitute_epochs=substitute_epochs, seed=seed)
        gen = _perturb.gen_emin if method == "EMIN" else _perturb.gen_emax
        pset = gen(train, mult, cfg)
    perturbed = _perturb.apply_perturbation(train, pset)
    _dataio.save_bundle(perturbed, out)
    _perturb.save_perturbation(pset, out)
    click.echo(f"wrote {method} perturbation (alpha multiplier {mult}) "
               f"and perturbed dataset to {out}")


@main.command()
@click.option("--in", "data", required=True, type=click.Path(exists=True),
              help="Training dataset bundle.")
@click.option("--test", "test_data", type=click.Path(exists=True),
              default=None, help="Test dataset bundle.")
@click.option("--train-sessions", default=None)
@click.option("--test-sessions", default=None)
@click.option("--target", type=click.Choice(["task", "uid"]),
              default="task")
@click.option("--model", "family",
              type=click.Choice(list(_models.FAMILIES)), default="eegnet")
@click.option("--epochs", type=int, default=100)
@click.option("--seed", type=int, default=0)
@click.option("--save", type=click.Path(), default=None,
              help="Directory to persist the trained classifier.")
def train(data, test_data, train_sessions, test_sessions, target, family,
          epochs, seed, save):
    """Train a classifier and report its test BCA."""
    if test_data is not None:
        train_set = _dataio.load_bundle(data)
        test_set = _dataio.load_bundle(test_data)
    else:
        train_set, test_set = _load_split(data, train_sessions,
                                          test_sessions)
        if test_set is None:
            raise click.UsageError(
                "provide --test or --train-sessions/--test-sessions")
    n_out = (train_set.n_classes if target == "task" else train_set.n_users)
    spec = _models.ArchitectureSpec(
        family=family, n_channels=train_set.n_channels,
        n_samples=train_set.n_samples, n_outputs=n_out)
    cfg = _models.TrainConfig(epochs=epochs, seed=seed, target=target)
    clf = _models.train(spec, train_set, cfg)
    pred = _models.predict(clf, test_set.trials)
    truth = (test_set.task_labels if target == "task"
             else test_set.user_labels)
    score = _bca(pred, truth)
    if save:
        _models.save_classifier(clf, save)
    click.echo(f"{family},{target},bca={score.bca:.4f},rca={score.rca:.4f},"
               f"chance={score.chance:.4f}")


@main.command("eval")
@click.option("--model", "model_dir", type=click.Path(exists=True),
              default=None, help="Saved classifier directory.")
@click.option("--in", "data", type=click.Path(exists=True), default=None,
              help="Dataset bundle to evaluate on.")
@click.option("--config", "config_path", type=click.Path(exists=True),
              default=None, help="Experiment matrix config (YAML).")
@click.option("--out", "out_dir", type=click.Path(), default=None,
              help="Results directory for --config runs.")
@click.option("--quiet", is_flag=True)
def eval_cmd(model_dir, data, config_path, out_dir, quiet):
    """Evaluate a saved classifier, or run a full experiment matrix.

    With --config, every configured cell is executed and cells.csv,
    summary.csv, and seeds.json are written to --out; the exit code is
    non-zero if any cell failed.
    """
    if config_path is not None:
        if out_dir is None:
            raise click.UsageError("--config requires --out")
        config = _experiment.ExperimentConfig.from_yaml(config_path)
        progress = None if quiet else (lambda msg: click.echo(msg, err=True))
        report = _experiment.run_experiment(config, progress=progress)
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        _experiment.report_csv(report, out / "cells.csv")
        _experiment.summary_csv(report, out / "summary.csv")
        seeds = {f"{r.cell_id}|{r.repeat}": r.seed for r in report.rows}
        (out / "seeds.json").write_text(
            json.dumps(seeds, sort_keys=True, indent=1) + "\n")
        if not report.test_checksum_ok:
            click.echo("PROTOCOL VIOLATION: test trials were modified",
                       err=True)
            sys.exit(2)
        if report.failed:
            click.echo(f"{len(report.failed)} cells failed", err=True)
            sys.exit(1)
        click.echo(f"wrote {len(report.rows)} rows to {out / 'cells.csv'}")
        return
    if model_dir is None or data is None:
        raise click.UsageError("provide --model and --in, or --config")
    clf = _models.load_classifier(model_dir)
    dataset = _dataio.load_bundle(data)
    pred = _models.predict(clf, dataset.trials)
    truth = (dataset.task_labels if clf.target == "task"
             else dataset.user_labels)
    score = _bca(pred, truth)
    click.echo(f"{clf.spec.family},{clf.target},bca={score.bca:.4f},"
               f"rca={score.rca:.4f},chance={score.chance:.4f}")


@main.command()
@click.option("--in", "data", required=True, type=click.Path(exists=True))
@click.option("--test", "test_data", type=click.Path(exists=True),
              default=None)
@click.option("--train-sessions", default=None)
@click.option("--test-sessions", default=None)
@click.option("--target", type=click.Choice(["task", "uid"]), default="uid")
@click.option("--model", "family",
              type=click.Choice(list(_models.FAMILIES)), default="eegnet")
@click.option("--mode", required=True,
              type=click.Choice(["at", "sl", "ts", "tr"]),
              help="Adversarial training or a data transformation.")
@click.option("--epsilon", type=float, default=0.05,
              help="PGD amplitude as a fraction of trial std (mode=at).")
@click.option("--steps", type=int, default=10)
@click.option("--segments", type=int, default=8)
@click.option("--max-offset", type=int, default=None)
@click.option("--montage", type=click.Path(exists=True), default=None)
@click.option("--epochs", type=int, default=100)
@click.option("--seed", type=int, default=0)
def robustness(data, test_data, train_sessions, test_sessions, target,
               family, mode, epsilon, steps, segments, max_offset, montage,
               epochs, seed):
    """Train under a defense or transformation and report test BCA."""
    if test_data is not None:
        train_set = _dataio.load_bundle(data)
        test_set = _dataio.load_bundle(test_data)
    else:
        train_set, test_set = _load_split(data, train_sessions,
                                          test_sessions)
        if test_set is None:
            raise click.UsageError(
                "provide --test or --train-sessions/--test-sessions")
    n_out = (train_set.n_classes if target == "task" else train_set.n_users)
    spec = _models.ArchitectureSpec(
        family=family, n_channels=train_set.n_channels,
        n_samples=train_set.n_samples, n_outputs=n_out)
    cfg = _models.TrainConfig(epochs=epochs, seed=seed, target=target)
    if mode == "at":
        pgd = _robust.PgdConfig(epsilon=epsilon, n_steps=steps)
        clf = _robust.adversarial_train(spec, train_set, pgd, cfg)
    else:
        if mode == "sl":
            mont = _robust.load_montage(montage) if montage else None
            train_set = _robust.surface_laplacian(train_set, mont)
        elif mode == "ts":
            offset = max_offset or train_set.n_samples // 4
            trials = np.stack([
                _robust.temporal_shift(x, offset, seed * 100003 + i)
                for i, x in enumerate(train_set.trials)])
            train_set = train_set.with_trials(trials)
        else:
            trials = np.stack([
                _robust.temporal_recombination(x, segments,
                                               seed * 100003 + i)
                for i, x in enumerate(train_set.trials)])
            train_set = train_set.with_trials(trials)
        clf = _models.train(spec, train_set, cfg)
    pred = _models.predict(clf, test_set.trials)
    truth = (test_set.task_labels if target == "task"
             else test_set.user_labels)
    score = _bca(pred, truth)
    click.echo(f"{family},{target},{mode},bca={score.bca:.4f},"
               f"chance={score.chance:.4f}")


@main.command()
@click.option("--in", "source", required=True, type=click.Path(exists=True),
              help="Results directory (with cells.csv) or a CSV file.")
@click.option("--plots", "plots_dir", type=click.Path(), default=None)
@click.option("--summary", "summary_path", type=click.Path(), default=None)
def report(source, plots_dir, summary_path):
    """Render plots and summaries from experiment results."""
    source = Path(source)
    csv_path = source / "cells.csv" if source.is_dir() else source
    rep = _experiment.report_from_csv(csv_path)
    if summary_path:
        _experiment.summary_csv(rep, summary_path)
        click.echo(f"wrote {summary_path}")
    if plots_dir:
        written = _experiment.report_plots(rep, plots_dir)
        for path in written:
            click.echo(f"wrote {path}")
    if not summary_path and not plots_dir:
        for cell_id, mean, std in rep.aggregates():
            click.echo(f"{cell_id}: bca {mean:.4f} +/- {std:.4f}")


if __name__ == "__main__":
    main()
