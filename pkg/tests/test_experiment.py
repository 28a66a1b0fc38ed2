"""Experiment matrix orchestration, reporting, and the protocol guard."""

import numpy as np
import pytest
import yaml

from eegunlearn import ExperimentConfig, report_csv, report_plots, \
    run_experiment
from eegunlearn import experiment as experiment_mod
from eegunlearn.experiment import (CSV_COLUMNS, CellResult,
                                   ExperimentReport, derive_seed,
                                   report_from_csv, summary_csv)

from conftest import TINY_SYNTH

FAST = dict(synth=TINY_SYNTH, train_sessions=(1,), test_sessions=(2,),
            n_repeats=1, epochs=2, noise_epochs=2, substitute_epochs=2,
            pgd_steps=2)


class TestDeriveSeed:
    def test_stable(self):
        assert derive_seed(1, "a|b", 2) == derive_seed(1, "a|b", 2)

    def test_distinct_inputs_distinct_seeds(self):
        seeds = {derive_seed(b, c, r)
                 for b in (0, 1) for c in ("x", "y") for r in (1, 2)}
        assert len(seeds) == 8

    def test_range(self):
        for r in range(20):
            assert 0 <= derive_seed(7, "cell", r) < 2 ** 31


class TestConfig:
    def test_requires_exactly_one_source(self):
        with pytest.raises(ValueError, match="exactly one"):
            ExperimentConfig()
        with pytest.raises(ValueError, match="exactly one"):
            ExperimentConfig(dataset_path="d", synth=TINY_SYNTH)

    def test_unknown_method(self):
        with pytest.raises(ValueError, match="unknown method"):
            ExperimentConfig(synth=TINY_SYNTH, methods=("FOO",))

    def test_needs_some_model(self):
        with pytest.raises(ValueError, match="no models"):
            ExperimentConfig(synth=TINY_SYNTH, model_families=(),
                             classic_pipelines=())

    def test_preset_and_override(self):
        cfg = ExperimentConfig(synth=TINY_SYNTH, methods=("RAND", "EMIN"),
                               multipliers={"RAND": 0.7})
        assert cfg.multiplier_for("RAND") == 0.7
        assert cfg.multiplier_for("EMIN") == 0.3

    def test_dict_round_trip(self):
        cfg = ExperimentConfig(synth=TINY_SYNTH, methods=("RAND",),
                               **{k: v for k, v in FAST.items()
                                  if k != "synth"})
        again = ExperimentConfig.from_dict(cfg.to_dict())
        assert again == cfg

    def test_yaml_round_trip(self, tmp_path):
        cfg = ExperimentConfig(synth=TINY_SYNTH, methods=("SN",),
                               **{k: v for k, v in FAST.items()
                                  if k != "synth"})
        import json
        doc = json.loads(json.dumps(cfg.to_dict()))  # tuples -> lists
        (tmp_path / "cfg.yaml").write_text(yaml.safe_dump(doc))
        assert ExperimentConfig.from_yaml(tmp_path / "cfg.yaml") == cfg

    def test_unsupported_version(self):
        with pytest.raises(ValueError, match="config_version"):
            ExperimentConfig.from_dict({"config_version": 99})


@pytest.fixture(scope="module")
def rand_report():
    cfg = ExperimentConfig(methods=("RAND",), targets=("task", "uid"),
                           **FAST)
    return cfg, run_experiment(cfg)


class TestRunExperiment:
    def test_clean_only_run(self):
        cfg = ExperimentConfig(methods=(), targets=("task",), **FAST)
        report = run_experiment(cfg)
        assert report.rows
        assert {r.method for r in report.rows} == {"none"}
        assert {r.target for r in report.rows} == {"task"}
        assert not report.failed

    def test_rows_cover_matrix(self, rand_report):
        cfg, report = rand_report
        assert len(report.rows) == 2 * 2 * cfg.n_repeats  # methods x targets
        assert {r.method for r in report.rows} == {"none", "RAND"}
        assert not report.failed

    def test_checksum_guard_passes(self, rand_report):
        _, report = rand_report
        assert report.test_checksum_ok

    def test_seeds_are_derived(self, rand_report):
        cfg, report = rand_report
        for r in report.rows:
            assert r.seed == derive_seed(cfg.base_seed, r.cell_id, r.repeat)

    def test_deterministic_csv_bytes(self, tmp_path):
        cfg = ExperimentConfig(methods=("SN",), targets=("uid",), **FAST)
        report_csv(run_experiment(cfg), tmp_path / "a.csv")
        report_csv(run_experiment(cfg), tmp_path / "b.csv")
        assert (tmp_path / "a.csv").read_bytes() == \
            (tmp_path / "b.csv").read_bytes()

    def test_classic_pipeline_cells(self):
        cfg = ExperimentConfig(methods=("RAND",), model_families=(),
                               targets=(), classic_pipelines=("ar+lda",),
                               **FAST)
        report = run_experiment(cfg)
        assert {r.model for r in report.rows} == {"ar+lda"}
        assert {r.target for r in report.rows} == {"uid"}
        assert not report.failed

    def test_failed_cell_marks_row_and_continues(self, monkeypatch):
        calls = []

        def boom(*args, **kwargs):
            calls.append(1)
            raise RuntimeError("synthetic failure")

        monkeypatch.setattr(experiment_mod, "_run_cnn_cell", boom)
        cfg = ExperimentConfig(methods=("RAND",), targets=("uid",), **FAST)
        report = run_experiment(cfg)
        assert len(report.failed) == len(report.rows) == len(calls)
        assert all(np.isnan(r.bca) for r in report.failed)
        assert all("synthetic failure" in r.error for r in report.failed)

    def test_guard_detects_test_mutation(self, monkeypatch):
        real = experiment_mod._run_cnn_cell

        def tamper(train, test, *args, **kwargs):
            trials = test.trials
            trials.flags.writeable = True
            trials[0, 0, 0] += 1.0
            trials.flags.writeable = False
            return real(train, test, *args, **kwargs)

        monkeypatch.setattr(experiment_mod, "_run_cnn_cell", tamper)
        cfg = ExperimentConfig(methods=(), targets=("uid",), **FAST)
        report = run_experiment(cfg)
        assert not report.test_checksum_ok


class TestReporting:
    def test_csv_shape(self, rand_report, tmp_path):
        _, report = rand_report
        report_csv(report, tmp_path / "cells.csv")
        lines = (tmp_path / "cells.csv").read_text().strip().splitlines()
        n_cells = len({r.cell_id for r in report.rows})
        assert lines[0] == ",".join(CSV_COLUMNS)
        assert len(lines) == 1 + len(report.rows) + 2 * n_cells

    def test_csv_round_trip_means(self, rand_report, tmp_path):
        _, report = rand_report
        report_csv(report, tmp_path / "cells.csv")
        again = report_from_csv(tmp_path / "cells.csv")
        assert len(again.rows) == len(report.rows)
        assert again.aggregates() == report.aggregates()

    def test_reduction_rows(self, rand_report):
        _, report = rand_report
        rows = report.reduction_rows()
        by_target = {r["target"]: r for r in rows if r["method"] == "RAND"}
        for target in ("task", "uid"):
            row = by_target[target]
            assert row["reduction"] == pytest.approx(
                row["clean_bca"] - row["perturbed_bca"])

    def test_mean_bca_filters(self, rand_report):
        _, report = rand_report
        val = report.mean_bca(method="RAND", target="uid")
        assert 0.0 <= val <= 1.0
        with pytest.raises(KeyError):
            report.mean_bca(method="EMAX")

    def test_empty_report_header_only(self, tmp_path):
        report = ExperimentReport(config=None, rows=[])
        report_csv(report, tmp_path / "empty.csv")
        assert (tmp_path / "empty.csv").read_text() == \
            ",".join(CSV_COLUMNS) + "\n"

    def test_summary_csv(self, rand_report, tmp_path):
        _, report = rand_report
        summary_csv(report, tmp_path / "summary.csv")
        lines = (tmp_path / "summary.csv").read_text().strip().splitlines()
        assert lines[0].startswith("model,target,defense")
        assert len(lines) == 1 + len(report.reduction_rows())


class TestPlots:
    @staticmethod
    def fabricated_report():
        rows = []
        for method in ("none", "SN", "EMIN"):
            for eps in (0.0, 0.05, 0.1):
                rows.append(CellResult("synth", method, "eegnet", "uid",
                                       f"at:{eps:g}", "none", 1, 0, 0.5))
            for transform in ("none", "tr"):
                rows.append(CellResult("synth", method, "eegnet", "uid",
                                       "none", transform, 1, 0, 0.5))
        return ExperimentReport(config=None, rows=rows)

    def test_at_sweep_one_polyline_per_method(self, tmp_path):
        import matplotlib
        matplotlib.rcParams["svg.fonttype"] = "none"  # keep legend text
        written = report_plots(self.fabricated_report(), tmp_path)
        at = [p for p in written if p.name.startswith("at_")]
        assert len(at) == 1
        svg = at[0].read_text()
        # one legend entry per method present in the rows
        for method in ("none", "SN", "EMIN"):
            assert method in svg

    def test_transform_bars_written(self, tmp_path):
        written = report_plots(self.fabricated_report(), tmp_path)
        assert any(p.name.startswith("transforms_") for p in written)
        for p in written:
            assert p.suffix == ".svg"
            assert p.exists()
