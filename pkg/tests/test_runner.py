"""Config parsing, experiment dispatch, emission and reproducibility."""

import csv
import dataclasses
import json
import math

import numpy as np
import pytest

from stabletrees.runner import (
    ConfigError,
    ExperimentConfig,
    SCHEMA_VERSION,
    emit,
    load_config,
    main,
    records_from_summary,
    run,
)

GOOD_SPINAL = """
[experiment]
experiment = spinal-sample
gamma = 2.0
seed = 5
replicates = 300
a = 1.0
radii = 1.0,0.5,0.25
"""

GOOD_CAL = """
[experiment]
experiment = calibrate
gamma = 2.0
seed = 9
replicates = 600
"""


def write_config(tmp_path, text, name="exp.ini"):
    path = tmp_path / name
    path.write_text(text)
    return path


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


class TestConfigValidation:
    def test_good_config_parses(self, tmp_path):
        cfg = load_config(write_config(tmp_path, GOOD_SPINAL))
        assert cfg.experiment == "spinal-sample"
        assert cfg.gamma == 2.0
        assert cfg.seed == 5
        assert cfg.radii == (1.0, 0.5, 0.25)
        assert cfg.eps_trunc is None

    def test_gamma_above_bound_names_key(self, tmp_path):
        path = write_config(tmp_path, GOOD_CAL.replace("2.0", "2.5"))
        with pytest.raises(ConfigError, match=r"'gamma'.*\(1, 2\].*2\.5"):
            load_config(path)

    def test_gamma_at_one_rejected(self, tmp_path):
        path = write_config(tmp_path, GOOD_SPINAL.replace("gamma = 2.0", "gamma = 1.0"))
        with pytest.raises(ConfigError, match="'gamma'"):
            load_config(path)

    def test_unknown_key_rejected(self, tmp_path):
        path = write_config(tmp_path, GOOD_SPINAL + "extra = 1\n")
        with pytest.raises(ConfigError, match="'extra'"):
            load_config(path)

    def test_missing_required_key(self, tmp_path):
        text = GOOD_SPINAL.replace("radii = 1.0,0.5,0.25\n", "")
        with pytest.raises(ConfigError, match="'radii'.*required"):
            load_config(write_config(tmp_path, text))

    def test_unknown_experiment(self, tmp_path):
        text = GOOD_CAL.replace("calibrate", "frobnicate")
        with pytest.raises(ConfigError, match="'experiment'"):
            load_config(write_config(tmp_path, text))

    def test_missing_experiment_key(self, tmp_path):
        text = "[experiment]\ngamma = 2.0\nseed = 1\n"
        with pytest.raises(ConfigError, match="'experiment'"):
            load_config(write_config(tmp_path, text))

    def test_wrong_section(self, tmp_path):
        text = GOOD_CAL.replace("[experiment]", "[exp]")
        with pytest.raises(ConfigError, match="section"):
            load_config(write_config(tmp_path, text))

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="cannot read"):
            load_config(tmp_path / "absent.ini")

    def test_malformed_ini(self, tmp_path):
        with pytest.raises(ConfigError, match="malformed"):
            load_config(write_config(tmp_path, "experiment analytic-check\n"))

    def test_radii_must_decrease(self, tmp_path):
        text = GOOD_SPINAL.replace("1.0,0.5,0.25", "0.25,0.5")
        with pytest.raises(ConfigError, match="'radii'.*decreasing"):
            load_config(write_config(tmp_path, text))

    def test_radii_must_fit_spine(self, tmp_path):
        text = GOOD_SPINAL.replace("a = 1.0", "a = 0.4")
        with pytest.raises(ConfigError, match="'radii'.*2a"):
            load_config(write_config(tmp_path, text))

    def test_radii_parse_failure(self, tmp_path):
        text = GOOD_SPINAL.replace("1.0,0.5,0.25", "1.0,foo")
        with pytest.raises(ConfigError, match="'radii'"):
            load_config(write_config(tmp_path, text))

    def test_bad_gauge_text(self, tmp_path):
        text = (
            "[experiment]\nexperiment = series-test\ngamma = 2.0\nseed = 1\n"
            "gauges = NoSuchGauge(q=1)\nkind = PackLevel\n"
        )
        with pytest.raises(ConfigError, match="'gauges'"):
            load_config(write_config(tmp_path, text))

    def test_bad_kind(self, tmp_path):
        text = (
            "[experiment]\nexperiment = series-test\ngamma = 2.0\nseed = 1\n"
            "gauges = PureExponent(q=1.0)\nkind = PackMass\n"
        )
        with pytest.raises(ConfigError, match="'kind'"):
            load_config(write_config(tmp_path, text))

    def test_numeric_bounds(self, tmp_path):
        for repl, key in [
            (("seed = 9", "seed = -1"), "seed"),
            (("replicates = 600", "replicates = 0"), "replicates"),
        ]:
            text = GOOD_CAL.replace(*repl)
            with pytest.raises(ConfigError, match=key):
                load_config(write_config(tmp_path, text))
        with pytest.raises(ConfigError, match="'tol'"):
            load_config(write_config(tmp_path, GOOD_CAL + "tol = 0\n"))
        with pytest.raises(ConfigError, match="'n_grid'"):
            load_config(write_config(tmp_path, GOOD_CAL + "n_grid = 32\n"))

    def test_calibrate_needs_gamma_two(self, tmp_path):
        text = GOOD_CAL.replace("gamma = 2.0", "gamma = 1.5")
        with pytest.raises(ConfigError, match="'gamma'.*calibrate"):
            load_config(write_config(tmp_path, text))

    def test_density_grid_order(self, tmp_path):
        text = (
            "[experiment]\nexperiment = density-exp\ngamma = 1.5\nseed = 1\n"
            "replicates = 2\nn_grid = 512\na = 0.3\n"
            "gauges = PureExponent(q=1.0)\nkind = PackLevel\n"
            "n_min = 8\nn_max = 5\n"
        )
        with pytest.raises(ConfigError, match="'n_min'"):
            load_config(write_config(tmp_path, text))

    def test_seed_override(self, tmp_path):
        path = write_config(tmp_path, GOOD_CAL)
        assert load_config(path, seed_override=123).seed == 123
        with pytest.raises(ConfigError, match="'seed'"):
            load_config(path, seed_override=-2)


class TestEmission:
    def test_empty_records_header_only(self, tmp_path):
        paths = emit([], tmp_path / "out")
        rows = read_rows(paths["records.csv"])
        assert len(rows) == 1
        assert rows[0][0] == "experiment"
        with open(paths["summary.json"]) as fh:
            summary = json.load(fh)
        assert summary["schema_version"] == SCHEMA_VERSION
        assert summary["records"] == []
        assert summary["all_passed"] is True

    def test_round_trip_and_nan_cells(self, tmp_path):
        cfg = load_config(write_config(tmp_path, GOOD_SPINAL))
        cfg = dataclasses.replace(cfg, replicates=64)
        result = run(cfg, out_dir=tmp_path / "out")
        with open(result.paths["summary.json"]) as fh:
            summary = json.load(fh)
        rebuilt = records_from_summary(summary)
        stripped = [dataclasses.replace(r, runtime=0.0) for r in result.records]
        assert rebuilt == stripped
        # records with no analytic target keep an empty target cell
        rows = read_rows(result.paths["records.csv"])
        header = rows[0]
        assert header[:4] == ["experiment", "params", "statistic", "value"]
        assert "runtime" not in header
        draws = read_rows(result.paths["draws.csv"])
        lam_col = draws[0].index("Lambda")
        r_col = draws[0].index("r")
        for row in draws[1:]:
            assert (row[lam_col] == "") == (row[r_col] == "1.0")

    def test_config_echoed_in_summary(self, tmp_path):
        cfg = load_config(write_config(tmp_path, GOOD_CAL))
        result = run(cfg, out_dir=tmp_path / "out")
        with open(result.paths["summary.json"]) as fh:
            summary = json.load(fh)
        assert summary["config"]["experiment"] == "calibrate"
        assert summary["config"]["seed"] == 9
        assert summary["experiment"] == "calibrate"


class TestAnalyticCheck:
    def test_all_identities_pass(self):
        cfg = ExperimentConfig(experiment="analytic-check", gamma=1.7, seed=1)
        result = run(cfg)
        assert result.all_passed
        stats = {r.statistic for r in result.records}
        assert "semigroup_ode_gap_max" in stats
        assert "tail_constant_gap" in stats
        assert all(r.value <= r.tol for r in result.records)


class TestSimulateTree:
    def test_metric_checks_pass(self):
        cfg = ExperimentConfig(
            experiment="simulate-tree", gamma=2.0, seed=3, replicates=2, n_grid=2048
        )
        result = run(cfg)
        assert result.all_passed
        by_stat = {r.statistic: r for r in result.records}
        assert by_stat["distance_brute_force_gap_max"].value == 0.0
        assert by_stat["mass_ball_monotone_violations"].value == 0.0

    def test_stable_offspring_tree(self):
        cfg = ExperimentConfig(
            experiment="simulate-tree", gamma=1.5, seed=4, replicates=1, n_grid=256, a=0.2
        )
        result = run(cfg)
        assert result.all_passed


class TestSpinalSample:
    def test_transforms_match(self):
        cfg = ExperimentConfig(
            experiment="spinal-sample", gamma=2.0, seed=5, replicates=2000,
            a=1.0, radii=(1.0, 0.5),
        )
        result = run(cfg)
        assert result.all_passed
        assert len(result.records) == 4
        header, rows = result.extras["draws.csv"]
        assert len(rows) == 2000 * 2
        for r in result.records:
            assert math.isfinite(r.target)
            assert r.error > 0

    def test_stable_case_runs(self):
        cfg = ExperimentConfig(
            experiment="spinal-sample", gamma=1.5, seed=6, replicates=400,
            a=1.0, radii=(1.0, 0.5),
        )
        result = run(cfg)
        assert result.all_passed


class TestSeriesTest:
    def test_critical_gauge_converges_at_two(self):
        cfg = ExperimentConfig(
            experiment="series-test", gamma=2.0, seed=1,
            gauges=(load_gauge("LevelCritical(p=1, theta=1.0)"),),
            kind="PackLevel",
        )
        result = run(cfg)
        rec = result.records[0]
        assert rec.value == 1.0
        assert rec.note == "Converges"
        assert rec.passed

    def test_both_sides_recorded(self):
        cfg = ExperimentConfig(
            experiment="series-test", gamma=1.5, seed=1,
            gauges=(
                load_gauge("LevelCritical2(u=3.0)"),
                load_gauge("LevelCritical2(u=-3.0)"),
            ),
            kind="HausLevel",
        )
        result = run(cfg)
        notes = [r.note for r in result.records]
        assert set(notes) == {"Converges", "Diverges"}


class TestCalibrate:
    def test_exact_lattice_targets(self):
        cfg = ExperimentConfig(
            experiment="calibrate", gamma=2.0, seed=9, replicates=3000
        )
        result = run(cfg)
        assert result.all_passed
        by_stat = {r.statistic: r for r in result.records}
        ratio = by_stat["survival_ratio"]
        assert ratio.target == 0.5
        assert abs(ratio.value - 0.5) <= ratio.tol
        disp = by_stat["branching_dispersion_index"]
        assert disp.target == 1.0 - 1.0 / 32.0
        assert 0.9 < disp.value < 1.1

    def test_tol_override_can_fail(self):
        cfg = ExperimentConfig(
            experiment="calibrate", gamma=2.0, seed=9, replicates=200, tol=1e-12
        )
        result = run(cfg)
        assert not result.all_passed


class TestDensityExp:
    def test_two_sided_report(self, tmp_path):
        cfg = ExperimentConfig(
            experiment="density-exp", gamma=1.5, seed=2201, replicates=6,
            n_grid=512, a=0.3,
            gauges=(
                load_gauge("LevelCritical(p=1, theta=10.0)"),
                load_gauge("LevelCritical(p=1, theta=-10.0)"),
            ),
            kind="PackLevel", n_points=6, n_min=4, n_max=9, window=2, min_levels=3,
        )
        result = run(cfg, out_dir=tmp_path / "out")
        agrees = [r for r in result.records if r.statistic == "trend_verdict_agrees"]
        assert len(agrees) == 2
        assert all(r.value == 1.0 for r in agrees)
        slopes = {r.params: r.value for r in result.records if r.statistic == "trend_median_slope"}
        vals = sorted(slopes.values())
        assert vals[0] < 0 < vals[1]
        with open(result.paths["report.json"]) as fh:
            report = json.load(fh)
        assert len(report["gauges"]) == 2
        rows = read_rows(result.paths["profiles.csv"])
        assert rows[0] == ["gauge", "row", "point_id", "level", "ratio"]
        assert len(rows) > 1


class TestReproducibility:
    def test_byte_identical_rerun(self, tmp_path):
        cfg = load_config(write_config(tmp_path, GOOD_SPINAL))
        a = run(cfg, out_dir=tmp_path / "a")
        b = run(cfg, out_dir=tmp_path / "b")
        for name in a.paths:
            assert a.paths[name].read_bytes() == b.paths[name].read_bytes()

    def test_worker_count_invariant(self, tmp_path):
        cfg = load_config(write_config(tmp_path, GOOD_CAL))
        a = run(cfg, workers=1, out_dir=tmp_path / "w1")
        b = run(cfg, workers=3, out_dir=tmp_path / "w3")
        for name in a.paths:
            assert a.paths[name].read_bytes() == b.paths[name].read_bytes()

    def test_seed_changes_draws(self, tmp_path):
        cfg = load_config(write_config(tmp_path, GOOD_SPINAL))
        a = run(cfg, out_dir=tmp_path / "s5")
        cfg2 = dataclasses.replace(cfg, seed=6)
        b = run(cfg2, out_dir=tmp_path / "s6")
        assert a.paths["draws.csv"].read_bytes() != b.paths["draws.csv"].read_bytes()


class TestMain:
    def test_run_success_exit_zero(self, tmp_path, capsys):
        path = write_config(
            tmp_path,
            "[experiment]\nexperiment = analytic-check\ngamma = 2.0\nseed = 1\n",
        )
        code = main(["run", str(path), "--out", str(tmp_path / "out")])
        assert code == 0
        out = capsys.readouterr().out
        assert "[PASS]" in out
        assert (tmp_path / "out" / "records.csv").exists()

    def test_config_error_exit_two(self, tmp_path, capsys):
        path = write_config(tmp_path, GOOD_CAL.replace("2.0", "2.5"))
        code = main(["run", str(path), "--out", str(tmp_path / "out")])
        assert code == 2
        err = capsys.readouterr().err
        assert "'gamma'" in err
        assert "(1, 2]" in err

    def test_failure_exit_one(self, tmp_path):
        path = write_config(
            tmp_path, GOOD_CAL.replace("replicates = 600", "replicates = 200\ntol = 1e-12")
        )
        code = main(["run", str(path), "--out", str(tmp_path / "out")])
        assert code == 1

    def test_seed_flag_overrides(self, tmp_path):
        path = write_config(tmp_path, GOOD_CAL.replace("replicates = 600", "replicates = 100"))
        main(["run", str(path), "--seed", "77", "--out", str(tmp_path / "out")])
        with open(tmp_path / "out" / "summary.json") as fh:
            assert json.load(fh)["config"]["seed"] == 77

    def test_out_dir_precedence(self, tmp_path, monkeypatch):
        path = write_config(tmp_path, GOOD_CAL.replace("replicates = 600", "replicates = 50"))
        monkeypatch.setenv("STABLETREES_OUT", str(tmp_path / "from_env"))
        main(["run", str(path)])
        assert (tmp_path / "from_env" / "records.csv").exists()
        main(["run", str(path), "--out", str(tmp_path / "from_flag")])
        assert (tmp_path / "from_flag" / "records.csv").exists()


def load_gauge(text):
    from stabletrees.gauges import parse_gauge

    return parse_gauge(text)
