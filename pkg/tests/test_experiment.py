import math
from pathlib import Path

import numpy as np
import pytest

from isiw import (
    Domain,
    ModelParams,
    Scenario,
    param_metrics,
    parse_config,
    rmspe,
    run_experiment,
    run_replicate,
)
from isiw.experiment import ExperimentConfig, format_config, summarize
from isiw import io
from isiw.cli import main as cli_main


def tiny_config(**overrides):
    base = dict(
        replicates=2,
        grid_nx=16,
        grid_ny=16,
        phi=(0.15,),
        n=(40,),
        methods=("mle", "isiw-v:known"),
        seed=5,
        timing=False,
        threads=1,
    )
    base.update(overrides)
    return ExperimentConfig(**base)


class TestRmspe:
    def test_identical_vectors(self):
        assert rmspe([1.0, 2.0, 3.0], [1.0, 2.0, 3.0]) == 0.0

    def test_hand_value(self):
        assert rmspe([1.0, 2.0], [1.0, 4.0]) == pytest.approx(math.sqrt(2), rel=1e-12)

    def test_matches_direct_recomputation(self):
        rng = np.random.default_rng(1)
        a, b = rng.normal(size=100), rng.normal(size=100)
        assert rmspe(a, b) == pytest.approx(float(np.sqrt(np.mean((a - b) ** 2))), abs=1e-12)

    def test_length_mismatch_rejected(self):
        with pytest.raises(ValueError):
            rmspe([1.0], [1.0, 2.0])


class TestParamMetrics:
    def test_exact_fits_have_zero_error(self):
        truth = ModelParams.from_values(4.0, 1.5, 0.15, 0.1)
        out = param_metrics([truth, truth], truth)
        for name in ("mu", "sigma2", "phi", "tau2", "kappa"):
            assert out[name] == (0.0, 0.0)

    def test_single_fit_hand_value(self):
        truth = ModelParams.from_values(4.0, 1.5, 0.15, 0.1)
        est = ModelParams.from_values(4.0, 3.0, 0.15, 0.1)
        bias, rmse = param_metrics([est], truth)["sigma2"]
        assert bias == pytest.approx(1.0)
        assert rmse == pytest.approx(1.0)

    def test_two_fits_hand_value(self):
        truth = ModelParams.from_values(4.0, 1.5, 0.15, 0.1)
        fits = [
            ModelParams.from_values(3.0, 1.5, 0.15, 0.1),
            ModelParams.from_values(5.0, 1.5, 0.15, 0.1),
        ]
        bias, rmse = param_metrics(fits, truth)["mu"]
        assert bias == pytest.approx(0.0, abs=1e-15)
        assert rmse == pytest.approx(0.25)

    def test_zero_truth_reported_missing(self):
        truth = ModelParams.from_values(4.0, 1.5, 0.15, 0.0)
        out = param_metrics([truth], truth)
        assert math.isnan(out["tau2"][0]) and math.isnan(out["tau2"][1])


class TestRunReplicate:
    def test_deterministic_rows(self):
        config = tiny_config()
        sc = config.scenarios()[0]
        a = [r.csv_row() for r in run_replicate(config, sc, 1)]
        b = [r.csv_row() for r in run_replicate(config, sc, 1)]
        assert a == b

    def test_unit_weights_collapse_to_unweighted(self):
        # beta = 0 makes the true intensity constant, the known weights
        # exactly one, and the weighted fit identical to the unweighted one
        config = tiny_config(beta=0.0, methods=("vecchia", "isiw-v:known"))
        sc = config.scenarios()[0]
        rows = run_replicate(config, sc, 0)
        by_method = {r.method: r for r in rows}
        a, b = by_method["vecchia"], by_method["isiw-v"]
        assert a.psi_hat == b.psi_hat
        assert a.rmspe == b.rmspe

    def test_thomas_known_weights_fail_softly(self):
        config = tiny_config(samplers=("thomas",), methods=("mle", "isiw-v:known"),
                             thomas_parent_rate=150.0)
        sc = config.scenarios()[0]
        rows = run_replicate(config, sc, 0)
        by_method = {r.method: r for r in rows}
        assert math.isnan(by_method["isiw-v"].rmspe)
        assert by_method["isiw-v"].error is not None
        assert math.isfinite(by_method["mle"].rmspe)

    def test_wall_time_populated_when_timing(self):
        config = tiny_config(timing=True)
        rows = run_replicate(config, config.scenarios()[0], 0)
        assert all(r.seconds > 0 for r in rows)

    def test_scenario_labels(self):
        sc = Scenario(kind="lgcp", n=100, phi=0.15)
        assert sc.label == "lgcp-n100-phi0.15"
        assert Scenario(kind="scp", n=800, phi=0.02).label == "scp-n800-phi0.02"


class TestRunExperiment:
    def test_single_cell_summary_equals_row(self, tmp_path):
        config = tiny_config(replicates=1, methods=("mle",))
        rows, summary = run_experiment(config, tmp_path)
        assert len(rows) == 1
        assert len(summary) == 1
        scenario, method, variant, mean, sd, count, failures = summary[0]
        assert mean == rows[0].rmspe
        assert sd == 0.0
        assert count == 1 and failures == 0
        assert (tmp_path / "results.csv").exists()
        assert (tmp_path / "summary.csv").exists()
        assert (tmp_path / "ranks.csv").exists()
        assert (tmp_path / "run_metadata.txt").exists()

    def test_results_header_pinned(self, tmp_path):
        config = tiny_config(replicates=1, methods=("mle",))
        run_experiment(config, tmp_path)
        header = (tmp_path / "results.csv").read_text().splitlines()[0]
        assert header == "replicate,scenario,method,variant,rmspe,mu,sigma2,phi,tau2,kappa,seconds,converged"

    def test_independent_reaggregation(self, tmp_path):
        config = tiny_config(replicates=3)
        rows, summary = run_experiment(config, tmp_path)
        # recompute mean/sd from the long CSV with separate parsing code
        import csv

        table = {}
        with open(tmp_path / "results.csv", newline="") as fh:
            for rec in csv.DictReader(fh):
                key = (rec["scenario"], rec["method"], rec["variant"])
                table.setdefault(key, []).append(float(rec["rmspe"]))
        for scenario, method, variant, mean, sd, count, failures in summary:
            vals = np.array(table[(scenario, method, variant)])
            assert mean == pytest.approx(float(np.mean(vals)), abs=1e-12)
            assert sd == pytest.approx(float(np.std(vals, ddof=1)), abs=1e-12)
            assert count == vals.size

    def test_parallel_matches_serial(self, tmp_path):
        config = tiny_config(replicates=2)
        rows_a, _ = run_experiment(config, tmp_path / "serial")
        config2 = tiny_config(replicates=2, threads=2)
        rows_b, _ = run_experiment(config2, tmp_path / "parallel")
        assert [r.csv_row() for r in rows_a] == [r.csv_row() for r in rows_b]

    def test_rank_table_beats_column(self, tmp_path):
        config = tiny_config(replicates=2)
        run_experiment(config, tmp_path)
        lines = (tmp_path / "ranks.csv").read_text().splitlines()
        assert lines[0] == "scenario,method,variant,median_rank,mean_rank,pct_lower_rmspe_than_mle"
        rows = [line.split(",") for line in lines[1:]]
        isiw_row = next(r for r in rows if r[1] == "isiw-v")
        assert 0.0 <= float(isiw_row[5]) <= 100.0


class TestConfigFormat:
    def test_round_trip(self):
        config = tiny_config(pm_cutoff=0.3, samplers=("lgcp", "scp"))
        text = format_config(config)
        again = parse_config(text)
        assert again == config

    def test_parse_comments_and_blanks(self):
        text = """
        # comment line
        replicates = 4
        phi = 0.02, 0.15   # trailing comment
        methods = mle, isiw-v:diggle
        timing = off
        """
        config = parse_config(text)
        assert config.replicates == 4
        assert config.phi == (0.02, 0.15)
        assert config.methods == ("mle", "isiw-v:diggle")
        assert config.timing is False

    def test_unknown_key_rejected(self):
        with pytest.raises(ValueError, match="unknown key"):
            parse_config("no_such_key=1")

    def test_unknown_method_rejected(self):
        with pytest.raises(ValueError, match="unknown method"):
            parse_config("methods=gibbs")

    def test_bad_weight_source_rejected(self):
        with pytest.raises(ValueError, match="weight source"):
            parse_config("methods=isiw-v:magic")


class TestIoRoundTrips:
    def test_field_csv_round_trip(self, tmp_path):
        from isiw import CovParams, GridSpec, SeedStream, simulate_field

        grid = GridSpec(Domain(0, 1, 0, 1), 8, 8)
        fld = simulate_field(grid, CovParams(1.5, 0.15, 1.0), SeedStream(3))
        io.write_field_csv(tmp_path / "f.csv", fld)
        back = io.read_field_csv(tmp_path / "f.csv")
        assert back.grid == grid
        np.testing.assert_allclose(back.values, fld.values, rtol=1e-15)

    def test_dataset_csv_round_trip(self, tmp_path):
        rng = np.random.default_rng(0)
        from isiw import Dataset

        data = Dataset(locations=rng.random((10, 2)), values=rng.normal(size=10))
        io.write_dataset_csv(tmp_path / "d.csv", data)
        back = io.read_dataset_csv(tmp_path / "d.csv")
        np.testing.assert_array_equal(back.locations, data.locations)
        np.testing.assert_array_equal(back.values, data.values)

    def test_plan_export(self, tmp_path):
        from isiw import maxmin_order, nn_conditioning_sets

        rng = np.random.default_rng(1)
        locs = rng.random((6, 2))
        plan = nn_conditioning_sets(locs, maxmin_order(locs), 2)
        io.write_plan_csv(tmp_path / "plan.csv", plan)
        lines = (tmp_path / "plan.csv").read_text().splitlines()
        assert lines[0] == "index,ordered_position,neighbors"
        assert len(lines) == 7


class TestCli:
    def test_pipeline(self, tmp_path, capsys):
        out = str(tmp_path)
        assert cli_main(["simulate", "--nx", "12", "--seed", "3", "--out-dir", out]) == 0
        assert cli_main([
            "sample", "--field", f"{out}/field.csv", "--sampler", "lgcp",
            "--n", "60", "--seed", "4", "--out-dir", out,
        ]) == 0
        assert cli_main([
            "intensity", "--points", f"{out}/points.csv", "--selector", "scott",
            "--nx", "12", "--out-dir", out,
        ]) == 0
        # turn the point pattern into a dataset by pairing with field values
        fld = io.read_field_csv(f"{out}/field.csv")
        pts = io.read_points_csv(f"{out}/points.csv")
        from isiw import Dataset

        io.write_dataset_csv(f"{out}/data.csv", Dataset(locations=pts, values=4.0 + fld.at(pts)))
        assert cli_main([
            "fit", "--data", f"{out}/data.csv", "--method", "vecchia",
            "--m", "10", "--out-dir", out, "--out", "fit.txt",
        ]) == 0
        report = dict(
            line.split("=", 1) for line in Path(out, "fit.txt").read_text().splitlines()
        )
        assert float(report["sigma2"]) > 0
        assert cli_main([
            "krige", "--data", f"{out}/data.csv", "--mu", report["mu"],
            "--sigma2", report["sigma2"], "--phi", report["phi"],
            "--tau2", report["tau2"], "--nx", "12", "--out-dir", out,
        ]) == 0
        surface = io.read_surface_csv(f"{out}/surface.csv")
        assert surface.shape == (144, 4)
        assert np.all(surface[:, 3] >= 0)

    def test_experiment_subcommand(self, tmp_path):
        cfg = tmp_path / "exp.cfg"
        cfg.write_text(
            "replicates=1\ngrid_nx=16\ngrid_ny=16\nphi=0.15\nn=30\n"
            "methods=mle\nseed=2\ntiming=off\n"
        )
        out = tmp_path / "results"
        assert cli_main(["experiment", "--config", str(cfg), "--out-dir", str(out)]) == 0
        assert (out / "results.csv").exists()

    def test_usage_error_exit_code(self):
        assert cli_main(["fit", "--data", "/nonexistent.csv"]) == 1
        with pytest.raises(SystemExit) as exc:
            cli_main(["fit"])  # missing required --data
        assert exc.value.code == 1
        with pytest.raises(SystemExit) as exc:
            cli_main(["no-such-command"])
        assert exc.value.code == 1

    def test_numerical_failure_exit_code(self, tmp_path, capsys):
        # an effectively rank-one kriging system (phi >> domain, no nugget)
        rng = np.random.default_rng(5)
        from isiw import Dataset

        data = Dataset(locations=rng.random((30, 2)), values=rng.normal(size=30))
        io.write_dataset_csv(tmp_path / "d.csv", data)
        code = cli_main([
            "krige", "--data", str(tmp_path / "d.csv"), "--mu", "0",
            "--sigma2", "1.0", "--phi", "1e9", "--tau2", "0",
            "--nx", "8", "--out-dir", str(tmp_path),
        ])
        assert code == 2
