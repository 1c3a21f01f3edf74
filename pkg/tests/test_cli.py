import csv
import json

import numpy as np
import pytest

from pibinet import cli
from pibinet.datasets import (WellRecord, generate, read_measurements, read_wells,
                              write_measurements, write_wells)
from pibinet.fd_solver import interpolate
from pibinet.fields import FieldGrid, read_field_csv, write_field_csv
from pibinet.kernels import fundamental_solution
from pibinet.pinn import PinnConfig


def run(*argv):
    return cli.main([str(a) for a in argv])


def manifest(path):
    data = json.loads((path / "manifest.json").read_text())
    data.pop("wall_clock")
    return data


def rows(path):
    with open(path) as fh:
        return list(csv.reader(fh))


@pytest.fixture(scope="module")
def generated(tmp_path_factory):
    out = tmp_path_factory.mktemp("gen")
    assert run("gen-data", "--n", 50, "--region", "theta_ring", "--seed", 3, "--out", out) == 0
    return out


class TestGenData:
    def test_rows_and_ring(self, generated):
        data = read_measurements(generated / "measurements.csv")
        assert len(data) == 51
        ring = data.points[:50]
        assert np.all(np.max(np.abs(ring), axis=1) > 0.6)
        assert np.array_equal(data.points[50], [0.0, 0.0]) and data.values[50] == 2.0

    def test_manifest_lists_outputs(self, generated):
        m = manifest(generated)
        assert set(m["outputs"]) == {"measurements.csv", "truth.csv"}
        assert m["seeds"] == [3] and m["command"] == "gen-data"
        for name in m["outputs"]:
            assert (generated / name).exists()

    def test_byte_identical_rerun(self, generated, tmp_path):
        assert run("gen-data", "--n", 50, "--region", "theta_ring", "--seed", 3, "--out", tmp_path) == 0
        for name in ("measurements.csv", "truth.csv"):
            assert (tmp_path / name).read_bytes() == (generated / name).read_bytes()
        assert manifest(tmp_path) == manifest(generated)

    def test_round_trip_full_precision(self, generated):
        scenario = generate("laplace_eq15", "theta_ring", 50, 3)
        data = read_measurements(generated / "measurements.csv")
        np.testing.assert_array_equal(data.points, scenario.data.points)
        np.testing.assert_array_equal(data.values, scenario.data.values)
        truth = read_field_csv(generated / "truth.csv")
        np.testing.assert_array_equal(truth.values, scenario.truth.values)

    def test_noiseless_linear_scenario(self):
        s = generate("laplace_eq15", "full_omega", 40, 1, noise_std=0.0, outlier=False,
                     boundary_fn=lambda x: x[0])
        np.testing.assert_array_equal(s.data.values, interpolate(s.truth, s.data.points))
        np.testing.assert_allclose(s.data.values, s.data.points[:, 0], atol=1e-10)

    def test_poisson_records_sources(self, tmp_path):
        assert run("gen-data", "--scenario", "poisson_random_sources", "--region", "full_omega",
                   "--n", 20, "--out", tmp_path) == 0
        m = manifest(tmp_path)
        mags = np.array(m["sources"]["magnitudes"])
        assert len(mags) == 5 and np.all(np.abs(mags) <= 5)
        np.testing.assert_array_equal(m["model_sources"]["magnitudes"], -mags)
        assert len(read_measurements(tmp_path / "measurements.csv")) == 20

    def test_env_output_dir(self, tmp_path, monkeypatch):
        monkeypatch.setenv("PIBINET_OUTPUT_DIR", str(tmp_path / "envout"))
        assert run("gen-data", "--n", 5) == 0
        assert (tmp_path / "envout" / "measurements.csv").exists()

    def test_unknown_region_is_usage_error(self):
        with pytest.raises(SystemExit) as exc:
            run("gen-data", "--region", "moon")
        assert exc.value.code == 2


class TestFormats:
    def test_measurement_errors_carry_line(self, tmp_path):
        path = tmp_path / "m.csv"
        path.write_text("x1,x2,u\n0,0,1\n0.5,abc,2\n")
        with pytest.raises(ValueError, match=":3:"):
            read_measurements(path)

    def test_bad_header(self, tmp_path):
        path = tmp_path / "m.csv"
        path.write_text("a,b,c\n")
        with pytest.raises(ValueError, match=":1:"):
            read_measurements(path)

    def test_wells_round_trip(self, tmp_path):
        wells = [WellRecord("a", 0.1, 0.2, 3.0), WellRecord("b", -1 / 3, 2.0, np.pi)]
        write_wells(wells, tmp_path / "w.csv")
        assert read_wells(tmp_path / "w.csv") == wells

    def test_duplicate_well(self, tmp_path):
        path = tmp_path / "w.csv"
        path.write_text("id,x,y,head\na,0,0,1\na,1,1,2\n")
        with pytest.raises(ValueError, match="duplicate"):
            read_wells(path)


@pytest.fixture(scope="module")
def harmonic_csv(tmp_path_factory):
    path = tmp_path_factory.mktemp("data") / "harmonic.csv"
    x = np.random.default_rng(0).uniform(-1, 1, (50, 2))
    from pibinet.training import Dataset
    write_measurements(Dataset(x, x[:, 0] * x[:, 1]), path)
    return path


class TestTrain:
    def test_unknown_method(self, harmonic_csv):
        with pytest.raises(SystemExit) as exc:
            run("train", "--method", "fem", "--data", harmonic_csv)
        assert exc.value.code == 2

    def test_missing_data_file(self, tmp_path, capsys):
        assert run("train", "--method", "pibi", "--data", tmp_path / "none.csv",
                   "--out", tmp_path) == 3
        assert "error" in capsys.readouterr().err

    def test_malformed_data_exit_code(self, tmp_path, capsys):
        path = tmp_path / "bad.csv"
        path.write_text("x1,x2,u\n0,0,1\n1,2\n")
        assert run("train", "--method", "pibi", "--data", path, "--out", tmp_path) == 3
        assert ":3:" in capsys.readouterr().err

    def test_invalid_config_value(self, harmonic_csv, tmp_path):
        assert run("train", "--method", "pibi", "--data", harmonic_csv, "--iterations", 0,
                   "--out", tmp_path) == 3

    def test_small_pibi_outputs(self, harmonic_csv, tmp_path):
        config = tmp_path / "cfg.json"
        config.write_text(json.dumps({"iterations": 500, "hidden": [8], "learning_rate": 0.5}))
        assert run("train", "--method", "pibi", "--data", harmonic_csv, "--config", config,
                   "--learning-rate", 0.01, "--out", tmp_path) == 0
        report = json.loads((tmp_path / "report.json").read_text())
        # the flag overrides the file value
        assert report["config"]["learning_rate"] == 0.01 and report["config"]["iterations"] == 500
        trace = rows(tmp_path / "loss_trace.csv")
        assert trace[0] == ["iteration", "obs_loss", "boundary_loss", "total"] and len(trace) == 501
        m = manifest(tmp_path)
        assert set(m["outputs"]) == {"model.json", "loss_trace.csv", "report.json"}
        assert set(m["inputs"]) == {str(harmonic_csv), str(config)}

    def test_pibi_harmonic_sanity(self, harmonic_csv, tmp_path):
        assert run("train", "--method", "pibi", "--data", harmonic_csv, "--out", tmp_path) == 0
        report = json.loads((tmp_path / "report.json").read_text())
        assert report["final"]["obs_loss"] < 1e-3

    def test_pibi_with_sources(self, harmonic_csv, tmp_path):
        assert run("train", "--method", "pibi", "--data", harmonic_csv, "--sources", 2,
                   "--source-guess", "0.1,0.1;-0.2,0.3", "--iterations", 3, "--hidden", "4",
                   "--out", tmp_path) == 0
        model = json.loads((tmp_path / "model.json").read_text())
        assert len(model["sources"]["magnitudes"]) == 2

    def test_source_guess_count_mismatch(self, harmonic_csv, tmp_path):
        assert run("train", "--method", "pibi", "--data", harmonic_csv, "--sources", 2,
                   "--source-guess", "0.1,0.1", "--out", tmp_path) == 3

    def test_pinn_lambda_grid(self, harmonic_csv, tmp_path):
        assert run("train", "--method", "pinn", "--data", harmonic_csv, "--lambda-grid", "0.01,1",
                   "--iterations", 5, "--hidden", "4", "--out", tmp_path) == 0
        scores = rows(tmp_path / "lambda_scores.csv")
        assert scores[0] == ["lambda", "final_data_loss", "final_physics_loss", "score"]
        assert len(scores) == 3
        assert "lambda_scores.csv" in manifest(tmp_path)["outputs"]

    def test_lambda_grid_rejected_for_pibi(self, harmonic_csv):
        with pytest.raises(SystemExit) as exc:
            run("train", "--method", "pibi", "--data", harmonic_csv, "--lambda-grid", "1")
        assert exc.value.code == 2


class TestEvaluate:
    def test_constant_model_matches_constant_truth(self, tmp_path):
        model = {"kind": "pinn", "domain": {"lower": [-1, -1], "upper": [1, 1]},
                 "sources": {"locations": [], "magnitudes": []},
                 "network": {"layer_sizes": [2, 1], "weights": [[[0.0, 0.0]]], "biases": [[0.75]]}}
        (tmp_path / "model.json").write_text(json.dumps(model))
        truth = FieldGrid.covering((-1, -1), (1, 1), 0.2)
        write_field_csv(truth.with_values(np.full(truth.shape, 0.75)), tmp_path / "truth.csv")
        out = tmp_path / "eval"
        assert run("evaluate", "--model", tmp_path / "model.json", "--truth", tmp_path / "truth.csv",
                   "--out", out) == 0
        metrics = json.loads((out / "metrics.json").read_text())
        assert metrics["mae"] == pytest.approx(0.0, abs=1e-15) and metrics["masked_nodes"] == 0
        assert read_field_csv(out / "field.csv").shape == (101, 101)

    def test_pibi_model_round_trip(self, harmonic_csv, tmp_path, generated):
        assert run("train", "--method", "pibi", "--data", harmonic_csv, "--iterations", 2,
                   "--hidden", "4", "--out", tmp_path) == 0
        assert run("evaluate", "--model", tmp_path / "model.json", "--truth", generated / "truth.csv",
                   "--spacing", 0.1, "--out", tmp_path / "e") == 0
        metrics = json.loads((tmp_path / "e" / "metrics.json").read_text())
        assert metrics["eval_spacing"] == 0.1 and np.isfinite(metrics["mae"])

    def test_truth_beyond_domain(self, tmp_path):
        model = {"kind": "pinn", "domain": {"lower": [-1, -1], "upper": [1, 1]},
                 "sources": {"locations": [], "magnitudes": []},
                 "network": {"layer_sizes": [2, 1], "weights": [[[0.0, 0.0]]], "biases": [[0.0]]}}
        (tmp_path / "model.json").write_text(json.dumps(model))
        truth = FieldGrid.covering((-2, -2), (2, 2), 0.5)
        write_field_csv(truth, tmp_path / "truth.csv")
        assert run("evaluate", "--model", tmp_path / "model.json", "--truth", tmp_path / "truth.csv",
                   "--out", tmp_path) == 3

    def test_malformed_model(self, tmp_path, generated):
        (tmp_path / "model.json").write_text('{"kind": "pinn", "domain": {}}')
        assert run("evaluate", "--model", tmp_path / "model.json", "--truth", generated / "truth.csv",
                   "--out", tmp_path) == 3

    def test_unknown_model_kind(self, tmp_path, generated):
        (tmp_path / "model.json").write_text('{"kind": "fem"}')
        assert run("evaluate", "--model", tmp_path / "model.json", "--truth", generated / "truth.csv",
                   "--out", tmp_path) == 3


class TestBenchmark:
    def test_default_sweep_layout(self):
        assert cli.DEFAULT_CELLS == ((50, "theta_ring"), (200, "theta_ring"),
                                    (100, "full_omega"), (500, "full_omega"))
        args = cli.build_parser().parse_args(["benchmark"])
        assert args.methods == "pibi,pinn" and args.cells is None and args.seeds is None

    def test_one_cell_one_seed(self, tmp_path):
        argv = ["benchmark", "--methods", "pibi", "--cells", "20:full_omega", "--seeds", "4",
                "--iterations", 3, "--hidden", "4"]
        assert run(*argv, "--out", tmp_path / "a") == 0
        table = rows(tmp_path / "a" / "table.csv")
        assert table[0] == ["method", "n", "region", "mean_mae", "std_mae", "seeds"]
        assert len(table) == 2 and float(table[1][4]) == 0.0 and table[1][5] == "1"
        assert (tmp_path / "a" / "pibi_n20_full_omega" / "seed4" / "metrics.json").exists()
        assert run(*argv, "--out", tmp_path / "b") == 0
        assert (tmp_path / "a" / "table.csv").read_bytes() == (tmp_path / "b" / "table.csv").read_bytes()

    def test_pinn_cell(self, tmp_path):
        assert run("benchmark", "--methods", "pinn", "--cells", "10:theta_ring", "--seeds", "0,1",
                   "--iterations", 2, "--hidden", "4", "--lambda-grid", "0.1,1",
                   "--out", tmp_path) == 0
        table = rows(tmp_path / "table.csv")
        assert table[1][:3] == ["pinn", "10", "theta_ring"] and table[1][5] == "2"
        assert "pinn_n10_theta_ring/seed1/lambda_scores.csv" in manifest(tmp_path)["outputs"]

    def test_bad_cells(self, tmp_path):
        assert run("benchmark", "--cells", "10:moon", "--out", tmp_path) == 3


def synthetic_wells(path, seed=5):
    rng = np.random.default_rng(seed)
    pts = rng.uniform(-1, 1, (80, 2))
    pts = pts[np.linalg.norm(pts - 0.3, axis=1) > 0.1]
    pts = np.vstack([pts, [[-1, -1], [1, 1], [-1, 1], [1, -1]]])
    heads = pts[:, 0] + 2 * fundamental_solution(pts, np.array([0.3, 0.3]))
    write_wells([WellRecord(f"w{i}", *p, h) for i, (p, h) in enumerate(zip(pts, heads))], path)


class TestWells:
    def test_transform(self):
        wells = [WellRecord("a", 10, 20, 1.0), WellRecord("b", 30, 20, 3.0), WellRecord("c", 20, 25, 2.0)]
        tf = cli.wells_transform(wells)
        assert tf["center"] == [20.0, 22.5] and tf["scale"] == 10.0
        assert tf["head_mean"] == 2.0 and tf["head_std"] == pytest.approx(np.sqrt(2 / 3))

    def test_collinear_warns(self):
        wells = [WellRecord(str(i), i, 2 * i, float(i)) for i in range(4)]
        with pytest.warns(UserWarning, match="collinear"):
            cli.wells_transform(wells)

    def test_too_few_wells(self, tmp_path):
        write_wells([WellRecord("a", 0, 0, 1), WellRecord("b", 1, 1, 2)], tmp_path / "w.csv")
        assert run("wells", "--wells", tmp_path / "w.csv", "--out", tmp_path) == 3

    def test_recovers_source_magnitude(self, tmp_path):
        synthetic_wells(tmp_path / "wells.csv")
        out = tmp_path / "fit"
        assert run("wells", "--wells", tmp_path / "wells.csv", "--sources", 1,
                   "--source-guess", "0.2,0.2", "--iterations", 5000, "--out", out) == 0
        fitted = json.loads((out / "sources.json").read_text())["sources"]
        assert len(fitted) == 1
        assert abs(fitted[0]["magnitude"] - 2.0) < 0.15 * 2.0
        m = manifest(out)
        assert set(m["outputs"]) == {"field.csv", "gradient.csv", "sources.json", "model.json",
                                     "loss_trace.csv", "report.json"}
        assert m["config"]["integration_points"] == 500

    def test_no_sources_and_user_units(self, tmp_path):
        wells = [WellRecord(f"w{i}", x, y, 0.01 * x + 5.0) for i, (x, y) in
                 enumerate(np.random.default_rng(2).uniform([100, 200], [300, 300], (12, 2)))]
        write_wells(wells, tmp_path / "wells.csv")
        assert run("wells", "--wells", tmp_path / "wells.csv", "--iterations", 20, "--hidden", "8",
                   "--spacing", 0.1, "--out", tmp_path) == 0
        assert json.loads((tmp_path / "sources.json").read_text())["sources"] == []
        field = read_field_csv(tmp_path / "field.csv")
        xs = np.array([[w.x, w.y] for w in wells])
        lo, hi = xs.min(axis=0), xs.max(axis=0)
        centre, half = 0.5 * (lo + hi), 0.5 * np.max(hi - lo)
        np.testing.assert_allclose(field.origin, centre - half, atol=1e-9)
        np.testing.assert_allclose(field.upper, centre + half, atol=1e-9)
        grad = rows(tmp_path / "gradient.csv")
        assert grad[0] == ["x1", "x2", "du_dx1", "du_dx2", "masked"]
        assert len(grad) == 1 + 21 * 21
