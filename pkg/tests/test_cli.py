import csv
import json

import numpy as np
import pytest

from peiv_estimation.cli.app import main
from peiv_estimation.cli.schemas import EstimateOutput
from peiv_estimation.domain.models import GaussianDensity, ParamAffineModel
from peiv_estimation.services.smoother import smooth_rts

SCALAR_WITHOUT_PARAMETERS = {
    "model": {"n": 1, "m": 1, "d": 0, "F_basis": [[[0.9]]], "H_basis": [[[1.0]]], "Q": 0.2, "R": 0.09},
    "theta_true": [],
    "estimator": {"theta_init": None},
}


def _read_rows(path):
    with path.open(newline="", encoding="utf-8") as handle:
        return list(csv.reader(handle))


def test_simulate_writes_trajectory_and_meta(write_config, tmp_path):
    config = write_config()
    out = tmp_path / "traj.csv"
    assert main(["simulate", str(config), "--seed", "7", "--out", str(out), "--quiet"]) == 0

    rows = _read_rows(out)
    assert rows[0] == ["k", "x_1", "y_1"]
    assert len(rows) == 12
    assert rows[1][0] == "0" and rows[1][2] == ""
    assert all(row[2] != "" for row in rows[2:])

    meta = json.loads((tmp_path / "traj.csv.meta.json").read_text(encoding="utf-8"))
    assert meta["seed"] == 7
    assert meta["N"] == 10
    assert meta["config"]["theta_true"] == [0.9]


def test_simulate_is_reproducible(write_config, tmp_path):
    config = write_config()
    first, second = tmp_path / "a" / "traj.csv", tmp_path / "b" / "traj.csv"
    assert main(["simulate", str(config), "--seed", "5", "--out", str(first), "--quiet"]) == 0
    assert main(["simulate", str(config), "--seed", "5", "--out", str(second), "--quiet"]) == 0
    assert first.read_bytes() == second.read_bytes()


def test_simulate_noise_free_measures_state(write_config, tmp_path):
    config = write_config({"model": {"Q": 0.0, "R": 0.0}, "prior": {"mean": [1.0], "cov": 0.0}})
    out = tmp_path / "traj.csv"
    assert main(["simulate", str(config), "--out", str(out), "--quiet"]) == 0

    rows = _read_rows(out)[1:]
    x = np.array([float(r[1]) for r in rows])
    y = np.array([float(r[2]) for r in rows[1:]])
    np.testing.assert_allclose(x, 0.9 ** np.arange(11), rtol=1e-12)
    np.testing.assert_array_equal(y, x[1:])


def test_estimate_peiv_writes_valid_json(write_config, tmp_path):
    config = write_config()
    data = tmp_path / "traj.csv"
    out = tmp_path / "est.json"
    assert main(["simulate", str(config), "--out", str(data), "--quiet"]) == 0
    assert main(["estimate", str(config), "--method", "peiv", "--data", str(data), "--out", str(out), "--quiet"]) == 0

    result = EstimateOutput.model_validate_json(out.read_text(encoding="utf-8"))
    assert result.method == "peiv"
    assert len(result.theta_hat) == 1
    assert np.isfinite(result.theta_hat[0])
    assert result.theta_cov[0][0] > 0
    xhat = _read_rows(tmp_path / "est.xhat.csv")
    assert xhat[0] == ["k", "x_1"]
    assert len(xhat) == 12

    first = out.read_bytes()
    assert main(["estimate", str(config), "--method", "peiv", "--data", str(data), "--out", str(out), "--quiet"]) == 0
    assert out.read_bytes() == first


@pytest.mark.parametrize("method", ["jmapml", "em", "aseks"])
def test_estimate_other_methods(write_config, tmp_path, method):
    config = write_config()
    data = tmp_path / "traj.csv"
    out = tmp_path / f"{method}.json"
    assert main(["simulate", str(config), "--out", str(data), "--quiet"]) == 0
    assert main(["estimate", str(config), "--method", method, "--data", str(data), "--out", str(out), "--quiet"]) == 0
    assert EstimateOutput.model_validate_json(out.read_text(encoding="utf-8")).method == method


def test_estimate_without_parameters_is_plain_smoothing(write_config, tmp_path):
    config = write_config(SCALAR_WITHOUT_PARAMETERS)
    data = tmp_path / "traj.csv"
    out = tmp_path / "est.json"
    assert main(["simulate", str(config), "--out", str(data), "--quiet"]) == 0
    assert main(["estimate", str(config), "--method", "peiv", "--data", str(data), "--out", str(out), "--quiet"]) == 0

    result = EstimateOutput.model_validate_json(out.read_text(encoding="utf-8"))
    assert result.theta_hat == []

    Y = np.array([[float(r[2]) for r in _read_rows(data)[2:]]])
    model = ParamAffineModel(n=1, m=1, d=0, F_basis=(np.array([[0.9]]),), H_basis=(np.array([[1.0]]),), Q=0.2, R=0.09)
    expected = smooth_rts(model, [], Y, GaussianDensity.scalar(0.0, 0.2 / 0.19)).means[0]
    xhat = np.array([float(r[1]) for r in _read_rows(tmp_path / "est.xhat.csv")[1:]])
    np.testing.assert_allclose(xhat, expected, rtol=1e-12, atol=1e-12)


def test_estimate_rejects_wrong_measurement_columns(write_config, tmp_path, capsys):
    config = write_config()
    data = tmp_path / "bad.csv"
    data.write_text("k,x_1,y_1,y_2\n0,0.1,,\n1,0.2,0.3,0.4\n", encoding="utf-8")
    assert main(["estimate", str(config), "--method", "peiv", "--data", str(data), "--quiet"]) == 2
    assert "measurement columns" in capsys.readouterr().err


def test_estimate_missing_data_file(write_config, tmp_path):
    config = write_config()
    assert main(["estimate", str(config), "--method", "em", "--data", str(tmp_path / "nope.csv"), "--quiet"]) == 2


def test_benchmark_writes_report(write_config, tmp_path):
    config = write_config()
    out_dir = tmp_path / "bench"
    assert main(["benchmark", str(config), "--out-dir", str(out_dir), "--quiet"]) == 0

    rows = _read_rows(out_dir / "rmse.csv")
    assert rows[0] == ["method", "N", "M_effective", "rmse_theta", "rmse_x0", "q05", "q95", "failures"]
    assert len(rows) == 2
    assert rows[1][:2] == ["peiv", "10"]
    assert int(rows[1][2]) + int(rows[1][-1]) == 2
    assert _read_rows(out_dir / "ellipse.csv")[1:] == []
    meta = json.loads((out_dir / "meta.json").read_text(encoding="utf-8"))
    assert meta["replications"] == 2
    assert meta["methods"] == ["peiv"]


def test_benchmark_output_does_not_depend_on_threads(write_config, tmp_path):
    config = write_config({"montecarlo": {"replications": 6, "methods": ["peiv", "jmapml"]}})
    single, pooled = tmp_path / "one", tmp_path / "many"
    assert main(["benchmark", str(config), "--out-dir", str(single), "--threads", "1", "--quiet"]) == 0
    assert main(["benchmark", str(config), "--out-dir", str(pooled), "--threads", "3", "--quiet"]) == 0
    assert (single / "rmse.csv").read_bytes() == (pooled / "rmse.csv").read_bytes()


def test_threads_fall_back_to_environment(write_config, tmp_path, monkeypatch):
    monkeypatch.setenv("PEIV_THREADS", "2")
    config = write_config()
    assert main(["benchmark", str(config), "--out-dir", str(tmp_path / "bench"), "--quiet"]) == 0


def test_unknown_config_key_is_usage_error(write_config, capsys):
    config = write_config({"estimatr": {"max_iter": 3}})
    assert main(["simulate", str(config), "--quiet"]) == 2
    assert "estimatr" in capsys.readouterr().err


def test_missing_config_file_is_usage_error(tmp_path):
    assert main(["simulate", str(tmp_path / "missing.yml"), "--quiet"]) == 2


def test_config_from_environment(write_config, tmp_path, monkeypatch):
    config = write_config()
    monkeypatch.setenv("PEIV_CONFIG_PATH", str(config))
    out = tmp_path / "env.csv"
    assert main(["simulate", "--out", str(out), "--quiet"]) == 0
    assert out.exists()


def test_log_json_emits_structured_lines(write_config, tmp_path, capsys):
    config = write_config({"logging": {"level": "INFO"}})
    assert main(["simulate", str(config), "--out", str(tmp_path / "t.csv"), "--log-json"]) == 0
    lines = [line for line in capsys.readouterr().err.splitlines() if line.startswith("{")]
    assert lines
    assert all("message" in json.loads(line) for line in lines)


def test_malformed_yaml_is_usage_error(tmp_path, capsys):
    config = tmp_path / "bad.yml"
    config.write_text("model: [unclosed\n", encoding="utf-8")
    assert main(["simulate", str(config), "--quiet"]) == 2
    assert "not valid YAML" in capsys.readouterr().err


@pytest.mark.parametrize(
    "body",
    [
        "k,x_1,y_1\n0,0.1,\n1,0.2,abc\n",
        "k,x_1,y_1\n0,0.1\n1,0.2,0.3\n",
    ],
    ids=["non-numeric", "short-row"],
)
def test_unreadable_data_row_is_usage_error(write_config, tmp_path, capsys, body):
    config = write_config()
    data = tmp_path / "bad.csv"
    data.write_text(body, encoding="utf-8")
    assert main(["estimate", str(config), "--method", "peiv", "--data", str(data), "--quiet"]) == 2
    assert "line" in capsys.readouterr().err


def test_directory_as_data_path_is_usage_error(write_config, tmp_path):
    config = write_config()
    folder = tmp_path / "folder.csv"
    folder.mkdir()
    assert main(["estimate", str(config), "--method", "peiv", "--data", str(folder), "--quiet"]) == 2


def test_unidentifiable_data_is_numerical_error(write_config, tmp_path, capsys):
    config = write_config()
    data = tmp_path / "zeros.csv"
    data.write_text("k,x_1,y_1\n0,0,\n" + "".join(f"{k},0,0\n" for k in range(1, 11)), encoding="utf-8")
    assert main(["estimate", str(config), "--method", "jmapml", "--data", str(data), "--quiet"]) == 3
    assert "error:" in capsys.readouterr().err
