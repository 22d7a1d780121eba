import time

import numpy as np
import pytest
from fastapi.testclient import TestClient

from demandcast import __version__
from demandcast.dataset import generate_synthetic, series_to_csv
from demandcast.service.app import create_app


@pytest.fixture(scope="module")
def client():
    return TestClient(create_app())


FAST_TRAIN = {"algorithm": "LM", "max_epochs": 3}
SMALL_SYNTH = {"synthetic": {"seed": 5, "n_months": 60}}


def wait_for_job(client, job_id, timeout=120.0):
    deadline = time.time() + timeout
    while time.time() < deadline:
        status = client.get(f"/jobs/{job_id}").json()
        if status["status"] in ("done", "error"):
            return status
        time.sleep(0.05)
    raise TimeoutError(f"job {job_id} did not finish")


def test_health_and_introspection(client):
    health = client.get("/health").json()
    assert health == {"status": "ok", "version": __version__}
    algos = client.get("/algorithms").json()["algorithms"]
    assert len(algos) == 13 and "LMbr" in algos
    presets = client.get("/presets").json()
    assert set(presets) >= {"mlp1", "deep-cfmlp1"}
    assert presets["deep-cfmlp1"]["code_dims"] == [10]


def test_synth_is_deterministic(client):
    a = client.post("/synth", json={"seed": 9, "n_months": 48}).json()
    b = client.post("/synth", json={"seed": 9, "n_months": 48}).json()
    assert a == b
    assert a["series"]["length"] == 48
    assert a["series"]["start"] == "1999-01"


def test_ingest_round_trip(client):
    series = generate_synthetic(seed=3, n_months=36)
    resp = client.post("/ingest", json={"csv": series_to_csv(series)})
    assert resp.status_code == 200
    body = resp.json()
    assert body["series"]["length"] == 36
    assert body["csv"] == series_to_csv(series)


def test_ingest_with_yearly_expansion(client):
    series = generate_synthetic(seed=3, n_months=24)
    yearly = {"gdp": [[1999, 100.0], [2000, 200.0]]}
    body = client.post(
        "/ingest", json={"csv": series_to_csv(series), "yearly": yearly}
    ).json()
    lines = body["csv"].strip().split("\n")[1:]
    gdp = [float(line.split(",")[1]) for line in lines]
    assert gdp[:12] == [100.0] * 12 and gdp[12:] == [200.0] * 12


def test_ingest_data_error_maps_to_400(client):
    resp = client.post("/ingest", json={"csv": "month,foo\n2000-01,1\n"})
    assert resp.status_code == 400
    body = resp.json()
    assert body["kind"] == "SchemaError"
    assert "demand" in body["detail"]


def test_metrics_endpoint(client):
    body = client.post(
        "/metrics", json={"y": [100.0, 200.0], "y_hat": [110.0, 180.0]}
    ).json()
    assert body["mape"] == pytest.approx(10.0)
    resp = client.post("/metrics", json={"y": [0.0], "y_hat": [1.0]})
    assert resp.status_code == 400
    assert resp.json()["kind"] == "UndefinedMetricError"


def test_train_and_forecast_round_trip(client):
    train_body = {
        "series": SMALL_SYNTH,
        "model": {"scheme": "MLP", "hidden_sizes": [3], "algorithm": "LM"},
        "train": {"algorithm": "LM", "max_epochs": 60},
        "window": 40,
    }
    resp = client.post("/train", json=train_body)
    assert resp.status_code == 200
    body = resp.json()
    bundle = body["bundle"]
    assert bundle["format"] == "demandcast-bundle/1"
    assert bundle["model_kind"] == "network"
    assert body["report"]["stop_reason"] in ("max_epochs", "grad_tol", "loss_tol", "mu_overflow")

    series = generate_synthetic(seed=5, n_months=60)
    features = series.feature_matrix[40:44].tolist()
    fc = client.post("/forecast", json={"bundle": bundle, "features": features})
    assert fc.status_code == 200
    preds = fc.json()["predictions"]
    assert len(preds) == 4
    truth = series.demand_vector[40:44]
    assert np.all(np.isfinite(preds))
    # trained on 40 months of clean synthetic data: forecasts are in range
    assert np.abs(np.array(preds) - truth).max() < 0.5 * truth.mean()


def test_train_deep_preset_bundle(client):
    body = {
        "series": SMALL_SYNTH,
        "model": {"preset": "deep-mlp1"},
        "train": {"algorithm": "LMbr", "max_epochs": 3},
        "ae_train": FAST_TRAIN,
        "window": 30,
    }
    resp = client.post("/train", json=body)
    assert resp.status_code == 200
    bundle = resp.json()["bundle"]
    assert bundle["model_kind"] == "deep"
    fc = client.post(
        "/forecast",
        json={"bundle": bundle, "features": [[400.0, 19.0, 340.0, 46.0, 0.5, -1.0, 2.0]]},
    )
    assert fc.status_code == 200


def test_forecast_rejects_bad_feature_width(client):
    resp = client.post("/train", json={
        "series": SMALL_SYNTH, "model": {"hidden_sizes": [2]}, "train": FAST_TRAIN,
    })
    bundle = resp.json()["bundle"]
    bad = client.post("/forecast", json={"bundle": bundle, "features": [[1.0, 2.0]]})
    assert bad.status_code == 422


def test_experiment_job_lifecycle(client):
    req = {
        "series": SMALL_SYNTH,
        "model": {"name": "svc", "scheme": "MLP", "hidden_sizes": [2], "algorithm": "LM"},
        "plan": {"window_lengths": [30, 31], "runs_per_window": 2},
        "train": FAST_TRAIN,
    }
    created = client.post("/experiments", json=req)
    assert created.status_code == 202
    job_id = created.json()["job_id"]
    status = wait_for_job(client, job_id)
    assert status["status"] == "done", status["error"]
    result = status["result"]
    assert len(result["result"]["records"]) == 2 * 2 * 24
    assert result["overall"]["model"] == "svc"
    assert len(result["per_horizon"]) == 24


def test_sweep_jobs(client):
    req = {
        "series": SMALL_SYNTH,
        "scheme": "MLP",
        "depth": 1,
        "neurons": [2, 3],
        "algorithm": "LM",
        "plan": {"window_lengths": [30], "runs_per_window": 1},
        "train": FAST_TRAIN,
    }
    job = client.post("/sweeps/architecture", json=req).json()
    status = wait_for_job(client, job["job_id"])
    assert status["status"] == "done", status["error"]
    rows = status["result"]["rows"]
    assert len(rows) == 2
    assert rows[0]["rank"] == 1

    opt_req = {
        "series": SMALL_SYNTH,
        "scheme": "MLP",
        "hidden_sizes": [2],
        "plan": {"window_lengths": [30], "runs_per_window": 1},
        "train": {"algorithm": "LM", "max_epochs": 1},
    }
    job = client.post("/sweeps/optimizer", json=opt_req).json()
    status = wait_for_job(client, job["job_id"])
    assert status["status"] == "done", status["error"]
    assert len(status["result"]["rows"]) == 13


def test_report_endpoint(client):
    req = {
        "series": SMALL_SYNTH,
        "model": {"name": "rep", "scheme": "MLP", "hidden_sizes": [2], "algorithm": "LM"},
        "plan": {"window_lengths": [30], "runs_per_window": 1},
        "train": FAST_TRAIN,
    }
    job = client.post("/experiments", json=req).json()
    status = wait_for_job(client, job["job_id"])
    result_dict = status["result"]["result"]
    resp = client.post("/report", json={"results": [result_dict], "formats": ["csv", "json"]})
    assert resp.status_code == 200
    files = resp.json()["files"]
    assert {"overall.csv", "per_horizon_rep.csv", "manifest.json", "overall.json"} <= set(files)
    assert files["per_horizon_rep.csv"].count("\n") >= 24


def test_unknown_job_404(client):
    assert client.get("/jobs/doesnotexist").status_code == 404


def test_config_error_maps_to_422(client):
    resp = client.post("/train", json={
        "series": SMALL_SYNTH, "model": {"preset": "not-a-preset"}, "train": FAST_TRAIN,
    })
    assert resp.status_code == 422
    assert resp.json()["kind"] == "ConfigError"
