import json
import time

import pytest
from fastapi.testclient import TestClient

from simflock.service.app import create_app


@pytest.fixture()
def client():
    return TestClient(create_app())


def opt_doc(sims, tmp_path, **overrides):
    doc = {
        "workflow": "opt",
        "space": {"value": {"type": "uniform", "lo": 0.0, "hi": 10.0}},
        "budget": 3,
        "seed": 4,
        "objective_metric": "m",
        "simulator": {"command": [sims["echo_value"]]},
        "out_dir": str(tmp_path / "svc_out"),
    }
    doc.update(overrides)
    return doc


def wait_done(client, study_id, timeout=30.0):
    deadline = time.monotonic() + timeout
    while time.monotonic() < deadline:
        status = client.get(f"/studies/{study_id}").json()
        if status["status"] != "running":
            return status
        time.sleep(0.05)
    raise TimeoutError("study did not finish")


def test_health(client):
    body = client.get("/health").json()
    assert body["status"] == "ok"
    assert body["version"]


def test_info_endpoint(client):
    body = client.get("/info/search").json()
    assert body["topic"] == "search"
    assert "gp_bo" in body["text"]
    assert client.get("/info/unknown").status_code == 404


def test_submit_run_and_fetch_report(client, sims, tmp_path):
    resp = client.post("/studies", json=opt_doc(sims, tmp_path))
    assert resp.status_code == 202
    study_id = resp.json()["study_id"]

    status = wait_done(client, study_id)
    assert status["status"] == "completed"
    assert status["summary"]["n_trials"] == 3
    assert status["summary"]["best_trial_id"] is not None

    report = client.get(f"/studies/{study_id}/report").json()
    assert len(report["trials"]) == 3
    assert report["summary"]["workflow"] == "opt"
    # files also landed on disk
    disk = json.loads((tmp_path / "svc_out" / "report.json").read_text())
    assert disk["summary"]["best_trial_id"] == report["summary"]["best_trial_id"]

    listing = client.get("/studies").json()
    assert any(s["study_id"] == study_id for s in listing["studies"])


def test_submit_invalid_spec_is_400(client, sims, tmp_path):
    doc = opt_doc(sims, tmp_path, budget=0)
    resp = client.post("/studies", json=doc)
    assert resp.status_code == 400
    assert any("budget" in r for r in resp.json()["detail"]["reasons"])


def test_submit_unknown_key_is_422(client, sims, tmp_path):
    doc = opt_doc(sims, tmp_path)
    doc["unknown_knob"] = True
    assert client.post("/studies", json=doc).status_code == 422


def test_submit_manual_mode_is_400(client, sims, tmp_path):
    doc = opt_doc(sims, tmp_path, auto_run=False)
    assert client.post("/studies", json=doc).status_code == 400


def test_unknown_study_is_404(client):
    assert client.get("/studies/doesnotexist").status_code == 404
    assert client.get("/studies/doesnotexist/report").status_code == 404


def test_report_while_running_is_409(client, sims, tmp_path):
    doc = opt_doc(sims, tmp_path, simulator={"command": [sims["sleepy"]]},
                  space={"sleep_s": {"type": "choice", "values": [0.4]}},
                  objective_metric="ok", budget=1)
    study_id = client.post("/studies", json=doc).json()["study_id"]
    resp = client.get(f"/studies/{study_id}/report")
    assert resp.status_code in (409, 200)  # tiny race window on fast machines
    if resp.status_code == 409:
        wait_done(client, study_id)


def test_failed_study_surfaces_error(client, sims, tmp_path):
    doc = opt_doc(sims, tmp_path,
                  simulator={"command": [str(tmp_path / "missing-sim")]})
    study_id = client.post("/studies", json=doc).json()["study_id"]
    status = wait_done(client, study_id)
    assert status["status"] == "failed"
    assert "dead" in status["error"] or "unreachable" in status["error"]
    assert client.get(f"/studies/{study_id}/report").status_code == 404
