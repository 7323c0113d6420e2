import time

import numpy as np
import pytest
from fastapi.testclient import TestClient

from calfwatch import cli, model_io, pipeline
from calfwatch.cwa import write_cwa
from calfwatch.service import create_app
from calfwatch.store import Store
from calfwatch.synth import generate_herd
from calfwatch.timeutil import format_iso, parse_iso


def wait_for_job(client, job_id, timeout=60.0):
    deadline = time.time() + timeout
    while time.time() < deadline:
        job = client.get(f"/api/v1/jobs/{job_id}").json()
        if job["state"] in ("done", "failed"):
            return job
        time.sleep(0.05)
    raise TimeoutError(f"job {job_id} did not finish")


@pytest.fixture(scope="module")
def herd():
    return generate_herd(10, 900, seed=17)


@pytest.fixture(scope="module")
def store_dir(tmp_path_factory, herd):
    """A store preloaded with small but competent models."""
    root = tmp_path_factory.mktemp("store")
    data = tmp_path_factory.mktemp("traindata")
    rec_dir = data / "recordings"
    rec_dir.mkdir()
    from calfwatch.cwa import write_csv
    from calfwatch.signals import write_ethogram_csv

    for calf in herd.calves:
        (rec_dir / f"{calf.calf_id}.csv").write_text(write_csv(calf.recording))
    (data / "ethogram.csv").write_text(
        write_ethogram_csv(c.ethogram for c in herd.calves))

    (root / "models").mkdir(parents=True)
    assert cli.run_command([
        "train", "model1", "--data", str(data), "--seed", "17",
        "--out", str(root / "models" / "model1.cwml"),
        "--trees", "50", "--depths", "none", "--min-leaf", "1"]) == 0
    assert cli.run_command([
        "train", "model2", "--data", str(data), "--seed", "17",
        "--out", str(root / "models" / "model2.cwml"),
        "--kernels", "250", "--alphas", "0.1,10,1000"]) == 0
    return root


@pytest.fixture(scope="module")
def client(store_dir):
    app = create_app(store_dir, tz="UTC")
    with TestClient(app) as c:
        yield c


def register(client, calf_id, **extra):
    meta = {"calf_id": calf_id, "breed": "Jersey", "birth_date": "2022-01-03",
            "coat_colour": "fawn", "pen": "P4", **extra}
    r = client.post("/api/v1/calves", json=meta)
    assert r.status_code == 200, r.text
    return r.json()


class TestCalves:
    def test_register_and_get(self, client):
        out = register(client, "calf_a")
        assert out == {"calf_id": "calf_a"}
        got = client.get("/api/v1/calves/calf_a").json()
        assert got["breed"] == "Jersey"
        assert got["pen"] == "P4"

    def test_upsert_updates_pen(self, client):
        register(client, "calf_b", pen="P1")
        register(client, "calf_b", pen="P9")
        assert client.get("/api/v1/calves/calf_b").json()["pen"] == "P9"
        listed = client.get("/api/v1/calves").json()
        assert sum(c["calf_id"] == "calf_b" for c in listed) == 1

    def test_missing_calf_id_validation(self, client):
        r = client.post("/api/v1/calves", json={"breed": "x"})
        assert r.status_code == 400
        assert r.json()["code"] == "ValidationFailed"

    def test_unknown_calf_404(self, client):
        r = client.get("/api/v1/calves/ghost")
        assert r.status_code == 404
        assert r.json()["code"] == "UnknownCalf"


class TestIngestAndPredict:
    @pytest.fixture(scope="class")
    def predicted(self, client, herd):
        calf = herd.calves[0]
        register(client, calf.calf_id)
        payload = write_cwa(calf.recording, "packed")
        r = client.post(f"/api/v1/calves/{calf.calf_id}/recordings",
                        files={"file": ("upload.cwa", payload)})
        assert r.status_code == 200, r.text
        job = wait_for_job(client, r.json()["job_id"])
        assert job["state"] == "done", job["error"]
        rec_id = job["result"]["recording_id"]
        assert job["result"]["n_samples"] == len(calf.recording)

        r = client.post(f"/api/v1/recordings/{rec_id}/predict",
                        json={"model1": "model1.cwml", "model2": "model2.cwml"})
        assert r.status_code == 200, r.text
        job = wait_for_job(client, r.json()["job_id"])
        assert job["state"] == "done", job["error"]
        return calf, rec_id, job

    def test_upload_and_predict_jobs_complete(self, predicted):
        calf, rec_id, job = predicted
        assert job["result"]["n_windows"] == 900 // 3

    def test_timeline_majority_matches_ethogram(self, predicted, store_dir):
        from calfwatch.signals import activity_for

        calf, rec_id, _ = predicted
        store = Store(store_dir)
        tl = store.load_timeline(rec_id)
        eth = calf.ethogram
        idx = np.searchsorted(eth.start, tl.start, side="right") - 1
        beh_ok = act_ok = total = 0
        for s, b, a, i in zip(tl.start, tl.behaviour, tl.activity, idx):
            if i < 0 or s + 3000 > eth.end[i]:
                continue
            total += 1
            beh_ok += b == eth.behaviour[i]
            act_ok += a == activity_for(eth.behaviour[i], eth.activity[i])
        assert total > 100
        assert act_ok / total >= 0.90
        assert beh_ok / total >= 0.90

    def test_rerun_is_identical(self, predicted, client, store_dir):
        calf, rec_id, _ = predicted
        store = Store(store_dir)
        before = store.load_timeline(rec_id)
        r = client.post(f"/api/v1/recordings/{rec_id}/predict",
                        json={"model1": "model1.cwml", "model2": "model2.cwml"})
        job = wait_for_job(client, r.json()["job_id"])
        assert job["state"] == "done"
        after = Store(store_dir).load_timeline(rec_id)
        assert np.array_equal(before.start, after.start)
        assert (before.behaviour == after.behaviour).all()
        assert (before.activity == after.activity).all()

    def test_corrupt_upload_fails_with_detail(self, client):
        register(client, "calf_corrupt")
        r = client.post("/api/v1/calves/calf_corrupt/recordings",
                        files={"file": ("bad.cwa", b"not a real file")})
        job = wait_for_job(client, r.json()["job_id"])
        assert job["state"] == "failed"
        assert "ParseFailed" in job["error"]

    def test_upload_to_unknown_calf(self, client):
        r = client.post("/api/v1/calves/nobody/recordings",
                        files={"file": ("x.cwa", b"123")})
        assert r.status_code == 404

    def test_predict_with_missing_model(self, client, predicted):
        _, rec_id, _ = predicted
        r = client.post(f"/api/v1/recordings/{rec_id}/predict",
                        json={"model1": "missing.cwml", "model2": "model2.cwml"})
        assert r.status_code == 404
        assert r.json()["code"] == "ModelMissing"

    def test_predict_with_missing_recording(self, client):
        r = client.post("/api/v1/recordings/rec-999999/predict",
                        json={"model1": "model1.cwml", "model2": "model2.cwml"})
        assert r.status_code == 404
        assert r.json()["code"] == "RecordingMissing"


class TestMetricsAndExport:
    @pytest.fixture(scope="class")
    def ready(self, client, herd):
        calf = herd.calves[1]
        register(client, calf.calf_id)
        payload = write_cwa(calf.recording, "unpacked")
        r = client.post(f"/api/v1/calves/{calf.calf_id}/recordings",
                        files={"file": ("u.cwa", payload)})
        job = wait_for_job(client, r.json()["job_id"])
        rec_id = job["result"]["recording_id"]
        r = client.post(f"/api/v1/recordings/{rec_id}/predict",
                        json={"model1": "model1.cwml", "model2": "model2.cwml"})
        assert wait_for_job(client, r.json()["job_id"])["state"] == "done"
        t0 = int(calf.recording.t[0])
        return calf, t0

    def test_hourly_metrics(self, ready, client):
        calf, t0 = ready
        r = client.get(f"/api/v1/calves/{calf.calf_id}/metrics",
                       params={"from": format_iso(t0),
                               "to": format_iso(t0 + 3_600_000),
                               "granularity": "hour"})
        assert r.status_code == 200, r.text
        out = r.json()
        assert len(out["buckets"]) == 1
        bucket = out["buckets"][0]
        assert bucket["coverage_s"] == pytest.approx(900.0)
        assert sum(bucket["proportions"].values()) == pytest.approx(1.0)

    def test_summary_equals_hourly_aggregate(self, ready, client):
        calf, t0 = ready
        params = {"from": format_iso(t0), "to": format_iso(t0 + 3_600_000)}
        hourly = client.get(f"/api/v1/calves/{calf.calf_id}/metrics",
                            params={**params, "granularity": "hour"}).json()
        summary = client.get(f"/api/v1/calves/{calf.calf_id}/metrics",
                             params={**params, "granularity": "summary"}).json()
        total = sum(b["coverage_s"] for b in hourly["buckets"])
        weighted = sum(b["proportion_active"] * b["coverage_s"]
                       for b in hourly["buckets"] if b["coverage_s"] > 0)
        assert summary["summary"]["coverage_s"] == pytest.approx(total)
        assert summary["summary"]["proportion_active"] == pytest.approx(weighted / total)

    def test_range_before_data_is_coverage_zero(self, ready, client):
        calf, t0 = ready
        r = client.get(f"/api/v1/calves/{calf.calf_id}/metrics",
                       params={"from": "2020-01-01T00:00:00Z",
                               "to": "2020-01-02T00:00:00Z",
                               "granularity": "summary"})
        assert r.status_code == 200
        assert r.json()["summary"]["coverage_s"] == 0.0

    def test_export_row_count_and_roundtrip(self, ready, client):
        calf, t0 = ready
        r = client.get(f"/api/v1/calves/{calf.calf_id}/predictions.csv",
                       params={"from": format_iso(t0),
                               "to": format_iso(t0 + 3_600_000)})
        assert r.status_code == 200
        lines = r.text.strip().splitlines()
        assert lines[0] == "timestamp,activity,behaviour"
        n_rows = len(lines) - 1
        assert n_rows == 900 * 25  # classified seconds x 25
        # timestamps parse back to the exact 40 ms grid
        t_first = parse_iso(lines[1].split(",")[0])
        t_last = parse_iso(lines[-1].split(",")[0])
        assert t_first == t0
        assert t_last == t0 + (n_rows - 1) * 40

    def test_export_empty_range_404(self, ready, client):
        calf, _ = ready
        r = client.get(f"/api/v1/calves/{calf.calf_id}/predictions.csv",
                       params={"from": "2020-01-01T00:00:00Z",
                               "to": "2020-01-02T00:00:00Z"})
        assert r.status_code == 404
        assert r.json()["code"] == "NoData"


class TestModelsAndRecovery:
    def test_list_models(self, client):
        models = client.get("/api/v1/models").json()
        names = {m["name"]: m["kind"] for m in models}
        assert names["model1.cwml"] == "forest"
        assert names["model2.cwml"] == "ridge"

    def test_config_reports_timezone(self, client):
        assert client.get("/api/v1/config").json() == {"timezone": "UTC"}

    def test_restart_marks_running_jobs_failed(self, tmp_path):
        store = Store(tmp_path)
        job = store.create_job("convert")
        store.update_job(job["job_id"], "running")
        # a new Store over the same root simulates a process restart
        recovered = Store(tmp_path)
        assert recovered.get_job(job["job_id"])["state"] == "failed"
        assert "restart" in recovered.get_job(job["job_id"])["error"]

    def test_root_serves_placeholder_without_frontend(self, client):
        r = client.get("/")
        assert r.status_code == 200
        assert r.json()["api"] == "/api/v1"
