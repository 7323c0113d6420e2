"""File-backed persistence for the service: registry, samples, timelines, jobs.

Everything lives under one root directory: a JSON manifest (calves,
recordings, timelines), a JSON job registry, binary model artifacts under
``models/``, and per-calf numpy archives for sample streams and prediction
timelines.  All mutations funnel through one lock and land via atomic
replace, so readers only ever see committed state; on startup any job left
``queued`` or ``running`` by a dead process is marked failed.
"""

import json
import os
import threading
from datetime import date
from pathlib import Path

import numpy as np

from .behaviour import PredictionTimeline
from .cwa import Recording
from .errors import (
    ModelMissing,
    RecordingMissing,
    UnknownCalf,
    ValidationFailed,
)
from .timeutil import format_iso

CALF_FIELDS = ("calf_id", "breed", "birth_date", "coat_colour", "pen")


def _atomic_write_bytes(path: Path, data: bytes):
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(data)
    os.replace(tmp, path)


def _atomic_write_text(path: Path, text: str):
    _atomic_write_bytes(path, text.encode())


class Store:
    def __init__(self, root):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        (self.root / "models").mkdir(exist_ok=True)
        (self.root / "calves").mkdir(exist_ok=True)
        self._lock = threading.Lock()
        self._manifest = self._read_json("manifest.json") or {
            "calves": {}, "recordings": {}, "timelines": {}, "next_recording": 1}
        self._jobs = self._read_json("jobs.json") or {"jobs": {}, "next_job": 1}
        self._recover_jobs()

    def _read_json(self, name):
        path = self.root / name
        if not path.exists():
            return None
        return json.loads(path.read_text())

    def _commit_manifest(self):
        _atomic_write_text(self.root / "manifest.json",
                           json.dumps(self._manifest, sort_keys=True, indent=1))

    def _commit_jobs(self):
        _atomic_write_text(self.root / "jobs.json",
                           json.dumps(self._jobs, sort_keys=True, indent=1))

    def _recover_jobs(self):
        dirty = False
        for job in self._jobs["jobs"].values():
            if job["state"] in ("queued", "running"):
                job["state"] = "failed"
                job["error"] = "interrupted by service restart"
                dirty = True
        if dirty:
            self._commit_jobs()

    # --- calves ---

    def register_calf(self, meta: dict) -> str:
        calf_id = str(meta.get("calf_id") or "").strip()
        if not calf_id:
            raise ValidationFailed("calf_id is required")
        birth = str(meta.get("birth_date") or "").strip()
        if birth:
            try:
                date.fromisoformat(birth)
            except ValueError as exc:
                raise ValidationFailed(f"birth_date {birth!r}: {exc}") from exc
        record = {f: str(meta.get(f, "") or "") for f in CALF_FIELDS}
        record["calf_id"] = calf_id
        with self._lock:
            self._manifest["calves"][calf_id] = record
            self._commit_manifest()
        (self.root / "calves" / calf_id).mkdir(parents=True, exist_ok=True)
        return calf_id

    def get_calf(self, calf_id: str) -> dict:
        calf = self._manifest["calves"].get(calf_id)
        if calf is None:
            raise UnknownCalf(f"calf {calf_id!r} is not registered")
        return dict(calf)

    def list_calves(self) -> list[dict]:
        return [dict(v) for _, v in sorted(self._manifest["calves"].items())]

    # --- jobs ---

    def create_job(self, kind: str) -> dict:
        with self._lock:
            n = self._jobs["next_job"]
            self._jobs["next_job"] = n + 1
            job = {"job_id": f"job-{n:06d}", "kind": kind, "state": "queued",
                   "error": None, "result": None}
            self._jobs["jobs"][job["job_id"]] = job
            self._commit_jobs()
        return dict(job)

    def update_job(self, job_id: str, state: str, error=None, result=None):
        with self._lock:
            job = self._jobs["jobs"][job_id]
            order = ("queued", "running", "done", "failed")
            if order.index(state) < order.index(job["state"]):
                raise ValidationFailed(
                    f"job {job_id} cannot move {job['state']} -> {state}")
            job["state"] = state
            if error is not None:
                job["error"] = str(error)
            if result is not None:
                job["result"] = result
            self._commit_jobs()

    def get_job(self, job_id: str) -> dict:
        job = self._jobs["jobs"].get(job_id)
        if job is None:
            raise RecordingMissing(f"job {job_id!r} not found")
        return dict(job)

    # --- recordings ---

    def save_recording(self, calf_id: str, rec: Recording) -> str:
        self.get_calf(calf_id)
        with self._lock:
            n = self._manifest["next_recording"]
            self._manifest["next_recording"] = n + 1
            rec_id = f"rec-{n:06d}"
        rec_dir = self.root / "calves" / calf_id / "recordings"
        rec_dir.mkdir(parents=True, exist_ok=True)
        import io

        buf = io.BytesIO()
        np.savez(buf, t=rec.t, xyz=rec.xyz,
                 gap_mask=rec.gap_mask if rec.gap_mask is not None
                 else np.zeros(len(rec), dtype=bool),
                 rate_hz=np.float64(rec.rate_hz))
        _atomic_write_bytes(rec_dir / f"{rec_id}.npz", buf.getvalue())
        entry = {
            "recording_id": rec_id, "calf_id": calf_id,
            "n_samples": int(len(rec)), "rate_hz": float(rec.rate_hz),
            "start": format_iso(int(rec.t[0])) if len(rec) else None,
            "end": format_iso(int(rec.t[-1])) if len(rec) else None,
            "source": rec.source, "skipped_blocks": int(rec.skipped_blocks),
        }
        with self._lock:
            self._manifest["recordings"][rec_id] = entry
            self._commit_manifest()
        return rec_id

    def recording_entry(self, rec_id: str) -> dict:
        entry = self._manifest["recordings"].get(rec_id)
        if entry is None:
            raise RecordingMissing(f"recording {rec_id!r} not found")
        return dict(entry)

    def load_recording(self, rec_id: str) -> Recording:
        entry = self.recording_entry(rec_id)
        path = self.root / "calves" / entry["calf_id"] / "recordings" / f"{rec_id}.npz"
        if not path.exists():
            raise RecordingMissing(f"samples for {rec_id!r} missing on disk")
        with np.load(path) as z:
            return Recording(t=z["t"], xyz=z["xyz"], rate_hz=float(z["rate_hz"]),
                             gap_mask=z["gap_mask"], source=entry["source"])

    # --- timelines ---

    def save_timeline(self, rec_id: str, tl: PredictionTimeline):
        entry = self.recording_entry(rec_id)
        calf_id = entry["calf_id"]
        tl_dir = self.root / "calves" / calf_id / "timelines"
        tl_dir.mkdir(parents=True, exist_ok=True)
        import io

        buf = io.BytesIO()
        np.savez(buf, start=tl.start,
                 activity=tl.activity.astype(str),
                 behaviour=tl.behaviour.astype(str),
                 model_versions=json.dumps(tl.model_versions, sort_keys=True))
        _atomic_write_bytes(tl_dir / f"{rec_id}.npz", buf.getvalue())
        meta = {
            "recording_id": rec_id, "calf_id": calf_id,
            "n_entries": int(len(tl)),
            "model_versions": dict(tl.model_versions),
            "from": format_iso(int(tl.start.min())) if len(tl) else None,
            "to": format_iso(int(tl.start.max()) + 3000) if len(tl) else None,
        }
        with self._lock:
            self._manifest["timelines"][rec_id] = meta
            self._commit_manifest()

    def load_timeline(self, rec_id: str) -> PredictionTimeline:
        meta = self._manifest["timelines"].get(rec_id)
        if meta is None:
            raise RecordingMissing(f"no timeline for recording {rec_id!r}")
        path = self.root / "calves" / meta["calf_id"] / "timelines" / f"{rec_id}.npz"
        with np.load(path) as z:
            return PredictionTimeline(
                calf_id=meta["calf_id"], start=z["start"],
                activity=z["activity"].astype(object),
                behaviour=z["behaviour"].astype(object),
                model_versions=json.loads(str(z["model_versions"])))

    def calf_timeline(self, calf_id: str) -> PredictionTimeline:
        """All of a calf's timelines merged; on colliding entries the
        recording ingested later wins."""
        self.get_calf(calf_id)
        ids = sorted(r for r, m in self._manifest["timelines"].items()
                     if m["calf_id"] == calf_id)
        merged: dict[int, tuple[str, str]] = {}
        versions = {}
        for rec_id in ids:
            tl = self.load_timeline(rec_id)
            versions.update(tl.model_versions)
            for s, a, b in zip(tl.start, tl.activity, tl.behaviour):
                merged[int(s)] = (a, b)
        starts = sorted(merged)
        keep = []
        last_end = -1
        for s in starts:
            if s >= last_end:
                keep.append(s)
                last_end = s + 3000
        return PredictionTimeline(
            calf_id=calf_id,
            start=np.array(keep, dtype=np.int64),
            activity=np.array([merged[s][0] for s in keep], dtype=object),
            behaviour=np.array([merged[s][1] for s in keep], dtype=object),
            model_versions=versions)

    # --- models ---

    def model_path(self, name: str) -> Path:
        path = self.root / "models" / name
        if not path.exists():
            raise ModelMissing(f"model {name!r} not in the store")
        return path

    def list_models(self) -> list[dict]:
        out = []
        for path in sorted((self.root / "models").glob("*.cwml")):
            head = path.read_bytes()[:7]
            kind = {1: "ridge", 2: "forest"}.get(head[6] if len(head) == 7 else 0,
                                                 "unknown")
            out.append({"name": path.name, "kind": kind,
                        "size_bytes": path.stat().st_size})
        return out
