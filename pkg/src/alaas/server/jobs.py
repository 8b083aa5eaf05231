"""Asynchronous query jobs: registry, persistence and bounded workers.

Records are immutable snapshots; every mutation replaces the record under a
lock and writes it to ``<data_dir>/jobs/<job_id>.json`` before it becomes
visible, so a poller never observes a state that was not persisted.

Restart policy: a job found ``queued`` on disk is queued again; a job found
``running`` was interrupted mid-round and is marked ``failed``.  A graceful
shutdown cancels running jobs at their next batch boundary, so they end
``cancelled`` (or ``done`` if they finish first) and never stay ``running``.
"""

from __future__ import annotations

import json
import logging
import queue
import threading
from dataclasses import dataclass, replace
from datetime import datetime
from typing import Any, Callable, Mapping

from alaas.data import DataManager
from alaas.data.cache import atomic_write_json
from alaas.errors import ALaaSError, Cancelled, UnknownJob
from alaas.inference import BackendSpec, InferenceBackend
from alaas.models import ALQuery, ALReport, format_time, new_id, parse_time, utcnow
from alaas.pipeline import Pipeline, PipelineSpec, check_query
from alaas.server.schemas import TERMINAL_STATES

log = logging.getLogger(__name__)

INTERRUPTED = "interrupted by server restart"

_ALLOWED = {
    "queued": {"running", "cancelled"},
    "running": {"done", "failed", "cancelled"},
}


@dataclass(frozen=True)
class JobRecord:
    job_id: str
    state: str
    query: ALQuery
    submitted_at: datetime
    updated_at: datetime
    report: ALReport | None = None
    error: str | None = None

    def __post_init__(self):
        if (self.report is not None) != (self.state == "done"):
            raise ValueError("a report is present exactly when the job is done")
        if (self.error is not None) != (self.state == "failed"):
            raise ValueError("an error is present exactly when the job failed")

    @property
    def terminal(self) -> bool:
        return self.state in TERMINAL_STATES

    def to_dict(self) -> dict[str, Any]:
        return {
            "job_id": self.job_id,
            "state": self.state,
            "query": self.query.to_dict(),
            "report": self.report.to_dict() if self.report else None,
            "error": self.error,
            "submitted_at": format_time(self.submitted_at),
            "updated_at": format_time(self.updated_at),
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> JobRecord:
        return cls(
            job_id=d["job_id"],
            state=d["state"],
            query=ALQuery.from_dict(d["query"]),
            submitted_at=parse_time(d["submitted_at"]),
            updated_at=parse_time(d["updated_at"]),
            report=ALReport.from_dict(d["report"]) if d.get("report") else None,
            error=d.get("error"),
        )


class JobManager:
    """Runs at most ``workers`` jobs at a time, each on its own Pipeline."""

    def __init__(
        self,
        data: DataManager,
        backend: BackendSpec,
        pipeline_spec: Callable[[ALQuery], PipelineSpec],
        workers: int = 2,
    ):
        self.data = data
        self.backend = backend
        self.pipeline_spec = pipeline_spec
        self.jobs_dir = data.data_dir / "jobs"
        self.jobs_dir.mkdir(parents=True, exist_ok=True)
        self._records: dict[str, JobRecord] = {}
        self._running: dict[str, Pipeline] = {}
        self._lock = threading.Lock()
        self._queue: queue.Queue[str | None] = queue.Queue()
        self._threads = [
            threading.Thread(target=self._work, name=f"job-worker-{i}", daemon=True) for i in range(workers)
        ]
        self._closed = False

    # -- lifecycle -----------------------------------------------------------

    def start(self) -> JobManager:
        self.recover()
        for t in self._threads:
            t.start()
        return self

    def recover(self) -> None:
        for path in sorted(self.jobs_dir.glob("*.json")):
            try:
                rec = JobRecord.from_dict(json.loads(path.read_text()))
            except (ValueError, KeyError, TypeError) as exc:
                log.error("unreadable job record %s: %s", path.name, exc)
                continue
            if rec.state == "running":
                rec = replace(rec, state="failed", error=INTERRUPTED, updated_at=utcnow())
                self._persist(rec)
            self._records[rec.job_id] = rec
        for rec in sorted(self._records.values(), key=lambda r: (r.submitted_at, r.job_id)):
            if rec.state == "queued":
                self._queue.put(rec.job_id)

    def shutdown(self, timeout: float = 30.0) -> None:
        with self._lock:
            self._closed = True
            pipelines = list(self._running.values())
        for p in pipelines:
            p.cancel()
        for _ in self._threads:
            self._queue.put(None)
        for t in self._threads:
            if t.is_alive():
                t.join(timeout)

    # -- registry ------------------------------------------------------------

    def _persist(self, rec: JobRecord) -> None:
        atomic_write_json(self.jobs_dir / f"{rec.job_id}.json", rec.to_dict())

    def _transition(self, job_id: str, state: str, **fields) -> JobRecord:
        with self._lock:
            rec = self._records[job_id]
            if state not in _ALLOWED.get(rec.state, ()):
                return rec
            rec = replace(rec, state=state, updated_at=utcnow(), **fields)
            self._persist(rec)
            self._records[job_id] = rec
            return rec

    def get(self, job_id: str) -> JobRecord:
        try:
            return self._records[job_id]
        except KeyError:
            raise UnknownJob(f"unknown job {job_id}") from None

    def list(self) -> list[JobRecord]:
        return list(self._records.values())

    def submit(self, query: ALQuery) -> JobRecord:
        """Validate against the dataset and queue; errors surface before anything is queued."""
        manifest = self.data.get_manifest(query.dataset_id)
        check_query(manifest, query)
        now = utcnow()
        rec = JobRecord(new_id(), "queued", query, now, now)
        with self._lock:
            if self._closed:
                raise ALaaSError("server is shutting down")
            self._persist(rec)
            self._records[rec.job_id] = rec
        self._queue.put(rec.job_id)
        return rec

    def cancel(self, job_id: str) -> JobRecord:
        rec = self.get(job_id)
        if rec.state == "queued":
            rec = self._transition(job_id, "cancelled")
        if rec.state == "running":
            with self._lock:
                pipeline = self._running.get(job_id)
            if pipeline is not None:
                pipeline.cancel()
        return self.get(job_id)

    # -- execution -----------------------------------------------------------

    def _work(self) -> None:
        while True:
            job_id = self._queue.get()
            if job_id is None:
                return
            with self._lock:
                if self._closed:
                    return
            self._run(job_id)

    def _run(self, job_id: str) -> None:
        with self._lock:
            rec = self._records[job_id]
            if rec.state != "queued":
                return
            backend = InferenceBackend(self.backend)
            pipeline = Pipeline(self.data, backend, self.pipeline_spec(rec.query), cache=self.data)
            self._running[job_id] = pipeline
            rec = replace(rec, state="running", updated_at=utcnow())
            self._persist(rec)
            self._records[job_id] = rec
        try:
            manifest = self.data.get_manifest(rec.query.dataset_id)
            report, _ = pipeline.run_round(manifest, rec.query, job_id=job_id)
        except Cancelled:
            self._transition(job_id, "cancelled")
        except ALaaSError as exc:
            log.warning("job %s failed: %s", job_id, exc.message)
            self._transition(job_id, "failed", error=f"{exc.code}: {exc.message}")
        except Exception as exc:  # noqa: BLE001 - a job must always reach a terminal state
            log.exception("job %s crashed", job_id)
            self._transition(job_id, "failed", error=f"{type(exc).__name__}: {exc}")
        else:
            self._transition(job_id, "done", report=report)
        finally:
            backend.close()
            with self._lock:
                self._running.pop(job_id, None)
