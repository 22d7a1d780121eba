"""A minimal in-process job registry for the long-running endpoints.

Experiments and sweeps can take minutes, so their endpoints return a job id
immediately and clients poll /jobs/{id}.  One background thread per job; the
registry is process-local and not persisted.
"""

from __future__ import annotations

import threading
import traceback
import uuid
from dataclasses import dataclass, field
from typing import Any, Callable

QUEUED = "queued"
RUNNING = "running"
DONE = "done"
ERROR = "error"


@dataclass
class Job:
    job_id: str
    kind: str
    status: str = QUEUED
    result: Any = None
    error: str | None = None
    _thread: threading.Thread | None = field(default=None, repr=False)


class JobRegistry:
    def __init__(self):
        self._jobs: dict[str, Job] = {}
        self._lock = threading.Lock()

    def submit(self, kind: str, fn: Callable[[], Any]) -> Job:
        job = Job(job_id=uuid.uuid4().hex, kind=kind)

        def runner():
            with self._lock:
                job.status = RUNNING
            try:
                result = fn()
                with self._lock:
                    job.result = result
                    job.status = DONE
            except Exception as exc:  # surfaced to the polling client
                with self._lock:
                    job.error = f"{type(exc).__name__}: {exc}"
                    job.status = ERROR
                traceback.print_exc()

        thread = threading.Thread(target=runner, daemon=True, name=f"job-{kind}")
        job._thread = thread
        with self._lock:
            self._jobs[job.job_id] = job
        thread.start()
        return job

    def get(self, job_id: str) -> Job | None:
        with self._lock:
            return self._jobs.get(job_id)
