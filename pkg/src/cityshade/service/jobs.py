"""In-memory job store with a bounded worker pool.

Jobs run accumulation functions that report progress from the worker
thread; the store holds the latest partial payload so polling clients see
preliminary rasters grow toward the final one. State for a job is written
only by its own worker (single-writer), guarded by one lock for the map.
"""

from __future__ import annotations

import threading
import uuid
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable


@dataclass
class Job:
    job_id: str
    state: str = "queued"
    progress: float = 0.0
    error: str | None = None
    payload: Any = None  # client-facing body (partial while running)
    internal: Any = None  # engine-side result for follow-up requests


class JobStore:
    def __init__(self, workers: int = 2):
        self._jobs: dict[str, Job] = {}
        self._lock = threading.Lock()
        self._pool = ThreadPoolExecutor(max_workers=workers)

    def submit(self, fn: Callable) -> str:
        """Run ``fn(publish)`` on the pool; it returns (payload, internal).

        ``publish(fraction, payload)`` updates the visible partial state;
        fractions are clamped monotone so progress never moves backward.
        """
        job_id = uuid.uuid4().hex[:12]
        job = Job(job_id)
        with self._lock:
            self._jobs[job_id] = job

        def publish(fraction: float, payload: Any = None) -> None:
            with self._lock:
                job.progress = max(job.progress, min(float(fraction), 1.0))
                if payload is not None:
                    job.payload = payload

        def run() -> None:
            with self._lock:
                job.state = "running"
            try:
                payload, internal = fn(publish)
            except Exception as exc:  # surfaced to the client, not swallowed
                with self._lock:
                    job.state = "failed"
                    job.error = f"{type(exc).__name__}: {exc}"
                return
            with self._lock:
                job.payload = payload
                job.internal = internal
                job.progress = 1.0
                job.state = "done"

        self._pool.submit(run)
        return job_id

    def get(self, job_id: str) -> Job | None:
        with self._lock:
            return self._jobs.get(job_id)

    def snapshot(self, job_id: str) -> Job | None:
        """Copy safe to serialize outside the lock."""
        with self._lock:
            job = self._jobs.get(job_id)
            if job is None:
                return None
            return Job(job.job_id, job.state, job.progress, job.error, job.payload, job.internal)
