"""Thread-safe task-record store shared by the manager and its agents.

All record mutations funnel through `advance`, which applies the pure
`transition` function under one lock; waiters block on the store's
condition until the ids they care about reach terminal states.
"""

from __future__ import annotations

import threading
import time

from pilotq.clock import Clock, WallClock
from pilotq.errors import DuplicateTaskId, IllegalTransition, UnknownTaskId
from pilotq.model import TaskRecord, TaskResult, transition


class TaskStore:
    def __init__(self, clock: Clock | None = None):
        self._clock = clock or WallClock()
        self._records: dict[str, TaskRecord] = {}
        self._lock = threading.RLock()
        self._terminal_event = threading.Condition(self._lock)

    def add(self, record: TaskRecord) -> None:
        with self._lock:
            if record.task_id in self._records:
                raise DuplicateTaskId(record.task_id)
            self._records[record.task_id] = record

    def get(self, task_id: str) -> TaskRecord:
        with self._lock:
            try:
                return self._records[task_id]
            except KeyError:
                raise UnknownTaskId(task_id) from None

    def __contains__(self, task_id: str) -> bool:
        with self._lock:
            return task_id in self._records

    def snapshot(self) -> dict[str, TaskRecord]:
        with self._lock:
            return dict(self._records)

    def advance(
        self,
        task_id: str,
        event: str,
        *,
        pilot: str | None = None,
        result: TaskResult | None = None,
        error: str | None = None,
    ) -> TaskRecord:
        """Apply one lifecycle event; raises IllegalTransition if not legal."""
        with self._lock:
            rec = self.get(task_id)
            rec = transition(
                rec, event, self._clock.now(), pilot=pilot, result=result, error=error
            )
            self._records[task_id] = rec
            if rec.terminal:
                self._terminal_event.notify_all()
            return rec

    def try_advance(self, task_id: str, event: str, **kwargs) -> TaskRecord | None:
        """Like advance, but returns None when the event is not legal."""
        with self._lock:
            try:
                return self.advance(task_id, event, **kwargs)
            except IllegalTransition:
                return None

    def wait_terminal(self, task_ids, timeout: float | None = None) -> bool:
        """Block until every id is terminal; False on timeout.

        The timeout is wall time (the caller's patience), independent of the
        domain clock used for record timestamps.
        """
        ids = list(task_ids)
        with self._lock:
            for tid in ids:
                self.get(tid)  # raise UnknownTaskId eagerly
        deadline = None if timeout is None else time.monotonic() + timeout
        remaining = set(ids)
        with self._lock:
            while True:
                remaining = {tid for tid in remaining if not self._records[tid].terminal}
                if not remaining:
                    return True
                if deadline is not None and time.monotonic() >= deadline:
                    return False
                wait_for = 0.02
                if deadline is not None:
                    wait_for = min(wait_for, max(0.0, deadline - time.monotonic()))
                self._terminal_event.wait(timeout=wait_for)
