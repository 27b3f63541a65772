"""Pilot agent: the per-pilot executor.

A fixed pool of worker threads pulls tasks off the agent's FIFO queue.
Admission is core-slot based: the pool has `workers` slots (default: the
allocation's total cores) and a task occupies requires_cores of them, so
the sum of requires_cores over running tasks never exceeds the worker
count. The queue is strictly FIFO; a wide task at the head blocks until
enough slots free up, which preserves dispatch order.

Queued tasks stay NEW; the worker that pulls one drives the
schedule -> start -> complete/fail transitions through the shared task
store. That keeps the schedule->start gap (the dispatch overhead) down to
the worker handoff instead of including queue wait. Cancellation of queued
work is a queue removal plus a NEW -> CANCELED transition; a task that
already reached a worker is not cancelable.

The agent reports readiness only once the clock passes the allocation's
granted_at_s, it refuses dispatch after expires_at_s, and shutdown(drain)
either finishes or cancels the queue before releasing the allocation.
"""

from __future__ import annotations

import threading
import time
import zlib
from collections import deque
from dataclasses import dataclass

from pilotq.backends import PilotAllocation, ResourceBackend
from pilotq.clock import Clock, WallClock
from pilotq.errors import AgentStopped, ValidationError, WorkerOversubscription
from pilotq.events import EventLog
from pilotq.model import (
    BackendKind,
    ClassicalPayload,
    PilotDescription,
    QuantumPayload,
    TaskDescription,
    TaskKind,
    TaskRecord,
    TaskResult,
    TaskState,
)
from pilotq.qsim.simulate import (
    DEFAULT_MEMORY_CAP_BYTES,
    expectation,
    probabilities,
    run_circuit,
    sample,
)
from pilotq.store import TaskStore


@dataclass(frozen=True)
class AgentMetrics:
    tasks_done: int = 0
    tasks_failed: int = 0
    busy_cores: int = 0
    queue_depth: int = 0
    total_exec_s: float = 0.0
    agent_overhead_s: float = 0.0

    def to_json_dict(self) -> dict:
        return {
            "tasks_done": self.tasks_done,
            "tasks_failed": self.tasks_failed,
            "busy_cores": self.busy_cores,
            "queue_depth": self.queue_depth,
            "total_exec_s": self.total_exec_s,
            "agent_overhead_s": self.agent_overhead_s,
        }


def task_seed(task_id: str) -> int:
    """Stable sampling seed derived from the task id."""
    return zlib.crc32(task_id.encode("utf-8"))


class PilotAgent:
    def __init__(
        self,
        allocation: PilotAllocation,
        description: PilotDescription,
        workers: int | None = None,
        *,
        clock: Clock | None = None,
        log: EventLog | None = None,
        store: TaskStore | None = None,
        functions: dict | None = None,
        backend: ResourceBackend | None = None,
        on_terminal=None,
        memory_cap_bytes: int = DEFAULT_MEMORY_CAP_BYTES,
    ):
        if workers is None:
            workers = allocation.total_cores
        if workers < 1:
            raise WorkerOversubscription("workers must be >= 1")
        if workers > allocation.total_cores:
            raise WorkerOversubscription(
                f"{workers} workers exceed the allocation's {allocation.total_cores} cores"
            )
        self.allocation = allocation
        self.description = description
        self.name = allocation.pilot_name
        self._workers = workers
        self._clock = clock or WallClock()
        self._log = log or EventLog(clock=self._clock)
        self._store = store or TaskStore(self._clock)
        self._functions = functions or {}
        self._backend = backend
        self._on_terminal = on_terminal
        self._memory_cap = memory_cap_bytes

        self._cond = threading.Condition()
        self._queue: deque[tuple[str, TaskDescription]] = deque()
        self._free_slots = workers
        self._running_count = 0
        self._stop_mode: str | None = None
        self._released = False
        self._final_metrics: AgentMetrics | None = None
        self._ready = threading.Event()
        self._ready_emitted = False
        self._threads: list[threading.Thread] = []

        self._tasks_done = 0
        self._tasks_failed = 0
        self._total_exec_s = 0.0
        self._overhead_s = 0.0

    # --- lifecycle -------------------------------------------------------------

    def start(self) -> "PilotAgent":
        for i in range(self._workers):
            t = threading.Thread(target=self._worker, args=(i,), daemon=True, name=f"{self.name}-w{i}")
            t.start()
            self._threads.append(t)
        return self

    @property
    def store(self) -> TaskStore:
        return self._store

    def wait_ready(self, timeout: float | None = None) -> bool:
        return self._ready.wait(timeout)

    def assign(self, record: TaskRecord) -> None:
        """Queue a NEW task for execution on this pilot."""
        with self._cond:
            if self._stop_mode is not None:
                raise AgentStopped(f"agent {self.name} is stopped")
            self._queue.append((record.task_id, record.description))
            self._cond.notify_all()

    def cancel_queued(self, task_id: str) -> bool:
        """Remove a still-queued task; False once a worker already has it."""
        with self._cond:
            for item in self._queue:
                if item[0] == task_id:
                    self._queue.remove(item)
                    return True
        return False

    def take_back_queued(self) -> list[tuple[str, TaskDescription]]:
        """Drain the queue without running it (used when a pilot is removed)."""
        with self._cond:
            items = list(self._queue)
            self._queue.clear()
        return items

    def load(self) -> int:
        """Queued plus running task count (for least-loaded placement)."""
        with self._cond:
            return len(self._queue) + self._running_count

    def metrics(self) -> AgentMetrics:
        with self._cond:
            return AgentMetrics(
                tasks_done=self._tasks_done,
                tasks_failed=self._tasks_failed,
                busy_cores=self._workers - self._free_slots,
                queue_depth=len(self._queue),
                total_exec_s=self._total_exec_s,
                agent_overhead_s=self._overhead_s,
            )

    def shutdown(self, drain: bool = True) -> AgentMetrics:
        """Stop the agent; returns final metrics. Safe to call twice."""
        canceled: list[tuple[str, TaskDescription]] = []
        with self._cond:
            if self._final_metrics is not None:
                return self._final_metrics
            if self._stop_mode is None:
                self._stop_mode = "drain" if drain else "cancel"
            if self._stop_mode == "cancel":
                canceled = list(self._queue)
                self._queue.clear()
            self._cond.notify_all()
        for tid, _ in canceled:
            rec = self._store.try_advance(tid, "cancel")
            if rec is not None:
                self._log.emit("task", tid, "task_canceled", pilot=self.name, reason="agent shutdown")
                self._notify(rec)
        for t in self._threads:
            t.join()
        with self._cond:
            if not self._released:
                self._released = True
                if self._backend is not None:
                    self._backend.release(self.allocation)
                self._log.emit("pilot", self.name, "agent_stopped", drain=str(drain).lower())
            if self._final_metrics is None:
                self._final_metrics = AgentMetrics(
                    tasks_done=self._tasks_done,
                    tasks_failed=self._tasks_failed,
                    busy_cores=0,
                    queue_depth=len(self._queue),
                    total_exec_s=self._total_exec_s,
                    agent_overhead_s=self._overhead_s,
                )
            return self._final_metrics

    # --- worker machinery --------------------------------------------------------

    def _await_ready(self) -> bool:
        """Wait for granted_at; False if a cancel-shutdown aborted the wait."""
        while True:
            now = self._clock.now()
            if now >= self.allocation.granted_at_s:
                break
            with self._cond:
                if self._stop_mode == "cancel":
                    return False
            self._clock.sleep(min(0.05, self.allocation.granted_at_s - now))
        with self._cond:
            if not self._ready_emitted:
                self._ready_emitted = True
                self._log.emit(
                    "pilot", self.name, "agent_ready",
                    granted_at_s=self.allocation.granted_at_s,
                    cores=self.allocation.total_cores,
                )
                self._ready.set()
        return True

    def _worker(self, index: int) -> None:
        if index == 0:
            if not self._await_ready():
                return
        else:
            while not self._ready.wait(timeout=0.05):
                with self._cond:
                    if self._stop_mode == "cancel":
                        return
        while True:
            with self._cond:
                while True:
                    if self._stop_mode == "cancel":
                        return
                    if self._queue:
                        need = self._queue[0][1].requires_cores
                        if need > self._workers or need <= self._free_slots:
                            break
                    elif self._stop_mode == "drain":
                        return
                    self._cond.wait(timeout=0.1)
                tid, desc = self._queue.popleft()
                held = min(desc.requires_cores, self._workers)
                self._free_slots -= held
                self._running_count += 1
            try:
                self._run_one(tid, desc)
            finally:
                with self._cond:
                    self._free_slots += held
                    self._running_count -= 1
                    self._cond.notify_all()

    # --- execution ----------------------------------------------------------------

    def execute_task(self, record: TaskRecord) -> TaskRecord:
        """Run one task synchronously on the calling thread.

        The record may be NEW (it is scheduled here) or already SCHEDULED
        for this pilot. Worker-slot admission applies, so concurrent calls
        cannot oversubscribe the allocation.
        """
        with self._cond:
            if self._stop_mode is not None:
                raise AgentStopped(f"agent {self.name} is stopped")
        if record.task_id not in self._store:
            self._store.add(record)
        need = record.description.requires_cores
        held = min(need, self._workers)
        with self._cond:
            while self._free_slots < held:
                self._cond.wait(timeout=0.1)
            self._free_slots -= held
            self._running_count += 1
        try:
            return self._run_one(record.task_id, record.description)
        finally:
            with self._cond:
                self._free_slots += held
                self._running_count -= 1
                self._cond.notify_all()

    def _run_one(self, tid: str, desc: TaskDescription) -> TaskRecord | None:
        store = self._store
        current = store.get(tid)
        if current.state is TaskState.NEW:
            rec = store.try_advance(tid, "schedule", pilot=self.name)
            if rec is None:
                return None  # canceled between queue pop and schedule
        elif current.state is TaskState.SCHEDULED:
            rec = current
        else:
            return None

        fail_fast: str | None = None
        if desc.requires_cores > self._workers:
            fail_fast = (
                f"capacity bug: task needs {desc.requires_cores} cores, "
                f"agent has {self._workers} worker slots"
            )
        elif desc.requires_gpus > self.allocation.total_gpus:
            fail_fast = (
                f"capacity bug: task needs {desc.requires_gpus} gpus, "
                f"allocation has {self.allocation.total_gpus}"
            )
        elif self._clock.now() > self.allocation.expires_at_s:
            fail_fast = f"WalltimeExpired: pilot {self.name} walltime ended"
        if fail_fast is not None:
            return self._finish_fail(tid, fail_fast)

        rec = store.try_advance(tid, "start")
        if rec is None:
            return None
        dispatch_s = (rec.timestamps.start_s or 0.0) - (rec.timestamps.schedule_s or 0.0)
        with self._cond:
            self._overhead_s += dispatch_s
        self._log.emit(
            "task", tid, "task_started", pilot=self.name, dispatch_ms=f"{dispatch_s * 1e3:.3f}"
        )

        try:
            result = self._execute_payload(tid, desc)
        except Exception as exc:  # a task failure must never take the worker down
            return self._finish_fail(tid, f"{type(exc).__name__}: {exc}")

        final = store.advance(tid, "complete", result=result)
        with self._cond:
            self._tasks_done += 1
            if result.exec_s is not None:
                self._total_exec_s += result.exec_s
        self._log.emit(
            "task", tid, "task_done", pilot=self.name,
            exec_s="" if result.exec_s is None else f"{result.exec_s:.6f}",
        )
        self._notify(final)
        return final

    def _finish_fail(self, tid: str, error: str) -> TaskRecord:
        final = self._store.advance(tid, "fail", error=error[:500])
        with self._cond:
            self._tasks_failed += 1
        if final.state is TaskState.NEW:
            self._log.emit(
                "task", tid, "task_retry", pilot=self.name,
                attempt=final.attempt, error=error[:200],
            )
        else:
            self._log.emit("task", tid, "task_failed", pilot=self.name, error=error[:200])
        self._notify(final)
        return final

    def _notify(self, record: TaskRecord) -> None:
        if self._on_terminal is not None:
            self._on_terminal(record)

    def _execute_payload(self, tid: str, desc: TaskDescription) -> TaskResult:
        if desc.kind is TaskKind.ZERO_COMPUTE:
            return TaskResult()

        latency = self.description.queue_model.per_task_latency_s

        if desc.kind is TaskKind.CLASSICAL_FN:
            payload: ClassicalPayload = desc.payload
            fn = self._functions.get(payload.function)
            if fn is None:
                raise ValidationError(f"no registered function named {payload.function!r}")
            self._clock.sleep(latency)
            t0 = time.perf_counter()
            data = fn(*payload.args, **payload.kwargs)
            return TaskResult(data=data, exec_s=latency + (time.perf_counter() - t0))

        qp: QuantumPayload = desc.payload
        if self.allocation.backend_kind is BackendKind.QPU_SIM:
            if self._backend is None:
                raise ValidationError("qpu_sim agent has no backend to execute on")
            report = self._backend.qpu_execute(
                qp.circuit, qp.shots, self.allocation, rng_seed=task_seed(tid)
            )
            return TaskResult(
                counts=report.counts, queue_wait_s=report.queue_wait_s, exec_s=report.exec_s
            )

        # classical pilot: simulate in-agent
        self._clock.sleep(latency)
        t0 = time.perf_counter()
        state = run_circuit(qp.circuit, memory_cap_bytes=self._memory_cap)
        if qp.observable is not None:
            value = expectation(state, qp.observable)
            return TaskResult(value=value, exec_s=latency + (time.perf_counter() - t0))
        if qp.shots > 0:
            counts = sample(state, qp.shots, task_seed(tid))
            return TaskResult(counts=counts, exec_s=latency + (time.perf_counter() - t0))
        probs = tuple(float(p) for p in probabilities(state))
        return TaskResult(probabilities=probs, exec_s=latency + (time.perf_counter() - t0))


def start_agent(
    allocation: PilotAllocation,
    description: PilotDescription,
    workers: int | None = None,
    **kwargs,
) -> PilotAgent:
    """Construct and start a PilotAgent; raises WorkerOversubscription."""
    return PilotAgent(allocation, description, workers, **kwargs).start()
