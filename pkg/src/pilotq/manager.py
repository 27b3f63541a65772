"""Pilot manager: owns pilots, matches tasks to them, tracks lifecycles.

Scheduling model
----------------
Submitted tasks enter a FIFO pending queue. A scheduling pass walks it in
order and hands each task to the least-loaded feasible pilot (ties broken
by lexicographically smallest pilot name); tasks with no feasible pilot
right now stay pending, and tasks that no configured pilot could *ever*
satisfy fail with NoFeasiblePilot. Passes run on submit, task completion,
and pilot add/remove, plus the explicit `schedule_pending` entry point for
deterministic batch placement in tests.

Feasibility is decided against total capacity: requires_cores and
requires_gpus against the allocation totals, affinity against the pilot
name, and requires_qubits against the pilot's qubit capacity. A qpu_sim
pilot's capacity is its qpu_qubits; classical pilots simulate circuits
in-agent, so their capacity is whatever the memory cap admits.

"Configured" pilots are every pilot ever created, including removed ones:
a task that fits a temporarily removed pilot waits instead of failing,
and with no pilots configured at all every task waits for one to appear.
"""

from __future__ import annotations

import threading
from collections import deque
from dataclasses import dataclass, field

from pilotq.agent import AgentMetrics, PilotAgent
from pilotq.backends import BackendCeilings, ResourceBackend, make_backends
from pilotq.clock import Clock, WallClock
from pilotq.errors import (
    DuplicatePilotName,
    IllegalTransition,
    UnknownPilot,
    ValidationError,
)
from pilotq.events import EventLog
from pilotq.model import (
    BackendKind,
    PilotDescription,
    TaskDescription,
    TaskKind,
    TaskRecord,
    TaskState,
    new_record,
    validate_pilot_description,
    validate_task_description,
)
from pilotq.qsim.simulate import DEFAULT_MEMORY_CAP_BYTES, memory_bytes
from pilotq.store import TaskStore


def sim_qubit_capacity(memory_cap_bytes: int) -> int:
    """Widest state vector that fits strictly under the cap."""
    n = max((memory_cap_bytes // 16).bit_length() - 1, 0)
    while n > 0 and memory_bytes(n) >= memory_cap_bytes:
        n -= 1
    return n


@dataclass
class _PilotEntry:
    description: PilotDescription
    agent: PilotAgent
    created_s: float


@dataclass(frozen=True)
class WaitResult:
    records: dict[str, TaskRecord]
    complete: bool


@dataclass(frozen=True)
class CancelOutcome:
    record: TaskRecord
    canceled: bool


@dataclass(frozen=True)
class _PilotShape:
    """Capacity view used for feasibility, valid for live and removed pilots."""

    name: str
    backend_kind: BackendKind
    total_cores: int
    total_gpus: int
    qubit_capacity: int


class PilotManager:
    def __init__(
        self,
        *,
        clock: Clock | None = None,
        log: EventLog | None = None,
        backends: dict[BackendKind, ResourceBackend] | None = None,
        ceilings: dict[BackendKind, BackendCeilings] | None = None,
        functions: dict | None = None,
        auto_schedule: bool = True,
        memory_cap_bytes: int = DEFAULT_MEMORY_CAP_BYTES,
    ):
        self._clock = clock or WallClock()
        self._log = log or EventLog(clock=self._clock)
        self._memory_cap = memory_cap_bytes
        self._backends = backends or make_backends(
            ceilings, clock=self._clock, memory_cap_bytes=memory_cap_bytes
        )
        self._functions = dict(functions or {})
        self._auto = auto_schedule
        self._store = TaskStore(self._clock)
        self._lock = threading.RLock()
        self._pilots: dict[str, _PilotEntry] = {}
        self._configured: dict[str, PilotDescription] = {}
        self._pending: deque[str] = deque()
        self._assigned_pilot: dict[str, str] = {}
        self._pilots_version = 0
        self._stalled_version = -1
        self._started_at = self._clock.now()

    # --- registry ---------------------------------------------------------------

    @property
    def store(self) -> TaskStore:
        return self._store

    @property
    def log(self) -> EventLog:
        return self._log

    def register_function(self, name: str, fn) -> None:
        self._functions[name] = fn

    # --- pilots -------------------------------------------------------------------

    def create_pilot(self, desc: PilotDescription, workers: int | None = None) -> str:
        validate_pilot_description(desc)
        with self._lock:
            if desc.name in self._pilots:
                raise DuplicatePilotName(desc.name)
            backend = self._backends[desc.backend_kind]
            alloc = backend.provision(desc, self._clock)
            agent = PilotAgent(
                alloc,
                desc,
                workers,
                clock=self._clock,
                log=self._log,
                store=self._store,
                functions=self._functions,
                backend=backend,
                on_terminal=self._on_agent_terminal,
                memory_cap_bytes=self._memory_cap,
            ).start()
            self._pilots[desc.name] = _PilotEntry(desc, agent, self._clock.now())
            self._configured[desc.name] = desc
            self._pilots_version += 1
            self._log.emit(
                "pilot", desc.name, "pilot_created",
                backend=desc.backend_kind.value,
                total_cores=alloc.total_cores,
                total_gpus=alloc.total_gpus,
                qpu_qubits=alloc.qpu_qubits,
                granted_at_s=alloc.granted_at_s,
            )
            if self._auto:
                self._schedule_pass()
        return desc.name

    def remove_pilot(self, name: str, drain: bool = True) -> AgentMetrics:
        with self._lock:
            entry = self._pilots.pop(name, None)
            if entry is None:
                raise UnknownPilot(name)
            self._pilots_version += 1
            if not drain:
                reclaimed = entry.agent.take_back_queued()
                for tid, _ in reversed(reclaimed):
                    self._assigned_pilot.pop(tid, None)
                    self._pending.appendleft(tid)
                    self._log.emit("task", tid, "task_requeued", reason=f"pilot {name} removed")
        # Shutdown outside the lock: draining joins workers whose completion
        # callbacks need the manager lock.
        metrics = entry.agent.shutdown(drain=drain)
        self._log.emit(
            "pilot", name, "pilot_removed",
            drain=str(drain).lower(),
            tasks_done=metrics.tasks_done,
            tasks_failed=metrics.tasks_failed,
        )
        with self._lock:
            if self._auto:
                self._schedule_pass()
        return metrics

    def pilot_names(self) -> list[str]:
        with self._lock:
            return sorted(self._pilots)

    def wait_pilots_ready(self, timeout: float | None = None) -> bool:
        with self._lock:
            agents = [e.agent for e in self._pilots.values()]
        return all(a.wait_ready(timeout) for a in agents)

    # --- tasks ----------------------------------------------------------------------

    def submit_task(self, desc: TaskDescription) -> str:
        validate_task_description(desc)
        with self._lock:
            rec = new_record(desc, self._clock.now())
            self._store.add(rec)  # raises DuplicateTaskId
            self._pending.append(desc.task_id)
            self._log.emit("task", desc.task_id, "task_submitted", kind=desc.kind.value)
            if self._auto:
                self._schedule_pass()
        return desc.task_id

    def schedule_pending(self) -> list[tuple[str, str]]:
        """Run one scheduling pass; returns (task_id, pilot_name) assignments."""
        with self._lock:
            return self._schedule_pass()

    def wait(self, task_ids, timeout: float | None = None) -> WaitResult:
        ids = list(task_ids)
        complete = self._store.wait_terminal(ids, timeout)
        records = {tid: self._store.get(tid) for tid in ids}
        return WaitResult(records=records, complete=complete)

    def cancel(self, task_id: str) -> CancelOutcome:
        with self._lock:
            rec = self._store.get(task_id)
            if rec.state in (TaskState.NEW, TaskState.SCHEDULED):
                pilot = self._assigned_pilot.get(task_id)
                if pilot is not None and pilot in self._pilots:
                    self._pilots[pilot].agent.cancel_queued(task_id)
                try:
                    final = self._store.advance(task_id, "cancel")
                except IllegalTransition:
                    return CancelOutcome(self._store.get(task_id), False)
                self._assigned_pilot.pop(task_id, None)
                try:
                    self._pending.remove(task_id)
                except ValueError:
                    pass
                self._log.emit("task", task_id, "task_canceled", reason="user request")
                return CancelOutcome(final, True)
            return CancelOutcome(rec, False)

    def task(self, task_id: str) -> TaskRecord:
        return self._store.get(task_id)

    # --- scheduling core --------------------------------------------------------------

    def _shape_for(self, desc: PilotDescription) -> _PilotShape:
        if desc.backend_kind is BackendKind.QPU_SIM:
            qubits = desc.qpu_qubits
        else:
            qubits = sim_qubit_capacity(self._memory_cap)
        return _PilotShape(
            desc.name, desc.backend_kind, desc.total_cores, desc.total_gpus, qubits
        )

    @staticmethod
    def _fits(task: TaskDescription, shape: _PilotShape) -> bool:
        if task.target is not None and task.target != shape.name:
            return False
        if task.requires_cores > shape.total_cores:
            return False
        if task.requires_gpus > shape.total_gpus:
            return False
        if task.requires_qubits > 0 and task.requires_qubits > shape.qubit_capacity:
            return False
        if (
            task.kind is TaskKind.QUANTUM_CIRCUIT
            and task.payload is not None
            and task.payload.shots == 0
            and shape.backend_kind is BackendKind.QPU_SIM
        ):
            # QPUs sample; exact expectations and probability vectors need a
            # classical pilot.
            return False
        return True

    def feasible_pilots(self, task: TaskDescription) -> list[str]:
        """Live pilots that could run this task, sorted by name."""
        with self._lock:
            return sorted(
                name
                for name, entry in self._pilots.items()
                if self._fits(task, self._shape_for(entry.description))
            )

    def _schedule_pass(self) -> list[tuple[str, str]]:
        assignments: list[tuple[str, str]] = []
        still: deque[str] = deque()
        shapes = {name: self._shape_for(e.description) for name, e in self._pilots.items()}
        while self._pending:
            tid = self._pending.popleft()
            rec = self._store.get(tid)
            if rec.state is not TaskState.NEW:
                continue
            task = rec.description
            candidates = [name for name, shape in shapes.items() if self._fits(task, shape)]
            if candidates:
                name = min(
                    candidates, key=lambda nm: (self._pilots[nm].agent.load(), nm)
                )
                self._assigned_pilot[tid] = name
                # log before handing over: the agent may start the task at once
                self._log.emit(
                    "task", tid, "task_assigned",
                    pilot=name,
                    requires_cores=task.requires_cores,
                    requires_gpus=task.requires_gpus,
                    requires_qubits=task.requires_qubits,
                )
                self._pilots[name].agent.assign(rec)
                assignments.append((tid, name))
            elif self._configured and not any(
                self._fits(task, self._shape_for(d)) for d in self._configured.values()
            ):
                final = self._store.advance(
                    tid, "fail",
                    error="NoFeasiblePilot: no configured pilot satisfies "
                    f"cores={task.requires_cores} gpus={task.requires_gpus} "
                    f"qubits={task.requires_qubits} target={task.target}",
                )
                self._log.emit("task", tid, "task_failed", error="NoFeasiblePilot")
            else:
                still.append(tid)
        self._pending = still
        self._stalled_version = self._pilots_version if still else -1
        return assignments

    def _on_agent_terminal(self, record: TaskRecord) -> None:
        with self._lock:
            tid = record.task_id
            if record.state is TaskState.NEW:
                # failed attempt with retries left: back into the queue
                self._assigned_pilot.pop(tid, None)
                self._pending.append(tid)
                if self._auto:
                    self._schedule_pass()
            else:
                self._assigned_pilot.pop(tid, None)
                if (
                    self._auto
                    and self._pending
                    and self._pilots_version != self._stalled_version
                ):
                    self._schedule_pass()

    # --- introspection -----------------------------------------------------------------

    def status_snapshot(self) -> dict:
        with self._lock:
            pilots = []
            for name in sorted(self._pilots):
                entry = self._pilots[name]
                m = entry.agent.metrics()
                pilots.append(
                    {
                        "name": name,
                        "backend_kind": entry.description.backend_kind.value,
                        "total_cores": entry.agent.allocation.total_cores,
                        "queue_depth": m.queue_depth,
                        "busy_cores": m.busy_cores,
                        "tasks_done": m.tasks_done,
                        "tasks_failed": m.tasks_failed,
                    }
                )
            tallies: dict[str, int] = {}
            for rec in self._store.snapshot().values():
                tallies[rec.state.value] = tallies.get(rec.state.value, 0) + 1
            return {
                "ts_s": self._clock.now(),
                "uptime_s": self._clock.now() - self._started_at,
                "pilots": pilots,
                "pending": len(self._pending),
                "tasks": tallies,
            }

    def shutdown(self, drain: bool = True) -> None:
        for name in list(self.pilot_names()):
            try:
                self.remove_pilot(name, drain=drain)
            except UnknownPilot:
                pass
