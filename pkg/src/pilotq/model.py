"""Domain types: pilots, tasks, lifecycle records, and their JSON forms.

The task lifecycle is a small state machine over immutable records; the
`transition` function is the single authority for state changes:

    NEW --schedule--> SCHEDULED --start--> RUNNING --complete--> DONE
    RUNNING/SCHEDULED --fail--> NEW (attempt+1, while attempt < max_retries)
                              > FAILED (otherwise; terminal)
    NEW --fail--> FAILED          (scheduling failure; never retried)
    NEW/SCHEDULED --cancel--> CANCELED

A retried record returns to NEW with assigned_pilot and the schedule/start
timestamps cleared; the event log keeps the history. Anything else raises
IllegalTransition.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field, replace
from typing import Any

from pilotq.errors import IllegalTransition, ValidationError
from pilotq.qsim.circuit import Circuit, PauliObservable


class BackendKind(str, enum.Enum):
    LOCAL = "local"
    BATCH_SIM = "batch_sim"
    QPU_SIM = "qpu_sim"


class TaskKind(str, enum.Enum):
    ZERO_COMPUTE = "zero_compute"
    CLASSICAL_FN = "classical_fn"
    QUANTUM_CIRCUIT = "quantum_circuit"


class TaskState(str, enum.Enum):
    NEW = "NEW"
    SCHEDULED = "SCHEDULED"
    RUNNING = "RUNNING"
    DONE = "DONE"
    FAILED = "FAILED"
    CANCELED = "CANCELED"


TERMINAL_STATES = frozenset({TaskState.DONE, TaskState.FAILED, TaskState.CANCELED})


@dataclass(frozen=True)
class QueueModel:
    """Queue-delay model: startup delay base +- jitter, plus per-task latency."""

    base_delay_s: float = 0.0
    jitter_s: float = 0.0
    per_task_latency_s: float = 0.0

    def to_json_dict(self) -> dict:
        return {
            "base_delay_s": self.base_delay_s,
            "jitter_s": self.jitter_s,
            "per_task_latency_s": self.per_task_latency_s,
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "QueueModel":
        return cls(**d)


# Default startup-queue behaviour per backend; batch submission historically
# costs tens of seconds before the pilot is live.
DEFAULT_QUEUE_MODELS = {
    BackendKind.LOCAL: QueueModel(),
    BackendKind.BATCH_SIM: QueueModel(base_delay_s=37.0),
    BackendKind.QPU_SIM: QueueModel(),
}


@dataclass(frozen=True)
class PilotDescription:
    name: str
    backend_kind: BackendKind
    nodes: int = 1
    cores_per_node: int = 1
    gpus_per_node: int = 0
    qpu_qubits: int = 0
    walltime_s: float = 3600.0
    queue_model: QueueModel | None = None
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "backend_kind", BackendKind(self.backend_kind))
        if self.queue_model is None:
            object.__setattr__(self, "queue_model", DEFAULT_QUEUE_MODELS[self.backend_kind])

    @property
    def total_cores(self) -> int:
        return self.nodes * self.cores_per_node

    @property
    def total_gpus(self) -> int:
        return self.nodes * self.gpus_per_node

    def to_json_dict(self) -> dict:
        return {
            "name": self.name,
            "backend_kind": self.backend_kind.value,
            "nodes": self.nodes,
            "cores_per_node": self.cores_per_node,
            "gpus_per_node": self.gpus_per_node,
            "qpu_qubits": self.qpu_qubits,
            "walltime_s": self.walltime_s,
            "queue_model": self.queue_model.to_json_dict(),
            "seed": self.seed,
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "PilotDescription":
        d = dict(d)
        d["queue_model"] = QueueModel.from_json_dict(d["queue_model"])
        return cls(**d)


def validate_pilot_description(desc: PilotDescription) -> None:
    if not isinstance(desc, PilotDescription):
        raise ValidationError("expected a PilotDescription")
    if not desc.name or not desc.name.strip():
        raise ValidationError("pilot name must be non-empty")
    if desc.nodes < 1 or desc.cores_per_node < 1:
        raise ValidationError("nodes and cores_per_node must be >= 1")
    if desc.gpus_per_node < 0 or desc.qpu_qubits < 0:
        raise ValidationError("gpus_per_node and qpu_qubits must be >= 0")
    if desc.walltime_s <= 0:
        raise ValidationError("walltime_s must be > 0")
    if not (0 <= int(desc.seed) < 2**64):
        raise ValidationError("seed must fit an unsigned 64-bit integer")
    qm = desc.queue_model
    if qm.base_delay_s < 0 or qm.jitter_s < 0 or qm.per_task_latency_s < 0:
        raise ValidationError("queue model delays must be >= 0")
    if desc.backend_kind is BackendKind.QPU_SIM:
        if desc.qpu_qubits < 1:
            raise ValidationError("qpu_sim pilots must set qpu_qubits >= 1")
        if desc.gpus_per_node != 0:
            raise ValidationError("qpu_sim pilots cannot have GPUs")
    elif desc.qpu_qubits != 0:
        raise ValidationError("qpu_qubits > 0 is only valid for qpu_sim pilots")


@dataclass(frozen=True)
class ClassicalPayload:
    """Call a function registered with the agent, by name."""

    function: str
    args: tuple = ()
    kwargs: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "args", tuple(self.args))
        object.__setattr__(self, "kwargs", dict(self.kwargs))

    def to_json_dict(self) -> dict:
        return {"function": self.function, "args": list(self.args), "kwargs": self.kwargs}

    @classmethod
    def from_json_dict(cls, d: dict) -> "ClassicalPayload":
        return cls(function=d["function"], args=tuple(d["args"]), kwargs=d["kwargs"])


@dataclass(frozen=True)
class QuantumPayload:
    """Circuit execution request.

    shots = 0 with an observable -> exact expectation value;
    shots = 0 without            -> exact output probabilities;
    shots > 0 (no observable)    -> sampled counts.
    """

    circuit: Circuit
    shots: int = 0
    observable: PauliObservable | None = None

    def to_json_dict(self) -> dict:
        return {
            "circuit": self.circuit.to_json_dict(),
            "shots": self.shots,
            "observable": self.observable.to_json_dict() if self.observable else None,
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "QuantumPayload":
        obs = d.get("observable")
        return cls(
            circuit=Circuit.from_json_dict(d["circuit"]),
            shots=int(d["shots"]),
            observable=PauliObservable.from_json_dict(obs) if obs else None,
        )


@dataclass(frozen=True)
class TaskDescription:
    task_id: str
    kind: TaskKind
    payload: ClassicalPayload | QuantumPayload | None = None
    requires_cores: int = 1
    requires_gpus: int = 0
    requires_qubits: int = 0
    target: str | None = None
    max_retries: int = 0

    def __post_init__(self):
        object.__setattr__(self, "kind", TaskKind(self.kind))

    def to_json_dict(self) -> dict:
        if self.payload is None:
            payload = None
        else:
            payload = self.payload.to_json_dict()
        return {
            "task_id": self.task_id,
            "kind": self.kind.value,
            "payload": payload,
            "requires_cores": self.requires_cores,
            "requires_gpus": self.requires_gpus,
            "requires_qubits": self.requires_qubits,
            "target": self.target,
            "max_retries": self.max_retries,
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "TaskDescription":
        kind = TaskKind(d["kind"])
        raw = d.get("payload")
        payload: ClassicalPayload | QuantumPayload | None
        if raw is None:
            payload = None
        elif kind is TaskKind.CLASSICAL_FN:
            payload = ClassicalPayload.from_json_dict(raw)
        elif kind is TaskKind.QUANTUM_CIRCUIT:
            payload = QuantumPayload.from_json_dict(raw)
        else:
            payload = None
        return cls(
            task_id=d["task_id"],
            kind=kind,
            payload=payload,
            requires_cores=int(d["requires_cores"]),
            requires_gpus=int(d["requires_gpus"]),
            requires_qubits=int(d["requires_qubits"]),
            target=d.get("target"),
            max_retries=int(d["max_retries"]),
        )


def validate_task_description(desc: TaskDescription) -> None:
    if not isinstance(desc, TaskDescription):
        raise ValidationError("expected a TaskDescription")
    if not desc.task_id or not desc.task_id.strip():
        raise ValidationError("task_id must be non-empty")
    if desc.requires_cores < 1:
        raise ValidationError("requires_cores must be >= 1")
    if desc.requires_gpus < 0 or desc.requires_qubits < 0:
        raise ValidationError("requires_gpus and requires_qubits must be >= 0")
    if desc.max_retries < 0:
        raise ValidationError("max_retries must be >= 0")
    if desc.kind is TaskKind.ZERO_COMPUTE:
        if desc.payload is not None:
            raise ValidationError("zero_compute tasks take no payload")
        if desc.requires_qubits != 0:
            raise ValidationError("zero_compute tasks cannot require qubits")
    elif desc.kind is TaskKind.CLASSICAL_FN:
        if not isinstance(desc.payload, ClassicalPayload) or not desc.payload.function:
            raise ValidationError("classical_fn tasks need a ClassicalPayload with a function name")
        if desc.requires_qubits != 0:
            raise ValidationError("classical_fn tasks cannot require qubits")
    elif desc.kind is TaskKind.QUANTUM_CIRCUIT:
        p = desc.payload
        if not isinstance(p, QuantumPayload):
            raise ValidationError("quantum_circuit tasks need a QuantumPayload")
        if p.shots < 0:
            raise ValidationError("shots must be >= 0")
        if p.observable is not None:
            if p.shots != 0:
                raise ValidationError("an observable implies exact mode: shots must be 0")
            if p.observable.num_qubits != p.circuit.num_qubits:
                raise ValidationError("observable width must match the circuit")
        if desc.requires_qubits != p.circuit.num_qubits:
            raise ValidationError("requires_qubits must equal the payload circuit's qubit count")


@dataclass(frozen=True)
class TaskResult:
    """Outcome payload; which fields are set depends on the task kind."""

    value: float | None = None
    counts: dict[str, int] | None = None
    probabilities: tuple[float, ...] | None = None
    data: Any = None
    queue_wait_s: float | None = None
    exec_s: float | None = None

    def to_json_dict(self) -> dict:
        return {
            "value": self.value,
            "counts": self.counts,
            "probabilities": list(self.probabilities) if self.probabilities is not None else None,
            "data": self.data,
            "queue_wait_s": self.queue_wait_s,
            "exec_s": self.exec_s,
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "TaskResult":
        probs = d.get("probabilities")
        return cls(
            value=d.get("value"),
            counts=d.get("counts"),
            probabilities=tuple(probs) if probs is not None else None,
            data=d.get("data"),
            queue_wait_s=d.get("queue_wait_s"),
            exec_s=d.get("exec_s"),
        )


@dataclass(frozen=True)
class Timestamps:
    submit_s: float | None = None
    schedule_s: float | None = None
    start_s: float | None = None
    end_s: float | None = None

    def monotone(self) -> bool:
        seen = [t for t in (self.submit_s, self.schedule_s, self.start_s, self.end_s) if t is not None]
        return all(a <= b for a, b in zip(seen, seen[1:]))

    def to_json_dict(self) -> dict:
        return {
            "submit_s": self.submit_s,
            "schedule_s": self.schedule_s,
            "start_s": self.start_s,
            "end_s": self.end_s,
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "Timestamps":
        return cls(**d)


@dataclass(frozen=True)
class TaskRecord:
    description: TaskDescription
    state: TaskState = TaskState.NEW
    assigned_pilot: str | None = None
    timestamps: Timestamps = field(default_factory=Timestamps)
    attempt: int = 0
    result: TaskResult | None = None
    error: str | None = None

    @property
    def task_id(self) -> str:
        return self.description.task_id

    @property
    def terminal(self) -> bool:
        return self.state in TERMINAL_STATES

    def to_json_dict(self) -> dict:
        return {
            "description": self.description.to_json_dict(),
            "state": self.state.value,
            "assigned_pilot": self.assigned_pilot,
            "timestamps": self.timestamps.to_json_dict(),
            "attempt": self.attempt,
            "result": self.result.to_json_dict() if self.result else None,
            "error": self.error,
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "TaskRecord":
        raw_result = d.get("result")
        return cls(
            description=TaskDescription.from_json_dict(d["description"]),
            state=TaskState(d["state"]),
            assigned_pilot=d.get("assigned_pilot"),
            timestamps=Timestamps.from_json_dict(d["timestamps"]),
            attempt=int(d["attempt"]),
            result=TaskResult.from_json_dict(raw_result) if raw_result else None,
            error=d.get("error"),
        )


def new_record(desc: TaskDescription, at: float) -> TaskRecord:
    return TaskRecord(description=desc, timestamps=Timestamps(submit_s=at))


def transition(
    record: TaskRecord,
    event: str,
    at: float,
    *,
    pilot: str | None = None,
    result: TaskResult | None = None,
    error: str | None = None,
) -> TaskRecord:
    """Pure lifecycle step; returns a new record or raises IllegalTransition."""
    state = record.state
    ts = record.timestamps

    if event == "schedule":
        if state is not TaskState.NEW:
            raise IllegalTransition(f"cannot schedule from {state.value}")
        if not pilot:
            raise ValidationError("schedule requires a pilot name")
        return replace(
            record,
            state=TaskState.SCHEDULED,
            assigned_pilot=pilot,
            timestamps=replace(ts, schedule_s=at),
        )

    if event == "start":
        if state is not TaskState.SCHEDULED:
            raise IllegalTransition(f"cannot start from {state.value}")
        return replace(record, state=TaskState.RUNNING, timestamps=replace(ts, start_s=at))

    if event == "complete":
        if state is not TaskState.RUNNING:
            raise IllegalTransition(f"cannot complete from {state.value}")
        return replace(
            record,
            state=TaskState.DONE,
            result=result if result is not None else TaskResult(),
            timestamps=replace(ts, end_s=at),
        )

    if event == "fail":
        if error is None:
            raise ValidationError("fail requires an error message")
        if state is TaskState.NEW:
            # Scheduling failures are final: retrying cannot make a pilot fit.
            return replace(
                record, state=TaskState.FAILED, error=error, timestamps=replace(ts, end_s=at)
            )
        if state in (TaskState.SCHEDULED, TaskState.RUNNING):
            if record.attempt < record.description.max_retries:
                return replace(
                    record,
                    state=TaskState.NEW,
                    assigned_pilot=None,
                    attempt=record.attempt + 1,
                    result=None,
                    error=None,
                    timestamps=Timestamps(submit_s=ts.submit_s),
                )
            return replace(
                record,
                state=TaskState.FAILED,
                attempt=record.attempt + 1,
                error=error,
                timestamps=replace(ts, end_s=at),
            )
        raise IllegalTransition(f"cannot fail from {state.value}")

    if event == "cancel":
        if state not in (TaskState.NEW, TaskState.SCHEDULED):
            raise IllegalTransition(f"cannot cancel from {state.value}")
        return replace(
            record,
            state=TaskState.CANCELED,
            assigned_pilot=None,
            timestamps=replace(ts, end_s=at),
        )

    raise ValidationError(f"unknown lifecycle event: {event!r}")


# --- serialization helpers ------------------------------------------------------

def dumps(obj) -> str:
    """Compact JSON for any domain type with a to_json_dict method."""
    return json.dumps(obj.to_json_dict(), separators=(",", ":"), sort_keys=True)
