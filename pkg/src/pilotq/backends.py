"""Resource backends: provisioning, release, and simulated QPU execution.

Three backend kinds are modeled. `local` grants resources immediately;
`batch_sim` and `qpu_sim` sample a startup queue delay (base +- jitter,
deterministic per the pilot description's seed) before the allocation
becomes usable. Per-backend capacity ceilings are optional; exceeding one
raises CapacityError. Releasing the same allocation twice raises
DoubleRelease.

qpu_execute runs the circuit on the built-in simulator and samples counts,
and additionally models per-task QPU behaviour: a queue wait drawn from the
pilot's queue model and the configured per-task latency, both of which are
slept on the backend's clock so that wall-clock pacing matches the model.
"""

from __future__ import annotations

import threading
import time
from dataclasses import dataclass

import numpy as np

from pilotq.clock import Clock, WallClock
from pilotq.errors import (
    CapacityError,
    DoubleRelease,
    QubitCapacityExceeded,
    ValidationError,
)
from pilotq.model import (
    BackendKind,
    PilotDescription,
    validate_pilot_description,
)
from pilotq.qsim.circuit import Circuit
from pilotq.qsim.simulate import DEFAULT_MEMORY_CAP_BYTES, run_circuit, sample


@dataclass(frozen=True)
class PilotAllocation:
    pilot_name: str
    backend_kind: BackendKind
    total_cores: int
    total_gpus: int
    qpu_qubits: int
    granted_at_s: float
    expires_at_s: float

    def __post_init__(self):
        object.__setattr__(self, "backend_kind", BackendKind(self.backend_kind))

    def to_json_dict(self) -> dict:
        return {
            "pilot_name": self.pilot_name,
            "backend_kind": self.backend_kind.value,
            "total_cores": self.total_cores,
            "total_gpus": self.total_gpus,
            "qpu_qubits": self.qpu_qubits,
            "granted_at_s": self.granted_at_s,
            "expires_at_s": self.expires_at_s,
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "PilotAllocation":
        return cls(**{**d, "backend_kind": BackendKind(d["backend_kind"])})


@dataclass(frozen=True)
class QpuExecutionReport:
    counts: dict[str, int]
    queue_wait_s: float
    exec_s: float

    def to_json_dict(self) -> dict:
        return {"counts": self.counts, "queue_wait_s": self.queue_wait_s, "exec_s": self.exec_s}

    @classmethod
    def from_json_dict(cls, d: dict) -> "QpuExecutionReport":
        return cls(counts=dict(d["counts"]), queue_wait_s=d["queue_wait_s"], exec_s=d["exec_s"])


@dataclass(frozen=True)
class BackendCeilings:
    """Optional backend-wide limits on concurrently granted resources."""

    max_cores: int | None = None
    max_gpus: int | None = None
    max_pilots: int | None = None


def startup_delay(desc: PilotDescription) -> float:
    """Deterministic queue delay for this description (0 for local)."""
    if desc.backend_kind is BackendKind.LOCAL:
        return 0.0
    qm = desc.queue_model
    delay = qm.base_delay_s
    if qm.jitter_s > 0:
        rng = np.random.default_rng(desc.seed)
        delay += float(rng.uniform(-qm.jitter_s, qm.jitter_s))
    return max(0.0, delay)


class ResourceBackend:
    """One backend kind's provisioning bookkeeping. Thread-safe."""

    def __init__(
        self,
        kind: BackendKind,
        ceilings: BackendCeilings | None = None,
        *,
        clock: Clock | None = None,
        memory_cap_bytes: int = DEFAULT_MEMORY_CAP_BYTES,
    ):
        self.kind = BackendKind(kind)
        self.ceilings = ceilings or BackendCeilings()
        self.clock = clock or WallClock()
        self.memory_cap_bytes = memory_cap_bytes
        self._lock = threading.Lock()
        self._live: dict[int, PilotAllocation] = {}
        self._live_desc: dict[int, PilotDescription] = {}
        self._granted_cores = 0
        self._granted_gpus = 0

    def provision(self, desc: PilotDescription, clock: Clock | None = None) -> PilotAllocation:
        validate_pilot_description(desc)
        if desc.backend_kind is not self.kind:
            raise ValidationError(f"{self.kind.value} backend got a {desc.backend_kind.value} description")
        clock = clock or self.clock
        cores, gpus = desc.total_cores, desc.total_gpus
        with self._lock:
            c = self.ceilings
            if c.max_pilots is not None and len(self._live) + 1 > c.max_pilots:
                raise CapacityError(f"{self.kind.value}: pilot ceiling {c.max_pilots} reached")
            if c.max_cores is not None and self._granted_cores + cores > c.max_cores:
                raise CapacityError(
                    f"{self.kind.value}: core ceiling {c.max_cores} would be exceeded"
                )
            if c.max_gpus is not None and self._granted_gpus + gpus > c.max_gpus:
                raise CapacityError(f"{self.kind.value}: gpu ceiling {c.max_gpus} would be exceeded")
            granted_at = clock.now() + startup_delay(desc)
            alloc = PilotAllocation(
                pilot_name=desc.name,
                backend_kind=desc.backend_kind,
                total_cores=cores,
                total_gpus=gpus,
                qpu_qubits=desc.qpu_qubits,
                granted_at_s=granted_at,
                expires_at_s=granted_at + desc.walltime_s,
            )
            self._live[id(alloc)] = alloc
            self._live_desc[id(alloc)] = desc
            self._granted_cores += cores
            self._granted_gpus += gpus
            return alloc

    def release(self, alloc: PilotAllocation) -> None:
        with self._lock:
            if id(alloc) not in self._live:
                raise DoubleRelease(f"allocation for {alloc.pilot_name} already released")
            del self._live[id(alloc)]
            del self._live_desc[id(alloc)]
            self._granted_cores -= alloc.total_cores
            self._granted_gpus -= alloc.total_gpus

    def live_allocations(self) -> list[PilotAllocation]:
        with self._lock:
            return list(self._live.values())

    def _queue_model_for(self, alloc: PilotAllocation):
        with self._lock:
            desc = self._live_desc.get(id(alloc))
        return desc.queue_model if desc is not None else None

    def qpu_execute(
        self, circuit: Circuit, shots: int, alloc: PilotAllocation, rng_seed: int
    ) -> QpuExecutionReport:
        """Sample `shots` measurements, pacing per the pilot's queue model."""
        if self.kind is not BackendKind.QPU_SIM or alloc.backend_kind is not BackendKind.QPU_SIM:
            raise ValidationError("qpu_execute is only available on qpu_sim allocations")
        if shots < 1:
            raise ValidationError("qpu_execute needs shots >= 1")
        if circuit.num_qubits > alloc.qpu_qubits:
            raise QubitCapacityExceeded(
                f"circuit needs {circuit.num_qubits} qubits, QPU has {alloc.qpu_qubits}"
            )
        qm = self._queue_model_for(alloc)
        queue_wait = 0.0
        latency = 0.0
        if qm is not None:
            latency = qm.per_task_latency_s
            queue_wait = qm.base_delay_s
            if qm.jitter_s > 0:
                rng = np.random.default_rng(rng_seed)
                queue_wait = max(0.0, queue_wait + float(rng.uniform(-qm.jitter_s, qm.jitter_s)))
        self.clock.sleep(queue_wait)
        t0 = time.perf_counter()
        state = run_circuit(circuit, memory_cap_bytes=self.memory_cap_bytes)
        counts = sample(state, shots, rng_seed)
        sim_s = time.perf_counter() - t0
        self.clock.sleep(latency)
        return QpuExecutionReport(counts=counts, queue_wait_s=queue_wait, exec_s=latency + sim_s)


def make_backends(
    ceilings: dict[BackendKind, BackendCeilings] | None = None,
    *,
    clock: Clock | None = None,
    memory_cap_bytes: int = DEFAULT_MEMORY_CAP_BYTES,
) -> dict[BackendKind, ResourceBackend]:
    ceilings = ceilings or {}
    return {
        kind: ResourceBackend(
            kind, ceilings.get(kind), clock=clock, memory_cap_bytes=memory_cap_bytes
        )
        for kind in BackendKind
    }
