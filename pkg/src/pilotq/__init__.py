"""Pilot-job middleware for mixed quantum/classical task workloads.

Layered like the deployment it models: resource backends grant pilot
allocations, a per-pilot agent executes tasks on bounded worker slots, and
the manager matches submitted tasks to feasible pilots. On top sit a dense
state-vector simulator with adjoint gradients, a wire-cutting workflow for
cluster-structured circuits, and the `pq` benchmark CLI.
"""

from pilotq.agent import AgentMetrics, PilotAgent, start_agent
from pilotq.backends import (
    BackendCeilings,
    PilotAllocation,
    QpuExecutionReport,
    ResourceBackend,
    make_backends,
    startup_delay,
)
from pilotq.clock import Clock, SimulatedClock, WallClock
from pilotq.cutting import (
    CutPlan,
    CutSpec,
    CutWorkflowResult,
    FragmentSpec,
    ReconstructionTerm,
    Subexperiment,
    WIRE_CUT_TERMS,
    clustered_circuit,
    find_cuts,
    fragment_values,
    generate_subexperiments,
    reconstruct,
    run_cut_workflow,
    sampling_overhead,
)
from pilotq.errors import (
    AgentStopped,
    CapacityError,
    DoubleRelease,
    DuplicatePilotName,
    DuplicateTaskId,
    IllegalTransition,
    MemoryCapExceeded,
    MissingFragmentValue,
    NoActiveSession,
    NoFeasiblePilot,
    NotCutFriendly,
    PilotQError,
    QubitCapacityExceeded,
    UnknownPilot,
    UnknownTaskId,
    UnsupportedObservable,
    ValidationError,
    WalltimeExpired,
    WidthExceeded,
    WorkerOversubscription,
)
from pilotq.events import EventLog, EventRecord, read_events, replay_task_states, replay_tallies
from pilotq.manager import CancelOutcome, PilotManager, WaitResult, sim_qubit_capacity
from pilotq.model import (
    BackendKind,
    ClassicalPayload,
    DEFAULT_QUEUE_MODELS,
    PilotDescription,
    QuantumPayload,
    QueueModel,
    TaskDescription,
    TaskKind,
    TaskRecord,
    TaskResult,
    TaskState,
    TERMINAL_STATES,
    Timestamps,
    new_record,
    transition,
)
from pilotq.qsim import (
    Circuit,
    Gate,
    PauliObservable,
    adjoint_gradient,
    bitstring,
    efficient_su2,
    expectation,
    memory_bytes,
    probabilities,
    random_circuit,
    run_circuit,
    sample,
    sel_circuit,
)
from pilotq.store import TaskStore

__version__ = "0.1.0"

__all__ = [
    "AgentMetrics",
    "AgentStopped",
    "BackendCeilings",
    "BackendKind",
    "CancelOutcome",
    "CapacityError",
    "Circuit",
    "ClassicalPayload",
    "Clock",
    "CutPlan",
    "CutSpec",
    "CutWorkflowResult",
    "DEFAULT_QUEUE_MODELS",
    "DoubleRelease",
    "DuplicatePilotName",
    "DuplicateTaskId",
    "EventLog",
    "EventRecord",
    "FragmentSpec",
    "Gate",
    "IllegalTransition",
    "MemoryCapExceeded",
    "MissingFragmentValue",
    "NoActiveSession",
    "NoFeasiblePilot",
    "NotCutFriendly",
    "PauliObservable",
    "PilotAgent",
    "PilotAllocation",
    "PilotDescription",
    "PilotManager",
    "PilotQError",
    "QpuExecutionReport",
    "QuantumPayload",
    "QubitCapacityExceeded",
    "QueueModel",
    "ReconstructionTerm",
    "ResourceBackend",
    "SimulatedClock",
    "Subexperiment",
    "TERMINAL_STATES",
    "TaskDescription",
    "TaskKind",
    "TaskRecord",
    "TaskResult",
    "TaskState",
    "TaskStore",
    "Timestamps",
    "UnknownPilot",
    "UnknownTaskId",
    "UnsupportedObservable",
    "ValidationError",
    "WaitResult",
    "WallClock",
    "WalltimeExpired",
    "WidthExceeded",
    "WIRE_CUT_TERMS",
    "WorkerOversubscription",
    "adjoint_gradient",
    "bitstring",
    "clustered_circuit",
    "efficient_su2",
    "expectation",
    "find_cuts",
    "fragment_values",
    "generate_subexperiments",
    "make_backends",
    "memory_bytes",
    "new_record",
    "probabilities",
    "random_circuit",
    "read_events",
    "reconstruct",
    "replay_task_states",
    "replay_tallies",
    "run_circuit",
    "run_cut_workflow",
    "sample",
    "sampling_overhead",
    "sel_circuit",
    "sim_qubit_capacity",
    "start_agent",
    "startup_delay",
    "transition",
]
