"""Benchmark drivers behind the `pq` subcommands.

Every run writes a CSV (header row, UTF-8, '.' decimal point) and a session
snapshot file that `pq status` reads back. Column names ending in `_s` or
`_ms` are wall-clock measurements and excluded from determinism guarantees;
every other column is reproducible for a fixed seed.
"""

from __future__ import annotations

import csv
import json
import statistics
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from pilotq.bench.vqc import (
    BATCH_GRADIENT_FN,
    VqcConfig,
    batch_gradient,
    evaluate,
    make_blobs,
    train_vqc,
)
from pilotq.cutting import clustered_circuit, run_cut_workflow
from pilotq.errors import NoActiveSession, ValidationError
from pilotq.events import EventLog
from pilotq.manager import PilotManager
from pilotq.model import (
    BackendKind,
    PilotDescription,
    QuantumPayload,
    QueueModel,
    TaskDescription,
    TaskKind,
    TaskState,
)
from pilotq.qsim.circuit import PauliObservable, random_circuit, sel_circuit
from pilotq.qsim.gradients import adjoint_gradient
from pilotq.qsim.simulate import (
    DEFAULT_MEMORY_CAP_BYTES,
    expectation,
    memory_bytes,
    run_circuit,
)

SESSION_FILE = ".pq-session.json"
TIMING_SUFFIXES = ("_s", "_ms")


@dataclass(frozen=True)
class RunMetrics:
    """Aggregate outcome of one benchmark run."""

    workload: str
    params: dict[str, str]
    phase_s: dict[str, float]
    tasks_total: int
    tasks_done: int
    tasks_failed: int
    tasks_canceled: int = 0

    def __post_init__(self):
        if self.tasks_done + self.tasks_failed + self.tasks_canceled != self.tasks_total:
            raise ValidationError("task tallies must add up to tasks_total")

    @property
    def total_wall_s(self) -> float:
        return sum(self.phase_s.values())

    @property
    def throughput_tasks_per_s(self) -> float:
        wall = self.total_wall_s
        return self.tasks_done / wall if wall > 0 else 0.0

    def to_json_dict(self) -> dict:
        return {
            "workload": self.workload,
            "params": self.params,
            "phase_s": self.phase_s,
            "tasks_total": self.tasks_total,
            "tasks_done": self.tasks_done,
            "tasks_failed": self.tasks_failed,
            "tasks_canceled": self.tasks_canceled,
            "throughput_tasks_per_s": self.throughput_tasks_per_s,
        }


# --- CSV and session helpers ---------------------------------------------------


def write_csv(path, fieldnames, rows) -> None:
    p = Path(path)
    if p.parent != Path(""):
        p.parent.mkdir(parents=True, exist_ok=True)
    with open(p, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(fieldnames))
        writer.writeheader()
        for row in rows:
            writer.writerow({k: ("" if v is None else v) for k, v in row.items()})


def read_csv(path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def nontiming_columns(rows: list[dict]) -> list[dict]:
    """Rows with wall-clock columns removed; the determinism comparison view."""
    return [
        {k: v for k, v in row.items() if not k.endswith(TIMING_SUFFIXES)} for row in rows
    ]


def write_session(payload: dict, session_path=SESSION_FILE) -> None:
    with open(session_path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_session(session_path=SESSION_FILE) -> dict:
    p = Path(session_path)
    if not p.is_file():
        raise NoActiveSession(f"no session file at {p}; run a benchmark first")
    with open(p, encoding="utf-8") as fh:
        return json.load(fh)


def _session_payload(command, out_path, log_path, seed, snapshot, metrics, summary=None):
    return {
        "command": command,
        "finished_at_s": time.time(),
        "out_csv": str(out_path) if out_path else None,
        "event_log": str(log_path) if log_path else None,
        "seed": seed,
        "snapshot": snapshot,
        "metrics": metrics.to_json_dict(),
        "summary": summary or {},
    }


def _local_pilot(name, cores, latency_s=0.0, seed=0) -> PilotDescription:
    return PilotDescription(
        name=name,
        backend_kind=BackendKind.LOCAL,
        cores_per_node=cores,
        queue_model=QueueModel(per_task_latency_s=latency_s),
        seed=seed,
    )


# --- throughput ---------------------------------------------------------------------


def cmd_throughput(
    tasks_list,
    pilots: int = 1,
    workers: int = 8,
    out_path="throughput.csv",
    log_path=None,
    seed: int = 0,
    session_path=SESSION_FILE,
) -> RunMetrics:
    """Zero-compute task storm; one CSV row per task count.

    runtime_incl_s counts pilot startup, runtime_excl_s only the
    submit-to-done window that throughput is computed from.
    """
    counts = [int(t) for t in tasks_list]
    if not counts or any(t < 1 for t in counts):
        raise ValidationError("every task count must be >= 1")
    if pilots < 1 or workers < 1:
        raise ValidationError("pilots and workers must be >= 1")

    rows = []
    total_done = total_failed = 0
    startup_total = execute_total = 0.0
    snapshot = None
    log = EventLog(path=log_path)
    try:
        for count in counts:
            manager = PilotManager(log=log)
            t0 = time.perf_counter()
            for p in range(pilots):
                manager.create_pilot(
                    _local_pilot(f"tp{count}-{p}", cores=workers, seed=seed), workers=workers
                )
            manager.wait_pilots_ready()
            t_ready = time.perf_counter()
            ids = [
                manager.submit_task(
                    TaskDescription(task_id=f"t{count}-{i}", kind=TaskKind.ZERO_COMPUTE)
                )
                for i in range(count)
            ]
            manager.wait(ids)
            t_end = time.perf_counter()

            records = [manager.task(tid) for tid in ids]
            done = sum(r.state is TaskState.DONE for r in records)
            failed = sum(r.state is TaskState.FAILED for r in records)
            dispatch_ms = sorted(
                (r.timestamps.start_s - r.timestamps.schedule_s) * 1000.0
                for r in records
                if r.timestamps.start_s is not None
            )
            execute_s = t_end - t_ready
            rows.append(
                {
                    "tasks": count,
                    "pilots": pilots,
                    "workers": workers,
                    "done": done,
                    "failed": failed,
                    "runtime_incl_s": t_end - t0,
                    "runtime_excl_s": execute_s,
                    "tasks_per_s": done / execute_s if execute_s > 0 else 0.0,
                    "median_dispatch_ms": statistics.median(dispatch_ms) if dispatch_ms else None,
                    "p99_dispatch_ms": dispatch_ms[int(0.99 * (len(dispatch_ms) - 1))]
                    if dispatch_ms
                    else None,
                }
            )
            total_done += done
            total_failed += failed
            startup_total += t_ready - t0
            execute_total += execute_s
            snapshot = manager.status_snapshot()
            manager.shutdown()
    finally:
        log.close()

    write_csv(out_path, rows[0].keys(), rows)
    metrics = RunMetrics(
        workload="throughput",
        params={"tasks": ",".join(map(str, counts)), "pilots": str(pilots), "workers": str(workers)},
        phase_s={"startup": startup_total, "execute": execute_total},
        tasks_total=sum(counts),
        tasks_done=total_done,
        tasks_failed=total_failed,
    )
    write_session(
        _session_payload("throughput", out_path, log_path, seed, snapshot, metrics),
        session_path,
    )
    return metrics


# --- circuit-execution scaling ----------------------------------------------------------


def _circuit_task_seed(seed: int, num_qubits: int, index: int) -> int:
    return int(np.random.SeedSequence([seed, num_qubits, index]).generate_state(1)[0])


def cmd_circuits(
    qubits_list,
    count: int = 16,
    backends=("local", "qpu_sim"),
    depth: int = 10,
    shots: int = 256,
    qpu_latency_s: float = 0.2,
    workers: int = 4,
    out_path="circuits.csv",
    log_path=None,
    seed: int = 0,
    session_path=SESSION_FILE,
) -> RunMetrics:
    """Random-circuit execution times per backend and qubit count.

    The local backend simulates exactly (exponential cost in qubits); the
    qpu_sim backend samples shots behind a fixed per-task latency, so its
    mean stays flat. mean_s/std_s aggregate the per-task backend execution
    times of DONE tasks; std_s is empty when count == 1.
    """
    sizes = [int(n) for n in qubits_list]
    if not sizes or any(n < 1 for n in sizes):
        raise ValidationError("every qubit count must be >= 1")
    if count < 1:
        raise ValidationError("count must be >= 1")
    bad = set(backends) - {"local", "qpu_sim"}
    if bad:
        raise ValidationError(f"unknown backends: {sorted(bad)}")

    rows = []
    total = done_total = failed_total = 0
    execute_total = 0.0
    snapshot = None
    log = EventLog(path=log_path)
    try:
        for backend in backends:
            manager = PilotManager(log=log)
            if backend == "local":
                manager.create_pilot(
                    _local_pilot(f"sim-{backend}", cores=workers, seed=seed), workers=workers
                )
            else:
                manager.create_pilot(
                    PilotDescription(
                        name=f"sim-{backend}",
                        backend_kind=BackendKind.QPU_SIM,
                        cores_per_node=workers,
                        qpu_qubits=max(sizes),
                        queue_model=QueueModel(per_task_latency_s=qpu_latency_s),
                        seed=seed,
                    ),
                    workers=workers,
                )
            manager.wait_pilots_ready()
            t0 = time.perf_counter()
            ids_by_size: dict[int, list[str]] = {}
            for n in sizes:
                ids = []
                for i in range(count):
                    circuit = random_circuit(n, depth, _circuit_task_seed(seed, n, i))
                    if backend == "local":
                        payload = QuantumPayload(
                            circuit=circuit,
                            shots=0,
                            observable=PauliObservable.single(n, {0: "Z"}),
                        )
                    else:
                        payload = QuantumPayload(circuit=circuit, shots=shots)
                    ids.append(
                        manager.submit_task(
                            TaskDescription(
                                task_id=f"{backend}-q{n}-{i}",
                                kind=TaskKind.QUANTUM_CIRCUIT,
                                payload=payload,
                                requires_qubits=n,
                            )
                        )
                    )
                ids_by_size[n] = ids
            all_ids = [tid for ids in ids_by_size.values() for tid in ids]
            manager.wait(all_ids)
            execute_total += time.perf_counter() - t0

            for n in sizes:
                records = [manager.task(tid) for tid in ids_by_size[n]]
                exec_times = [
                    r.result.exec_s
                    for r in records
                    if r.state is TaskState.DONE and r.result is not None
                ]
                failed = sum(r.state is TaskState.FAILED for r in records)
                rows.append(
                    {
                        "backend": backend,
                        "qubits": n,
                        "tasks": count,
                        "failed": failed,
                        "depth": depth,
                        "shots": shots if backend == "qpu_sim" else 0,
                        "mean_s": statistics.fmean(exec_times) if exec_times else None,
                        "std_s": statistics.stdev(exec_times) if len(exec_times) > 1 else None,
                    }
                )
                total += count
                done_total += len(exec_times)
                failed_total += failed
            snapshot = manager.status_snapshot()
            manager.shutdown()
    finally:
        log.close()

    write_csv(out_path, rows[0].keys(), rows)
    metrics = RunMetrics(
        workload="circuits",
        params={
            "qubits": ",".join(map(str, sizes)),
            "count": str(count),
            "backends": ",".join(backends),
            "depth": str(depth),
        },
        phase_s={"execute": execute_total},
        tasks_total=total,
        tasks_done=done_total,
        tasks_failed=failed_total,
    )
    write_session(
        _session_payload("circuits", out_path, log_path, seed, snapshot, metrics),
        session_path,
    )
    return metrics


# --- gradient benchmark ------------------------------------------------------------------


def cmd_gradients(
    qubits_list,
    layers: int = 2,
    out_path="gradients.csv",
    seed: int = 0,
    fd_check: bool = True,
    memory_cap_bytes: int = DEFAULT_MEMORY_CAP_BYTES,
    session_path=SESSION_FILE,
) -> RunMetrics:
    """Expectation-only vs adjoint-gradient timing for random SEL circuits.

    Rows whose state vector fits but whose three gradient vectors do not are
    marked status=grad:oom with the gradient columns empty; rows that cannot
    even hold one state are status=oom. grad_fd_max_rel_err is the largest
    |adjoint - central_fd| scaled by the largest |central_fd| component.
    """
    sizes = [int(n) for n in qubits_list]
    if not sizes or any(n < 1 for n in sizes):
        raise ValidationError("every qubit count must be >= 1")
    if layers < 1:
        raise ValidationError("layers must be >= 1")

    rng = np.random.default_rng(seed)
    rows = []
    wall_start = time.perf_counter()
    for n in sizes:
        num_params = 3 * n * layers
        if memory_bytes(n) >= memory_cap_bytes:
            rows.append(
                {
                    "n": n,
                    "num_params": num_params,
                    "status": "oom",
                    "expect_s": None,
                    "grad_s": None,
                    "grad_fd_max_rel_err": None,
                }
            )
            continue
        params = rng.uniform(0.0, 2.0 * np.pi, num_params)
        circuit = sel_circuit(n, layers, params)
        observable = PauliObservable.single(n, {0: "Z"})

        t0 = time.perf_counter()
        state = run_circuit(circuit, memory_cap_bytes=memory_cap_bytes)
        expectation(state, observable)
        expect_s = time.perf_counter() - t0

        if 3 * memory_bytes(n) >= memory_cap_bytes:
            rows.append(
                {
                    "n": n,
                    "num_params": num_params,
                    "status": "grad:oom",
                    "expect_s": expect_s,
                    "grad_s": None,
                    "grad_fd_max_rel_err": None,
                }
            )
            continue

        t1 = time.perf_counter()
        grad = adjoint_gradient(circuit, observable, memory_cap_bytes=memory_cap_bytes)
        grad_s = time.perf_counter() - t1

        rel_err = None
        if fd_check:
            fd = _central_fd(circuit, observable, params, memory_cap_bytes)
            scale = max(float(np.max(np.abs(fd))), 1e-12)
            rel_err = float(np.max(np.abs(grad - fd)) / scale)
        rows.append(
            {
                "n": n,
                "num_params": num_params,
                "status": "ok",
                "expect_s": expect_s,
                "grad_s": grad_s,
                "grad_fd_max_rel_err": rel_err,
            }
        )

    write_csv(out_path, rows[0].keys(), rows)
    metrics = RunMetrics(
        workload="gradients",
        params={"qubits": ",".join(map(str, sizes)), "layers": str(layers)},
        phase_s={"execute": time.perf_counter() - wall_start},
        tasks_total=0,
        tasks_done=0,
        tasks_failed=0,
    )
    write_session(
        _session_payload(
            "gradients", out_path, None, seed, None, metrics,
            summary={"rows": len(rows)},
        ),
        session_path,
    )
    return metrics


def _central_fd(circuit, observable, params, memory_cap_bytes) -> np.ndarray:
    h = 1e-5
    out = np.zeros(len(params))
    for i in range(len(params)):
        shift = np.zeros(len(params))
        shift[i] = h
        plus = expectation(
            run_circuit(circuit.bind(params + shift), memory_cap_bytes=memory_cap_bytes),
            observable,
        )
        minus = expectation(
            run_circuit(circuit.bind(params - shift), memory_cap_bytes=memory_cap_bytes),
            observable,
        )
        out[i] = (plus - minus) / (2.0 * h)
    return out


# --- cutting ---------------------------------------------------------------------------


def cmd_cut(
    cluster_sizes,
    reps: int = 1,
    max_width: int | None = None,
    shots: int = 0,
    workers_list=(1, 4),
    task_latency_s: float = 0.1,
    out_path="cut.csv",
    log_path=None,
    seed: int = 0,
    session_path=SESSION_FILE,
) -> RunMetrics:
    """Cut workflow per worker count, next to an uncut full-simulation baseline.

    The observable is Z on the first and last qubit. A single cluster has
    nothing to cut and yields only the baseline row. Pilot per-task latency
    stands in for the per-fragment backend cost that makes distributing
    subexperiments worthwhile.
    """
    sizes = [int(s) for s in cluster_sizes]
    if not sizes or any(s < 1 for s in sizes):
        raise ValidationError("cluster sizes must be >= 1")
    workers_list = [int(w) for w in workers_list]
    if any(w < 1 for w in workers_list):
        raise ValidationError("worker counts must be >= 1")
    if shots < 0:
        raise ValidationError("shots must be >= 0")

    n = sum(sizes)
    circuit = clustered_circuit(sizes, reps=reps, seed=seed)
    observable = PauliObservable.single(n, {0: "Z", n - 1: "Z"})
    config = ",".join(map(str, sizes))
    if max_width is None:
        max_width = max(sizes) + 1

    t0 = time.perf_counter()
    oracle_value = expectation(run_circuit(circuit), observable)
    baseline_s = time.perf_counter() - t0
    rows = [
        {
            "config": config,
            "reps": reps,
            "shots": shots,
            "workers": 0,
            "num_cuts": 0,
            "subexperiments": 1,
            "sampling_overhead": 1.0,
            "value": oracle_value,
            "oracle_value": oracle_value,
            "abs_error": 0.0,
            "plan_s": None,
            "exec_s": baseline_s,
            "reconstruct_s": None,
            "total_s": baseline_s,
        }
    ]

    workloads_total = workloads_done = workloads_failed = 0
    execute_total = baseline_s
    snapshot = None
    log = EventLog(path=log_path)
    try:
        if len(sizes) >= 2:
            manager = PilotManager(log=log)
            for w in workers_list:
                pilot = f"cut-w{w}"
                manager.create_pilot(
                    _local_pilot(pilot, cores=w, latency_s=task_latency_s, seed=seed),
                    workers=w,
                )
                manager.wait_pilots_ready()
                result = run_cut_workflow(
                    manager,
                    circuit,
                    observable,
                    max_width=max_width,
                    shots=shots,
                    oracle=True,
                    task_prefix=f"w{w}",
                )
                rows.append(
                    {
                        "config": config,
                        "reps": reps,
                        "shots": shots,
                        "workers": w,
                        "num_cuts": result.num_cuts,
                        "subexperiments": result.num_subexperiments,
                        "sampling_overhead": result.sampling_overhead,
                        "value": result.value,
                        "oracle_value": result.oracle_value,
                        "abs_error": result.abs_error,
                        "plan_s": result.plan_s,
                        "exec_s": result.exec_s,
                        "reconstruct_s": result.reconstruct_s,
                        "total_s": result.plan_s + result.exec_s + result.reconstruct_s,
                    }
                )
                workloads_total += result.num_subexperiments
                workloads_done += result.num_subexperiments
                execute_total += result.exec_s
                manager.remove_pilot(pilot)
            snapshot = manager.status_snapshot()
            manager.shutdown()
    finally:
        log.close()

    write_csv(out_path, rows[0].keys(), rows)
    metrics = RunMetrics(
        workload="cut",
        params={
            "config": config,
            "reps": str(reps),
            "shots": str(shots),
            "workers": ",".join(map(str, workers_list)),
        },
        phase_s={"execute": execute_total},
        tasks_total=workloads_total,
        tasks_done=workloads_done,
        tasks_failed=workloads_failed,
    )
    write_session(
        _session_payload("cut", out_path, log_path, seed, snapshot, metrics),
        session_path,
    )
    return metrics


# --- vqc -------------------------------------------------------------------------------


def cmd_vqc(
    config: VqcConfig,
    workers: int = 4,
    out_path="vqc.csv",
    log_path=None,
    session_path=SESSION_FILE,
) -> RunMetrics:
    """Train the blob classifier through the manager; one CSV row per epoch."""
    fieldnames = ["epoch", "loss", "train_accuracy", "grad_norm", "epoch_s"]
    rows = []
    log = EventLog(path=log_path)
    try:
        manager = PilotManager(log=log, functions={BATCH_GRADIENT_FN: batch_gradient})
        manager.create_pilot(
            _local_pilot("vqc", cores=workers, seed=config.seed), workers=workers
        )
        manager.wait_pilots_ready()
        t0 = time.perf_counter()
        run = train_vqc(
            config,
            manager,
            on_epoch=lambda s: rows.append(
                {
                    "epoch": s.epoch,
                    "loss": s.loss,
                    "train_accuracy": s.accuracy,
                    "grad_norm": s.grad_norm,
                    "epoch_s": s.epoch_s,
                }
            ),
        )
        train_s = time.perf_counter() - t0
        summary = {
            "initial_loss": run.initial_loss,
            "final_loss": run.final_loss,
            "final_accuracy": run.final_accuracy,
            "epochs": config.epochs,
        }
        if config.epochs == 0:
            features, labels = make_blobs(config.samples, config.n_qubits, config.seed)
            rng = np.random.default_rng(config.seed + 1)
            params = rng.uniform(-0.1, 0.1, config.num_params)
            loss, acc = evaluate(config, params, features, labels)
            summary.update({"untrained_loss": loss, "untrained_accuracy": acc})
        snapshot = manager.status_snapshot()
        manager.shutdown()
    finally:
        log.close()

    write_csv(out_path, fieldnames, rows)
    tallies = snapshot.get("tasks", {})
    done = int(tallies.get(TaskState.DONE.value, 0))
    failed = int(tallies.get(TaskState.FAILED.value, 0))
    metrics = RunMetrics(
        workload="vqc",
        params={k: str(v) for k, v in config.to_json_dict().items()},
        phase_s={"train": train_s},
        tasks_total=done + failed,
        tasks_done=done,
        tasks_failed=failed,
    )
    write_session(
        _session_payload(
            "vqc", out_path, log_path, config.seed, snapshot, metrics, summary=summary
        ),
        session_path,
    )
    return metrics


# --- status ------------------------------------------------------------------------------


def cmd_status(manager: PilotManager | None = None, session_path=SESSION_FILE) -> dict:
    """Live snapshot when a manager is in-process, else the last session file."""
    if manager is not None:
        snap = manager.status_snapshot()
        snap["source"] = "live"
        return snap
    payload = load_session(session_path)
    payload["source"] = str(session_path)
    return payload
