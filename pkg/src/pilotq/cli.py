"""`pq`: the benchmark command line.

Subcommands: throughput, circuits, gradients, cut, vqc, status. Common
flags: --out (CSV path), --log (JSONL event log), --config (JSON file
supplying defaults for unset flags), --seed. Precedence: explicit flag >
config file > built-in default. Exit codes: 0 success, 1 validation error,
2 runtime failure.
"""

from __future__ import annotations

import json
import sys

import click

from pilotq.bench.runners import (
    SESSION_FILE,
    cmd_circuits,
    cmd_cut,
    cmd_gradients,
    cmd_status,
    cmd_throughput,
    cmd_vqc,
)
from pilotq.bench.vqc import VqcConfig
from pilotq.errors import PilotQError, ValidationError


def parse_int_list(spec) -> list[int]:
    """Accept 7, "7", "1,4,8", or inclusive ranges "2:16" / "2:16:2"."""
    if isinstance(spec, int):
        return [spec]
    if isinstance(spec, (list, tuple)):
        return [int(x) for x in spec]
    text = str(spec).strip()
    if ":" in text:
        parts = [int(p) for p in text.split(":")]
        if len(parts) == 2:
            start, stop, step = parts[0], parts[1], 1
        elif len(parts) == 3:
            start, stop, step = parts
        else:
            raise ValidationError(f"bad range: {text!r} (use start:stop[:step])")
        if step < 1 or stop < start:
            raise ValidationError(f"bad range: {text!r}")
        return list(range(start, stop + 1, step))
    try:
        return [int(p) for p in text.split(",") if p.strip() != ""]
    except ValueError as exc:
        raise ValidationError(f"bad integer list: {text!r}") from exc


def _load_config(path) -> dict:
    if path is None:
        return {}
    try:
        with open(path, encoding="utf-8") as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ValidationError(f"cannot read config file {path}: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ValidationError("config file must hold a JSON object")
    return cfg


def _cfg(config: dict, key: str, flag, default):
    if flag is not None:
        return flag
    if key in config:
        return config[key]
    return default


def common_options(fn):
    fn = click.option("--out", type=click.Path(dir_okay=False), default=None,
                      help="CSV output path.")(fn)
    fn = click.option("--log", "log_path", type=click.Path(dir_okay=False), default=None,
                      help="JSONL event-log path.")(fn)
    fn = click.option("--config", "config_path", type=click.Path(exists=False), default=None,
                      help="JSON file with defaults for unset flags.")(fn)
    fn = click.option("--seed", type=int, default=None, help="Deterministic seed.")(fn)
    return fn


@click.group(name="pq")
def cli():
    """Pilot-job quantum benchmark harness."""


@cli.command("throughput")
@common_options
@click.option("--tasks", default=None, help="Task counts, e.g. '256,1024,8192'.")
@click.option("--pilots", type=int, default=None, help="Local pilots to create.")
@click.option("--workers", type=int, default=None, help="Workers per pilot.")
def throughput_command(out, log_path, config_path, seed, tasks, pilots, workers):
    """Zero-compute task storm measuring middleware overhead."""
    cfg = _load_config(config_path)
    metrics = cmd_throughput(
        tasks_list=parse_int_list(_cfg(cfg, "tasks", tasks, "256,1024,8192")),
        pilots=int(_cfg(cfg, "pilots", pilots, 1)),
        workers=int(_cfg(cfg, "workers", workers, 8)),
        out_path=_cfg(cfg, "out", out, "throughput.csv"),
        log_path=_cfg(cfg, "log", log_path, None),
        seed=int(_cfg(cfg, "seed", seed, 0)),
    )
    click.echo(
        f"throughput: {metrics.tasks_done}/{metrics.tasks_total} tasks done, "
        f"{metrics.throughput_tasks_per_s:.1f} tasks/s overall"
    )


@cli.command("circuits")
@common_options
@click.option("--qubits", default=None, help="Qubit counts, e.g. '2:16:2'.")
@click.option("--count", type=int, default=None, help="Circuits per qubit count.")
@click.option("--backends", default=None, help="Comma list from {local,qpu_sim}.")
@click.option("--depth", type=int, default=None, help="Random-circuit layer count.")
@click.option("--shots", type=int, default=None, help="Shots per qpu_sim task.")
@click.option("--qpu-latency", type=float, default=None, help="qpu_sim per-task latency (s).")
@click.option("--workers", type=int, default=None, help="Workers per pilot.")
def circuits_command(
    out, log_path, config_path, seed, qubits, count, backends, depth, shots, qpu_latency, workers
):
    """Random-circuit execution scaling across backends."""
    cfg = _load_config(config_path)
    backends_val = _cfg(cfg, "backends", backends, "local,qpu_sim")
    if isinstance(backends_val, str):
        backends_val = [b.strip() for b in backends_val.split(",") if b.strip()]
    metrics = cmd_circuits(
        qubits_list=parse_int_list(_cfg(cfg, "qubits", qubits, "2:16:2")),
        count=int(_cfg(cfg, "count", count, 16)),
        backends=tuple(backends_val),
        depth=int(_cfg(cfg, "depth", depth, 10)),
        shots=int(_cfg(cfg, "shots", shots, 256)),
        qpu_latency_s=float(_cfg(cfg, "qpu_latency", qpu_latency, 0.2)),
        workers=int(_cfg(cfg, "workers", workers, 4)),
        out_path=_cfg(cfg, "out", out, "circuits.csv"),
        log_path=_cfg(cfg, "log", log_path, None),
        seed=int(_cfg(cfg, "seed", seed, 0)),
    )
    click.echo(
        f"circuits: {metrics.tasks_done} done, {metrics.tasks_failed} failed "
        f"across {metrics.params['backends']}"
    )


@cli.command("gradients")
@common_options
@click.option("--qubits", default=None, help="Qubit counts, e.g. '2:8'.")
@click.option("--layers", type=int, default=None, help="SEL layers.")
@click.option("--fd/--no-fd", "fd_check", default=None,
              help="Check the adjoint result against central differences.")
def gradients_command(out, log_path, config_path, seed, qubits, layers, fd_check):
    """Adjoint-gradient timing and finite-difference verification."""
    del log_path  # runs in-process; no event log
    cfg = _load_config(config_path)
    metrics = cmd_gradients(
        qubits_list=parse_int_list(_cfg(cfg, "qubits", qubits, "2:8")),
        layers=int(_cfg(cfg, "layers", layers, 2)),
        out_path=_cfg(cfg, "out", out, "gradients.csv"),
        seed=int(_cfg(cfg, "seed", seed, 0)),
        fd_check=bool(_cfg(cfg, "fd", fd_check, True)),
    )
    click.echo(f"gradients: wrote rows for qubits {metrics.params['qubits']}")


@cli.command("cut")
@common_options
@click.option("--sizes", default=None, help="Cluster sizes, e.g. '6,6'.")
@click.option("--reps", type=int, default=None, help="Block repetitions per cluster.")
@click.option("--max-width", type=int, default=None, help="Widest allowed fragment.")
@click.option("--shots", type=int, default=None, help="0 = exact fragments.")
@click.option("--workers", default=None, help="Worker counts to sweep, e.g. '1,4'.")
@click.option("--task-latency", type=float, default=None, help="Pilot per-task latency (s).")
def cut_command(
    out, log_path, config_path, seed, sizes, reps, max_width, shots, workers, task_latency
):
    """Cut a clustered circuit and reconstruct the observable."""
    cfg = _load_config(config_path)
    metrics = cmd_cut(
        cluster_sizes=parse_int_list(_cfg(cfg, "sizes", sizes, "6,6")),
        reps=int(_cfg(cfg, "reps", reps, 1)),
        max_width=_cfg(cfg, "max_width", max_width, None),
        shots=int(_cfg(cfg, "shots", shots, 0)),
        workers_list=parse_int_list(_cfg(cfg, "workers", workers, "1,4")),
        task_latency_s=float(_cfg(cfg, "task_latency", task_latency, 0.1)),
        out_path=_cfg(cfg, "out", out, "cut.csv"),
        log_path=_cfg(cfg, "log", log_path, None),
        seed=int(_cfg(cfg, "seed", seed, 0)),
    )
    click.echo(f"cut: config [{metrics.params['config']}], "
               f"{metrics.tasks_done} subexperiments executed")


@cli.command("vqc")
@common_options
@click.option("--qubits", type=int, default=None, help="Feature/qubit count.")
@click.option("--layers", type=int, default=None, help="Ansatz layers.")
@click.option("--samples", type=int, default=None, help="Dataset size.")
@click.option("--epochs", type=int, default=None)
@click.option("--batch-size", type=int, default=None)
@click.option("--lr", type=float, default=None, help="Learning rate.")
@click.option("--optimizer", type=click.Choice(["gd", "momentum"]), default=None)
@click.option("--workers", type=int, default=None, help="Workers on the pilot.")
def vqc_command(
    out, log_path, config_path, seed, qubits, layers, samples, epochs, batch_size, lr,
    optimizer, workers,
):
    """Train the variational classifier on synthetic blobs."""
    cfg = _load_config(config_path)
    config = VqcConfig(
        n_qubits=int(_cfg(cfg, "qubits", qubits, 4)),
        layers=int(_cfg(cfg, "layers", layers, 2)),
        samples=int(_cfg(cfg, "samples", samples, 200)),
        seed=int(_cfg(cfg, "seed", seed, 7)),
        epochs=int(_cfg(cfg, "epochs", epochs, 50)),
        batch_size=int(_cfg(cfg, "batch_size", batch_size, 25)),
        learning_rate=float(_cfg(cfg, "lr", lr, 0.1)),
        optimizer=_cfg(cfg, "optimizer", optimizer, "gd"),
    )
    metrics = cmd_vqc(
        config,
        workers=int(_cfg(cfg, "workers", workers, 4)),
        out_path=_cfg(cfg, "out", out, "vqc.csv"),
        log_path=_cfg(cfg, "log", log_path, None),
    )
    click.echo(
        f"vqc: {config.epochs} epochs, {metrics.tasks_done} gradient tasks done"
    )


@cli.command("status")
@click.option("--session", "session_path", type=click.Path(), default=SESSION_FILE,
              help="Session file written by the last benchmark run.")
def status_command(session_path):
    """Print the last run's pilots, queues, and task tallies as JSON."""
    click.echo(json.dumps(cmd_status(session_path=session_path), indent=2, sort_keys=True))


def main(argv=None) -> int:
    try:
        cli.main(args=argv, standalone_mode=False)
    except click.exceptions.Exit as exc:
        sys.exit(exc.exit_code)
    except click.Abort:
        sys.exit(130)
    except click.UsageError as exc:
        click.echo(f"error: {exc.format_message()}", err=True)
        sys.exit(1)
    except ValidationError as exc:
        click.echo(f"validation error: {exc}", err=True)
        sys.exit(1)
    except PilotQError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(2)
    except OSError as exc:
        click.echo(f"io error: {exc}", err=True)
        sys.exit(2)
    return 0


if __name__ == "__main__":
    sys.exit(main())
