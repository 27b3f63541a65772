"""Dense state-vector execution: run, measure, sample.

States are numpy complex128 arrays of length 2**n in little-endian order
(bit q of the flat index = qubit q). A state vector costs 16 * 2**n bytes;
runs are refused when that does not fit strictly under the memory cap.
"""

from __future__ import annotations

import cmath
import math

import numpy as np

from pilotq.errors import MemoryCapExceeded, ValidationError
from pilotq.qsim.circuit import Circuit, PauliObservable

StateVector = np.ndarray

DEFAULT_MEMORY_CAP_BYTES = 2 * 1024**3  # 2 GiB: up to 26 qubits single-state

_SQ2 = 1.0 / math.sqrt(2.0)

_FIXED_1Q = {
    "H": np.array([[_SQ2, _SQ2], [_SQ2, -_SQ2]], dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
    "S": np.array([[1, 0], [0, 1j]], dtype=complex),
    "T": np.array([[1, 0], [0, cmath.exp(1j * math.pi / 4)]], dtype=complex),
}

_FIXED_2Q = {
    # Matrix basis ordering is |q_first q_second> with q_first the high bit.
    "CNOT": np.array(
        [[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex
    ),
    "CZ": np.diag([1, 1, 1, -1]).astype(complex),
}


def rotation_matrix(name: str, angle: float) -> np.ndarray:
    c, s = math.cos(angle / 2.0), math.sin(angle / 2.0)
    if name == "RX":
        return np.array([[c, -1j * s], [-1j * s, c]], dtype=complex)
    if name == "RY":
        return np.array([[c, -s], [s, c]], dtype=complex)
    if name == "RZ":
        return np.array([[cmath.exp(-0.5j * angle), 0], [0, cmath.exp(0.5j * angle)]], dtype=complex)
    raise ValidationError(f"not a rotation gate: {name}")


def gate_matrix(name: str, param: float | None = None) -> np.ndarray:
    if name in _FIXED_1Q:
        return _FIXED_1Q[name]
    if name in _FIXED_2Q:
        return _FIXED_2Q[name]
    return rotation_matrix(name, param)


def memory_bytes(num_qubits: int) -> int:
    """Bytes needed for one dense state of num_qubits qubits."""
    return 16 * (2**num_qubits)


def check_memory_cap(num_qubits: int, cap_bytes: int, states: int = 1) -> None:
    need = states * memory_bytes(num_qubits)
    if need >= cap_bytes:
        raise MemoryCapExceeded(
            f"{states} state(s) of {num_qubits} qubits need {need} bytes; cap is {cap_bytes}"
        )


def apply_1q(state: StateVector, mat: np.ndarray, qubit: int, num_qubits: int) -> StateVector:
    # Little-endian flat index means qubit q lives on axis (n-1-q) after reshape.
    psi = state.reshape([2] * num_qubits)
    psi = np.moveaxis(psi, num_qubits - 1 - qubit, 0)
    out = (mat @ psi.reshape(2, -1)).reshape(psi.shape)
    return np.moveaxis(out, 0, num_qubits - 1 - qubit).reshape(-1)


def apply_2q(
    state: StateVector, mat: np.ndarray, q_first: int, q_second: int, num_qubits: int
) -> StateVector:
    psi = state.reshape([2] * num_qubits)
    axes = (num_qubits - 1 - q_first, num_qubits - 1 - q_second)
    psi = np.moveaxis(psi, axes, (0, 1))
    out = (mat @ psi.reshape(4, -1)).reshape(psi.shape)
    return np.moveaxis(out, (0, 1), axes).reshape(-1)


def apply_gate(state: StateVector, gate, num_qubits: int, *, adjoint: bool = False) -> StateVector:
    mat = gate_matrix(gate.name, gate.param)
    if adjoint:
        mat = mat.conj().T
    if len(gate.qubits) == 1:
        return apply_1q(state, mat, gate.qubits[0], num_qubits)
    return apply_2q(state, mat, gate.qubits[0], gate.qubits[1], num_qubits)


def zero_state(num_qubits: int) -> StateVector:
    state = np.zeros(2**num_qubits, dtype=complex)
    state[0] = 1.0
    return state


def run_circuit(circuit: Circuit, *, memory_cap_bytes: int = DEFAULT_MEMORY_CAP_BYTES) -> StateVector:
    """Apply the circuit to |0...0> and return the final state."""
    check_memory_cap(circuit.num_qubits, memory_cap_bytes)
    state = zero_state(circuit.num_qubits)
    for gate in circuit.gates:
        state = apply_gate(state, gate, circuit.num_qubits)
    norm = float(np.linalg.norm(state))
    if abs(norm - 1.0) > 1e-9:
        raise RuntimeError(f"state norm drifted to {norm}")
    return state


def apply_pauli_string(state: StateVector, string: str, num_qubits: int) -> StateVector:
    out = state
    for q, letter in enumerate(string):
        if letter != "I":
            out = apply_1q(out, _FIXED_1Q[letter], q, num_qubits)
    return out


def apply_observable(state: StateVector, observable: PauliObservable, num_qubits: int) -> StateVector:
    """Return observable @ state (sum of Pauli-string applications)."""
    acc = np.zeros_like(state)
    for coeff, string in observable.terms:
        acc += coeff * apply_pauli_string(state, string, num_qubits)
    return acc


def expectation(state: StateVector, observable: PauliObservable) -> float:
    num_qubits = int(round(math.log2(state.size)))
    if observable.num_qubits != num_qubits:
        raise ValidationError(
            f"observable is on {observable.num_qubits} qubits, state has {num_qubits}"
        )
    value = complex(np.vdot(state, apply_observable(state, observable, num_qubits)))
    return float(value.real)


def probabilities(state: StateVector) -> np.ndarray:
    probs = np.abs(state) ** 2
    return probs / probs.sum()


def sample(state: StateVector, shots: int, seed: int) -> dict[str, int]:
    """Measure all qubits `shots` times; keys are little-endian bitstrings."""
    if shots < 1:
        raise ValidationError("shots must be >= 1")
    num_qubits = int(round(math.log2(state.size)))
    rng = np.random.default_rng(seed)
    outcomes = rng.choice(state.size, size=shots, p=probabilities(state))
    values, counts = np.unique(outcomes, return_counts=True)
    return {bitstring(int(v), num_qubits): int(c) for v, c in zip(values, counts)}


def bitstring(index: int, num_qubits: int) -> str:
    """Little-endian rendering: character q is the state of qubit q."""
    return "".join(str((index >> q) & 1) for q in range(num_qubits))
