"""Node-local phase encoding, the hiding substitution, and resources for
integer-weighted linear functions ``f(theta) = M * sum_i k_i theta_i``."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from . import _kernels, qcore
from .ghz import ghz_state
from .qcore import X, QuantumState, QuantumStateError


def as_phases(thetas, n_nodes: int | None = None) -> np.ndarray:
    """Validate a phase vector: finite reals, one per node."""
    arr = np.asarray(thetas, dtype=float).reshape(-1)
    if not np.all(np.isfinite(arr)):
        raise ValueError("phases must be finite")
    if n_nodes is not None and arr.shape[0] != n_nodes:
        raise ValueError(f"expected {n_nodes} phases, got {arr.shape[0]}")
    return arr


@dataclass(frozen=True)
class LinearFunctionSpec:
    M: float
    k: tuple[int, ...]

    def __post_init__(self):
        k = tuple(int(v) for v in self.k)
        if any(int(v) != v for v in self.k):
            raise ValueError(f"weights must be integers, got {self.k}")
        if not k or all(v == 0 for v in k):
            raise ValueError("at least one weight must be non-zero")
        object.__setattr__(self, "k", k)
        object.__setattr__(self, "M", float(self.M))

    @classmethod
    def average(cls, n: int) -> "LinearFunctionSpec":
        return cls(1.0 / n, (1,) * n)

    @property
    def n_nodes(self) -> int:
        return len(self.k)

    @property
    def total_qubits(self) -> int:
        return sum(abs(v) for v in self.k)


@dataclass(frozen=True)
class QubitAssignment:
    """Owner node and X-conjugation flag for every qubit of the resource."""

    owners: tuple[int, ...]
    flipped: tuple[bool, ...]
    n_nodes: int

    def __post_init__(self):
        if len(self.owners) != len(self.flipped):
            raise ValueError("owners and flipped differ in length")
        for o in self.owners:
            if not 0 <= o < self.n_nodes:
                raise ValueError(f"owner {o} outside 0..{self.n_nodes - 1}")

    @classmethod
    def one_per_node(cls, n: int) -> "QubitAssignment":
        return cls(tuple(range(n)), (False,) * n, n)

    @classmethod
    def for_function(cls, spec: LinearFunctionSpec) -> "QubitAssignment":
        owners: list[int] = []
        flipped: list[bool] = []
        for node, k in enumerate(spec.k):
            owners += [node] * abs(k)
            flipped += [k < 0] * abs(k)
        return cls(tuple(owners), tuple(flipped), spec.n_nodes)

    @property
    def n_qubits(self) -> int:
        return len(self.owners)

    def qubits_of(self, nodes: Iterable[int]) -> list[int]:
        nodes = set(nodes)
        return [q for q, o in enumerate(self.owners) if o in nodes]

    @property
    def flipped_qubits(self) -> list[int]:
        return [q for q, f in enumerate(self.flipped) if f]

    def qubit_weights(self, node_values) -> np.ndarray:
        """Per-qubit copy of a per-node vector."""
        vals = np.asarray(node_values, dtype=float)
        return vals[list(self.owners)] if self.owners else np.zeros(0)


def _check_assignment(state: QuantumState, assignment: QubitAssignment) -> None:
    if assignment.n_qubits != state.n_qubits:
        raise QuantumStateError(
            f"assignment covers {assignment.n_qubits} qubits, state has {state.n_qubits}"
        )


def phase_generator_diagonal(assignment: QubitAssignment, node_weights) -> np.ndarray:
    """Diagonal of ``sum_q w_owner(q) |1><1|_q`` in the computational basis."""
    w = assignment.qubit_weights(node_weights)
    return _kernels.basis_phase_weights(assignment.n_qubits, np.ascontiguousarray(w))


def encode_network(state: QuantumState, phases, assignment: QubitAssignment) -> QuantumState:
    """Every qubit applies ``diag(1, e^{i theta_owner})``."""
    _check_assignment(state, assignment)
    theta = as_phases(phases, assignment.n_nodes)
    g = np.exp(1j * phase_generator_diagonal(assignment, theta))
    if state.is_pure:
        return QuantumState(state.data * g, check=False)
    return QuantumState(state.data * np.outer(g, g.conj()), check=False)


def privacy_substitution(phases, target_j: int, honest: Iterable[int]) -> np.ndarray:
    """Set every other honest phase to ``-theta_j / (n_honest - 1)``."""
    theta = as_phases(phases).copy()
    honest = sorted(set(int(h) for h in honest))
    if len(honest) < 2:
        raise ValueError("hiding substitution needs at least two honest nodes")
    if target_j not in honest:
        raise ValueError(f"node {target_j} is not honest")
    fill = -theta[target_j] / (len(honest) - 1)
    for k in honest:
        if k != target_j:
            theta[k] = fill
    return theta


def substitution_direction(n_nodes: int, target_j: int, honest: Sequence[int]) -> np.ndarray:
    """d(phases)/d(theta_j) along the hiding substitution."""
    honest = sorted(set(honest))
    d = np.zeros(n_nodes)
    for k in honest:
        d[k] = -1.0 / (len(honest) - 1)
    d[target_j] = 1.0
    return d


def resource_state_for_function(spec: LinearFunctionSpec) -> tuple[QuantumState, QubitAssignment]:
    """GHZ over ``sum |k_i|`` qubits, X on the qubits of negative-weight nodes."""
    n = spec.total_qubits
    if n > qcore.MAX_QUBITS:
        raise QuantumStateError(f"function needs {n} qubits, limit is {qcore.MAX_QUBITS}")
    assignment = QubitAssignment.for_function(spec)
    state = ghz_state(n)
    if n == 1:
        return state, assignment
    data = state.data
    for q in assignment.flipped_qubits:
        data = qcore.apply_operator(data, X, [q], n)
    return QuantumState(data, check=False), assignment


def branch_indices(assignment: QubitAssignment) -> tuple[int, int]:
    """Basis indices of the two GHZ branches: the flip pattern and its complement."""
    n = assignment.n_qubits
    b = 0
    for q in assignment.flipped_qubits:
        b |= 1 << (n - 1 - q)
    return b, b ^ ((1 << n) - 1)


def branch_phase(state: QuantumState, assignment: QubitAssignment) -> float:
    """Relative phase of the complement branch to the flip-pattern branch, in [0, 2 pi)."""
    if not state.is_pure:
        raise QuantumStateError("branch phase is defined for pure resources")
    lo, hi = branch_indices(assignment)
    return float(np.angle(state.data[hi] / state.data[lo]) % (2 * np.pi))


def function_value(spec: LinearFunctionSpec, phases) -> float:
    theta = as_phases(phases, spec.n_nodes)
    return spec.M * float(np.dot(spec.k, theta))
