"""Threat models: untrusted source, noisy or hostile channels, dishonest nodes.

A model is plain data.  Attacks are i.i.d. across copies; anything adaptive
goes through ``AdversaryModel.attack_callback``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional, Sequence, Union

import numpy as np

from . import qcore
from .encoding import QubitAssignment
from .qcore import I2, X, Y, Z, QuantumState

CRS = "crs"


class AdversaryError(ValueError):
    pass


@dataclass(frozen=True)
class NetworkTopology:
    n_nodes: int
    honest: frozenset
    verifier: Union[int, str] = 0

    def __init__(self, n_nodes: int, honest=None, verifier: Union[int, str] = 0):
        honest = frozenset(range(n_nodes)) if honest is None else frozenset(int(h) for h in honest)
        if n_nodes < 1:
            raise AdversaryError("network needs at least one node")
        if not honest <= set(range(n_nodes)):
            raise AdversaryError(f"honest set {sorted(honest)} not within 0..{n_nodes - 1}")
        if verifier != CRS and not 0 <= int(verifier) < n_nodes:
            raise AdversaryError(f"verifier {verifier} is not a node")
        object.__setattr__(self, "n_nodes", int(n_nodes))
        object.__setattr__(self, "honest", honest)
        object.__setattr__(self, "verifier", verifier if verifier == CRS else int(verifier))

    @property
    def dishonest(self) -> frozenset:
        return frozenset(range(self.n_nodes)) - self.honest

    @property
    def n_honest(self) -> int:
        return len(self.honest)


def dephasing_kraus(p: float) -> list[np.ndarray]:
    """``rho -> (1-p) rho + p Z rho Z``; coherences shrink by ``1 - 2p``."""
    return [np.sqrt(1 - p) * I2, np.sqrt(p) * Z]


def depolarizing_kraus(p: float) -> list[np.ndarray]:
    """``rho -> (1-p) rho + p I/2``."""
    return [np.sqrt(1 - 3 * p / 4) * I2, np.sqrt(p / 4) * X, np.sqrt(p / 4) * Y, np.sqrt(p / 4) * Z]


def check_kraus(kraus: Sequence[np.ndarray], tol: float = 1e-10) -> list[np.ndarray]:
    ks = [np.asarray(k, dtype=np.complex128) for k in kraus]
    if not ks:
        raise AdversaryError("empty Kraus set")
    dim = ks[0].shape[0]
    total = sum(k.conj().T @ k for k in ks)
    if any(k.shape != (dim, dim) for k in ks) or np.max(np.abs(total - np.eye(dim))) > tol:
        raise AdversaryError("Kraus operators do not satisfy sum K^dag K = I")
    return ks


def _check_prob(name: str, p: float) -> float:
    p = float(p)
    if not 0.0 <= p <= 1.0:
        raise AdversaryError(f"{name} must lie in [0, 1], got {p}")
    return p


@dataclass(frozen=True)
class ChannelNoise:
    """Single-qubit channel on the link from the source to one node."""

    kind: str = "none"  # none | dephasing | depolarizing | kraus
    p: float = 0.0
    kraus: Optional[tuple] = None

    def __post_init__(self):
        if self.kind not in ("none", "dephasing", "depolarizing", "kraus"):
            raise AdversaryError(f"unknown channel kind {self.kind!r}")
        _check_prob("channel p", self.p)
        if self.kind == "kraus":
            if self.kraus is None:
                raise AdversaryError("kraus channel without operators")
            ks = check_kraus(self.kraus)
            if ks[0].shape != (2, 2):
                raise AdversaryError("channel Kraus operators must be single-qubit")

    def operators(self) -> Optional[list[np.ndarray]]:
        if self.kind == "dephasing":
            return dephasing_kraus(self.p) if self.p > 0 else None
        if self.kind == "depolarizing":
            return depolarizing_kraus(self.p) if self.p > 0 else None
        if self.kind == "kraus":
            return check_kraus(self.kraus)
        return None


@dataclass(frozen=True)
class SourceAttack:
    """What the untrusted source emits instead of the requested resource."""

    kind: str = "none"  # none | fixed | channel
    state: Optional[QuantumState] = None
    kraus: Optional[tuple] = None

    def __post_init__(self):
        if self.kind not in ("none", "fixed", "channel"):
            raise AdversaryError(f"unknown source attack {self.kind!r}")
        if self.kind == "fixed" and self.state is None:
            raise AdversaryError("fixed source attack without a state")
        if self.kind == "channel":
            if self.kraus is None:
                raise AdversaryError("channel source attack without Kraus operators")
            check_kraus(self.kraus)


VERIFIER_REPORTS = ("honest", "all-fail", "all-pass")


@dataclass(frozen=True)
class DishonestBehavior:
    flip_q: float = 0.0
    unitary: Optional[np.ndarray] = None
    skip_encoding: bool = False
    verifier_report: str = "honest"

    def __post_init__(self):
        _check_prob("report-flip q", self.flip_q)
        if self.verifier_report not in VERIFIER_REPORTS:
            raise AdversaryError(f"verifier_report must be one of {VERIFIER_REPORTS}")
        if self.unitary is not None:
            u = np.asarray(self.unitary, dtype=np.complex128)
            if u.shape != (2, 2) or np.max(np.abs(u.conj().T @ u - I2)) > 1e-10:
                raise AdversaryError("local unitary must be a 2x2 unitary")


HONEST = DishonestBehavior()

AttackCallback = Callable[[int, QuantumState, np.random.Generator], QuantumState]


@dataclass(frozen=True)
class AdversaryModel:
    source: SourceAttack = field(default_factory=SourceAttack)
    channels: Mapping[int, ChannelNoise] = field(default_factory=dict)
    dishonest: Mapping[int, DishonestBehavior] = field(default_factory=dict)
    coordination_seed: int = 0
    attack_callback: Optional[AttackCallback] = None

    @property
    def is_trivial(self) -> bool:
        return (
            self.source.kind == "none"
            and all(c.operators() is None for c in self.channels.values())
            and self.attack_callback is None
        )

    @property
    def copies_identical(self) -> bool:
        """Every prepared copy is the same state (no per-copy callback)."""
        return self.attack_callback is None

    def behavior(self, node: int, topo: NetworkTopology) -> DishonestBehavior:
        if node in topo.honest:
            return HONEST
        return self.dishonest.get(node, HONEST)


def prepare_copy(
    model: AdversaryModel,
    topo: NetworkTopology,
    ideal: QuantumState,
    copy_index: int = 0,
    rng=None,
    assignment: Optional[QubitAssignment] = None,
) -> QuantumState:
    """The copy as the nodes receive it: source attack, then link noise."""
    assignment = assignment or QubitAssignment.one_per_node(topo.n_nodes)
    if assignment.n_qubits != ideal.n_qubits:
        raise AdversaryError("assignment does not match the resource size")
    state = ideal
    src = model.source
    if src.kind == "fixed":
        if src.state.n_qubits != ideal.n_qubits:
            raise AdversaryError("fixed source state has the wrong size")
        state = src.state
    elif src.kind == "channel":
        state = qcore.apply_kraus(state, check_kraus(src.kraus), list(range(ideal.n_qubits)))
    for node in sorted(model.channels):
        ops = model.channels[node].operators()
        if ops is None:
            continue
        for q in assignment.qubits_of([node]):
            state = qcore.apply_kraus(state, ops, [q])
    if model.attack_callback is not None:
        state = model.attack_callback(copy_index, state, qcore.resolve_rng(rng))
    return state


def apply_local_unitaries(
    state: QuantumState,
    model: AdversaryModel,
    topo: NetworkTopology,
    assignment: QubitAssignment,
) -> QuantumState:
    """Dishonest nodes' pre-measurement unitaries on their own qubits."""
    data = state.data
    for node in sorted(topo.dishonest):
        u = model.behavior(node, topo).unitary
        if u is None:
            continue
        for q in assignment.qubits_of([node]):
            data = qcore.apply_operator(data, np.asarray(u, dtype=np.complex128), [q], state.n_qubits)
    return state if data is state.data else QuantumState(data, check=False)


def report_outcome(model: AdversaryModel, topo: NetworkTopology, node: int, true_outcome: int, rng) -> int:
    if not 0 <= node < topo.n_nodes:
        raise AdversaryError(f"node {node} not in network")
    q = model.behavior(node, topo).flip_q
    if q > 0 and qcore.resolve_rng(rng).random() < q:
        return -true_outcome
    return true_outcome


def qubit_flip_probabilities(model: AdversaryModel, topo: NetworkTopology, assignment: QubitAssignment) -> np.ndarray:
    """Per-qubit probability that the owner misreports that qubit's outcome."""
    return np.array([model.behavior(o, topo).flip_q for o in assignment.owners])


def honest_reduced(state: QuantumState, topo: NetworkTopology, assignment: Optional[QubitAssignment] = None) -> QuantumState:
    assignment = assignment or QubitAssignment.one_per_node(topo.n_nodes)
    keep = assignment.qubits_of(topo.honest)
    if not keep:
        raise AdversaryError("no qubits are held by honest nodes")
    return qcore.partial_trace(state, keep)
