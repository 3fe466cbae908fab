"""Dense multi-qubit states and operators.

States are either pure (a length ``2**n`` amplitude vector) or mixed (a
``2**n x 2**n`` density matrix).  Qubit 0 is the most significant bit of the
basis index, so ``|q0 q1 ... q_{n-1}>`` reads left to right.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

#: Largest register the dense backend accepts.  Raise it deliberately.
MAX_QUBITS = 12

NORM_TOL = 1e-12
HERMITIAN_TOL = 1e-12
PSD_TOL = 1e-10
UNITARY_TOL = 1e-10


class QuantumStateError(ValueError):
    """Raised for malformed states, operators or qubit addressing."""


def _n_from_dim(dim: int) -> int:
    n = int(dim).bit_length() - 1
    if n < 0 or (1 << n) != dim:
        raise QuantumStateError(f"dimension {dim} is not a power of two")
    return n


def _check_cap(n: int) -> None:
    if n > MAX_QUBITS:
        raise QuantumStateError(f"{n} qubits exceeds the dense limit MAX_QUBITS={MAX_QUBITS}")


def resolve_rng(seed) -> np.random.Generator:
    """Accept a Generator, a SeedSequence or an int seed; never ambient randomness."""
    if isinstance(seed, np.random.Generator):
        return seed
    if seed is None:
        raise ValueError("an explicit seed or Generator is required")
    return np.random.default_rng(seed)


@dataclass(frozen=True, eq=False)
class QuantumState:
    """Pure amplitudes (1-D) or a density matrix (2-D); validated on construction."""

    data: np.ndarray
    n_qubits: int

    def __init__(self, data, *, check: bool = True):
        arr = np.array(data, dtype=np.complex128)
        if arr.ndim == 1:
            n = _n_from_dim(arr.shape[0])
        elif arr.ndim == 2 and arr.shape[0] == arr.shape[1]:
            n = _n_from_dim(arr.shape[0])
        else:
            raise QuantumStateError(f"bad state shape {arr.shape}")
        _check_cap(n)
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)
        object.__setattr__(self, "n_qubits", n)
        if check:
            self._validate()

    def _validate(self) -> None:
        if self.is_pure:
            norm = float(np.vdot(self.data, self.data).real)
            if abs(norm - 1.0) > NORM_TOL:
                raise QuantumStateError(f"pure state not normalised (norm^2={norm!r})")
            return
        rho = self.data
        if np.max(np.abs(rho - rho.conj().T)) > HERMITIAN_TOL:
            raise QuantumStateError("density matrix is not Hermitian")
        tr = np.trace(rho)
        if abs(tr - 1.0) > NORM_TOL:
            raise QuantumStateError(f"density matrix trace {tr!r} != 1")
        if np.linalg.eigvalsh(rho)[0] < -PSD_TOL:
            raise QuantumStateError("density matrix has a negative eigenvalue")

    @property
    def kind(self) -> str:
        return "pure" if self.data.ndim == 1 else "mixed"

    @property
    def is_pure(self) -> bool:
        return self.data.ndim == 1

    @property
    def dim(self) -> int:
        return self.data.shape[0]

    def density(self) -> np.ndarray:
        if self.is_pure:
            return np.outer(self.data, self.data.conj())
        return self.data

    def as_mixed(self) -> "QuantumState":
        return self if not self.is_pure else QuantumState(self.density(), check=False)

    def __repr__(self) -> str:
        return f"QuantumState(kind={self.kind!r}, n_qubits={self.n_qubits})"


@dataclass(frozen=True, eq=False)
class LinearOperator:
    matrix: np.ndarray
    n_qubits: int
    hermitian: bool = False

    def __init__(self, matrix, *, hermitian: bool = False):
        m = np.array(matrix, dtype=np.complex128)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise QuantumStateError(f"operator must be square, got {m.shape}")
        n = _n_from_dim(m.shape[0])
        if hermitian and np.max(np.abs(m - m.conj().T)) > HERMITIAN_TOL:
            raise QuantumStateError("operator flagged hermitian is not")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "n_qubits", n)
        object.__setattr__(self, "hermitian", bool(hermitian))

    def is_hermitian(self, tol: float = HERMITIAN_TOL) -> bool:
        return self.hermitian or bool(np.max(np.abs(self.matrix - self.matrix.conj().T)) <= tol)

    def __matmul__(self, other: "LinearOperator") -> "LinearOperator":
        return LinearOperator(self.matrix @ other.matrix)

    def dagger(self) -> "LinearOperator":
        return LinearOperator(self.matrix.conj().T, hermitian=self.hermitian)


@dataclass(frozen=True)
class SpectralDecomposition:
    """Eigenvalues in descending order with matching orthonormal columns."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def reconstruct(self) -> np.ndarray:
        v = self.eigenvectors
        return (v * self.eigenvalues) @ v.conj().T


def spectral_decomposition(matrix) -> SpectralDecomposition:
    m = matrix.matrix if isinstance(matrix, LinearOperator) else np.asarray(matrix)
    w, v = np.linalg.eigh(m)
    return SpectralDecomposition(w[::-1].copy(), v[:, ::-1].copy())


# Single-qubit constants
I2 = np.eye(2, dtype=np.complex128)
X = np.array([[0, 1], [1, 0]], dtype=np.complex128)
Y = np.array([[0, -1j], [1j, 0]], dtype=np.complex128)
Z = np.array([[1, 0], [0, -1]], dtype=np.complex128)
HADAMARD = np.array([[1, 1], [1, -1]], dtype=np.complex128) / np.sqrt(2)


def phase_gate(theta: float) -> np.ndarray:
    """The node encoding ``|0><0| + e^{i theta}|1><1|``."""
    return np.diag([1.0, np.exp(1j * theta)]).astype(np.complex128)


def basis_state(bits: Sequence[int]) -> QuantumState:
    n = len(bits)
    idx = 0
    for b in bits:
        idx = (idx << 1) | int(b)
    v = np.zeros(1 << n, dtype=np.complex128)
    v[idx] = 1.0
    return QuantumState(v)


def plus_state(n: int = 1) -> QuantumState:
    dim = 1 << n
    return QuantumState(np.full(dim, 1.0 / np.sqrt(dim), dtype=np.complex128))


def maximally_mixed(n: int) -> QuantumState:
    dim = 1 << n
    return QuantumState(np.eye(dim, dtype=np.complex128) / dim)


def kron_all(mats: Sequence[np.ndarray]) -> np.ndarray:
    out = np.array([[1.0 + 0j]])
    for m in mats:
        out = np.kron(out, m)
    return out


def tensor_product(a, b):
    """``a ⊗ b`` for two states or two operators; pure ⊗ pure stays pure."""
    if isinstance(a, QuantumState) and isinstance(b, QuantumState):
        _check_cap(a.n_qubits + b.n_qubits)
        if a.is_pure and b.is_pure:
            return QuantumState(np.kron(a.data, b.data), check=False)
        return QuantumState(np.kron(a.density(), b.density()), check=False)
    if isinstance(a, LinearOperator) and isinstance(b, LinearOperator):
        return LinearOperator(np.kron(a.matrix, b.matrix), hermitian=a.hermitian and b.hermitian)
    raise TypeError(f"tensor_product kind mismatch: {type(a).__name__} vs {type(b).__name__}")


def _check_qubits(qubits: Sequence[int], n: int) -> list[int]:
    qs = [int(q) for q in qubits]
    if len(set(qs)) != len(qs):
        raise QuantumStateError(f"repeated qubit index in {qs}")
    for q in qs:
        if not 0 <= q < n:
            raise QuantumStateError(f"qubit index {q} out of range for {n} qubits")
    return qs


def _apply_left(t: np.ndarray, u: np.ndarray, qubits: list[int], n: int, offset: int = 0) -> np.ndarray:
    """Contract ``u`` into tensor axes ``offset + qubits`` of ``t``."""
    k = len(qubits)
    ut = u.reshape((2,) * (2 * k))
    axes = [offset + q for q in qubits]
    out = np.tensordot(ut, t, axes=(list(range(k, 2 * k)), axes))
    # tensordot puts the new axes first; move them back into place
    return np.moveaxis(out, list(range(k)), axes)


def apply_operator(state_data: np.ndarray, op: np.ndarray, qubits: Sequence[int], n: int) -> np.ndarray:
    """Raw ``op`` on ``qubits``: ``op ψ`` for vectors, ``op ρ op†`` for matrices."""
    qs = list(qubits)
    if state_data.ndim == 1:
        t = state_data.reshape((2,) * n)
        return _apply_left(t, op, qs, n).reshape(-1)
    t = state_data.reshape((2,) * (2 * n))
    t = _apply_left(t, op, qs, n)
    t = _apply_left(t, op.conj(), qs, n, offset=n)
    return t.reshape(1 << n, 1 << n)


def apply_unitary(state: QuantumState, u, qubits: Sequence[int]) -> QuantumState:
    m = u.matrix if isinstance(u, LinearOperator) else np.asarray(u, dtype=np.complex128)
    qs = _check_qubits(qubits, state.n_qubits)
    if m.shape != (1 << len(qs), 1 << len(qs)):
        raise QuantumStateError(f"operator shape {m.shape} does not match {len(qs)} qubits")
    if np.max(np.abs(m.conj().T @ m - np.eye(m.shape[0]))) > UNITARY_TOL:
        raise QuantumStateError("operator is not unitary")
    return QuantumState(apply_operator(state.data, m, qs, state.n_qubits), check=False)


def apply_kraus(state: QuantumState, kraus: Sequence[np.ndarray], qubits: Sequence[int]) -> QuantumState:
    """CPTP map given by Kraus operators acting on ``qubits``.  Returns a mixed state."""
    qs = _check_qubits(qubits, state.n_qubits)
    rho = state.density()
    out = np.zeros_like(rho)
    for k in kraus:
        out += apply_operator(rho, np.asarray(k, dtype=np.complex128), qs, state.n_qubits)
    return QuantumState(out, check=False)


def partial_trace(state: QuantumState, keep: Sequence[int]) -> QuantumState:
    """Reduced state on ``keep`` (kept in the given order).  Always mixed."""
    n = state.n_qubits
    keep = _check_qubits(keep, n)
    if not keep:
        raise QuantumStateError("partial_trace needs at least one kept qubit")
    traced = [q for q in range(n) if q not in keep]
    dk = 1 << len(keep)
    if state.is_pure:
        t = state.data.reshape((2,) * n).transpose(keep + traced).reshape(dk, -1)
        rho = t @ t.conj().T
    else:
        t = state.data.reshape((2,) * (2 * n))
        perm = keep + traced + [n + q for q in keep] + [n + q for q in traced]
        dt = 1 << len(traced)
        t = t.transpose(perm).reshape(dk, dt, dk, dt)
        rho = np.einsum("ajbj->ab", t)
    return QuantumState(rho, check=False)


def _psd_factor(rho: np.ndarray, cutoff: float = 1e-14) -> np.ndarray:
    """``A`` with ``A A† = rho`` restricted to eigenvalues above ``cutoff``."""
    w, v = np.linalg.eigh(rho)
    w = np.where(w > -PSD_TOL, np.clip(w, 0.0, None), w)
    keep = w > cutoff
    return v[:, keep] * np.sqrt(w[keep])


def fidelity(a: QuantumState, b: QuantumState) -> float:
    """Squared fidelity ``(Tr sqrt(sqrt(a) b sqrt(a)))**2``.

    Mixed-mixed pairs go through the nuclear norm of ``A_b† A_a`` with
    ``A A† = rho`` low-rank factors; this avoids the noise floor a matrix
    square root leaves on numerically-zero eigenvalues.
    """
    if a.n_qubits != b.n_qubits:
        raise QuantumStateError(f"fidelity of {a.n_qubits}- and {b.n_qubits}-qubit states")
    if a.kind == b.kind and np.array_equal(a.data, b.data):
        return 1.0
    if a.is_pure and b.is_pure:
        f = abs(np.vdot(a.data, b.data)) ** 2
    elif a.is_pure:
        f = np.vdot(a.data, b.data @ a.data).real
    elif b.is_pure:
        f = np.vdot(b.data, a.data @ b.data).real
    else:
        fa, fb = _psd_factor(a.data), _psd_factor(b.data)
        if fa.shape[1] == 0 or fb.shape[1] == 0:
            return 0.0
        s = np.linalg.svd(fb.conj().T @ fa, compute_uv=False)
        f = float(np.sum(s)) ** 2
    return float(min(1.0, max(0.0, f)))


def trace_distance(a: QuantumState, b: QuantumState) -> float:
    diff = a.density() - b.density()
    return 0.5 * float(np.sum(np.abs(np.linalg.eigvalsh(diff))))


def _require_hermitian(obs) -> np.ndarray:
    op = obs if isinstance(obs, LinearOperator) else LinearOperator(obs)
    if not op.is_hermitian(1e-10):
        raise QuantumStateError("observable is not Hermitian")
    return op.matrix


def expectation(state: QuantumState, obs) -> float:
    m = _require_hermitian(obs)
    if m.shape[0] != state.dim:
        raise QuantumStateError("observable dimension does not match state")
    if state.is_pure:
        val = np.vdot(state.data, m @ state.data)
    else:
        val = np.trace(m @ state.data)
    return float(val.real)


def sample_eigenvalue(state: QuantumState, obs, rng_seed, *, degeneracy_tol: float = 1e-9):
    """Projective measurement of ``obs``: returns ``(eigenvalue, post_state)``."""
    m = _require_hermitian(obs)
    rng = resolve_rng(rng_seed)
    w, v = np.linalg.eigh(m)
    # group degenerate eigenvalues into eigenspaces
    groups: list[tuple[float, np.ndarray]] = []
    start = 0
    for i in range(1, len(w) + 1):
        if i == len(w) or w[i] - w[start] > degeneracy_tol:
            groups.append((float(np.mean(w[start:i])), v[:, start:i]))
            start = i
    if state.is_pure:
        amps = [basis.conj().T @ state.data for _, basis in groups]
        probs = np.array([np.vdot(a, a).real for a in amps])
    else:
        probs = np.array([np.trace(basis.conj().T @ state.data @ basis).real for _, basis in groups])
    probs = np.clip(probs, 0.0, None)
    probs /= probs.sum()
    k = int(rng.choice(len(groups), p=probs))
    value, basis = groups[k]
    proj = basis @ basis.conj().T
    if state.is_pure:
        post = proj @ state.data
        post = post / np.linalg.norm(post)
    else:
        post = proj @ state.data @ proj
        post = post / np.trace(post).real
    return value, QuantumState(post, check=False)


def operator_inf_norm(op) -> float:
    m = _require_hermitian(op)
    return float(np.max(np.abs(np.linalg.eigvalsh(m))))


def random_pure_state(n: int, rng) -> QuantumState:
    rng = resolve_rng(rng)
    v = rng.normal(size=1 << n) + 1j * rng.normal(size=1 << n)
    return QuantumState(v / np.linalg.norm(v))


def random_density(n: int, rng, rank: int | None = None) -> QuantumState:
    rng = resolve_rng(rng)
    dim = 1 << n
    r = dim if rank is None else rank
    g = rng.normal(size=(dim, r)) + 1j * rng.normal(size=(dim, r))
    rho = g @ g.conj().T
    rho = 0.5 * (rho + rho.conj().T)
    return QuantumState(rho / np.trace(rho).real)
