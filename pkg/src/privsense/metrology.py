"""Quantum Fisher information, SLDs, the QFI continuity bound and the
QFI-based privacy measure."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from . import qcore
from .encoding import (
    QubitAssignment,
    encode_network,
    phase_generator_diagonal,
    substitution_direction,
)
from .qcore import LinearOperator, QuantumState, Z, kron_all

DEFAULT_TOLERANCE = 1e-10
DEFAULT_FD_STEP = 1e-5


class MetrologyError(ValueError):
    pass


@dataclass
class ParameterizedFamily:
    """``theta -> state``, probed around ``theta0``.

    ``derivative`` (optional) returns the exact derivative at ``theta``: a
    vector for pure families, a matrix for mixed ones.
    """

    build: Callable[[float], QuantumState]
    theta0: float = 0.0
    derivative: Optional[Callable[[float], np.ndarray]] = None

    def at(self, theta: Optional[float] = None) -> QuantumState:
        return self.build(self.theta0 if theta is None else theta)


@dataclass(frozen=True)
class QfiResult:
    value: float
    method: str
    rank: int
    tolerance: float
    excluded_weight: float = 0.0

    def to_dict(self) -> dict:
        return {
            "value": self.value,
            "method": self.method,
            "rank": self.rank,
            "tolerance": self.tolerance,
            "excluded_weight": self.excluded_weight,
        }


def _clip_qfi(v: float) -> float:
    if v < -1e-9:
        raise MetrologyError(f"negative QFI {v!r}")
    return max(0.0, float(v))


def phase_family(
    state: QuantumState,
    assignment: QubitAssignment,
    direction,
    base_phases=None,
    keep: Optional[Sequence[int]] = None,
    theta0: float = 0.0,
) -> ParameterizedFamily:
    """Encoded ``state`` along ``base + t * direction`` (per-node vectors).

    With ``keep`` the family is the reduced state on those qubits.  The
    derivative is analytic: the encoding generator is diagonal.
    """
    d = np.asarray(direction, dtype=float)
    base = np.zeros(assignment.n_nodes) if base_phases is None else np.asarray(base_phases, float)
    g_full = phase_generator_diagonal(assignment, d)

    if keep is None:
        def build(t):
            return encode_network(state, base + t * d, assignment)

        def deriv(t):
            s = build(t)
            if s.is_pure:
                return 1j * g_full * s.data
            return 1j * (g_full[:, None] - g_full[None, :]) * s.data

        return ParameterizedFamily(build, theta0, deriv)

    keep = list(keep)
    sub = QubitAssignment(tuple(assignment.owners[q] for q in keep), (False,) * len(keep), assignment.n_nodes)
    g_keep = phase_generator_diagonal(sub, d)
    reduced0 = qcore.partial_trace(state, keep)

    def build_reduced(t):
        # the encoding is local, so reduce first and encode the kept qubits
        return encode_network(reduced0, base + t * d, sub)

    def deriv_reduced(t):
        s = build_reduced(t)
        return 1j * (g_keep[:, None] - g_keep[None, :]) * s.data

    return ParameterizedFamily(build_reduced, theta0, deriv_reduced)


def _density_derivative(family: ParameterizedFamily, step: float) -> np.ndarray:
    if family.derivative is not None:
        s = family.at()
        d = family.derivative(family.theta0)
        if s.is_pure:
            return np.outer(d, s.data.conj()) + np.outer(s.data, d.conj())
        return d
    return state_derivative(family, step)


def state_derivative(family: ParameterizedFamily, step: float = DEFAULT_FD_STEP) -> np.ndarray:
    """Central difference ``(rho(t+h) - rho(t-h)) / 2h``."""
    if not step > 0:
        raise MetrologyError("finite-difference step must be positive")
    t = family.theta0
    plus = family.build(t + step).density()
    minus = family.build(t - step).density()
    return (plus - minus) / (2.0 * step)


def _eig_pairs(rho: np.ndarray, tolerance: float):
    lam, vec = np.linalg.eigh(rho)
    lam = np.clip(lam, 0.0, None)
    denom = lam[:, None] + lam[None, :]
    mask = denom > tolerance
    return lam, vec, denom, mask


def sld(rho, drho, tolerance: float = DEFAULT_TOLERANCE) -> LinearOperator:
    """Symmetric logarithmic derivative on the retained eigen-support."""
    r = rho.density() if isinstance(rho, QuantumState) else np.asarray(rho)
    lam, vec, denom, mask = _eig_pairs(r, tolerance)
    if not mask.any():
        raise MetrologyError("every eigenvalue pair falls below the truncation tolerance")
    d = vec.conj().T @ np.asarray(drho) @ vec
    coeff = np.zeros_like(d)
    coeff[mask] = 2.0 * d[mask] / denom[mask]
    L = vec @ coeff @ vec.conj().T
    return LinearOperator(0.5 * (L + L.conj().T))


def sld_residual(rho, drho, L: LinearOperator) -> float:
    r = rho.density() if isinstance(rho, QuantumState) else np.asarray(rho)
    m = L.matrix
    return float(np.max(np.abs(np.asarray(drho) - 0.5 * (m @ r + r @ m))))


def pure_sld(psi: np.ndarray, dpsi: np.ndarray) -> LinearOperator:
    """``2(|dpsi><psi| + |psi><dpsi|)``."""
    return LinearOperator(2.0 * (np.outer(dpsi, psi.conj()) + np.outer(psi, dpsi.conj())))


def qfi_pure(family: ParameterizedFamily, step: float = DEFAULT_FD_STEP) -> QfiResult:
    s = family.at()
    if not s.is_pure:
        raise MetrologyError("qfi_pure needs a pure-state family")
    if family.derivative is not None:
        d = family.derivative(family.theta0)
        method = "pure-formula"
    else:
        d = (family.build(family.theta0 + step).data - family.build(family.theta0 - step).data) / (2 * step)
        method = "pure-formula-fd"
    psi = s.data
    v = 4.0 * (np.vdot(d, d).real - abs(np.vdot(psi, d)) ** 2)
    return QfiResult(_clip_qfi(v), method, 1, 0.0)


def qfi_mixed(
    family: ParameterizedFamily,
    tolerance: float = DEFAULT_TOLERANCE,
    step: float = DEFAULT_FD_STEP,
) -> QfiResult:
    """``2 sum |<k|drho|l>|^2 / (lam_k + lam_l)`` over retained pairs."""
    rho = family.at().density()
    drho = _density_derivative(family, step)
    return qfi_from_derivative(rho, drho, tolerance)


def qfi_from_derivative(rho: np.ndarray, drho: np.ndarray, tolerance: float = DEFAULT_TOLERANCE) -> QfiResult:
    lam, vec, denom, mask = _eig_pairs(rho, tolerance)
    d = vec.conj().T @ drho @ vec
    w = np.abs(d) ** 2
    kept = float(np.sum(w[mask]))
    dropped = float(np.sum(w[~mask]))
    if kept <= 1e-24 and dropped > 1e-16:
        raise MetrologyError(
            f"derivative weight {dropped:.3g} lies entirely on truncated eigenvalue pairs"
        )
    v = 2.0 * float(np.sum(w[mask] / denom[mask]))
    rank = int(np.sum(lam > tolerance))
    return QfiResult(_clip_qfi(v), "full-rank-formula" if rank == len(lam) else "spectral-general",
                     rank, tolerance, dropped)


def qfi_bures_oracle(family: ParameterizedFamily, step: float = 1e-4) -> QfiResult:
    """``8 (1 - sqrt F) / h^2`` between states at ``theta0 -+ h/2`` (symmetric, so O(h^2))."""
    if not step > 0:
        raise MetrologyError("Bures step must be positive")
    t = family.theta0
    f = qcore.fidelity(family.build(t - step / 2), family.build(t + step / 2))
    if f <= 0.5:
        raise MetrologyError(f"step {step} too large: fidelity {f:.3f} <= 0.5")
    v = 8.0 * (1.0 - np.sqrt(f)) / step**2
    return QfiResult(_clip_qfi(v), "bures-oracle", -1, 0.0)


def qfi(family: ParameterizedFamily, tolerance: float = DEFAULT_TOLERANCE) -> QfiResult:
    """Pure formula on pure families, spectral formula otherwise."""
    if family.at().is_pure:
        return qfi_pure(family)
    return qfi_mixed(family, tolerance)


def qfi_matrix_unitary(rho: np.ndarray, generator_diagonals: Sequence[np.ndarray],
                       tolerance: float = DEFAULT_TOLERANCE) -> np.ndarray:
    """QFI matrix of ``rho`` under commuting diagonal generators.

    ``Q_pq = 2 sum (lam_k - lam_l)^2 / (lam_k + lam_l) Re(conj(G_p)_kl (G_q)_kl)``.
    """
    lam, vec, denom, mask = _eig_pairs(rho, tolerance)
    weight = np.zeros_like(denom)
    weight[mask] = 2.0 * (lam[:, None] - lam[None, :])[mask] ** 2 / denom[mask]
    gs = [vec.conj().T @ (g[:, None] * vec) for g in generator_diagonals]
    m = len(gs)
    Q = np.zeros((m, m))
    for p in range(m):
        for q in range(p, m):
            Q[p, q] = Q[q, p] = float(np.sum(weight * np.real(gs[p].conj() * gs[q])))
    return Q


def continuity_bound(f: float, h_norm: float = 1.0) -> float:
    """``24 |H|^2 sqrt(1 - F)``: largest QFI gap between two states of fidelity ``f``."""
    if not 0.0 <= f <= 1.0:
        raise MetrologyError(f"fidelity {f} outside [0, 1]")
    if h_norm < 0:
        raise MetrologyError("generator norm must be non-negative")
    return 24.0 * h_norm**2 * np.sqrt(1.0 - f)


def generator_norm(assignment: QubitAssignment, direction) -> float:
    """``|H|_inf`` of the encoding generator along ``direction``, shifted by a
    multiple of the identity to be smallest (the shift leaves every QFI unchanged).

    For one qubit per node and unit direction this is the norm of ``sum Z/2``.
    """
    g = phase_generator_diagonal(assignment, np.asarray(direction, dtype=float))
    return 0.5 * float(g.max() - g.min())


def hiding_generator_norm_bound(n: int, base_h_norm: float = 0.5) -> float:
    """Triangle-inequality bound ``2 |H|`` on the hiding generator's norm."""
    if n < 2:
        raise MetrologyError("hiding generator needs n >= 2")
    return 2.0 * base_h_norm


def hiding_generator(n: int, target: int, h: np.ndarray | None = None) -> np.ndarray:
    """``H`` on ``target`` plus ``-H / (n - 1)`` on every other qubit (dense)."""
    if n < 2:
        raise MetrologyError("hiding generator needs n >= 2")
    h = Z / 2 if h is None else np.asarray(h, dtype=np.complex128)
    out = np.zeros((1 << n, 1 << n), dtype=np.complex128)
    for q in range(n):
        mats = [qcore.I2] * n
        mats[q] = h if q == target else -h / (n - 1)
        out += kron_all(mats)
    return out


@dataclass
class PrivacyResult:
    """Per-honest-node QFI about its phase after the best local hiding choice.

    ``qfi_substitution`` is the QFI under the equal-split substitution;
    ``qfi_optimal`` minimises over every choice of how the other honest
    phases co-vary with ``theta_j`` (a least-squares problem on the QFI
    matrix), and the reported ``epsilon`` uses it.
    """

    epsilon: float
    worst_node: int
    n_honest: int
    qfi_substitution: dict = field(default_factory=dict)
    qfi_optimal: dict = field(default_factory=dict)
    epsilon_substitution: float = 0.0

    def to_dict(self) -> dict:
        return {
            "epsilon": self.epsilon,
            "epsilon_substitution": self.epsilon_substitution,
            "worst_node": self.worst_node,
            "n_honest": self.n_honest,
            "qfi_substitution": {str(k): v for k, v in sorted(self.qfi_substitution.items())},
            "qfi_optimal": {str(k): v for k, v in sorted(self.qfi_optimal.items())},
        }


def _min_over_hiding(Q: np.ndarray, j: int) -> float:
    """``min_a (e_j + a)^T Q (e_j + a)`` with ``a_j = 0``."""
    m = Q.shape[0]
    if m == 1:
        return float(Q[0, 0])
    w, v = np.linalg.eigh(0.5 * (Q + Q.T))
    w = np.clip(w, 0.0, None)
    B = (v * np.sqrt(w)).T  # Q = B^T B
    others = [i for i in range(m) if i != j]
    a, *_ = np.linalg.lstsq(B[:, others], -B[:, j], rcond=None)
    r = B[:, j] + B[:, others] @ a
    return float(max(0.0, r @ r))


def privacy_epsilon(
    state: QuantumState,
    assignment: QubitAssignment,
    honest: Iterable[int],
    tolerance: float = DEFAULT_TOLERANCE,
) -> PrivacyResult:
    """Worst-case (over honest ``j``) QFI about ``theta_j`` on the honest
    reduction after hiding, divided by ``n_honest**2``."""
    honest = sorted(set(int(h) for h in honest))
    if len(honest) < 2:
        raise MetrologyError("privacy needs at least two honest nodes")
    keep = assignment.qubits_of(honest)
    if not keep:
        raise MetrologyError("honest nodes own no qubits")
    reduced = qcore.partial_trace(state, keep).density()
    sub = QubitAssignment(tuple(assignment.owners[q] for q in keep), (False,) * len(keep), assignment.n_nodes)
    gens = []
    for node in honest:
        e = np.zeros(assignment.n_nodes)
        e[node] = 1.0
        gens.append(phase_generator_diagonal(sub, e))
    Q = qfi_matrix_unitary(reduced, gens, tolerance)
    nh = len(honest)
    subst, opt = {}, {}
    for idx, j in enumerate(honest):
        d = substitution_direction(assignment.n_nodes, j, honest)[honest]
        subst[j] = float(max(0.0, d @ Q @ d))
        opt[j] = _min_over_hiding(Q, idx)
    worst = max(honest, key=lambda j: (opt[j], -j))
    return PrivacyResult(
        epsilon=opt[worst] / nh**2,
        worst_node=worst,
        n_honest=nh,
        qfi_substitution=subst,
        qfi_optimal=opt,
        epsilon_substitution=max(subst.values()) / nh**2,
    )


def cramer_rao_bound(qfi_value: float, nu: int = 1) -> float:
    if not qfi_value > 0:
        raise MetrologyError("QFI is zero: variance is unbounded")
    if nu < 1:
        raise MetrologyError("need at least one repetition")
    return 1.0 / (nu * qfi_value)
