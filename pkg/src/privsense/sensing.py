"""Secure network sensing: verified resource, local encoding, X-parity rounds,
function estimation, plus the integrity and privacy guarantees."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import _kernels, metrology, qcore
from .adversary import AdversaryModel, NetworkTopology, apply_local_unitaries
from .encoding import (
    LinearFunctionSpec,
    QubitAssignment,
    as_phases,
    encode_network,
    function_value,
    resource_state_for_function,
)
from .ghz import PauliString, local_outcome_distribution
from .qcore import QuantumState
from .verification import (
    VerificationParams,
    run_symmetrised_verification,
    run_verification,
    sample_round_acceptance,
    soundness_probability,
    symmetrised_fidelity_bound,
)

DEFAULT_WINDOW = (0.0, math.pi)


class SensingError(ValueError):
    pass


# ---------------------------------------------------------------------------
# bound arithmetic
# ---------------------------------------------------------------------------

def integrity_bias_bound(o: float, epsilon: float, d_obs: float) -> float:
    """``2 o eps / |d<O>|``."""
    if d_obs == 0:
        raise SensingError("observable slope vanishes at this operating point")
    if epsilon < 0:
        raise SensingError("epsilon must be non-negative")
    return 2.0 * o * epsilon / abs(d_obs)


def integrity_variance_bound(o: float, epsilon: float, nu: int, d_obs: float) -> float:
    """``4 o^2 (2 eps / nu + eps^2) / d<O>^2``."""
    if d_obs == 0:
        raise SensingError("observable slope vanishes at this operating point")
    if epsilon < 0 or nu < 1:
        raise SensingError("need epsilon >= 0 and nu >= 1")
    return 4.0 * o**2 * (2.0 * epsilon / nu + epsilon**2) / d_obs**2


def theorem1_epsilon(c: float, n: int) -> float:
    """A-priori closeness of an accepted resource: ``(2 sqrt(c) + 1) / n``."""
    return (2.0 * math.sqrt(c) + 1.0) / n


@dataclass(frozen=True)
class PrivacyGuarantee:
    qfi_ceiling: float
    eps_paper: float
    eps_definition: float
    probability_floor: float
    radicand: float
    clamped: bool
    # radicand of the verification fidelity bound, ``1 - 2 sqrt(c)/n - 2 n f``
    fidelity_radicand: float = math.nan

    def to_dict(self) -> dict:
        return {
            "qfi_ceiling": self.qfi_ceiling,
            "eps_paper": self.eps_paper,
            "eps_definition": self.eps_definition,
            "probability_floor": self.probability_floor,
            "radicand": self.radicand,
            "clamped": self.clamped,
            "fidelity_radicand": self.fidelity_radicand,
        }


def privacy_guarantee(c: float, n: int, f: float, honest_count: int, m: float = 1.0) -> PrivacyGuarantee:
    """QFI ceiling ``24 sqrt(2 sqrt(c)/n - 2 n f)`` and both epsilon normalisations.

    ``eps_paper`` divides by the honest count, ``eps_definition`` by its
    square (the normalisation under which epsilon-privacy is defined).  A
    negative radicand is clamped to zero and flagged.
    """
    radicand = 2.0 * math.sqrt(c) / n - 2.0 * n * f
    clamped = radicand < 0
    ceiling = 24.0 * math.sqrt(max(0.0, radicand))
    nh = max(1, honest_count)
    return PrivacyGuarantee(
        qfi_ceiling=ceiling,
        eps_paper=ceiling / nh,
        eps_definition=ceiling / nh**2,
        probability_floor=soundness_probability(m, c, n),
        radicand=radicand,
        clamped=clamped,
        fidelity_radicand=1.0 - 2.0 * math.sqrt(c) / n - 2.0 * n * f,
    )


# ---------------------------------------------------------------------------
# estimator
# ---------------------------------------------------------------------------

def _branch_offset(window) -> tuple[int, float, float]:
    lo, hi = float(window[0]), float(window[1])
    if not hi > lo or hi - lo > math.pi + 1e-12:
        raise SensingError(f"branch window {window} must be an interval of length <= pi")
    k = math.floor(lo / math.pi + 1e-12)
    if hi > (k + 1) * math.pi + 1e-12:
        raise SensingError(f"branch window {window} straddles a multiple of pi")
    return k, lo, hi


def phase_sum_from_parity(mean_parity: float, window=DEFAULT_WINDOW) -> tuple[float, bool]:
    """Invert ``<X...X> = cos(S)`` inside ``window``.  Returns ``(S, clipped)``."""
    k, lo, hi = _branch_offset(window)
    m = min(1.0, max(-1.0, mean_parity))
    s = k * math.pi + (math.acos(m) if k % 2 == 0 else math.acos(-m))
    clipped = not lo - 1e-12 <= s <= hi + 1e-12
    return min(hi, max(lo, s)), clipped


def parity_estimator(round_parities, spec: LinearFunctionSpec, n_qubits: Optional[int] = None,
                     branch_window=DEFAULT_WINDOW) -> float:
    """``M * arccos(mean parity)``: the estimate of ``M sum k_i theta_i``.

    For the average with ``k_i = 1`` and ``M = 1/n`` this is
    ``arccos(mean) / n``.
    """
    p = np.asarray(round_parities)
    if p.size == 0:
        raise SensingError("no parities to estimate from")
    if n_qubits is not None and n_qubits != spec.total_qubits:
        raise SensingError(f"resource has {n_qubits} qubits, function needs {spec.total_qubits}")
    s, _ = phase_sum_from_parity(float(np.mean(p)), branch_window)
    return spec.M * s


# ---------------------------------------------------------------------------
# protocol
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SensingParams:
    nu: int
    verification: VerificationParams
    function: LinearFunctionSpec
    phases: tuple
    branch_window: tuple = DEFAULT_WINDOW

    def __post_init__(self):
        if self.nu < 1:
            raise SensingError("nu must be >= 1")
        object.__setattr__(self, "phases", tuple(as_phases(self.phases, self.function.n_nodes)))
        if self.verification.n != self.function.total_qubits:
            raise SensingError(
                f"verification n={self.verification.n} but the resource has "
                f"{self.function.total_qubits} qubits"
            )
        _branch_offset(self.branch_window)


@dataclass(frozen=True)
class RoundRecord:
    index: int
    accepted: bool
    f: float
    node_parities: Optional[tuple] = None

    @property
    def parity(self) -> Optional[int]:
        if self.node_parities is None:
            return None
        return int(np.prod(self.node_parities))


@dataclass
class EstimateReport:
    estimate: float
    true_value: float
    mean_parity: float
    rounds_used: int
    rounds_discarded: int
    standard_error: float
    bias: float
    branch_clipped: bool
    o: float
    d_obs_estimate: float
    d_obs_true: float
    theorem1_epsilon: float
    bias_bound: Optional[float]
    variance_bound: Optional[float]
    privacy: PrivacyGuarantee
    soundness_probability: float
    mean_f_accepted: float
    rounds: Optional[list] = None
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = {
            "estimate": self.estimate,
            "true_value": self.true_value,
            "mean_parity": self.mean_parity,
            "rounds_used": self.rounds_used,
            "rounds_discarded": self.rounds_discarded,
            "standard_error": self.standard_error,
            "bias": self.bias,
            "branch_clipped": self.branch_clipped,
            "o": self.o,
            "d_obs_estimate": self.d_obs_estimate,
            "d_obs_true": self.d_obs_true,
            "theorem1_epsilon": self.theorem1_epsilon,
            "bias_bound": self.bias_bound,
            "bias_bound_applicable": self.bias_bound is not None,
            "variance_bound": self.variance_bound,
            "variance_bound_applicable": self.variance_bound is not None,
            "privacy": self.privacy.to_dict(),
            "soundness_probability": self.soundness_probability,
            "mean_f_accepted": self.mean_f_accepted,
        }
        out.update(self.extra)
        return out


def sensing_phases(params: SensingParams, topo: NetworkTopology, model: AdversaryModel) -> np.ndarray:
    """Phases actually imprinted: dishonest nodes with ``skip_encoding`` imprint 0."""
    theta = np.array(params.phases, dtype=float)
    for node in topo.dishonest:
        if model.behavior(node, topo).skip_encoding:
            theta[node] = 0.0
    return theta


def node_parity_distribution(state: QuantumState, assignment: QubitAssignment) -> tuple[np.ndarray, np.ndarray]:
    """Cumulative X-basis outcome distribution and per-node qubit masks."""
    n = state.n_qubits
    probs = local_outcome_distribution(state, PauliString(1, "X" * n))
    masks = np.zeros(assignment.n_nodes, dtype=np.int64)
    for q, owner in enumerate(assignment.owners):
        masks[owner] |= 1 << (n - 1 - q)
    return np.cumsum(probs), masks


def _sample_parities(rng, cdf, masks, flip_q, count) -> np.ndarray:
    """Announced node parities, shape ``(count, n_nodes)``, entries +-1."""
    u = rng.random(count)
    idx = np.minimum(np.searchsorted(cdf, u * cdf[-1], side="right"), cdf.shape[0] - 1).astype(np.int64)
    out = np.empty((count, masks.shape[0]), dtype=np.int64)
    for node, mask in enumerate(masks):
        out[:, node] = 1 - 2 * _kernels.parity(idx & mask)
    flips = rng.random((count, masks.shape[0])) < flip_q[None, :]
    return np.where(flips, -out, out)


def _round_measurement(target, params, topo, model, assignment):
    theta = sensing_phases(params, topo, model)
    encoded = encode_network(target, theta, assignment)
    measured = apply_local_unitaries(encoded, model, topo, assignment)
    return node_parity_distribution(measured, assignment)


def run_sensing_protocol(
    params: SensingParams,
    topo: NetworkTopology,
    model: Optional[AdversaryModel] = None,
    rng_seed=0,
    *,
    record_rounds: bool = False,
) -> EstimateReport:
    model = model or AdversaryModel()
    spec = params.function
    if topo.n_nodes != spec.n_nodes:
        raise SensingError("topology and function disagree on node count")
    resource, assignment = resource_state_for_function(spec)
    vp = params.verification
    rng = qcore.resolve_rng(rng_seed)
    nu = params.nu
    flip_q = np.array([model.behavior(i, topo).flip_q for i in range(topo.n_nodes)])

    if model.copies_identical:
        accepted, f, target = sample_round_acceptance(vp, topo, model, nu, rng, assignment=assignment, ideal=resource)
        n_acc = int(accepted.sum())
        parities = np.empty((0, topo.n_nodes), dtype=np.int64)
        if n_acc:
            cdf, masks = _round_measurement(target, params, topo, model, assignment)
            parities = _sample_parities(rng, cdf, masks, flip_q, n_acc)
        node_par = np.zeros((nu, topo.n_nodes), dtype=np.int64)
        node_par[accepted] = parities
    else:
        runner = run_verification if vp.lam == 1 else run_symmetrised_verification
        children = np.random.SeedSequence(int(rng.integers(0, 2**62))).spawn(nu)
        accepted = np.zeros(nu, dtype=bool)
        f = np.zeros(nu)
        node_par = np.zeros((nu, topo.n_nodes), dtype=np.int64)
        for r, child in enumerate(children):
            rr = np.random.default_rng(child)
            out = runner(vp, topo, model, rr, assignment=assignment, ideal=resource, record_tests=False)
            accepted[r], f[r] = out.accepted, out.transcript.f
            if out.accepted:
                cdf, masks = _round_measurement(out.target_state, params, topo, model, assignment)
                node_par[r] = _sample_parities(rr, cdf, masks, flip_q, 1)[0]

    n_acc = int(accepted.sum())
    if n_acc == 0:
        raise SensingError("verification rejected every round; no estimate possible")
    round_parity = np.prod(node_par[accepted], axis=1)
    mean_parity = float(np.mean(round_parity))
    s_hat, clipped = phase_sum_from_parity(mean_parity, params.branch_window)
    estimate = spec.M * s_hat
    truth = function_value(spec, params.phases)
    s_true = truth / spec.M
    o = 1.0
    d_est = abs(math.sin(s_hat)) / abs(spec.M)
    d_true = abs(math.sin(s_true)) / abs(spec.M)
    eps1 = theorem1_epsilon(vp.c, vp.n)
    bias_b = integrity_bias_bound(o, eps1, d_est) if d_est > 0 else None
    var_b = integrity_variance_bound(o, eps1, nu, d_est) if d_est > 0 else None
    f_acc = f[accepted]
    if vp.lam == 1:
        sp = soundness_probability(vp.m, vp.c, vp.n)
    else:
        sp = symmetrised_fidelity_bound(vp.c, vp.n, float(f_acc.max()), vp.lam, topo.n_honest, vp.m)[1]
    rounds = None
    if record_rounds:
        rounds = [
            RoundRecord(r, bool(accepted[r]), float(f[r]),
                        tuple(int(v) for v in node_par[r]) if accepted[r] else None)
            for r in range(nu)
        ]
    return EstimateReport(
        estimate=estimate,
        true_value=truth,
        mean_parity=mean_parity,
        rounds_used=n_acc,
        rounds_discarded=nu - n_acc,
        standard_error=abs(spec.M) / math.sqrt(n_acc),
        bias=estimate - truth,
        branch_clipped=clipped,
        o=o,
        d_obs_estimate=d_est,
        d_obs_true=d_true,
        theorem1_epsilon=eps1,
        bias_bound=bias_b,
        variance_bound=var_b,
        privacy=privacy_guarantee(vp.c, vp.n, float(f_acc.max()), topo.n_honest, vp.m),
        soundness_probability=sp,
        mean_f_accepted=float(f_acc.mean()),
        rounds=rounds,
    )


# ---------------------------------------------------------------------------
# privacy audit
# ---------------------------------------------------------------------------

@dataclass
class PrivacyAudit:
    accepted: bool
    f: float
    measured: Optional[metrology.PrivacyResult]
    guarantee: PrivacyGuarantee
    within_ceiling: Optional[bool]

    def to_dict(self) -> dict:
        return {
            "accepted": self.accepted,
            "f": self.f,
            "measured_epsilon": None if self.measured is None else self.measured.epsilon,
            "measured": None if self.measured is None else self.measured.to_dict(),
            "guarantee": self.guarantee.to_dict(),
            "within_ceiling": self.within_ceiling,
        }


def audit_state(state: QuantumState, assignment: QubitAssignment, topo: NetworkTopology,
                vp: VerificationParams, f: float, accepted: bool = True) -> PrivacyAudit:
    """Measured privacy epsilon of a concrete resource next to the guaranteed ceilings."""
    g = privacy_guarantee(vp.c, vp.n, f, topo.n_honest, vp.m)
    measured = None
    within = None
    if topo.n_honest >= 2:
        measured = metrology.privacy_epsilon(state, assignment, topo.honest)
        within = bool(measured.epsilon <= g.eps_definition + 1e-9)
    return PrivacyAudit(accepted, f, measured, g, within)


def empirical_privacy_audit(
    params: SensingParams,
    topo: NetworkTopology,
    model: Optional[AdversaryModel] = None,
    rng_seed=0,
) -> PrivacyAudit:
    """One verification run; on acceptance, the privacy epsilon of the actual target."""
    model = model or AdversaryModel()
    resource, assignment = resource_state_for_function(params.function)
    vp = params.verification
    runner = run_verification if vp.lam == 1 else run_symmetrised_verification
    out = runner(vp, topo, model, rng_seed, assignment=assignment, ideal=resource, record_tests=False)
    if not out.accepted:
        g = privacy_guarantee(vp.c, vp.n, out.transcript.f, topo.n_honest, vp.m)
        return PrivacyAudit(False, out.transcript.f, None, g, None)
    return audit_state(out.target_state, assignment, topo, vp, out.transcript.f)
