"""Stabiliser verification of a distributed GHZ resource.

Two variants: a single honest Verifier (``lam == 1``) and the symmetrised
version where a trusted common random source picks ``lam`` random Verifiers
per generator (``lam >= 2``).

Tests are simulated from exact outcome distributions of each prepared copy;
post-measurement states are never built because tested copies are discarded.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import _kernels, qcore
from .adversary import (
    CRS,
    AdversaryModel,
    NetworkTopology,
    apply_local_unitaries,
    honest_reduced,
    prepare_copy,
    qubit_flip_probabilities,
)
from .encoding import QubitAssignment
from .ghz import StabilizerSet, ghz_state, local_outcome_distribution, stabilizer_generators
from .qcore import QuantumState


class VerificationError(ValueError):
    pass


# ---------------------------------------------------------------------------
# parameter arithmetic
# ---------------------------------------------------------------------------

def required_tests(m: float, n: int) -> int:
    """``ceil(m n^4 ln n)`` tests per generator."""
    if n < 2:
        raise VerificationError("verification needs n >= 2 (ln 1 = 0)")
    if not m > 0:
        raise VerificationError("m must be positive")
    return int(math.ceil(m * n**4 * math.log(n)))


def total_copies(n: int, n_test: int, lam: int = 1) -> int:
    """``2 n N_test`` for one Verifier, ``(lam+1) lam n N_test`` symmetrised."""
    return (lam + 1) * lam * n * n_test


def acceptance_threshold(n: int, lam: int = 1) -> float:
    if n < 2:
        raise VerificationError("threshold needs n >= 2")
    return 1.0 / (2 * lam * n**2)


def fidelity_bound(c: float, n: int, f: float, *, clamp: bool = True) -> float:
    """Honest-reduced fidelity floor ``1 - 2 sqrt(c)/n - 2 n f``."""
    v = 1.0 - 2.0 * math.sqrt(c) / n - 2.0 * n * f
    return max(0.0, v) if clamp else v


def soundness_probability(m: float, c: float, n: int, *, clamp: bool = True) -> float:
    """Probability floor ``1 - n^{1 - 2mc/3}`` for the fidelity floor to hold."""
    v = 1.0 - n ** (1.0 - 2.0 * m * c / 3.0)
    return max(0.0, v) if clamp else v


def symmetrised_fidelity_bound(c: float, n: int, f: float, lam: int, honest_count: int, m: float,
                               *, clamp: bool = True) -> tuple[float, float]:
    """``(fidelity_floor, probability_floor)`` for the symmetrised protocol."""
    if lam < 1:
        raise VerificationError("lambda must be >= 1")
    fid = 1.0 - (1.0 / lam - 1.0 / lam**2) - (1.0 + 1.0 / lam) * (math.sqrt(c) / n + lam * n * f)
    h = honest_count / n
    decay = n ** (-2.0 * c * m / 3.0)
    prob = 1.0 - sum((1.0 - h) ** x * (h * decay) ** (lam - x) for x in range(lam + 1))
    if clamp:
        fid = min(1.0, max(0.0, fid))
        prob = min(1.0, max(0.0, prob))
    return fid, prob


@dataclass(frozen=True)
class VerificationParams:
    m: float
    c: float
    n: int
    lam: int = 1
    n_test_override: Optional[int] = None
    allow_invalid: bool = False

    def __post_init__(self):
        if not (self.m > 0 and self.c > 0):
            raise VerificationError("m and c must be positive")
        if self.n < 2:
            raise VerificationError("verification needs n >= 2")
        if self.lam < 1:
            raise VerificationError("lambda must be a positive integer")
        if self.n_test_override is not None and self.n_test_override < 1:
            raise VerificationError("N_test override must be >= 1")

    @property
    def n_test(self) -> int:
        return self.n_test_override or required_tests(self.m, self.n)

    @property
    def n_total(self) -> int:
        return total_copies(self.n, self.n_test, self.lam)

    @property
    def threshold(self) -> float:
        return acceptance_threshold(self.n, self.lam)

    def constraint_violations(self) -> list[str]:
        lo, hi = 3.0 / (2.0 * self.m), (self.n - 1) ** 2 / 4.0
        out = []
        if not self.c > lo:
            out.append(f"c={self.c} must exceed 3/(2m)={lo:.6g}")
        if not self.c < hi:
            out.append(f"c={self.c} must be below (n-1)^2/4={hi:.6g}")
        return out

    @property
    def bounds_applicable(self) -> bool:
        return not self.constraint_violations()

    def check(self) -> None:
        v = self.constraint_violations()
        if v and not self.allow_invalid:
            raise VerificationError("parameter constraint violated: " + "; ".join(v))

    def to_dict(self) -> dict:
        return {
            "m": self.m,
            "c": self.c,
            "n": self.n,
            "lambda": self.lam,
            "n_test": self.n_test,
            "n_total": self.n_total,
            "threshold": self.threshold,
            "allow_invalid": self.allow_invalid,
            "bounds_applicable": self.bounds_applicable,
        }


# ---------------------------------------------------------------------------
# transcripts
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TestRecord:
    copy_index: int
    generator: str
    generator_index: int
    set_index: int
    verifier: int
    outcomes: tuple[int, ...]
    passed: bool

    def to_dict(self) -> dict:
        return {
            "record": "test",
            "copy_index": self.copy_index,
            "generator": self.generator,
            "generator_index": self.generator_index,
            "set_index": self.set_index,
            "verifier": self.verifier,
            "outcomes": list(self.outcomes),
            "verdict": "pass" if self.passed else "fail",
        }


@dataclass
class VerificationTranscript:
    """``failure_rates[j]`` counts -1 outcomes over ``N_test`` (so it reaches
    ``lam`` in the symmetrised protocol); ``f`` averages over ``lam * n``."""

    failure_rates: np.ndarray
    set_failure_rates: np.ndarray
    f: float
    n_test: int
    lam: int
    n_total: int
    copies_tested: int
    copies_discarded: int
    target_index: int
    accepted: bool
    verifiers: np.ndarray
    tests: Optional[list] = None

    def summary(self) -> dict:
        return {
            "failure_rates": [float(v) for v in self.failure_rates],
            "f": self.f,
            "n_test": self.n_test,
            "lambda": self.lam,
            "n_total": self.n_total,
            "copies_tested": self.copies_tested,
            "copies_discarded": self.copies_discarded,
            "target_index": self.target_index,
            "accepted": self.accepted,
            "verifiers": [[int(v) for v in row] for row in self.verifiers],
        }


@dataclass
class VerificationOutcome:
    accepted: bool
    target_state: QuantumState
    honest_reduced_fidelity: float
    fidelity_bound: float
    soundness_probability: float
    bounds_applicable: bool
    transcript: VerificationTranscript
    fidelity_bound_clamped: bool = False
    soundness_clamped: bool = False
    extra: dict = field(default_factory=dict)

    def summary(self) -> dict:
        out = {
            "accepted": self.accepted,
            "honest_reduced_fidelity": self.honest_reduced_fidelity,
            "fidelity_bound": self.fidelity_bound,
            "fidelity_bound_clamped": self.fidelity_bound_clamped,
            "soundness_probability": self.soundness_probability,
            "soundness_clamped": self.soundness_clamped,
            "bounds_applicable": self.bounds_applicable,
            "transcript": self.transcript.summary(),
        }
        out.update(self.extra)
        return out


# ---------------------------------------------------------------------------
# simulation
# ---------------------------------------------------------------------------

@dataclass
class _Setup:
    params: VerificationParams
    topo: NetworkTopology
    model: AdversaryModel
    assignment: QubitAssignment
    ideal: QuantumState
    generators: StabilizerSet


def _setup(params, topo, model, assignment, ideal) -> _Setup:
    params.check()
    assignment = assignment or QubitAssignment.one_per_node(topo.n_nodes)
    if assignment.n_nodes != topo.n_nodes:
        raise VerificationError("assignment and topology disagree on node count")
    if ideal is None:
        ideal = ghz_state(assignment.n_qubits)
    if ideal.n_qubits != params.n:
        raise VerificationError(f"params.n={params.n} but the resource has {ideal.n_qubits} qubits")
    gens = stabilizer_generators(params.n).conjugate_by_x(assignment.flipped_qubits)
    if params.lam == 1:
        if topo.verifier == CRS:
            raise VerificationError("single-Verifier protocol needs a Verifier node, not the CRS")
        if topo.verifier not in topo.honest:
            raise VerificationError("the Verifier must be honest in the single-Verifier protocol")
    return _Setup(params, topo, model, assignment, ideal, gens)


def _draw_verifiers(rng, s: _Setup, shape) -> np.ndarray:
    if s.params.lam == 1:
        return np.full(shape, int(s.topo.verifier), dtype=np.int64)
    return rng.integers(0, s.topo.n_nodes, size=shape)


def _verifier_overrides(s: _Setup, verifiers: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Masks of (generator, set) slots whose Verifier reports all-fail / all-pass."""
    all_fail = np.zeros(verifiers.shape, dtype=bool)
    all_pass = np.zeros(verifiers.shape, dtype=bool)
    for node in s.topo.dishonest:
        rep = s.model.behavior(node, s.topo).verifier_report
        if rep == "all-fail":
            all_fail |= verifiers == node
        elif rep == "all-pass":
            all_pass |= verifiers == node
    return all_fail, all_pass


def _measured_copy(s: _Setup, state: QuantumState) -> QuantumState:
    return apply_local_unitaries(state, s.model, s.topo, s.assignment)


def _odd_flip_probability(s: _Setup) -> float:
    q = qubit_flip_probabilities(s.model, s.topo, s.assignment)
    return 0.5 * (1.0 - float(np.prod(1.0 - 2.0 * q)))


def _attack_rng(s: _Setup, salt: int, copy_index: int) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=int(s.model.coordination_seed), spawn_key=(int(salt), int(copy_index)))
    return np.random.default_rng(ss)


def effective_failure_probabilities(s: _Setup, copy: QuantumState) -> np.ndarray:
    """Per-generator probability that a test on ``copy`` is *reported* as -1."""
    measured = _measured_copy(s, copy)
    p = np.array([0.5 * (1.0 - g.expectation(measured)) for g in s.generators])
    p = np.clip(p, 0.0, 1.0)
    r = _odd_flip_probability(s)
    return p * (1.0 - r) + (1.0 - p) * r


def _finish(s: _Setup, fails: np.ndarray, verifiers: np.ndarray, target_index: int,
            target: QuantumState, tests: Optional[list]) -> VerificationOutcome:
    p = s.params
    n, lam, nt = p.n, p.lam, p.n_test
    set_rates = fails / nt
    f_j = set_rates.sum(axis=1)
    f = float(f_j.sum() / (lam * n))
    accepted = bool(f <= p.threshold)
    tested = lam * n * nt
    transcript = VerificationTranscript(
        failure_rates=f_j,
        set_failure_rates=set_rates,
        f=f,
        n_test=nt,
        lam=lam,
        n_total=p.n_total,
        copies_tested=tested,
        copies_discarded=p.n_total - tested - 1,
        target_index=int(target_index),
        accepted=accepted,
        verifiers=verifiers,
        tests=tests,
    )
    ideal_h = honest_reduced(s.ideal, s.topo, s.assignment)
    target_h = honest_reduced(target, s.topo, s.assignment)
    true_fid = qcore.fidelity(target_h, ideal_h)
    extra = {}
    if lam == 1:
        fb_raw = fidelity_bound(p.c, n, f, clamp=False)
        sp_raw = soundness_probability(p.m, p.c, n, clamp=False)
    else:
        fb_raw, sp_raw = symmetrised_fidelity_bound(p.c, n, f, lam, s.topo.n_honest, p.m, clamp=False)
        extra["symmetrised"] = True
    fb, sp = min(1.0, max(0.0, fb_raw)), min(1.0, max(0.0, sp_raw))
    return VerificationOutcome(
        accepted=accepted,
        target_state=target,
        honest_reduced_fidelity=true_fid,
        fidelity_bound=fb,
        soundness_probability=sp,
        bounds_applicable=p.bounds_applicable and s.topo.n_honest > 0,
        transcript=transcript,
        fidelity_bound_clamped=fb != fb_raw,
        soundness_clamped=sp != sp_raw,
        extra=extra,
    )


def _run(params, topo, model, rng_seed, assignment, ideal, record_tests) -> VerificationOutcome:
    s = _setup(params, topo, model, assignment, ideal)
    rng = qcore.resolve_rng(rng_seed)
    p = s.params
    n, lam, nt = p.n, p.lam, p.n_test
    n_tested = lam * n * nt
    salt = int(rng.integers(0, 2**62))
    perm = rng.permutation(p.n_total)
    slots = perm[:n_tested].reshape(n, lam, nt)
    untested = perm[n_tested:]
    target_index = int(untested[rng.integers(0, untested.shape[0])])
    verifiers = _draw_verifiers(rng, s, (n, lam))
    all_fail, all_pass = _verifier_overrides(s, verifiers)

    identical = model.copies_identical
    base = prepare_copy(model, topo, s.ideal, 0, None, s.assignment) if identical else None

    def copy_at(idx):
        if identical:
            return base
        return prepare_copy(model, topo, s.ideal, idx, _attack_rng(s, salt, idx), s.assignment)

    if not record_tests and identical:
        p_eff = effective_failure_probabilities(s, base)
        fails = rng.binomial(nt, np.repeat(p_eff[:, None], lam, axis=1)).astype(np.int64)
        fails = np.where(all_fail, nt, np.where(all_pass, 0, fails))
        return _finish(s, fails, verifiers, target_index, base, None)

    flip_q = qubit_flip_probabilities(model, topo, s.assignment)
    weights = 1 << np.arange(n - 1, -1, -1, dtype=np.int64)
    fails = np.zeros((n, lam), dtype=np.int64)
    tests: Optional[list] = [] if record_tests else None
    dist_cache: dict = {}
    for j, gen in enumerate(s.generators):
        copy_ids = slots[j].reshape(-1)
        m = copy_ids.shape[0]
        if identical:
            key = (j, -1)
            if key not in dist_cache:
                dist_cache[key] = np.cumsum(local_outcome_distribution(_measured_copy(s, base), gen))
            cdf = dist_cache[key]
            u = rng.random(m)
            idx = np.minimum(np.searchsorted(cdf, u * cdf[-1], side="right"), cdf.shape[0] - 1)
        else:
            idx = np.empty(m, dtype=np.int64)
            u = rng.random(m)
            for t, cid in enumerate(copy_ids):
                cdf = np.cumsum(local_outcome_distribution(_measured_copy(s, copy_at(int(cid))), gen))
                idx[t] = min(np.searchsorted(cdf, u[t] * cdf[-1], side="right"), cdf.shape[0] - 1)
        flips = (rng.random((m, n)) < flip_q[None, :]) @ weights
        reported = idx.astype(np.int64) ^ flips
        outcome = gen.sign * (1 - 2 * _kernels.parity(reported))
        failed = (outcome < 0).reshape(lam, nt)
        for sidx in range(lam):
            if all_fail[j, sidx]:
                failed[sidx] = True
            elif all_pass[j, sidx]:
                failed[sidx] = False
        fails[j] = failed.sum(axis=1)
        if tests is not None:
            bits = _kernels.bit_table(reported, n)
            flat_failed = failed.reshape(-1)
            for t in range(m):
                sidx = t // nt
                tests.append(TestRecord(
                    copy_index=int(copy_ids[t]),
                    generator=str(gen),
                    generator_index=j,
                    set_index=sidx,
                    verifier=int(verifiers[j, sidx]),
                    outcomes=tuple(int(1 - 2 * b) for b in bits[t]),
                    passed=not bool(flat_failed[t]),
                ))
    target = copy_at(target_index)
    return _finish(s, fails, verifiers, target_index, target, tests)


def run_verification(
    params: VerificationParams,
    topo: NetworkTopology,
    model: Optional[AdversaryModel] = None,
    rng_seed=0,
    *,
    assignment: Optional[QubitAssignment] = None,
    ideal: Optional[QuantumState] = None,
    record_tests: bool = True,
) -> VerificationOutcome:
    """Single-Verifier protocol.

    With ``record_tests=False`` and identical copies, failure counts are
    drawn as binomials of the exact per-test failure probability (same
    distribution, no per-test records).
    """
    if params.lam != 1:
        raise VerificationError("use run_symmetrised_verification for lambda > 1")
    return _run(params, topo, model or AdversaryModel(), rng_seed, assignment, ideal, record_tests)


def run_symmetrised_verification(
    params: VerificationParams,
    topo: NetworkTopology,
    model: Optional[AdversaryModel] = None,
    rng_seed=0,
    *,
    assignment: Optional[QubitAssignment] = None,
    ideal: Optional[QuantumState] = None,
    record_tests: bool = True,
) -> VerificationOutcome:
    """CRS-driven protocol: ``lam`` sets of ``N_test`` per generator, each with a random Verifier."""
    return _run(params, topo, model or AdversaryModel(), rng_seed, assignment, ideal, record_tests)


def sample_round_acceptance(
    params: VerificationParams,
    topo: NetworkTopology,
    model: AdversaryModel,
    rounds: int,
    rng,
    *,
    assignment: Optional[QubitAssignment] = None,
    ideal: Optional[QuantumState] = None,
) -> tuple[np.ndarray, np.ndarray, QuantumState]:
    """Vectorised verification for many independent rounds with identical copies.

    Returns ``(accepted[rounds], f[rounds], target_state)``.
    """
    if not model.copies_identical:
        raise VerificationError("vectorised rounds need identical copies")
    s = _setup(params, topo, model, assignment, ideal)
    rng = qcore.resolve_rng(rng)
    p = s.params
    base = prepare_copy(model, topo, s.ideal, 0, None, s.assignment)
    p_eff = effective_failure_probabilities(s, base)
    verifiers = _draw_verifiers(rng, s, (rounds, p.n, p.lam))
    all_fail, all_pass = _verifier_overrides(s, verifiers)
    fails = rng.binomial(p.n_test, np.broadcast_to(p_eff[None, :, None], (rounds, p.n, p.lam)))
    fails = np.where(all_fail, p.n_test, np.where(all_pass, 0, fails))
    f = fails.sum(axis=(1, 2)) / (p.n_test * p.lam * p.n)
    return f <= p.threshold, f, base
