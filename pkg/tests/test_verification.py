import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from privsense.adversary import (
    CRS,
    AdversaryModel,
    ChannelNoise,
    DishonestBehavior,
    NetworkTopology,
    SourceAttack,
)
from privsense.encoding import LinearFunctionSpec, resource_state_for_function
from privsense.qcore import Z, basis_state
from privsense.verification import (
    VerificationError,
    VerificationParams,
    acceptance_threshold,
    fidelity_bound,
    required_tests,
    run_symmetrised_verification,
    run_verification,
    sample_round_acceptance,
    soundness_probability,
    symmetrised_fidelity_bound,
    total_copies,
)

P4 = VerificationParams(m=1, c=2, n=4)


class TestArithmetic:
    def test_required_tests(self):
        assert required_tests(1, 4) == 355
        assert required_tests(2, 2) == 23
        with pytest.raises(VerificationError):
            required_tests(1, 1)

    def test_total_copies(self):
        assert total_copies(4, 355, 1) == 2840
        assert total_copies(3, 10, 2) == 180

    @given(st.integers(2, 20), st.integers(1, 1000))
    def test_total_copies_lambda_one(self, n, nt):
        assert total_copies(n, nt, 1) == 2 * n * nt

    def test_threshold(self):
        assert acceptance_threshold(4, 1) == 0.03125
        assert acceptance_threshold(10, 1) == 0.005
        assert acceptance_threshold(4, 2) == 0.015625

    def test_fidelity_bound(self):
        assert fidelity_bound(1, 10, 0) == pytest.approx(0.8)
        assert fidelity_bound(1, 10, 1 / 200) == pytest.approx(0.7)
        assert fidelity_bound(100, 4, 0) == 0.0
        assert fidelity_bound(100, 4, 0, clamp=False) < 0

    def test_soundness(self):
        assert soundness_probability(1, 2, 4) == pytest.approx(1 - 4 ** (-1 / 3))
        assert soundness_probability(1, 1.5, 4) == pytest.approx(0.0, abs=1e-15)
        assert soundness_probability(1, 2, 100) == pytest.approx(0.7846, abs=1e-4)

    @given(st.floats(0.1, 5), st.integers(2, 12), st.floats(0, 0.1))
    def test_symmetrised_reduces_at_lambda_one(self, c, n, f):
        fid, _ = symmetrised_fidelity_bound(c, n, f, 1, n, 1.0, clamp=False)
        assert fid == pytest.approx(1 - 2 * (math.sqrt(c) / n + n * f))

    def test_symmetrised_value(self):
        fid, _ = symmetrised_fidelity_bound(1, 10, 0, 2, 10, 1.0)
        assert fid == pytest.approx(0.6)

    @given(st.floats(1.6, 4), st.integers(3, 10), st.integers(1, 4))
    def test_symmetrised_all_honest_probability(self, c, n, lam):
        _, prob = symmetrised_fidelity_bound(c, n, 0.0, lam, n, 1.0, clamp=False)
        assert prob == pytest.approx(1 - (n ** (-2 * c / 3)) ** lam)

    def test_symmetrised_no_honest_clamps(self):
        fid, prob = symmetrised_fidelity_bound(2, 4, 0.0, 2, 0, 1.0)
        assert 0.0 <= prob <= 1.0 and 0.0 <= fid <= 1.0


class TestParams:
    def test_derived(self):
        assert (P4.n_test, P4.n_total, P4.threshold) == (355, 2840, 0.03125)

    def test_constraint_rejected(self):
        bad = VerificationParams(m=1, c=1, n=4)
        assert any("3/(2m)" in v for v in bad.constraint_violations())
        with pytest.raises(VerificationError):
            run_verification(bad, NetworkTopology(4), rng_seed=0)

    def test_override_labels_bounds(self):
        p = VerificationParams(m=1, c=1, n=4, allow_invalid=True, n_test_override=20)
        out = run_verification(p, NetworkTopology(4), rng_seed=1)
        assert out.accepted and not out.bounds_applicable

    def test_dishonest_verifier_rejected(self):
        with pytest.raises(VerificationError):
            run_verification(P4, NetworkTopology(4, honest={1, 2, 3}, verifier=0), rng_seed=0)

    def test_crs_needs_symmetrised(self):
        with pytest.raises(VerificationError):
            run_verification(P4, NetworkTopology(4, verifier=CRS), rng_seed=0)


class TestProtocol:
    def test_honest_accepts(self):
        out = run_verification(P4, NetworkTopology(4), rng_seed=3)
        t = out.transcript
        assert out.accepted and t.f == 0.0
        assert out.honest_reduced_fidelity == pytest.approx(1.0)
        assert len(t.tests) == 4 * 355
        assert t.copies_tested + t.copies_discarded + 1 == t.n_total

    def test_copy_accounting(self):
        out = run_verification(P4, NetworkTopology(4), rng_seed=8)
        ids = [r.copy_index for r in out.transcript.tests]
        assert len(set(ids)) == len(ids)
        assert out.transcript.target_index not in set(ids)
        assert all(0 <= i < 2840 for i in ids)
        per_gen = np.bincount([r.generator_index for r in out.transcript.tests])
        assert list(per_gen) == [355] * 4

    def test_zero_source_rejected(self):
        model = AdversaryModel(source=SourceAttack("fixed", basis_state([0] * 4)))
        out = run_verification(P4, NetworkTopology(4), model, rng_seed=5)
        assert not out.accepted
        assert np.all(np.abs(out.transcript.failure_rates - 0.5) < 0.1)

    def test_lying_node_rejected(self):
        model = AdversaryModel(dishonest={2: DishonestBehavior(flip_q=1.0)})
        out = run_verification(P4, NetworkTopology(4, honest={0, 1, 3}), model, rng_seed=5)
        assert not out.accepted
        assert np.allclose(out.transcript.failure_rates, 1.0)

    def test_records_reproduce_transcript(self):
        model = AdversaryModel(channels={1: ChannelNoise("dephasing", 0.2)})
        out = run_verification(P4, NetworkTopology(4), model, rng_seed=2)
        t = out.transcript
        for j in range(4):
            recs = [r for r in t.tests if r.generator_index == j]
            assert sum(not r.passed for r in recs) / t.n_test == pytest.approx(t.failure_rates[j])
            for r in recs[:50]:
                sign = -1 if r.generator.startswith("-") else 1
                assert r.passed == (sign * int(np.prod(r.outcomes)) > 0)

    def test_f_is_mean_of_rates(self):
        model = AdversaryModel(channels={0: ChannelNoise("depolarizing", 0.1)})
        out = run_verification(P4, NetworkTopology(4), model, rng_seed=4)
        t = out.transcript
        assert t.f == pytest.approx(t.failure_rates.sum() / 4, abs=1e-12)
        assert np.all((0 <= t.failure_rates) & (t.failure_rates <= 1))
        assert t.accepted == (t.f <= P4.threshold)

    def test_deterministic(self):
        model = AdversaryModel(channels={1: ChannelNoise("dephasing", 0.02)})
        a = run_verification(P4, NetworkTopology(4), model, rng_seed=99)
        b = run_verification(P4, NetworkTopology(4), model, rng_seed=99)
        assert a.transcript.summary() == b.transcript.summary()
        assert [r.to_dict() for r in a.transcript.tests] == [r.to_dict() for r in b.transcript.tests]

    def test_binomial_path_same_distribution(self):
        model = AdversaryModel(channels={1: ChannelNoise("dephasing", 0.1)})
        fa = [run_verification(P4, NetworkTopology(4), model, rng_seed=s).transcript.f for s in range(40)]
        fb = [run_verification(P4, NetworkTopology(4), model, rng_seed=s, record_tests=False).transcript.f
              for s in range(40)]
        # every generator fails with probability 0.1
        se = math.sqrt(0.1 * 0.9 / (4 * 355 * 40))
        assert abs(np.mean(fa) - 0.1) < 4 * se
        assert abs(np.mean(fb) - 0.1) < 4 * se

    def test_general_resource(self):
        spec = LinearFunctionSpec(1.0, (2, -1))
        ideal, a = resource_state_for_function(spec)
        p = VerificationParams(m=2, c=0.9, n=3, n_test_override=50)
        out = run_verification(p, NetworkTopology(2), rng_seed=1, assignment=a, ideal=ideal)
        assert out.accepted and out.transcript.f == 0.0

    def test_monotone_in_dephasing(self):
        means = []
        for p in np.arange(0, 0.55, 0.1):
            model = AdversaryModel(channels={1: ChannelNoise("dephasing", float(p))})
            rng = np.random.default_rng(17)
            _, f, _ = sample_round_acceptance(P4, NetworkTopology(4), model, 200, rng)
            means.append(f.mean())
        assert all(b >= a for a, b in zip(means, means[1:]))

    def test_adaptive_callback_is_used(self):
        calls = []

        def cb(idx, state, rng):
            calls.append(idx)
            return state

        p = VerificationParams(m=2, c=0.9, n=3, n_test_override=5)
        out = run_verification(p, NetworkTopology(3), AdversaryModel(attack_callback=cb), rng_seed=0)
        assert out.accepted
        assert len(calls) == 3 * 5 + 1

    def test_coordination_seed_reproduces_attack(self):
        def cb(idx, state, rng):
            return state if rng.random() < 0.5 else basis_state([0, 0, 0]).as_mixed()

        p = VerificationParams(m=2, c=0.9, n=3, n_test_override=10)
        runs = [run_verification(p, NetworkTopology(3), AdversaryModel(attack_callback=cb, coordination_seed=s),
                                 rng_seed=0).transcript.summary() for s in (4, 4, 5)]
        assert runs[0] == runs[1]
        assert runs[0] != runs[2]


class TestSymmetrised:
    def test_honest_accepts(self):
        p = VerificationParams(m=1, c=2, n=4, lam=2, n_test_override=40)
        out = run_symmetrised_verification(p, NetworkTopology(4, verifier=CRS), rng_seed=1)
        assert out.accepted and out.transcript.f == 0.0
        assert out.transcript.n_total == 3 * 2 * 4 * 40
        assert out.transcript.copies_tested == 2 * 4 * 40

    def test_dishonest_verifier_all_fail(self):
        p = VerificationParams(m=1, c=2, n=4, lam=2, n_test_override=40)
        model = AdversaryModel(dishonest={3: DishonestBehavior(verifier_report="all-fail")})
        topo = NetworkTopology(4, honest={0, 1, 2}, verifier=CRS)
        out = run_symmetrised_verification(p, topo, model, rng_seed=6)
        t = out.transcript
        slots = int(np.sum(t.verifiers == 3))
        assert np.allclose(t.set_failure_rates[t.verifiers == 3], 1.0)
        assert t.f == pytest.approx(slots / (2 * 4))
        assert t.accepted == (t.f <= p.threshold)

    def test_threshold(self):
        p = VerificationParams(m=1, c=2, n=4, lam=2)
        assert p.threshold == 0.015625


def test_rounds_vectorised_match_threshold():
    model = AdversaryModel(channels={2: ChannelNoise("dephasing", 0.03)})
    acc, f, _ = sample_round_acceptance(P4, NetworkTopology(4), model, 500, np.random.default_rng(1))
    assert np.array_equal(acc, f <= P4.threshold)
    assert 0 < acc.mean() < 1
