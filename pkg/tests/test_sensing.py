import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from privsense.adversary import AdversaryModel, ChannelNoise, DishonestBehavior, NetworkTopology, SourceAttack
from privsense.encoding import LinearFunctionSpec
from privsense.qcore import basis_state, plus_state
from privsense.sensing import (
    SensingError,
    SensingParams,
    audit_state,
    empirical_privacy_audit,
    integrity_bias_bound,
    integrity_variance_bound,
    parity_estimator,
    phase_sum_from_parity,
    privacy_guarantee,
    run_sensing_protocol,
    theorem1_epsilon,
)
from privsense.verification import VerificationParams
from privsense.encoding import QubitAssignment
from privsense.ghz import ghz_state

AVG4 = LinearFunctionSpec.average(4)
VP4 = VerificationParams(m=1, c=2, n=4)
# parameter choices with a non-empty constraint window at small n
VP_SMALL = {2: VerificationParams(m=8, c=0.2, n=2), 3: VerificationParams(m=2, c=0.9, n=3), 4: VP4,
            6: VerificationParams(m=1, c=2, n=6)}


def avg_params(n, theta_bar, nu):
    return SensingParams(nu, VP_SMALL[n], LinearFunctionSpec.average(n), (theta_bar,) * n)


class TestBounds:
    def test_bias(self):
        assert integrity_bias_bound(1, 0.1, 4) == pytest.approx(0.05)
        assert integrity_bias_bound(1, 0.0, 4) == 0.0
        with pytest.raises(SensingError):
            integrity_bias_bound(1, 0.1, 0.0)

    def test_variance(self):
        assert integrity_variance_bound(1, 0.1, 100, 4) == pytest.approx(0.003)
        assert integrity_variance_bound(1, 0.0, 100, 4) == 0.0
        assert integrity_variance_bound(1, 0.1, 10**12, 4) == pytest.approx(4 * 0.01 / 16, rel=1e-9)
        with pytest.raises(SensingError):
            integrity_variance_bound(1, 0.1, 10, 0.0)

    def test_theorem1_epsilon(self):
        assert theorem1_epsilon(1, 10) == pytest.approx(0.3)
        assert theorem1_epsilon(4, 10) == pytest.approx(0.5)
        assert theorem1_epsilon(1, 10**9) < 1e-8

    def test_guarantee_value(self):
        g = privacy_guarantee(1, 9, 0.0, 9)
        assert g.qfi_ceiling == pytest.approx(24 * math.sqrt(2 / 9))
        assert g.qfi_ceiling == pytest.approx(11.31, abs=5e-3)
        assert g.eps_paper == pytest.approx(g.qfi_ceiling / 9)
        assert g.eps_definition == pytest.approx(g.qfi_ceiling / 81)
        assert not g.clamped

    def test_guarantee_zero_radicand(self):
        g = privacy_guarantee(1, 9, 1 / 81, 9)
        assert g.qfi_ceiling == pytest.approx(0.0, abs=1e-6)

    def test_guarantee_clamped(self):
        g = privacy_guarantee(1, 9, 0.1, 9)
        assert g.clamped and g.qfi_ceiling == 0.0 and g.radicand < 0

    def test_guarantee_reports_fidelity_radicand(self):
        # the two radicands differ by exactly 1 - 4 sqrt(c)/n
        g = privacy_guarantee(1, 9, 0.01, 9)
        assert g.fidelity_radicand == pytest.approx(1 - 2 / 9 - 0.18)
        assert g.fidelity_radicand - g.radicand == pytest.approx(1 - 4 / 9)
        assert "fidelity_radicand" in g.to_dict()

    def test_probability_floor(self):
        assert privacy_guarantee(2, 4, 0.0, 4, m=1).probability_floor == pytest.approx(1 - 4 ** (-1 / 3))


class TestEstimator:
    def test_all_plus(self):
        assert parity_estimator([1] * 50, AVG4) == 0.0

    def test_zero_mean(self):
        assert parity_estimator([1, -1] * 10, AVG4) == pytest.approx(math.pi / 8)

    def test_all_minus_n2(self):
        assert parity_estimator([-1] * 7, LinearFunctionSpec.average(2)) == pytest.approx(math.pi / 2)

    def test_empty(self):
        with pytest.raises(SensingError):
            parity_estimator([], AVG4)

    def test_qubit_count_checked(self):
        with pytest.raises(SensingError):
            parity_estimator([1], AVG4, n_qubits=3)

    @given(st.floats(-1, 1))
    def test_inverts_cosine(self, m):
        s, clipped = phase_sum_from_parity(m)
        assert not clipped and math.cos(s) == pytest.approx(m, abs=1e-9)

    def test_shifted_window(self):
        s, _ = phase_sum_from_parity(math.cos(4.0), (math.pi, 2 * math.pi))
        assert s == pytest.approx(4.0)

    def test_window_straddling_pi_rejected(self):
        with pytest.raises(SensingError):
            phase_sum_from_parity(0.0, (2.0, 4.0))


class TestProtocol:
    def test_zero_phases(self):
        rep = run_sensing_protocol(avg_params(4, 0.0, 500), NetworkTopology(4), rng_seed=1, record_rounds=True)
        assert rep.estimate == 0.0 and rep.mean_parity == 1.0
        assert all(r.parity == 1 for r in rep.rounds)

    def test_pi_over_eight(self):
        theta = math.pi / 8
        rep = run_sensing_protocol(avg_params(4, theta, 10_000), NetworkTopology(4), rng_seed=2)
        assert abs(rep.estimate - theta) <= 3 * rep.standard_error
        assert rep.rounds_used == 10_000 and rep.rounds_discarded == 0

    def test_all_rejected(self):
        model = AdversaryModel(source=SourceAttack("fixed", basis_state([0] * 4)))
        with pytest.raises(SensingError):
            run_sensing_protocol(avg_params(4, 0.2, 20), NetworkTopology(4), model, rng_seed=0)

    def test_nu_positive(self):
        with pytest.raises(SensingError):
            avg_params(4, 0.2, 0)

    def test_phase_length_checked(self):
        with pytest.raises(ValueError):
            SensingParams(10, VP4, AVG4, (0.1, 0.2))

    def test_round_accounting_and_parities(self):
        model = AdversaryModel(channels={0: ChannelNoise("dephasing", 0.03)})
        rep = run_sensing_protocol(avg_params(4, 0.3, 400), NetworkTopology(4), model, rng_seed=4, record_rounds=True)
        assert rep.rounds_used + rep.rounds_discarded == 400
        assert 0 < rep.rounds_discarded < 400
        used = [r for r in rep.rounds if r.accepted]
        assert len(used) == rep.rounds_used
        assert np.mean([r.parity for r in used]) == pytest.approx(rep.mean_parity)
        assert all(r.node_parities is None for r in rep.rounds if not r.accepted)

    def test_deterministic(self):
        a = run_sensing_protocol(avg_params(4, 0.2, 300), NetworkTopology(4), rng_seed=9).to_dict()
        b = run_sensing_protocol(avg_params(4, 0.2, 300), NetworkTopology(4), rng_seed=9).to_dict()
        assert a == b

    def test_per_round_path_with_callback(self):
        model = AdversaryModel(attack_callback=lambda i, s, r: s)
        params = SensingParams(20, VerificationParams(m=2, c=0.9, n=3, n_test_override=20),
                               LinearFunctionSpec.average(3), (0.3, 0.3, 0.3))
        rep = run_sensing_protocol(params, NetworkTopology(3), model, rng_seed=0)
        assert rep.rounds_used == 20

    def test_skip_encoding(self):
        model = AdversaryModel(dishonest={3: DishonestBehavior(skip_encoding=True)})
        topo = NetworkTopology(4, honest={0, 1, 2}, verifier=0)
        rep = run_sensing_protocol(avg_params(4, 0.2, 4000), topo, model, rng_seed=3)
        # node 3 imprints nothing: the sum is 3 * 0.2 rather than 4 * 0.2
        assert abs(rep.estimate - 0.15) <= 4 * rep.standard_error

    @pytest.mark.parametrize("theta", [0.1, 0.2, 0.3])
    def test_estimator_consistency(self, theta):
        est = [run_sensing_protocol(avg_params(4, theta, 10_000), NetworkTopology(4), rng_seed=s).estimate
               for s in range(20)]
        assert abs(np.mean(est) - theta) <= 3 * np.std(est, ddof=1) / math.sqrt(20)

    def test_heisenberg_scaling(self):
        nu, seeds = 2000, 60
        for n in (2, 4, 6):
            theta = math.pi / (2 * n)
            est = [run_sensing_protocol(avg_params(n, theta, nu), NetworkTopology(n), rng_seed=s).estimate
                   for s in range(seeds)]
            predicted = 1.0 / (nu * n**2)
            ratio = np.var(est, ddof=1) / predicted
            assert 0.5 <= ratio <= 2.0, (n, ratio)

    def test_general_function(self):
        spec = LinearFunctionSpec(0.5, (2, -1))
        params = SensingParams(10_000, VP_SMALL[3], spec, (0.6, 0.4))
        rep = run_sensing_protocol(params, NetworkTopology(2), rng_seed=5)
        assert rep.true_value == pytest.approx(0.4)
        assert abs(rep.estimate - 0.4) <= 3 * rep.standard_error


class TestPrivacyAudit:
    def test_ideal_target(self):
        audit = empirical_privacy_audit(avg_params(4, 0.2, 1), NetworkTopology(4), rng_seed=0)
        assert audit.accepted and audit.measured.epsilon == pytest.approx(0.0, abs=1e-9)
        assert audit.within_ceiling

    def test_dephased_target(self):
        model = AdversaryModel(channels={1: ChannelNoise("dephasing", 0.02)})
        audit = empirical_privacy_audit(avg_params(4, 0.2, 1), NetworkTopology(4), model, rng_seed=1)
        assert audit.accepted
        assert audit.measured.epsilon == pytest.approx(0.0, abs=1e-9)
        assert audit.guarantee.qfi_ceiling > 0

    def test_product_target(self):
        audit = audit_state(plus_state(4), QubitAssignment.one_per_node(4), NetworkTopology(4), VP4, 0.0)
        assert audit.measured.epsilon == pytest.approx(1 / 16, abs=1e-9)

    def test_rejected_run_has_no_measurement(self):
        model = AdversaryModel(source=SourceAttack("fixed", basis_state([0] * 4)))
        audit = empirical_privacy_audit(avg_params(4, 0.2, 1), NetworkTopology(4), model, rng_seed=2)
        assert not audit.accepted and audit.measured is None and audit.within_ceiling is None

    def test_to_dict(self):
        d = audit_state(ghz_state(4), QubitAssignment.one_per_node(4), NetworkTopology(4), VP4, 0.0).to_dict()
        assert set(d) >= {"measured_epsilon", "guarantee", "within_ceiling"}
        assert set(d["guarantee"]) >= {"eps_paper", "eps_definition", "clamped"}
