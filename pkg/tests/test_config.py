import numpy as np
import pytest

from privsense.adversary import CRS
from privsense.config import ConfigError, parse_config, resolve_config, set_path

MINIMAL = """
seed: 7
network: {n: 4}
sensing: {nu: 1000}
phases: [0.2, 0.2, 0.2, 0.2]
"""


def test_minimal_resolves_with_defaults():
    cfg = parse_config(MINIMAL)
    assert cfg.verification.n_test == 355
    assert cfg.verification.threshold == 0.03125
    assert cfg.derived["n_test"] == 355 and cfg.derived["n_total"] == 2840
    assert cfg.topology.honest == frozenset(range(4))
    assert cfg.function.M == pytest.approx(0.25) and cfg.function.k == (1, 1, 1, 1)
    echo = cfg.echo()["config"]
    # every default the run relies on is written out
    assert echo["verification"]["m"] == 1.0 and echo["verification"]["c"] == 2.0
    assert echo["repetitions"] == 1 and echo["sensing"]["branch_window"] == pytest.approx([0.0, np.pi])
    assert echo["network"]["honest"] == [0, 1, 2, 3]


def test_weighted_function_assignment():
    cfg = parse_config("seed: 1\nnetwork: {n: 2}\nfunction: {k: [2, -1]}\nphases: [0.5, 0.3]\n"
                       "verification: {m: 2, c: 0.9}\n")
    assert cfg.assignment.n_qubits == 3
    assert cfg.assignment.flipped_qubits == [2]
    assert cfg.derived["function_value"] == pytest.approx(0.7)


def test_constraint_violation_listed():
    with pytest.raises(ConfigError) as exc:
        parse_config(MINIMAL + "verification: {c: 1.0}\n")
    assert any("3/(2m)" in p for p in exc.value.problems)


def test_constraint_override():
    cfg = parse_config(MINIMAL + "verification: {c: 1.0, allow_invalid: true}\n")
    assert not cfg.verification.bounds_applicable


def test_all_problems_reported_together():
    text = """
network: {n: 3, honest: [0, 5]}
phases: [0.1]
bogus: true
adversary:
  channels:
    - {node: 9, kind: dephasing, p: 2.0}
"""
    with pytest.raises(ConfigError) as exc:
        parse_config(text)
    msg = "\n".join(exc.value.problems)
    for fragment in ("seed", "bogus", "honest", "phases", "node", "p"):
        assert fragment in msg
    assert len(exc.value.problems) >= 5


def test_parse_error_location():
    with pytest.raises(ConfigError) as exc:
        parse_config("seed: 1\nnetwork: {n: 4\n")
    assert "line" in str(exc.value)


def test_non_mapping_root():
    with pytest.raises(ConfigError):
        parse_config("- 1\n- 2\n")


def test_adversary_parsed():
    cfg = parse_config(MINIMAL + """
network: {n: 4, honest: [0, 1, 2], verifier: 0}
adversary:
  coordination_seed: 3
  source: {kind: fixed, state: zeros}
  channels:
    - {node: 1, kind: depolarizing, p: 0.1}
  dishonest:
    - {node: 3, flip_q: 0.5, skip_encoding: true}
""")
    adv = cfg.adversary
    assert adv.coordination_seed == 3
    assert adv.source.kind == "fixed"
    assert np.allclose(adv.source.state.data[0], 1.0)
    assert adv.channels[1].kind == "depolarizing"
    assert adv.dishonest[3].flip_q == 0.5 and adv.dishonest[3].skip_encoding


def test_custom_kraus_complex_entries():
    cfg = parse_config(MINIMAL + """
adversary:
  channels:
    - node: 0
      kind: kraus
      kraus:
        - [[1, 0], [0, 0.8]]
        - [[0, 0.6], [0, 0]]
""")
    assert cfg.adversary.channels[0].kind == "kraus"


def test_dishonest_node_must_be_dishonest():
    with pytest.raises(ConfigError):
        parse_config(MINIMAL + "adversary:\n  dishonest:\n    - {node: 1, flip_q: 1.0}\n")


def test_crs_verifier_needs_lambda():
    with pytest.raises(ConfigError):
        parse_config(MINIMAL + "network: {n: 4, verifier: crs}\n")
    cfg = parse_config(MINIMAL.replace("seed: 7", "seed: 7\nverification: {lambda: 2}")
                       + "network: {n: 4, verifier: crs}\n")
    assert cfg.topology.verifier == CRS


def test_set_path():
    cfg = parse_config(MINIMAL + "adversary:\n  channels:\n    - {node: 1, kind: dephasing, p: 0.0}\n")
    data = set_path(cfg.resolved, "adversary.channels.0.p", 0.2)
    assert data["adversary"]["channels"][0]["p"] == 0.2
    assert cfg.resolved["adversary"]["channels"][0]["p"] == 0.0
    assert resolve_config(data).adversary.channels[1].p == 0.2


@pytest.mark.parametrize("path", ["network.missing", "adversary.source.kind", "adversary.channels.3.p", "phases.x"])
def test_set_path_rejects(path):
    cfg = parse_config(MINIMAL)
    with pytest.raises(ConfigError):
        set_path(cfg.resolved, path, 1.0)


def test_resolved_round_trips():
    cfg = parse_config(MINIMAL)
    again = resolve_config(cfg.resolved)
    assert again.echo() == cfg.echo()
