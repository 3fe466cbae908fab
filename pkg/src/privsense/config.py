"""Scenario files (YAML) to resolved, validated run configurations.

Node and qubit indices are 0-based.  Every key has a documented default
except ``seed``; unknown keys are rejected.  Complex matrix entries are
written either as a number or as ``[re, im]``.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field
from typing import Any, Optional

import numpy as np
import yaml

from . import qcore
from .adversary import (
    CRS,
    AdversaryModel,
    ChannelNoise,
    DishonestBehavior,
    NetworkTopology,
    SourceAttack,
    VERIFIER_REPORTS,
)
from .encoding import LinearFunctionSpec, QubitAssignment
from .ghz import ghz_state
from .sensing import DEFAULT_WINDOW, SensingParams
from .verification import VerificationParams

FORMATS = ("structured-record", "summary-table", "per-test-log")

DEFAULTS: dict[str, Any] = {
    "seed": None,
    "repetitions": 1,
    "workers": 1,
    "network": {"n": None, "honest": None, "verifier": 0},
    "verification": {"m": 1.0, "c": 2.0, "lambda": 1, "n_test": None, "allow_invalid": False},
    "function": {"M": None, "k": None},
    "phases": None,
    "sensing": {"nu": 1000, "branch_window": list(DEFAULT_WINDOW)},
    "adversary": {
        "coordination_seed": 0,
        "source": {"kind": "none", "state": None, "kraus": None},
        "channels": [],
        "dishonest": [],
    },
    "qfi": {"state": "resource", "p": 1.0, "direction": "function", "step": 1e-4, "tolerance": 1e-10},
    "output": {"dir": "out", "formats": ["structured-record", "summary-table"]},
}

_CHANNEL_KEYS = {"node": None, "kind": "none", "p": 0.0, "kraus": None}
_DISHONEST_KEYS = {"node": None, "flip_q": 0.0, "unitary": None, "skip_encoding": False, "verifier_report": "honest"}


class ConfigError(ValueError):
    def __init__(self, problems):
        self.problems = list(problems) if isinstance(problems, (list, tuple)) else [problems]
        super().__init__("invalid scenario:\n  " + "\n  ".join(self.problems))


@dataclass
class ScenarioConfig:
    seed: int
    repetitions: int
    workers: int
    topology: NetworkTopology
    verification: VerificationParams
    function: LinearFunctionSpec
    assignment: QubitAssignment
    phases: tuple
    sensing: SensingParams
    adversary: AdversaryModel
    qfi: dict
    output_dir: str
    formats: tuple
    resolved: dict = field(repr=False, default_factory=dict)
    derived: dict = field(repr=False, default_factory=dict)

    def echo(self) -> dict:
        return {"config": copy.deepcopy(self.resolved), "derived": copy.deepcopy(self.derived)}


def _merge(defaults, given, path, problems):
    """Fill defaults, flag unknown keys.  Lists of records are handled by the caller."""
    if given is None:
        return copy.deepcopy(defaults)
    if not isinstance(given, dict):
        problems.append(f"{path or '<root>'}: expected a mapping, got {type(given).__name__}")
        return copy.deepcopy(defaults)
    out = {}
    for key in given:
        if key not in defaults:
            problems.append(f"{path + '.' if path else ''}{key}: unknown key")
    for key, dv in defaults.items():
        gv = given.get(key, None) if key in given else None
        p = f"{path}.{key}" if path else key
        if isinstance(dv, dict) and key in given:
            out[key] = _merge(dv, gv, p, problems)
        elif key in given:
            out[key] = gv
        else:
            out[key] = copy.deepcopy(dv)
    return out


def _records(items, template, path, problems):
    if items is None:
        return []
    if not isinstance(items, list):
        problems.append(f"{path}: expected a list")
        return []
    return [_merge(template, it, f"{path}.{i}", problems) for i, it in enumerate(items)]


def _complex_matrix(value, path, problems, shape=None):
    def conv(x):
        if isinstance(x, (list, tuple)) and len(x) == 2 and all(isinstance(v, (int, float)) for v in x):
            return complex(x[0], x[1])
        if isinstance(x, (int, float)):
            return complex(x)
        raise TypeError
    try:
        arr = np.array([[conv(x) for x in row] for row in value], dtype=np.complex128)
    except (TypeError, ValueError):
        problems.append(f"{path}: expected a matrix of numbers or [re, im] pairs")
        return None
    if shape is not None and arr.shape != shape:
        problems.append(f"{path}: expected shape {shape}, got {arr.shape}")
        return None
    return arr


def _source_state(spec, n, path, problems):
    if spec in ("zero", "zeros"):
        return qcore.basis_state([0] * n)
    if spec == "plus":
        return qcore.plus_state(n)
    if spec == "ghz":
        return ghz_state(n)
    if isinstance(spec, list):
        try:
            v = np.array([complex(x[0], x[1]) if isinstance(x, list) else complex(x) for x in spec])
            v = v / np.linalg.norm(v)
            if v.shape[0] != 1 << n:
                raise ValueError(f"needs {1 << n} amplitudes")
            return qcore.QuantumState(v)
        except (ValueError, TypeError, IndexError) as exc:
            problems.append(f"{path}: bad amplitude list ({exc})")
            return None
    problems.append(f"{path}: expected 'zero', 'plus', 'ghz' or an amplitude list")
    return None


def _is_int(v) -> bool:
    return isinstance(v, int) and not isinstance(v, bool)


def _is_num(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def load_yaml(text: str) -> dict:
    try:
        data = yaml.safe_load(text)
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark
        where = f"line {mark.line + 1}, column {mark.column + 1}" if mark else "unknown position"
        raise ConfigError(f"parse error at {where}: {exc.problem}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"parse error: {exc}") from None
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError("top level must be a mapping")
    return data


def parse_config(text: str) -> ScenarioConfig:
    return resolve_config(load_yaml(text))


def resolve_config(data: dict) -> ScenarioConfig:
    problems: list[str] = []
    raw = _merge(DEFAULTS, data, "", problems)
    adv = raw["adversary"]
    adv["channels"] = _records(adv.get("channels"), _CHANNEL_KEYS, "adversary.channels", problems)
    adv["dishonest"] = _records(adv.get("dishonest"), _DISHONEST_KEYS, "adversary.dishonest", problems)

    # --- scalars
    seed = raw["seed"]
    if seed is None:
        problems.append("seed: mandatory master seed missing")
    elif not _is_int(seed) or seed < 0:
        problems.append("seed: must be a non-negative integer")
    for key in ("repetitions", "workers"):
        if not _is_int(raw[key]) or raw[key] < 1:
            problems.append(f"{key}: must be a positive integer")

    # --- network / function
    net, fn = raw["network"], raw["function"]
    n_nodes = net["n"]
    if n_nodes is None and fn["k"] is not None:
        n_nodes = len(fn["k"]) if isinstance(fn["k"], list) else None
    if not _is_int(n_nodes) or n_nodes < 1:
        problems.append("network.n: must be a positive integer")
        raise ConfigError(problems)
    net["n"] = n_nodes
    if net["honest"] is None:
        net["honest"] = list(range(n_nodes))
    honest = net["honest"]
    if not isinstance(honest, list) or not all(_is_int(h) and 0 <= h < n_nodes for h in honest):
        problems.append(f"network.honest: must list node indices in 0..{n_nodes - 1}")
        honest = list(range(n_nodes))
    elif len(set(honest)) != len(honest):
        problems.append("network.honest: repeated node index")
    net["honest"] = sorted(set(honest))
    verifier = net["verifier"]
    if not (verifier == CRS or (_is_int(verifier) and 0 <= verifier < n_nodes)):
        problems.append(f"network.verifier: must be a node index or '{CRS}'")
        verifier = 0

    if fn["k"] is None:
        fn["k"] = [1] * n_nodes
    if fn["M"] is None:
        fn["M"] = 1.0 / n_nodes if fn["k"] == [1] * n_nodes else 1.0
    function = None
    if not isinstance(fn["k"], list) or not all(_is_int(v) for v in fn["k"]):
        problems.append("function.k: must be a list of integers")
    elif len(fn["k"]) != n_nodes:
        problems.append(f"function.k: has {len(fn['k'])} entries, network has {n_nodes} nodes")
    elif not _is_num(fn["M"]):
        problems.append("function.M: must be a number")
    else:
        try:
            function = LinearFunctionSpec(float(fn["M"]), tuple(fn["k"]))
            if function.total_qubits > qcore.MAX_QUBITS:
                problems.append(f"function.k: needs {function.total_qubits} qubits, limit is {qcore.MAX_QUBITS}")
        except ValueError as exc:
            problems.append(f"function: {exc}")

    if raw["phases"] is None:
        raw["phases"] = [0.0] * n_nodes
    phases = raw["phases"]
    if not isinstance(phases, list) or not all(_is_num(v) and math.isfinite(v) for v in phases):
        problems.append("phases: must be a list of finite numbers")
    elif len(phases) != n_nodes:
        problems.append(f"phases: has {len(phases)} entries, network has {n_nodes} nodes")

    # --- verification
    vr = raw["verification"]
    n_qubits = function.total_qubits if function else n_nodes
    vparams = None
    if not (_is_num(vr["m"]) and _is_num(vr["c"]) and vr["m"] > 0 and vr["c"] > 0):
        problems.append("verification.m / verification.c: must be positive numbers")
    elif not _is_int(vr["lambda"]) or vr["lambda"] < 1:
        problems.append("verification.lambda: must be a positive integer")
    elif vr["n_test"] is not None and (not _is_int(vr["n_test"]) or vr["n_test"] < 1):
        problems.append("verification.n_test: must be a positive integer or null")
    elif not isinstance(vr["allow_invalid"], bool):
        problems.append("verification.allow_invalid: must be true or false")
    elif n_qubits < 2:
        problems.append("verification: the resource needs at least 2 qubits")
    else:
        vparams = VerificationParams(float(vr["m"]), float(vr["c"]), n_qubits, int(vr["lambda"]),
                                     vr["n_test"], bool(vr["allow_invalid"]))
        if not vr["allow_invalid"]:
            for v in vparams.constraint_violations():
                problems.append(f"verification: {v} (set allow_invalid: true to run anyway)")
        if vparams.lam == 1 and verifier == CRS:
            problems.append("network.verifier: 'crs' needs verification.lambda >= 2")
        if vparams.lam == 1 and verifier != CRS and verifier not in net["honest"]:
            problems.append("network.verifier: the single Verifier must be honest")

    # --- sensing
    sn = raw["sensing"]
    if not _is_int(sn["nu"]) or sn["nu"] < 1:
        problems.append("sensing.nu: must be a positive integer")
    bw = sn["branch_window"]
    if not (isinstance(bw, list) and len(bw) == 2 and all(_is_num(v) for v in bw)):
        problems.append("sensing.branch_window: must be [lo, hi]")

    # --- adversary
    topo = None
    try:
        topo = NetworkTopology(n_nodes, net["honest"], verifier)
    except ValueError as exc:
        problems.append(f"network: {exc}")
    model = _parse_adversary(adv, n_nodes, n_qubits, net["honest"], problems)

    # --- qfi / output
    q = raw["qfi"]
    if q["state"] not in ("resource", "ghz", "plus", "dephased-ghz"):
        problems.append("qfi.state: must be resource, ghz, plus or dephased-ghz")
    if not _is_num(q["p"]) or not 0 <= q["p"] <= 1:
        problems.append("qfi.p: coherence weight must lie in [0, 1]")
    if not (q["direction"] in ("function", "average") or (_is_int(q["direction"]) and 0 <= q["direction"] < n_nodes)):
        problems.append("qfi.direction: 'function', 'average' or a node index")
    for key in ("step", "tolerance"):
        if not _is_num(q[key]) or q[key] <= 0:
            problems.append(f"qfi.{key}: must be positive")
    out = raw["output"]
    fmts = out["formats"]
    if not isinstance(fmts, list) or not all(f in FORMATS for f in fmts):
        problems.append(f"output.formats: entries must be among {FORMATS}")
    if not isinstance(out["dir"], str):
        problems.append("output.dir: must be a path string")

    if problems:
        raise ConfigError(problems)

    sensing = SensingParams(int(sn["nu"]), vparams, function, tuple(float(v) for v in phases), tuple(float(v) for v in bw))
    assignment = QubitAssignment.for_function(function)
    derived = {
        **vparams.to_dict(),
        "n_qubits": assignment.n_qubits,
        "assignment": {
            "owners": list(assignment.owners),
            "x_flipped": [q for q, f in enumerate(assignment.flipped) if f],
        },
        "function_value": function.M * float(np.dot(function.k, phases)),
    }
    return ScenarioConfig(
        seed=int(seed),
        repetitions=int(raw["repetitions"]),
        workers=int(raw["workers"]),
        topology=topo,
        verification=vparams,
        function=function,
        assignment=assignment,
        phases=tuple(float(v) for v in phases),
        sensing=sensing,
        adversary=model,
        qfi=dict(q),
        output_dir=out["dir"],
        formats=tuple(fmts),
        resolved=raw,
        derived=derived,
    )


def _parse_adversary(adv, n_nodes, n_qubits, honest, problems) -> Optional[AdversaryModel]:
    if not _is_int(adv["coordination_seed"]):
        problems.append("adversary.coordination_seed: must be an integer")
    src = adv["source"]
    source = SourceAttack()
    if src["kind"] == "fixed":
        st = _source_state(src["state"], n_qubits, "adversary.source.state", problems)
        if st is not None:
            source = SourceAttack("fixed", st)
    elif src["kind"] == "channel":
        if not isinstance(src["kraus"], list) or not src["kraus"]:
            problems.append("adversary.source.kraus: list of Kraus matrices required")
        else:
            dim = 1 << n_qubits
            ks = [_complex_matrix(k, f"adversary.source.kraus.{i}", problems, (dim, dim)) for i, k in enumerate(src["kraus"])]
            if all(k is not None for k in ks):
                try:
                    source = SourceAttack("channel", kraus=tuple(ks))
                except ValueError as exc:
                    problems.append(f"adversary.source: {exc}")
    elif src["kind"] != "none":
        problems.append("adversary.source.kind: none, fixed or channel")

    channels = {}
    for i, ch in enumerate(adv["channels"]):
        path = f"adversary.channels.{i}"
        node = ch["node"]
        if not _is_int(node) or not 0 <= node < n_nodes:
            problems.append(f"{path}.node: must be a node index")
            continue
        if node in channels:
            problems.append(f"{path}.node: channel for node {node} given twice")
            continue
        kraus = None
        if ch["kind"] == "kraus":
            if not isinstance(ch["kraus"], list) or not ch["kraus"]:
                problems.append(f"{path}.kraus: list of 2x2 matrices required")
                continue
            ks = [_complex_matrix(k, f"{path}.kraus.{j}", problems, (2, 2)) for j, k in enumerate(ch["kraus"])]
            if any(k is None for k in ks):
                continue
            kraus = tuple(ks)
        if not _is_num(ch["p"]):
            problems.append(f"{path}.p: must be a number")
            continue
        try:
            channels[node] = ChannelNoise(ch["kind"], float(ch["p"]), kraus)
        except ValueError as exc:
            problems.append(f"{path}: {exc}")

    dishonest = {}
    for i, d in enumerate(adv["dishonest"]):
        path = f"adversary.dishonest.{i}"
        node = d["node"]
        if not _is_int(node) or not 0 <= node < n_nodes:
            problems.append(f"{path}.node: must be a node index")
            continue
        if node in honest:
            problems.append(f"{path}.node: node {node} is listed as honest")
            continue
        u = None
        if d["unitary"] is not None:
            u = _complex_matrix(d["unitary"], f"{path}.unitary", problems, (2, 2))
            if u is None:
                continue
        if not _is_num(d["flip_q"]) or not isinstance(d["skip_encoding"], bool):
            problems.append(f"{path}: flip_q must be a number, skip_encoding a boolean")
            continue
        if d["verifier_report"] not in VERIFIER_REPORTS:
            problems.append(f"{path}.verifier_report: one of {VERIFIER_REPORTS}")
            continue
        try:
            dishonest[node] = DishonestBehavior(float(d["flip_q"]), u, d["skip_encoding"], d["verifier_report"])
        except ValueError as exc:
            problems.append(f"{path}: {exc}")
    try:
        return AdversaryModel(source, channels, dishonest, int(adv["coordination_seed"]))
    except (ValueError, TypeError) as exc:
        problems.append(f"adversary: {exc}")
        return None


def set_path(data: dict, path: str, value) -> dict:
    """Copy of ``data`` with the numeric field at dotted ``path`` replaced."""
    out = copy.deepcopy(data)
    parts = path.split(".")
    node: Any = out
    try:
        for part in parts[:-1]:
            node = node[int(part)] if isinstance(node, list) else node[part]
        last = parts[-1]
        key: Any = int(last) if isinstance(node, list) else last
        current = node[key]
    except (KeyError, IndexError, TypeError, ValueError):
        raise ConfigError(f"sweep axis {path!r} does not address a config field") from None
    if not _is_num(current):
        raise ConfigError(f"sweep axis {path!r} is not numeric (value {current!r})")
    node[key] = value
    return out
