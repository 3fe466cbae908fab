"""Scenario execution, parameter sweeps and report files.

Seeds: repetition ``r`` of a run with master seed ``s`` draws from
``SeedSequence(entropy=s, spawn_key=(r,))``.  The stream depends only on
``(s, r)``, so results do not change with the worker count or scheduling.
"""

from __future__ import annotations

import copy
import csv
import io
import json
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import __version__, metrology, qcore
from .config import ConfigError, ScenarioConfig, resolve_config, set_path
from .encoding import QubitAssignment, resource_state_for_function
from .ghz import ghz_state
from .sensing import (
    SensingError,
    audit_state,
    empirical_privacy_audit,
    privacy_guarantee,
    run_sensing_protocol,
)
from .verification import VerificationError, run_symmetrised_verification, run_verification

SCHEMA = "privsense.run-report"
SCHEMA_VERSION = 1
MODES = ("verify", "sense", "privacy-audit", "qfi")

SUMMARY_COLUMNS = (
    "value",
    "acceptance_rate",
    "mean_f",
    "fidelity_bound",
    "measured_fidelity",
    "eps_paper",
    "eps_definition",
    "measured_eps",
)


class RunError(RuntimeError):
    """A module error, tagged with the protocol step that raised it."""

    def __init__(self, step: str, exc: Exception):
        self.step = step
        super().__init__(f"[{step}] {exc}")


def derive_seed(master: int, *keys: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(entropy=int(master), spawn_key=tuple(int(k) for k in keys))


@dataclass
class RunReport:
    mode: str
    scenario: dict
    repetitions: list
    aggregate: dict
    timings: dict = field(default_factory=dict)
    tests: Optional[list] = None
    version: str = __version__

    def record(self) -> dict:
        """The structured record.

        Wall-clock timings, the worker count and the output directory are left
        out: none of them affects results, and excluding them keeps the record
        byte-identical across machines and concurrency levels.
        """
        scenario = copy.deepcopy(self.scenario)
        cfg = scenario.get("config", {})
        cfg.pop("workers", None)
        cfg.get("output", {}).pop("dir", None)
        return {
            "schema": SCHEMA,
            "schema_version": SCHEMA_VERSION,
            "artifact_version": self.version,
            "mode": self.mode,
            "scenario": scenario,
            "aggregate": self.aggregate,
            "repetitions": self.repetitions,
        }


# ---------------------------------------------------------------------------
# repetitions
# ---------------------------------------------------------------------------

def _privacy_measure(cfg: ScenarioConfig, state, f: float) -> Optional[float]:
    if cfg.topology.n_honest < 2:
        return None
    return audit_state(state, cfg.assignment, cfg.topology, cfg.verification, f).measured.epsilon


def _verify_once(cfg: ScenarioConfig, rep: int, keep_tests: bool) -> dict:
    rng = np.random.default_rng(derive_seed(cfg.seed, rep))
    resource, assignment = resource_state_for_function(cfg.function)
    runner = run_verification if cfg.verification.lam == 1 else run_symmetrised_verification
    try:
        out = runner(cfg.verification, cfg.topology, cfg.adversary, rng,
                     assignment=assignment, ideal=resource, record_tests=True)
    except (VerificationError, ValueError) as exc:
        raise RunError("verification", exc) from exc
    row = {"repetition": rep, **out.summary()}
    g = privacy_guarantee(cfg.verification.c, cfg.verification.n, out.transcript.f,
                          cfg.topology.n_honest, cfg.verification.m)
    row["privacy_guarantee"] = g.to_dict()
    row["measured_epsilon"] = _privacy_measure(cfg, out.target_state, out.transcript.f) if out.accepted else None
    if keep_tests:
        tests = [dict(t.to_dict(), repetition=rep) for t in out.transcript.tests]
        tests.append({
            "record": "target",
            "repetition": rep,
            "copy_index": out.transcript.target_index,
            "accepted": out.accepted,
            "honest_reduced_fidelity": out.honest_reduced_fidelity,
        })
        row["_tests"] = tests
    return row


def _sense_once(cfg: ScenarioConfig, rep: int) -> dict:
    rng = np.random.default_rng(derive_seed(cfg.seed, rep))
    try:
        rep_out = run_sensing_protocol(cfg.sensing, cfg.topology, cfg.adversary, rng)
    except SensingError as exc:
        raise RunError("sensing", exc) from exc
    except (VerificationError, ValueError) as exc:
        raise RunError("verification", exc) from exc
    return {"repetition": rep, **rep_out.to_dict()}


def _audit_once(cfg: ScenarioConfig, rep: int) -> dict:
    rng = np.random.default_rng(derive_seed(cfg.seed, rep))
    try:
        audit = empirical_privacy_audit(cfg.sensing, cfg.topology, cfg.adversary, rng)
    except (ValueError, metrology.MetrologyError) as exc:
        raise RunError("privacy-audit", exc) from exc
    return {"repetition": rep, **audit.to_dict()}


def _mean(xs) -> Optional[float]:
    xs = [x for x in xs if x is not None]
    return float(np.mean(xs)) if xs else None


def _std(xs) -> Optional[float]:
    xs = [x for x in xs if x is not None]
    return float(np.std(xs, ddof=1)) if len(xs) > 1 else (0.0 if xs else None)


def _aggregate(cfg: ScenarioConfig, mode: str, rows: list) -> dict:
    if mode == "verify":
        acc = [r["accepted"] for r in rows]
        fs = [r["transcript"]["f"] for r in rows]
        accepted_rows = [r for r in rows if r["accepted"]]
        violations = sum(1 for r in accepted_rows if r["honest_reduced_fidelity"] < r["fidelity_bound"])
        meps = [r["measured_epsilon"] for r in accepted_rows if r["measured_epsilon"] is not None]
        g = privacy_guarantee(cfg.verification.c, cfg.verification.n, float(np.mean(fs)),
                              cfg.topology.n_honest, cfg.verification.m)
        return {
            "repetitions": len(rows),
            "acceptance_rate": float(np.mean(acc)),
            "mean_f": float(np.mean(fs)),
            "std_f": _std(fs),
            "fidelity_bound": _mean(r["fidelity_bound"] for r in rows),
            "measured_fidelity": _mean(r["honest_reduced_fidelity"] for r in rows),
            "soundness_probability": rows[0]["soundness_probability"],
            "bounds_applicable": rows[0]["bounds_applicable"],
            "accepted_below_bound": violations,
            "eps_paper": g.eps_paper,
            "eps_definition": g.eps_definition,
            "measured_eps": max(meps) if meps else None,
        }
    if mode == "sense":
        est = [r["estimate"] for r in rows]
        used = [r["rounds_used"] / (r["rounds_used"] + r["rounds_discarded"]) for r in rows]
        return {
            "repetitions": len(rows),
            "acceptance_rate": float(np.mean(used)),
            "mean_f": _mean(r["mean_f_accepted"] for r in rows),
            "estimate_mean": float(np.mean(est)),
            "estimate_std": _std(est),
            "true_value": rows[0]["true_value"],
            "eps_paper": _mean(r["privacy"]["eps_paper"] for r in rows),
            "eps_definition": _mean(r["privacy"]["eps_definition"] for r in rows),
            "fidelity_bound": None,
            "measured_fidelity": None,
            "measured_eps": None,
        }
    if mode == "privacy-audit":
        acc = [r for r in rows if r["accepted"]]
        meps = [r["measured_epsilon"] for r in acc if r["measured_epsilon"] is not None]
        return {
            "repetitions": len(rows),
            "acceptance_rate": len(acc) / len(rows),
            "mean_f": float(np.mean([r["f"] for r in rows])),
            "measured_eps": max(meps) if meps else None,
            "eps_paper": _mean(r["guarantee"]["eps_paper"] for r in acc),
            "eps_definition": _mean(r["guarantee"]["eps_definition"] for r in acc),
            "all_within_ceiling": all(r["within_ceiling"] for r in acc if r["within_ceiling"] is not None),
            "fidelity_bound": None,
            "measured_fidelity": None,
        }
    raise ValueError(mode)


def _qfi_report(cfg: ScenarioConfig) -> dict:
    q = cfg.qfi
    n_nodes = cfg.topology.n_nodes
    if q["state"] == "resource":
        state, assignment = resource_state_for_function(cfg.function)
    else:
        assignment = QubitAssignment.one_per_node(n_nodes)
        if q["state"] == "ghz":
            state = ghz_state(n_nodes)
        elif q["state"] == "plus":
            state = qcore.plus_state(n_nodes)
        else:
            rho = ghz_state(n_nodes).density().copy()
            rho[0, -1] *= q["p"]
            rho[-1, 0] *= q["p"]
            state = qcore.QuantumState(rho)
    if q["direction"] == "function":
        direction = np.asarray(cfg.function.k, dtype=float) if q["state"] == "resource" else np.ones(n_nodes)
    elif q["direction"] == "average":
        direction = np.ones(n_nodes)
    else:
        direction = np.zeros(n_nodes)
        direction[int(q["direction"])] = 1.0
    fam = metrology.phase_family(state, assignment, direction, base_phases=np.array(cfg.phases))
    results = {"mixed": metrology.qfi_mixed(fam, q["tolerance"]).to_dict()}
    if state.is_pure:
        results["pure"] = metrology.qfi_pure(fam).to_dict()
    results["bures"] = metrology.qfi_bures_oracle(fam, q["step"]).to_dict()
    value = results["mixed"]["value"]
    crb = metrology.cramer_rao_bound(value, cfg.sensing.nu) if value > 0 else None
    priv = None
    if cfg.topology.n_honest >= 2:
        priv = metrology.privacy_epsilon(state, assignment, cfg.topology.honest).to_dict()
    return {
        "state": q["state"],
        "direction": [float(v) for v in direction],
        "qfi": results,
        "cramer_rao_bound": crb,
        "nu": cfg.sensing.nu,
        "privacy": priv,
    }


def run_scenario(cfg: ScenarioConfig, mode: str = "sense", *, keep_tests: bool = False,
                 workers: Optional[int] = None) -> RunReport:
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    t0 = time.perf_counter()
    if mode == "qfi":
        try:
            body = _qfi_report(cfg)
        except (ValueError, metrology.MetrologyError) as exc:
            raise RunError("qfi", exc) from exc
        agg = {
            "repetitions": 1,
            "qfi": body["qfi"]["mixed"]["value"],
            "cramer_rao_bound": body["cramer_rao_bound"],
            "measured_eps": body["privacy"]["epsilon"] if body.get("privacy") else None,
        }
        return RunReport(mode, cfg.echo(), [body], agg,
                         {"wall_seconds": time.perf_counter() - t0})
    if mode == "verify":
        def job(r):
            return _verify_once(cfg, r, keep_tests)
    elif mode == "sense":
        def job(r):
            return _sense_once(cfg, r)
    else:
        def job(r):
            return _audit_once(cfg, r)
    reps = range(cfg.repetitions)
    nworkers = workers or cfg.workers
    if nworkers > 1:
        with ThreadPoolExecutor(max_workers=nworkers) as pool:
            rows = list(pool.map(job, reps))
    else:
        rows = [job(r) for r in reps]
    rows.sort(key=lambda r: r["repetition"])
    tests = None
    if keep_tests and mode == "verify":
        tests = [t for r in rows for t in r.pop("_tests")]
    agg = _aggregate(cfg, mode, rows)
    return RunReport(mode, cfg.echo(), rows, agg, {"wall_seconds": time.perf_counter() - t0}, tests)


def summary_row(value, report: RunReport) -> dict:
    a = report.aggregate
    return {"value": value, **{k: a.get(k) for k in SUMMARY_COLUMNS[1:]}}


def sweep(cfg: ScenarioConfig, axis: str, values: Sequence[float], mode: str = "verify",
          workers: Optional[int] = None) -> tuple[list, list]:
    """One report per value of the numeric field at ``axis``; plus summary rows."""
    reports, rows = [], []
    for v in values:
        data = set_path(cfg.resolved, axis, v)
        sub = resolve_config(data)
        rep = run_scenario(sub, mode, workers=workers)
        reports.append(rep)
        rows.append(summary_row(v, rep))
    return reports, rows


# ---------------------------------------------------------------------------
# output
# ---------------------------------------------------------------------------

def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.generic):
        return _clean(obj.item())
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def dumps_record(report: RunReport) -> str:
    return json.dumps(_clean(report.record()), sort_keys=True, indent=2) + "\n"


def parse_record(text: str) -> dict:
    data = json.loads(text)
    if data.get("schema") != SCHEMA:
        raise ValueError("not a privsense run report")
    if data.get("schema_version") != SCHEMA_VERSION:
        raise ValueError(f"unsupported schema version {data.get('schema_version')}")
    return data


def dumps_table(rows: list) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(SUMMARY_COLUMNS), lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: ("" if r.get(k) is None else r.get(k)) for k in SUMMARY_COLUMNS})
    return buf.getvalue()


def dumps_test_log(report: RunReport) -> str:
    if report.tests is None:
        raise ValueError("report carries no per-test records (run verify with keep_tests)")
    return "".join(json.dumps(_clean(t), sort_keys=True) + "\n" for t in report.tests)


def emit_report(report: RunReport, out_dir: str, formats: Sequence[str], *, stem: Optional[str] = None,
                table_rows: Optional[list] = None) -> list[str]:
    """Write the requested formats; returns the written paths."""
    os.makedirs(out_dir, exist_ok=True)
    stem = stem or report.mode
    written = []
    for fmt in formats:
        if fmt == "structured-record":
            path = os.path.join(out_dir, f"{stem}.json")
            text = dumps_record(report)
        elif fmt == "summary-table":
            path = os.path.join(out_dir, f"{stem}.csv")
            rows = table_rows if table_rows is not None else [summary_row(None, report)]
            text = dumps_table(rows)
        elif fmt == "per-test-log":
            if report.tests is None:
                continue
            path = os.path.join(out_dir, f"{stem}.tests.jsonl")
            text = dumps_test_log(report)
        else:
            raise ValueError(f"unknown format {fmt!r}")
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
        written.append(path)
    return written


__all__ = [
    "ConfigError",
    "RunError",
    "RunReport",
    "derive_seed",
    "dumps_record",
    "dumps_table",
    "dumps_test_log",
    "emit_report",
    "parse_record",
    "run_scenario",
    "summary_row",
    "sweep",
]
