"""Command-line entry point.

Exit status is 0 whenever a run completes, whatever the accept/reject
decisions were; those are data in the report.  Errors exit nonzero:
2 for bad input, 1 for failures during a run.
"""

from __future__ import annotations

import argparse
import copy
import json
import logging
import sys
from typing import Optional, Sequence

from .config import FORMATS, ConfigError, parse_config, resolve_config
from .runner import RunError, emit_report, run_scenario, sweep

log = logging.getLogger("privsense")


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="privsense", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", "-c", required=True, help="YAML scenario file")
        sp.add_argument("--seed", type=int, help="override the master seed")
        sp.add_argument("--repetitions", "-r", type=int, help="override the repetition count")
        sp.add_argument("--workers", "-j", type=int, help="threads for repetitions")
        sp.add_argument("--out", "-o", help="output directory (default: output.dir)")
        sp.add_argument("--format", "-f", action="append", choices=FORMATS, dest="formats",
                        help="output format; repeatable (default: output.formats)")

    for name, helptext in (
        ("verify", "verification only (per-test transcripts)"),
        ("sense", "verification plus parity estimation"),
        ("qfi", "quantum Fisher information of a described state family"),
        ("privacy-audit", "measured privacy epsilon of accepted targets"),
    ):
        common(sub.add_parser(name, help=helptext))
    sw = sub.add_parser("sweep", help="repeat a run over values of one numeric field")
    common(sw)
    sw.add_argument("--axis", required=True, help="dotted path, e.g. verification.c or adversary.channels.0.p")
    sw.add_argument("--values", required=True, help="comma-separated numbers")
    sw.add_argument("--mode", default="verify", choices=("verify", "sense", "privacy-audit"))
    return p


def _load(args):
    with open(args.config, encoding="utf-8") as fh:
        data = copy.deepcopy(parse_config(fh.read()).resolved)
    for key in ("seed", "repetitions", "workers"):
        if getattr(args, key) is not None:
            data[key] = getattr(args, key)
    if args.out is not None:
        data["output"]["dir"] = args.out
    if args.formats:
        data["output"]["formats"] = list(args.formats)
    return resolve_config(data)


def _parse_values(text: str) -> list[float]:
    out = []
    for tok in text.split(","):
        tok = tok.strip()
        if not tok:
            continue
        try:
            v = float(tok)
        except ValueError:
            raise ConfigError([f"--values: {tok!r} is not a number"]) from None
        out.append(int(v) if v.is_integer() and "." not in tok and "e" not in tok.lower() else v)
    if not out:
        raise ConfigError(["--values: no values given"])
    return out


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = _load(args)
        formats = cfg.formats
        if args.command == "sweep":
            values = _parse_values(args.values)
            reports, rows = sweep(cfg, args.axis, values, args.mode)
            written = []
            for v, rep in zip(values, reports):
                written += emit_report(rep, cfg.output_dir, [f for f in formats if f != "summary-table"],
                                       stem=f"sweep_{args.axis}_{v}")
            if "summary-table" in formats:
                written += emit_report(reports[0], cfg.output_dir, ["summary-table"],
                                       stem=f"sweep_{args.axis}", table_rows=rows)
            summary = {"axis": args.axis, "rows": rows}
        else:
            report = run_scenario(cfg, args.command, keep_tests="per-test-log" in formats)
            written = emit_report(report, cfg.output_dir, formats)
            summary = {"mode": report.mode, "aggregate": report.aggregate}
    except ConfigError as exc:
        print(f"privsense: invalid configuration:\n{exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"privsense: I/O error: {exc}", file=sys.stderr)
        return 1
    except RunError as exc:
        print(f"privsense: run failed: {exc}", file=sys.stderr)
        return 1
    print(json.dumps(summary, sort_keys=True, default=str))
    for path in written:
        log.info("wrote %s", path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
