"""Command-line front end.

Exit codes: 0 pass, 1 expectation violated or protocol mismatch, 2 parse or
validation error, 3 resource limit exceeded.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from .explorer import (
    ExploreOptions,
    ResourceLimitExceeded,
    UnknownRegisterError,
    check_expectations,
    explore,
    replay,
)
from .lang import LitmusSyntaxError, Load, Store, parse_litmus
from .oracle import OracleError, axiomatic_outcomes
from .protocol import ProtocolError, resolve_protocols

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_INPUT = 2
EXIT_RESOURCE = 3

log = logging.getLogger("viewlitmus")


def _load(path):
    with open(path, encoding="utf-8") as fh:
        program = parse_litmus(fh.read())
    return program, resolve_protocols(program)


def _options(args):
    return ExploreOptions(thread_orders=args.thread_orders, max_branches=args.max_branches)


def _fmt_valuation(regs):
    return " ".join(f"{r}={v}" for r, v in regs)


def parse_clause(text):
    """``"a==1,b==2"`` (or with ``&&``) -> ``(("a", 1), ("b", 2))``."""
    pairs = []
    for part in text.replace("&&", ",").split(","):
        part = part.strip()
        if not part:
            continue
        reg, sep, value = part.partition("==")
        if not sep:
            raise ValueError(f"bad clause element {part!r}; expected REG==VALUE")
        pairs.append((reg.strip(), int(value)))
    if not pairs:
        raise ValueError("empty clause")
    return tuple(pairs)


def report_json(report, timing=False):
    oc = report.outcomes
    stats = {
        "branches": oc.stats.get("branches", 0),
        "orders": oc.stats.get("orders", 0),
        "wall_ms": oc.stats.get("wall_ms") if timing else None,
    }
    doc = {
        "test": report.test,
        "protocols": report.protocols,
        "passed": report.passed,
        "outcomes": [
            {"regs": dict(val), "witness_len": len(oc.outcomes[val].trace)}
            for val in oc.valuations()
        ],
        "expectations": [
            {"polarity": v.polarity, "clause": v.clause_text(), "status": v.status}
            for v in report.verdicts
        ],
        "diagnostics": report.diagnostics,
        "stats": stats,
    }
    return json.dumps(doc, sort_keys=True, indent=2)


def report_text(report):
    lines = [f"test {report.test} ({report.protocols} protocols): {'PASS' if report.passed else 'FAIL'}"]
    for v in report.verdicts:
        lines.append(f"  {v.polarity} {{{v.clause_text()}}}: {v.status}")
    if not report.verdicts:
        for val in report.outcomes.valuations():
            lines.append(f"  outcome {_fmt_valuation(val)}")
    for d in report.diagnostics:
        lines.append(f"  {d}")
    return "\n".join(lines)


def format_trace(program, table, execution):
    """Human-readable witness trace; marks reads of writes not yet performed."""
    names = [th.tid.name for th in program.threads]
    lines = ["thread order: " + " ".join(names[t] for t in execution.thread_order)]
    done = set()
    by_thread = {}
    for step in execution.trace:
        by_thread.setdefault(step.thread, []).append(step)
    for t in execution.thread_order:
        for step in by_thread.get(t, ()):
            st = program.threads[t].body[step.index]
            src = "initial value" if step.chosen is None else table.name(step.chosen)
            if step.chosen is not None:
                src = f"{src} [{step.chosen}]"
            note = ""
            if (
                step.rule != "Write"
                and step.chosen is not None
                and step.chosen.thread != t
                and step.chosen.thread not in done
                and step.chosen != table.get(step.chosen.thread, step.chosen.location).initial
            ):
                note = f"  (speculative: {names[step.chosen.thread]} has not run yet)"
            if isinstance(st, Store):
                desc = f"writes {step.value} -> {src}"
            elif isinstance(st, Load):
                desc = f"reads {step.value} from {src}"
            else:
                desc = f"{step.rule} reads {step.value} from {src}"
            lines.append(f"  {names[t]}[{step.index}] {st}: {step.rule}, {desc}{note}")
        done.add(t)
    lines.append("registers: " + _fmt_valuation(execution.registers))
    return "\n".join(lines)


def cmd_check(args, out):
    program, table = _load(args.path)
    report = check_expectations(program, table, _options(args))
    if args.json:
        print(report_json(report, timing=args.timing), file=out)
    elif not args.quiet:
        print(report_text(report), file=out)
    return EXIT_OK if report.passed else EXIT_FAIL


def cmd_outcomes(args, out):
    program, table = _load(args.path)
    outcomes = explore(program, table, _options(args))
    if args.witness:
        clause = parse_clause(args.witness)
        for reg, _ in clause:
            if reg not in outcomes.registers:
                raise UnknownRegisterError(f"unknown register {reg!r}")
        ex = outcomes.witness(clause)
        if ex is None:
            print("UNREACHABLE", file=out)
            return EXIT_FAIL
        replay(program, table, ex)
        print(format_trace(program, table, ex), file=out)
        return EXIT_OK
    if args.json:
        doc = [dict(val) for val in outcomes.valuations()]
        print(json.dumps(doc, sort_keys=True), file=out)
    else:
        for val in outcomes.valuations():
            print(_fmt_valuation(val), file=out)
    for m in sorted(outcomes.mismatches):
        log.warning("%s", m)
    return EXIT_FAIL if outcomes.fatal_mismatch else EXIT_OK


def cmd_oracle(args, out):
    with open(args.path, encoding="utf-8") as fh:
        program = parse_litmus(fh.read())
    for val in sorted(axiomatic_outcomes(program)):
        print(_fmt_valuation(val), file=out)
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(
        prog="viewlitmus",
        description="Check relaxed-atomics litmus tests against view-based protocols.",
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("path", help="litmus file")
    common.add_argument("--thread-orders", choices=("all", "fixed"), default="all")
    common.add_argument("--max-branches", type=int, default=1_000_000)
    common.add_argument("--json", action="store_true", help="machine-readable output")
    common.add_argument("--quiet", action="store_true")
    common.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, metavar="{check,outcomes}")
    p = sub.add_parser("check", parents=[common], help="decide the file's expectations")
    p.add_argument("--timing", action="store_true", help="include wall time in --json stats")
    p.set_defaults(func=cmd_check)
    p = sub.add_parser("outcomes", parents=[common], help="list consistent final valuations")
    p.add_argument("--witness", metavar="CLAUSE", help="print a trace reaching e.g. a==1,b==2")
    p.set_defaults(func=cmd_outcomes)
    p = sub.add_parser("oracle", parents=[common])
    p.set_defaults(func=cmd_oracle)
    return parser


def main(argv=None, out=None):
    out = out or sys.stdout
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s: %(message)s",
    )
    try:
        return args.func(args, out)
    except (LitmusSyntaxError, ProtocolError) as exc:
        print(f"{args.path}:{exc}", file=sys.stderr)
        for v in getattr(exc, "violations", ()):
            print(f"  {v}", file=sys.stderr)
        return EXIT_INPUT
    except (UnknownRegisterError, OracleError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except ResourceLimitExceeded as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RESOURCE


if __name__ == "__main__":
    sys.exit(main())
