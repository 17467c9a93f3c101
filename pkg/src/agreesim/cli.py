"""Command-line entry point: ``sim run|attack|check|cc|reduce``.

Machine-readable JSON goes to ``--out`` and, with ``--json``, to stdout.
Human-readable text goes to stderr. Exit codes: 0 success or negative
finding, 1 positive finding, 2 usage or input error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from typing import Any, Optional, Sequence

from . import trace
from .codec import to_jsonable
from .engine import (
    MalformedAlgorithmOutput,
    ScheduleError,
    decision_rounds,
    decisions,
    message_complexity,
    run,
    schedule_from_json,
)
from .harness import check_parameters, falsify, horizon_cap
from .reductions import MENU, ReductionRefused, agreement_conformance, val_agreement_from_ic, weak_conformance
from .registry import UnknownAlgorithm, build_algorithm, names
from .validate import validate_execution
from .validity import EnumerationTooLarge, PropertyError, classify_solvability, load_property

OK, FOUND, USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def say(msg: str) -> None:
    print(msg, file=sys.stderr)


def emit(args: argparse.Namespace, doc: Any, out: Optional[str] = None) -> None:
    text = json.dumps(doc, indent=2, sort_keys=True)
    path = out if out is not None else getattr(args, "out", None)
    if path:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    if getattr(args, "json", False):
        print(text)


def _algorithm(algo_id: str, n: int, t: int):
    try:
        return build_algorithm(algo_id, n, t)
    except (UnknownAlgorithm, ValueError) as exc:
        raise UsageError(str(exc)) from exc


def parse_proposals(text: str, n: int) -> list:
    if text in ("all0", "all1"):
        return [int(text[-1])] * n
    if "," in text:
        try:
            vals = [int(x) for x in text.split(",")]
        except ValueError:
            raise UsageError(f"proposals {text!r} are not integers") from None
    elif set(text) <= {"0", "1"} and text:
        vals = [int(c) for c in text]
    else:
        raise UsageError(f"--propose must be a bitstring, all0, all1 or a comma list, got {text!r}")
    if len(vals) != n:
        raise UsageError(f"{len(vals)} proposals for n={n}")
    return vals


def _cap() -> int:
    try:
        return horizon_cap()
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


# ------------------------------------------------------------------ commands


def cmd_run(args) -> int:
    alg = _algorithm(args.algo, args.n, args.t)
    proposals = parse_proposals(args.propose, args.n)
    cap = _cap()
    schedule = None
    if args.schedule:
        try:
            with open(args.schedule, encoding="utf-8") as fh:
                schedule = schedule_from_json(json.load(fh), MENU, name=args.schedule)
            schedule.check(args.n, args.t)
        except (OSError, json.JSONDecodeError, ScheduleError) as exc:
            raise UsageError(f"schedule: {exc}") from exc
    if args.rushing:
        if schedule is None or not schedule.byzantine:
            raise UsageError("--rushing needs a schedule with Byzantine processes")
        schedule = dataclasses.replace(schedule, rushing=True)
    if args.horizon is not None and not 1 <= args.horizon <= cap:
        raise UsageError(f"--horizon must be in 1..{cap}")
    horizon = args.horizon or cap
    until = None if args.horizon else 2
    try:
        e = run(alg, proposals, schedule, horizon, until_decided=until)
    except MalformedAlgorithmOutput as exc:
        raise UsageError(f"algorithm output rejected: {exc}") from exc
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(trace.dumps(e, dump_internal=args.dump_internal) + "\n")
    dec = decisions(e)
    summary = {
        "algorithm": e.algorithm, "n": e.n, "t": e.t, "horizon": e.horizon, "schedule": e.schedule,
        "faulty": sorted(e.faulty), "message_complexity": message_complexity(e),
        "decisions": {str(p): to_jsonable(v) for p, v in dec.items()},
        "decision_rounds": {str(p): r for p, r in decision_rounds(e).items()},
        "violations": [str(v) for v in validate_execution(e, alg)],
    }
    say(f"{e.algorithm}: {e.horizon} rounds, {summary['message_complexity']} correct messages, "
        f"decisions {sorted(set(map(str, dec.values())))}")
    emit(args, summary, out="")
    return OK


def cmd_attack(args) -> int:
    try:
        check_parameters(args.n, args.t)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    alg = _algorithm(args.algo, args.n, args.t)
    v = falsify(alg, args.n, args.t, jobs=args.jobs)
    doc = v.to_json()
    doc.update(algorithm=alg.name, n=args.n, t=args.t)
    emit(args, doc)
    if v.kind == "violation":
        say(f"violation of {v.property} by {list(v.processes)} reached at {v.probe} "
            f"({len(v.witness.faulty)} faulty); {v.note}")
        return FOUND
    say(f"budget exceeded at {v.probe}: {v.max_count} correct messages, budget {v.budget:g}")
    return OK


def cmd_check(args) -> int:
    try:
        with open(args.trace, encoding="utf-8") as fh:
            e = trace.loads(fh.read())
    except (OSError, ValueError, KeyError, TypeError) as exc:
        say(f"cannot parse {args.trace}: {exc}")
        return USAGE
    alg = _algorithm(args.algo or e.algorithm, e.n, e.t)
    violations = validate_execution(e, alg)
    for v in violations:
        say(str(v))
    emit(args, {"trace": args.trace, "algorithm": alg.name, "violations": [str(v) for v in violations]})
    if not violations:
        say(f"{args.trace}: all execution guarantees hold")
    return FOUND if violations else OK


def _property(args):
    try:
        return load_property(args.property, args.n, args.t)
    except PropertyError as exc:
        raise UsageError(str(exc)) from exc


def cmd_cc(args) -> int:
    prop = _property(args)
    try:
        cls = classify_solvability(prop, prop.n, prop.t, authenticated=not args.unauth)
    except EnumerationTooLarge as exc:
        raise UsageError(str(exc)) from exc
    doc = {
        "property": prop.name, "n": prop.n, "t": prop.t, "authenticated": not args.unauth,
        "classification": cls.verdict, "containment_condition": cls.cc_holds,
        "witness": cls.witness.to_json(prop) if cls.witness else None,
        "trivial_value": to_jsonable(cls.trivial_value),
    }
    emit(args, doc)
    say(cls.verdict)
    if cls.witness:
        say(f"no common admissible value for {cls.witness.config}:")
        for c in cls.witness.conflicting:
            say(f"  {c} admits {sorted(map(str, prop.admissible(c)))}")
    return OK


def cmd_reduce(args) -> int:
    prop = _property(args)
    try:
        if args.target == "weak":
            agreement = _algorithm(args.via, prop.n, prop.t) if args.via else val_agreement_from_ic(prop)
            report = weak_conformance(agreement, prop)
        else:
            report = agreement_conformance(prop)
    except ReductionRefused as exc:
        emit(args, {"property": prop.name, "refused": str(exc)})
        say(f"reduction refused: {exc}")
        return FOUND
    except EnumerationTooLarge as exc:
        raise UsageError(str(exc)) from exc
    emit(args, report)
    if "anchors" in report:
        say(f"anchors: {json.dumps(report['anchors'], sort_keys=True)}")
    say(f"{report['algorithm']}: {len(report['runs'])} runs, {report['failures']} nonconforming")
    return FOUND if report["failures"] else OK


# ------------------------------------------------------------------ parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sim", description="Synchronous-round agreement simulator.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, metavar="{run,attack,check,cc,reduce}")

    def common_out(sp):
        sp.add_argument("--out", help="write JSON output to this file")
        sp.add_argument("--json", action="store_true", help="print JSON output to stdout")

    r = sub.add_parser("run", help="run an algorithm under a schedule and write its trace")
    r.add_argument("--algo", required=True, help=f"one of {', '.join(names())}")
    r.add_argument("--n", type=int, required=True)
    r.add_argument("--t", type=int, required=True)
    r.add_argument("--propose", required=True, help="bitstring, all0, all1 or comma-separated integers")
    r.add_argument("--schedule", help="adversary schedule JSON file")
    r.add_argument("--horizon", type=int, help="rounds to run (default: until decided + 2)")
    r.add_argument("--rushing", action="store_true", help="Byzantine processes see correct same-round sends first")
    r.add_argument("--dump-internal", action="store_true", help="include full internal states in the trace")
    r.add_argument("--out", help="write the trace to this file")
    r.add_argument("--json", action="store_true", help="print a JSON run summary to stdout")
    r.set_defaults(func=cmd_run)

    a = sub.add_parser("attack", help="search for a violation of a weak-consensus candidate")
    a.add_argument("--algo", required=True)
    a.add_argument("--n", type=int, required=True)
    a.add_argument("--t", type=int, required=True)
    a.add_argument("--jobs", type=int, default=1, help="threads for independent probe runs")
    a.add_argument("--out", default="verdict.json", help="write the verdict JSON here (default: verdict.json)")
    a.add_argument("--json", action="store_true", help="print the verdict JSON to stdout")
    a.set_defaults(func=cmd_attack)

    c = sub.add_parser("check", help="validate a trace file")
    c.add_argument("trace")
    c.add_argument("--algo", help="algorithm id (default: from the trace header)")
    common_out(c)
    c.set_defaults(func=cmd_check)

    cc = sub.add_parser("cc", help="containment condition and solvability of a validity property")
    cc.add_argument("--property", required=True, help="builtin:<weak|strong|ic|constant> or a JSON file")
    cc.add_argument("--n", type=int)
    cc.add_argument("--t", type=int)
    mode = cc.add_mutually_exclusive_group()
    mode.add_argument("--auth", action="store_true", help="authenticated setting (default)")
    mode.add_argument("--unauth", action="store_true", help="unauthenticated setting")
    common_out(cc)
    cc.set_defaults(func=cmd_cc)

    rd = sub.add_parser("reduce", help="build and check the reductions")
    rsub = rd.add_subparsers(dest="target", required=True, metavar="{weak,agreement}")
    for name, helptext in (("weak", "weak consensus from an agreement algorithm"),
                           ("agreement", "agreement from interactive consistency")):
        sp = rsub.add_parser(name, help=helptext)
        sp.add_argument("--property", required=True)
        sp.add_argument("--n", type=int)
        sp.add_argument("--t", type=int)
        if name == "weak":
            sp.add_argument("--via", help="agreement algorithm id (default: agreement over interactive consistency)")
        common_out(sp)
        sp.set_defaults(func=cmd_reduce)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "jobs", 1) < 1:
        say("--jobs must be positive")
        return USAGE
    try:
        return args.func(args)
    except UsageError as exc:
        say(f"sim {args.command}: {exc}")
        return USAGE


if __name__ == "__main__":
    sys.exit(main())
