"""``hrt`` command line: check, sim, plan and graph.

Exit codes: 0 ok, 1 model errors, 2 usage/I/O/parse problems, 3 runtime abort.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import Sequence

from hrt.diagnostics import DiagnosticError, format_diagnostics
from hrt.dsl import parse_model, resolve
from hrt.events import SimulationError
from hrt.lowering import emit_dot, emit_plan, lower_to_plan, write_atomic
from hrt.metamodel import ModelDefinition
from hrt.scheduler import CONCURRENT, LOCKSTEP, ConfigError, SimConfig, parse_stimulus, run_simulation
from hrt.validator import validate_all

EXIT_OK = 0
EXIT_MODEL = 1
EXIT_USAGE = 2
EXIT_RUNTIME = 3

# front-end codes that mean the file is not a model at all rather than a wrong model
_PARSE_CODES = {"E-LEX", "E-SYNTAX"}


class _Exit(Exception):
    def __init__(self, code: int):
        self.code = code


def _read(path: str) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        print(f"hrt: cannot read {path}: {exc}", file=sys.stderr)
        raise _Exit(EXIT_USAGE) from None


def _load(path: str) -> ModelDefinition:
    """Parse, resolve and validate; prints diagnostics (warnings included) to stdout."""
    source = _read(path)
    try:
        model = resolve(parse_model(source, path))
    except DiagnosticError as exc:
        sys.stdout.write(format_diagnostics(exc.diagnostics))
        parse_only = all(d.code in _PARSE_CODES for d in exc.diagnostics if d.is_error)
        raise _Exit(EXIT_USAGE if parse_only else EXIT_MODEL) from None
    report = validate_all(model)
    sys.stdout.write(format_diagnostics(list(report.diagnostics)))
    if not report.passed:
        raise _Exit(EXIT_MODEL)
    return model


def _emit(text: str, out: str | None, stream=None) -> None:
    if out is None:
        (stream or sys.stdout).write(text)
        return
    try:
        write_atomic(out, text)
    except OSError as exc:
        print(f"hrt: cannot write {out}: {exc}", file=sys.stderr)
        raise _Exit(EXIT_USAGE) from None


def cmd_check(args) -> int:
    _load(args.model)
    return EXIT_OK


def cmd_sim(args) -> int:
    model = _load(args.model)
    try:
        cfg = SimConfig.from_model(model, t_end=args.t_end, h=args.step, mode=args.mode,
                                   decimation=args.decimation)
        plan = lower_to_plan(model)
        stimulus = parse_stimulus(_read(args.stimulus), plan) if args.stimulus else ()
        trace = run_simulation(plan, cfg, stimulus)
    except ConfigError as exc:
        print(f"hrt: error[{exc.code}]: {exc.message}", file=sys.stderr)
        return EXIT_USAGE
    except SimulationError as exc:
        where = f"t={exc.t!r}" if exc.t is not None else "t=?"
        print(f"hrt: runtime error[{exc.code}] at {where} in {exc.path or '/'}: {exc.message}",
              file=sys.stderr)
        return EXIT_RUNTIME
    _emit(trace.to_csv(), args.out)
    return EXIT_OK


def cmd_plan(args) -> int:
    model = _load(args.model)
    _emit(emit_plan(lower_to_plan(model)), args.out)
    return EXIT_OK


def cmd_graph(args) -> int:
    model = _load(args.model)
    _emit(emit_dot(model), args.out)
    return EXIT_OK


def _decimal(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    return value


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hrt", description="Check, lower and simulate .hrt models.")
    sub = p.add_subparsers(dest="command", required=True, metavar="command")

    check = sub.add_parser("check", help="report model diagnostics")
    check.add_argument("model")
    check.set_defaults(func=cmd_check)

    sim = sub.add_parser("sim", help="simulate and write a trace CSV")
    sim.add_argument("model")
    sim.add_argument("--t-end", type=_decimal, help="end time (default: model's simulation block)")
    sim.add_argument("--step", type=_decimal, help="macro step h (default: model or 0.01)")
    sim.add_argument("--decimation", type=int, help="sample every n-th boundary")
    sim.add_argument("--mode", choices=(LOCKSTEP, CONCURRENT), default=LOCKSTEP)
    sim.add_argument("--stimulus", help="CSV of t,instance,signal,payload... lines")
    sim.add_argument("--out", help="trace file (default: stdout)")
    sim.set_defaults(func=cmd_sim)

    for name, fn, what in (("plan", cmd_plan, "execution plan"), ("graph", cmd_graph, "DOT graph")):
        sp = sub.add_parser(name, help=f"write the {what}")
        sp.add_argument("model")
        sp.add_argument("--out", help="output file (default: stdout)")
        sp.set_defaults(func=fn)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    try:
        return args.func(args)
    except _Exit as exc:
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
