"""Command-line front end: check, project, run, equiv, link.

Exit codes: 0 ok, 1 parse/type/link errors, 2 usage or scenario errors,
3 deadlock, 4 inequivalent, 5 exploration bound exceeded.
"""

from __future__ import annotations

import argparse
import os
import sys
from typing import Sequence, TextIO

from .diagnostics import Diagnostic, DiagnosticError
from .epp import LinkError, ProjectedSystem, link, project, write_endpoints
from .explore import BoundExceeded
from .parser import parse_file
from .runtime import (
    MODES,
    Counterexample,
    Scenario,
    ScenarioError,
    check_equivalence,
    compare_systems,
    load_scenario,
    run,
    validate_scenario,
)
from .semantics import format_trace
from .syntax import Module
from .typecheck import analyze, builtin_signatures

EXIT_OK = 0
EXIT_ERRORS = 1
EXIT_USAGE = 2
EXIT_DEADLOCK = 3
EXIT_INEQUIVALENT = 4
EXIT_BOUND = 5


class _Abort(Exception):
    def __init__(self, code: int, message: str = "") -> None:
        self.code = code
        super().__init__(message)


class _Context:
    def __init__(self, args: argparse.Namespace, out: TextIO, err: TextIO) -> None:
        self.args = args
        self.out = out
        self.err = err
        no_color = getattr(args, "no_color", False)
        self.color = not no_color and hasattr(err, "isatty") and err.isatty()

    def diagnostics(self, diags: list[Diagnostic]) -> None:
        for d in diags:
            print(d.render(self.color), file=self.err)

    def scenario(self) -> Scenario:
        path = getattr(self.args, "scenario", None)
        if path is None:
            return Scenario()
        try:
            return load_scenario(path)
        except OSError as exc:
            raise _Abort(EXIT_USAGE, f"cannot read scenario {path}: {exc.strerror}") from None
        except DiagnosticError as exc:
            self.diagnostics(exc.diagnostics)
            raise _Abort(EXIT_ERRORS) from None
        except (ScenarioError, UnicodeDecodeError) as exc:
            raise _Abort(EXIT_ERRORS, f"{path}: {exc}") from None

    def load(self, path: str, scenario: Scenario | None = None):
        """Parse and typecheck ``path``; returns the module and its analysis."""
        try:
            res = parse_file(path)
        except OSError as exc:
            raise _Abort(EXIT_USAGE, f"cannot read {path}: {exc.strerror}") from None
        if not res.ok:
            self.diagnostics(res.diagnostics)
            raise _Abort(EXIT_ERRORS)
        try:
            sigs = builtin_signatures(scenario) if scenario is not None else None
        except ValueError as exc:
            raise _Abort(EXIT_ERRORS, str(exc)) from None
        analysis = analyze(res.module, sigs)
        self.diagnostics(analysis.diagnostics)
        if not analysis.ok:
            raise _Abort(EXIT_ERRORS)
        return res.module, analysis

    def entry(self, m: Module, given: str | None, path: str) -> str:
        if given is not None:
            if given not in m.procedures:
                raise _Abort(EXIT_USAGE, f"{path}: no procedure named '{given}'")
            return given
        if m.entry is not None:
            return m.entry
        if len(m.procedures) == 1:
            return next(iter(m.procedures))
        raise _Abort(EXIT_USAGE, f"{path} defines several procedures; choose one with --entry")


def _validate(scenario: Scenario, analysis, entry: str, processes=None) -> None:
    inputs = analysis.inputs(entry)
    if processes is not None:
        inputs = {p: v for p, v in inputs.items() if p in processes}
    try:
        validate_scenario(scenario, inputs)
    except ScenarioError as exc:
        raise _Abort(EXIT_USAGE, f"scenario: {exc}") from None


def _report_counterexample(ctx: _Context, res: Counterexample) -> int:
    if res.reason == "deadlock":
        print(f"DEADLOCK on the {res.side} side after:", file=ctx.err)
        ctx.out.write(format_trace(res.trace))
        return EXIT_DEADLOCK
    print(f"NOT EQUIVALENT: trace possible only on the {res.side} side", file=ctx.err)
    ctx.out.write(format_trace(res.trace))
    return EXIT_INEQUIVALENT


# --------------------------------------------------------------------------
# Subcommands


def cmd_check(ctx: _Context) -> int:
    scenario = ctx.scenario() if ctx.args.scenario else None
    status = EXIT_OK
    for path in ctx.args.files:
        try:
            ctx.load(path, scenario)
        except _Abort as exc:
            if str(exc):
                print(str(exc), file=ctx.err)
            status = max(status, exc.code)
    return status


def cmd_project(ctx: _Context) -> int:
    scenario = ctx.scenario() if ctx.args.scenario else None
    m, _ = ctx.load(ctx.args.file, scenario)
    entry = ctx.entry(m, ctx.args.entry, ctx.args.file)
    system = project(m, entry)
    for path in write_endpoints(system, entry, ctx.args.output):
        print(path, file=ctx.out)
    return EXIT_OK


def _run_system(ctx: _Context, system: ProjectedSystem, scenario: Scenario) -> int:
    a = ctx.args
    res = run(system, scenario, a.mode, a.seed, a.bound)
    ctx.out.write(format_trace(res.trace))
    if res.outcome == "deadlock":
        print("DEADLOCK", file=ctx.err)
        for who, what in sorted(res.waiting.items()):
            print(f"  {who}: {what}", file=ctx.err)
        return EXIT_DEADLOCK
    if res.outcome == "bound":
        print(f"stopped after {a.bound} steps", file=ctx.err)
        return EXIT_BOUND
    return EXIT_OK


def cmd_run(ctx: _Context) -> int:
    scenario = ctx.scenario()
    m, analysis = ctx.load(ctx.args.file, scenario)
    entry = ctx.entry(m, ctx.args.entry, ctx.args.file)
    _validate(scenario, analysis, entry)
    system = project(m, entry)
    if system.externals:
        raise _Abort(EXIT_USAGE, f"procedure {entry} refers to external roles; use 'link'")
    return _run_system(ctx, system, scenario)


def cmd_equiv(ctx: _Context) -> int:
    a = ctx.args
    scenario = ctx.scenario()
    m, analysis = ctx.load(a.file, scenario)
    entry = ctx.entry(m, a.entry, a.file)
    _validate(scenario, analysis, entry)
    if project(m, entry).externals:
        raise _Abort(EXIT_USAGE, f"procedure {entry} refers to external roles; use 'link'")
    res = check_equivalence(m, entry, scenario, a.mode, a.bound, a.jobs)
    if isinstance(res, Counterexample):
        return _report_counterexample(ctx, res)
    print(f"EQUIVALENT ({res.traces} traces)", file=ctx.out)
    return EXIT_OK


def cmd_link(ctx: _Context) -> int:
    a = ctx.args
    scenario = ctx.scenario()
    entries = list(a.entry or [])
    if len(entries) not in (0, 1, len(a.files)):
        raise _Abort(EXIT_USAGE, "give --entry once per module, in order")
    parts = []
    for i, path in enumerate(a.files):
        m, analysis = ctx.load(path, scenario)
        given = entries[i] if len(entries) == len(a.files) else (entries[0] if entries else None)
        if given is not None and given not in m.procedures and len(entries) == 1:
            given = None
        entry = ctx.entry(m, given, path)
        system = project(m, entry)
        _validate(scenario, analysis, entry, set(system.endpoints))
        parts.append(system)
    linked = parts[0]
    for other in parts[1:]:
        linked = link(linked, other)
    if linked.externals:
        missing = ", ".join(f"{r}@{k}" for k, r in sorted(linked.externals))
        raise _Abort(EXIT_ERRORS, f"linked system is still open: {missing}")
    if a.output:
        for path in write_endpoints(linked, "linked", a.output):
            print(path, file=ctx.err)
    if a.reference is None:
        return _run_system(ctx, linked, scenario)
    ref_m, ref_analysis = ctx.load(a.reference, scenario)
    ref_entry = ctx.entry(ref_m, a.reference_entry, a.reference)
    _validate(scenario, ref_analysis, ref_entry)
    res = compare_systems(linked, project(ref_m, ref_entry), scenario, a.mode, a.bound,
                          ("linked", "reference"))
    if isinstance(res, Counterexample):
        return _report_counterexample(ctx, res)
    print(f"EQUIVALENT ({res.traces} traces)", file=ctx.out)
    return EXIT_OK


# --------------------------------------------------------------------------
# Argument parsing


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="chor", description="Choreography compiler and checker.")
    parser.add_argument("--no-color", action="store_true", help="never color diagnostics")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    def common(p: argparse.ArgumentParser, scenario_required: bool = False) -> None:
        p.add_argument("--no-color", action="store_true", default=argparse.SUPPRESS,
                       help="never color diagnostics")
        p.add_argument("--scenario", required=scenario_required,
                       help="scenario file with initial stores and builtins")

    def execution(p: argparse.ArgumentParser) -> None:
        p.add_argument("--mode", choices=MODES, default="sync")
        p.add_argument("--bound", type=_positive, default=10_000, help="step bound (default 10000)")

    p = sub.add_parser("check", help="parse and typecheck")
    p.add_argument("files", nargs="+", metavar="FILE")
    common(p)
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("project", help="write one endpoint program per process")
    p.add_argument("file", metavar="FILE")
    p.add_argument("--entry")
    p.add_argument("-o", "--output", default=".", help="output directory")
    common(p)
    p.set_defaults(func=cmd_project)

    p = sub.add_parser("run", help="execute the projected system once")
    p.add_argument("file", metavar="FILE")
    p.add_argument("--entry")
    p.add_argument("--seed", type=int, default=0)
    common(p)
    execution(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("equiv", help="compare choreography and network trace sets")
    p.add_argument("file", metavar="FILE")
    p.add_argument("--entry")
    p.add_argument("--jobs", type=_positive, default=os.cpu_count() or 1)
    common(p)
    execution(p)
    p.set_defaults(func=cmd_equiv)

    p = sub.add_parser("link", help="link separately projected modules")
    p.add_argument("files", nargs="+", metavar="FILE")
    p.add_argument("--entry", action="append", help="entry procedure (once per module, in order)")
    p.add_argument("--reference", help="closed module the linked system must match")
    p.add_argument("--reference-entry")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--output", help="also write the linked endpoint programs here")
    common(p)
    execution(p)
    p.set_defaults(func=cmd_link)
    return parser


def _positive(text: str) -> int:
    n = int(text)
    if n <= 0:
        raise argparse.ArgumentTypeError("must be positive")
    return n


def main(argv: Sequence[str] | None = None, out: TextIO | None = None, err: TextIO | None = None) -> int:
    out = out or sys.stdout
    err = err or sys.stderr
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    ctx = _Context(args, out, err)
    try:
        return args.func(ctx)
    except _Abort as exc:
        if str(exc):
            print(str(exc), file=err)
        return exc.code
    except LinkError as exc:
        print(f"link error: {exc}", file=err)
        return EXIT_ERRORS
    except ScenarioError as exc:
        print(f"scenario: {exc}", file=err)
        return EXIT_USAGE
    except BoundExceeded as exc:
        print(str(exc), file=err)
        return EXIT_BOUND


def main_entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    main_entry()
