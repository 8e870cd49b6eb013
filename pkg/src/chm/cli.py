"""Batch driver: check `.ch` files, print reports, run the golden corpus.

Exit codes: 0 well-typed, 1 ill-typed (or mismatching corpus), 2 unknown
(fuel exhausted), 64 usage error, 65 corrupt corpus data, 66 unreadable
input.  `CHM_FUEL` overrides the default step budget.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from .check import (
    Options,
    ProgramVerdict,
    infer_program,
)
from .core import alpha_eq_schemes, constraint_str, scheme_str
from .solver import DEFAULT_FUEL, trace_lines
from .surface import ParseError, Program, parse, parse_scheme_text

EXIT_USAGE = 64
EXIT_DATAERR = 65
EXIT_NOINPUT = 66


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # argparse defaults to exit code 2
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _default_fuel() -> int:
    env = os.environ.get("CHM_FUEL")
    if env is not None:
        try:
            value = int(env)
            if value > 0:
                return value
        except ValueError:
            pass
        print(f"chm: ignoring invalid CHM_FUEL={env!r}", file=sys.stderr)
    return DEFAULT_FUEL


def _positive(text: str) -> int:
    value = int(text)
    if value <= 0:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return value


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="chm", description="Type checker driven by constraint handling rules")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp: argparse.ArgumentParser) -> None:
        sp.add_argument("--fuel", type=_positive, default=None, help="derivation step budget")
        sp.add_argument(
            "--no-forced-calls",
            action="store_true",
            help="do not call uncalled nested definitions from their parent rule",
        )
        sp.add_argument("--paranoid", action="store_true", help="cross-check the unifier")

    c = sub.add_parser("check", help="type-check source files")
    common(c)
    c.add_argument("paths", nargs="+", help="`.ch` source files")
    c.add_argument("--dump-chrs", action="store_true", help="print the generated rules")
    c.add_argument("--trace", action="store_true", help="print derivation traces")
    c.add_argument("--json", action="store_true", help="machine-readable report")

    r = sub.add_parser("corpus", help="run a directory of .ch files against .expect sidecars")
    common(r)
    r.add_argument("dir", help="corpus directory")
    return p


def _options(args: argparse.Namespace) -> Options:
    fuel = args.fuel if args.fuel is not None else _default_fuel()
    return Options(
        fuel=fuel,
        forced_calls=not args.no_forced_calls,
        paranoid=args.paranoid,
        collect_traces=getattr(args, "trace", False),
    )


# ---------------------------------------------------------------------------
# Reports


def verdict_to_json(path: str, program: Optional[Program], pv: ProgramVerdict) -> dict:
    defs = []
    for r in pv.defs:
        entry = {
            "name": r.name,
            "loc": program.loc_str(r.nid) if program else "?",
            "top_level": r.top_level,
            "scheme": scheme_str(r.scheme) if r.scheme is not None else None,
            "context": [constraint_str(c) for c in r.env_context],
            "annotation": None,
            "warnings": [w.code for w in r.warnings],
        }
        if r.annotation is not None:
            entry["annotation"] = {
                "verdict": r.annotation.verdict,
                "witness": r.annotation.witness,
            }
        defs.append(entry)
    warnings = [
        {
            "code": w.code,
            "message": w.message,
            "loc": program.loc_str(w.nid) if program and w.nid >= 0 else None,
        }
        for w in pv.warnings
    ]
    return {
        "file": path,
        "verdict": pv.verdict,
        "definitions": defs,
        "errors": [{"message": m, "loc": loc} for m, loc in pv.errors],
        "warnings": warnings,
    }


def human_report(path: str, program: Optional[Program], pv: ProgramVerdict) -> list[str]:
    lines = [f"== {path}"]
    for message, loc in pv.errors:
        lines.append(f"error: {message}")
    for r in pv.defs:
        loc = program.loc_str(r.nid) if program else "?"
        indent = "" if r.top_level else "  "
        if r.scheme is not None:
            lines.append(f"{indent}{r.name} : {scheme_str(r.scheme)}")
            if r.env_context:
                ctx = ", ".join(constraint_str(c) for c in r.env_context)
                lines.append(f"{indent}    from context: {ctx}")
        elif r.scheme_failure:
            lines.append(f"{indent}{r.name} : no type ({r.scheme_failure})")
        if r.sat is not None and r.sat.status != "satisfiable":
            detail = r.sat.witness() or r.sat.status
            lines.append(f"{indent}    unsatisfiable: {detail}" if r.sat.status == "unsatisfiable"
                         else f"{indent}    satisfiability unknown (fuel)")
        if r.annotation is not None:
            msg = f"{indent}    annotation at {loc}: {r.annotation.verdict}"
            if r.annotation.witness:
                msg += f" ({r.annotation.witness})"
            lines.append(msg)
        for w in r.warnings:
            lines.append(f"{indent}    warning [{w.code}]: {w.message}")
    for w in pv.warnings:
        lines.append(f"warning [{w.code}]: {w.message}")
    lines.append(f"verdict: {pv.verdict}")
    return lines


def check_paths(args: argparse.Namespace) -> int:
    opts = _options(args)
    worst = 0
    json_docs = []
    for path in args.paths:
        try:
            source = Path(path).read_text(encoding="utf-8")
        except OSError as err:
            print(f"chm: cannot read {path}: {err}", file=sys.stderr)
            worst = max(worst, EXIT_NOINPUT)
            continue
        program: Optional[Program] = None
        try:
            program = parse(source, path)
        except ParseError as err:
            pv = ProgramVerdict("IllTyped", errors=[(str(err), f"{err.line}:{err.col}")])
        else:
            pv = infer_program(program, opts)
        if args.dump_chrs and pv.translation is not None:
            print(pv.translation.chr.dump(), end="")
        if args.trace:
            for key in sorted(pv.traces):
                print(f"-- trace {key}")
                for line in trace_lines(pv.traces[key]):
                    print(f"   {line}")
        if args.json:
            json_docs.append(verdict_to_json(path, program, pv))
        else:
            print("\n".join(human_report(path, program, pv)))
        worst = max(worst, pv.exit_code())
    if args.json:
        print(json.dumps({"files": json_docs}, indent=2, ensure_ascii=False))
    return worst


# ---------------------------------------------------------------------------
# Corpus runner


@dataclass
class CorpusOutcome:
    path: str
    ok: bool
    details: list[str]


def _check_expectations(expect: dict, pv: ProgramVerdict) -> list[str]:
    problems = []
    want = expect.get("verdict")
    if want is not None and pv.verdict != want:
        problems.append(f"verdict {pv.verdict}, expected {want}")
    for name, text in expect.get("schemes", {}).items():
        report = next((r for r in pv.defs if r.name == name), None)
        if report is None or report.scheme is None:
            problems.append(f"no scheme for `{name}`")
            continue
        try:
            wanted = parse_scheme_text(text)
        except ParseError as err:
            raise CorpusDataError(f"bad scheme for `{name}`: {err}")
        if not alpha_eq_schemes(report.scheme, wanted):
            problems.append(
                f"scheme for `{name}` is {scheme_str(report.scheme)}, expected {text}"
            )
    for name, verdict in expect.get("annotations", {}).items():
        report = next((r for r in pv.defs if r.name == name), None)
        got = report.annotation.verdict if report and report.annotation else None
        if got != verdict:
            problems.append(f"annotation for `{name}` is {got}, expected {verdict}")
    if "warnings" in expect:
        got_codes = sorted(
            {w.code for w in pv.warnings} | {w.code for r in pv.defs for w in r.warnings}
        )
        want_codes = sorted(set(expect["warnings"]))
        if got_codes != want_codes:
            problems.append(f"warnings {got_codes}, expected {want_codes}")
    return problems


class CorpusDataError(Exception):
    pass


def run_corpus(directory: str, opts: Options) -> tuple[list[CorpusOutcome], int]:
    root = Path(directory)
    if not root.is_dir():
        raise CorpusDataError(f"not a directory: {directory}")
    outcomes: list[CorpusOutcome] = []
    worst = 0
    for path in sorted(root.glob("*.ch")):
        sidecar = path.with_suffix(".expect")
        if not sidecar.exists():
            raise CorpusDataError(f"missing sidecar for {path}")
        try:
            expect = json.loads(sidecar.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as err:
            raise CorpusDataError(f"corrupt sidecar {sidecar}: {err}")
        flags = expect.get("options", {})
        file_opts = Options(
            fuel=opts.fuel,
            forced_calls=flags.get("forced_calls", opts.forced_calls),
            paranoid=opts.paranoid,
        )
        try:
            program = parse(path.read_text(encoding="utf-8"), str(path))
            pv = infer_program(program, file_opts)
        except ParseError as err:
            pv = ProgramVerdict("IllTyped", errors=[(str(err), "")])
        problems = _check_expectations(expect, pv)
        outcomes.append(CorpusOutcome(str(path), not problems, problems))
        if problems:
            worst = max(worst, 1)
    return outcomes, worst


def corpus_command(args: argparse.Namespace) -> int:
    opts = _options(args)
    try:
        outcomes, code = run_corpus(args.dir, opts)
    except CorpusDataError as err:
        print(f"chm: corpus error: {err}", file=sys.stderr)
        return EXIT_DATAERR
    for o in outcomes:
        print(f"{'PASS' if o.ok else 'FAIL'} {o.path}")
        for d in o.details:
            print(f"     {d}")
    print(f"{sum(o.ok for o in outcomes)}/{len(outcomes)} passed")
    return code


def main(argv: Optional[list[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "check":
        return check_paths(args)
    return corpus_command(args)


if __name__ == "__main__":
    sys.exit(main())
