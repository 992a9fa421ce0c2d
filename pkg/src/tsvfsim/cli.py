"""Command-line front end.

Exit codes: 0 success, 1 parse/validation/usage error, 2 null
post-selection or impossible history.
"""
from __future__ import annotations

import argparse
import io
import sys
from pathlib import Path

from . import __version__
from .circuit import CircuitError, evolve, validate
from .dsl import ParseFailure, load
from .pointer import PointerConfig, write_samples_csv
from .report import build_report, dumps
from .scenarios import CANONICAL, Scenario, ScenarioError, canonical, run_checks
from .tsvf import ImpossibleHistory, NullPostSelection

EXIT_OK, EXIT_INPUT, EXIT_NULL = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def _print_parse_errors(path: str, exc: ParseFailure):
    for e in exc.errors:
        sp = e.span
        print(f"{path}:{sp.line}:{sp.col_start + 1}: {e.kind}: {e.message}", file=sys.stderr)
        if sp.text:
            print(f"    {sp.text}", file=sys.stderr)
            print("    " + " " * sp.col_start + "^" * max(1, sp.col_end - sp.col_start), file=sys.stderr)


def _load(path: str) -> Scenario:
    if not Path(path).exists() and path in CANONICAL:
        return canonical(path)
    return load(path)


def _ref(scenario: Scenario, ref: str, need_rail: bool = False):
    try:
        rail, k = scenario.resolve(ref)
    except ValueError:
        raise UsageError(f"cannot resolve {ref!r}: not a label, slice number or rail@slice") from None
    if not 0 <= k <= scenario.circuit.n_slices:
        raise UsageError(f"slice {k} outside 0..{scenario.circuit.n_slices}")
    if rail is not None and rail not in scenario.circuit.rails:
        raise UsageError(f"unknown rail {rail!r} in {ref!r}")
    if need_rail and rail is None:
        raise UsageError(f"{ref!r} names a slice; a rail is needed here")
    return rail, k


def cmd_run(args) -> int:
    s = _load(args.file)
    errors = validate(s.circuit)
    if errors:
        raise CircuitError(errors)
    trace = evolve(s.circuit)
    at = [_ref(s, a)[1] for a in args.at] if args.at else None
    abl = [_ref(s, a, need_rail=True) for a in args.abl]
    pointer = None
    if args.pointer:
        rail, k = _ref(s, args.pointer, need_rail=True)
        pointer = (rail, k, PointerConfig(args.g, args.sigma))
    trials = None
    if args.trials is not None:
        if pointer is None:
            raise UsageError("--trials needs --pointer")
        if args.trials < 1:
            raise UsageError("--trials must be at least 1")
        trials = (args.trials, args.seed)
    if args.format == "csv" and trials is None:
        raise UsageError("--format csv emits pointer samples and needs --pointer and --trials")
    report, mc = build_report(s, trace, at, abl, pointer, trials, workers=args.workers)
    if mc is not None and args.samples_out:
        with open(args.samples_out, "w", newline="") as f:
            write_samples_csv(mc, f)
    if args.format == "csv":
        buf = io.StringIO()
        write_samples_csv(mc, buf)
        sys.stdout.write(buf.getvalue())
    else:
        sys.stdout.write(dumps(report))
    return EXIT_OK


def cmd_list(args) -> int:
    width = max(map(len, CANONICAL))
    for name, (_, blurb) in CANONICAL.items():
        print(f"{name:<{width}}  {blurb}")
    return EXIT_OK


def cmd_check(args) -> int:
    s = _load(args.file)
    results = run_checks(s)
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'}  {r.group}")
        for d in r.details:
            print(f"      {d}")
    n_ok = sum(r.passed for r in results)
    print(f"{s.name}: {n_ok}/{len(results)} expectations pass")
    return EXIT_OK if n_ok == len(results) else EXIT_INPUT


def make_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="tsvfsim", description="Pre- and post-selected interferometry: weak values, ABL, pointers.")
    p.add_argument("--version", action="version", version=f"tsvfsim {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    run = sub.add_parser("run", help="analyse a scenario file and print a report")
    run.add_argument("file", help="scenario .tsv file (or a built-in scenario name)")
    run.add_argument("--at", action="append", default=[], metavar="SLICE|SYMBOL",
                     help="report weak values at this slice only (repeatable)")
    run.add_argument("--abl", action="append", default=[], metavar="RAIL@SLICE",
                     help="ABL probability of finding the photon there (repeatable)")
    run.add_argument("--pointer", metavar="RAIL@SLICE", help="couple a Gaussian pointer to this projector")
    run.add_argument("--g", type=float, default=0.1, help="pointer coupling (default 0.1)")
    run.add_argument("--sigma", type=float, default=1.0, help="pointer spread (default 1)")
    run.add_argument("--trials", type=int, help="Monte Carlo trials for the pointer")
    run.add_argument("--seed", type=int, default=0)
    run.add_argument("--workers", type=int, default=1, help="threads for Monte Carlo (result is independent of this)")
    run.add_argument("--format", choices=("json", "csv"), default="json")
    run.add_argument("--samples-out", metavar="PATH", help="write pointer samples as CSV")
    run.set_defaults(func=cmd_run)

    ls = sub.add_parser("list", help="list built-in scenarios")
    ls.set_defaults(func=cmd_list)

    chk = sub.add_parser("check", help="parse, validate and self-check a scenario file")
    chk.add_argument("file")
    chk.set_defaults(func=cmd_check)
    return p


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    path = getattr(args, "file", "")
    try:
        return args.func(args)
    except ParseFailure as exc:
        _print_parse_errors(path, exc)
        return EXIT_INPUT
    except CircuitError as exc:
        for e in exc.errors:
            print(f"{path}: invalid circuit: {e}", file=sys.stderr)
        return EXIT_INPUT
    except (UsageError, ScenarioError, ValueError) as exc:
        print(f"tsvfsim: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (NullPostSelection, ImpossibleHistory) as exc:
        print(f"tsvfsim: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NULL
    except OSError as exc:
        print(f"tsvfsim: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
