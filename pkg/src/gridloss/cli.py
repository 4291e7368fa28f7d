"""Command-line front end: ``solve``, ``strategy``, ``opf`` and ``ybus dump``.

Exit codes: 0 success, 1 usage or file error, 2 parse/validation error,
3 non-convergence (reports are still written).
"""
from __future__ import annotations

import argparse
import csv
import io
import logging
import math
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import plotting, report
from .admittance import build_ybus, dump_rows
from .ga import GaConfig, format_ga_config, load_ga_config, run_ga
from .losses import loss_report
from .network import CaseFormatError, NetworkValidationError, ieee30_path, load_network
from .solver import SingularJacobianError, SolverOptions, solve
from .strategies import StrategyError, compare, format_strategy, parse_strategy

EXIT_OK, EXIT_USAGE, EXIT_INVALID, EXIT_DIVERGED = 0, 1, 2, 3

log = logging.getLogger("gridloss")

BUNDLED = ("ieee30", "ieee30.case")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _common(p: argparse.ArgumentParser, solver: bool = True) -> None:
    p.add_argument("case", help="case file path")
    p.add_argument("--format", choices=("table", "csv", "json"), default="table")
    p.add_argument("--out", type=Path, help="write the report here instead of stdout")
    p.add_argument("--svg", type=Path, help="write a chart to this SVG file")
    if solver:
        p.add_argument("--tol", type=float, default=1e-6, help="mismatch tolerance, pu")
        p.add_argument("--max-iter", type=int, default=30)
        p.add_argument("--no-q-limits", action="store_true", help="do not enforce generator Q limits")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="gridloss", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("solve", help="Newton-Raphson load flow with loss report")
    _common(p)

    p = sub.add_parser("strategy", help="compare loss-reduction strategies against the base case")
    _common(p)
    p.add_argument("strategies", nargs="+", metavar="SPEC",
                   help="load-share:from=5,to=4,frac=0.15 | q-inject:bus=30,mvar=1.0 | tap:from=4,to=12,tap=1.0")

    p = sub.add_parser("opf", help="GA optimal power flow minimising real line loss")
    _common(p)
    p.add_argument("--config", type=Path, help="GA config file ([ga] / [controls])")
    p.add_argument("--repeat", type=int, default=1, help="independent runs with seeds seed, seed+1, ...")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--strategy", action="append", default=[], metavar="SPEC",
                   help="apply a strategy to the network before optimising (repeatable)")
    p.add_argument("--generations", type=int, help="override max generations")
    p.add_argument("--population", type=int, help="override population size")
    p.add_argument("--workers", type=int, default=1, help="parallel fitness evaluations")
    p.add_argument("--history", type=Path, help="write the convergence history CSV here")

    p = sub.add_parser("ybus", help="admittance matrix utilities")
    ysub = p.add_subparsers(dest="ybus_command", required=True, parser_class=_Parser)
    d = ysub.add_parser("dump", help="emit nonzero Y-bus entries as CSV rows i,j,g,b")
    d.add_argument("case")
    d.add_argument("--out", type=Path)
    return parser


def _options(args) -> SolverOptions:
    try:
        return SolverOptions(tolerance=args.tol, max_iterations=args.max_iter,
                             enforce_q_limits=not args.no_q_limits)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _option_dict(args) -> dict:
    return {"tol": args.tol, "max_iter": args.max_iter, "q_limits": not args.no_q_limits,
            "format": args.format}


def resolve_case(path: str) -> Path:
    """Case path, falling back to the bundled fixture for a bare ``ieee30[.case]``."""
    candidate = Path(path)
    if not candidate.exists() and str(candidate) in BUNDLED:
        return ieee30_path()
    return candidate


def _read_case(path: str):
    data = resolve_case(path).read_bytes()
    return data, load_network(data)


def _emit(args, text: str) -> None:
    if args.out is not None:
        args.out.write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def cmd_solve(args) -> int:
    data, network = _read_case(args.case)
    options = _options(args)
    try:
        sol = solve(network, options)
    except SingularJacobianError as exc:
        log.error("%s", exc)
        return EXIT_DIVERGED
    losses = loss_report(network, sol)
    manifest = report.make_manifest("solve", args.case, data, _option_dict(args))
    _emit(args, report.render(report.solve_report(network, sol, losses, manifest), args.format))
    if args.svg:
        base = network.base_mva
        p_gen, q_gen = losses.total_generation
        fig = plotting.solve_figure(
            network.bus_ids(), sol.state.v_mag, np.degrees(sol.state.v_ang),
            [f"{f.from_bus}-{f.to_bus}" for f in losses.branch_flows],
            [f.p_loss * base for f in losses.branch_flows],
            [f.q_loss * base for f in losses.branch_flows],
            {"generation": (p_gen, q_gen), "load": losses.total_load,
             "line loss": (losses.total_p_loss, losses.total_q_loss)},
        )
        plotting.save_svg(fig, args.svg)
    if not sol.converged:
        log.error("load flow did not converge in %d iterations", sol.iterations)
        return EXIT_DIVERGED
    return EXIT_OK


def cmd_strategy(args) -> int:
    strategies = [parse_strategy(s) for s in args.strategies]
    data, network = _read_case(args.case)
    options = _options(args)
    rows = compare(network, strategies, options)
    manifest = report.make_manifest("strategy", args.case, data, _option_dict(args),
                                    [format_strategy(s) for s in strategies])
    _emit(args, report.render(report.comparison_report(rows, manifest), args.format))
    if args.svg:
        fig = plotting.comparison_figure([r.label for r in rows], [r.p_loss_mw for r in rows],
                                         [r.q_loss_mvar for r in rows])
        plotting.save_svg(fig, args.svg)
    return EXIT_OK if all(r.converged for r in rows) else EXIT_DIVERGED


def cmd_opf(args) -> int:
    strategies = [parse_strategy(s) for s in args.strategy]
    if args.repeat < 1 or args.workers < 1:
        raise UsageError("--repeat and --workers must be at least 1")
    data, network = _read_case(args.case)
    config = load_ga_config(args.config) if args.config else GaConfig()
    overrides = {}
    if args.seed is not None:
        overrides["rng_seed"] = args.seed
    if args.generations is not None:
        overrides["max_generations"] = args.generations
    if args.population is not None:
        overrides["population_size"] = args.population
    try:
        config = replace(config, **overrides)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    for s in strategies:
        network = s.apply(network)
    options = _options(args)
    try:
        nr = solve(network, options)
        nr_loss = loss_report(network, nr).total_p_loss if nr.converged else math.nan
    except SingularJacobianError:
        nr_loss = math.nan

    results = []
    for k in range(args.repeat):
        run_config = replace(config, rng_seed=config.rng_seed + k)
        log.info("GA run %d/%d seed %d", k + 1, args.repeat, run_config.rng_seed)
        results.append(run_ga(network, run_config, options, workers=args.workers))

    opts = _option_dict(args) | {"repeat": args.repeat, "workers": args.workers}
    manifest = report.make_manifest("opf", args.case, data, opts,
                                    [format_strategy(s) for s in strategies], format_ga_config(config))
    names = [c.name for c in config.controls]
    _emit(args, report.render(report.opf_report(results, nr_loss, manifest, names), args.format))
    if args.history:
        args.history.write_text(report.history_csv(results), encoding="utf-8")
    if args.svg:
        fig = plotting.opf_figure([[h.best_loss_mw for h in r.history] for r in results],
                                  [f"run {k + 1}" for k in range(len(results))],
                                  [r.best_loss_mw for r in results],
                                  None if math.isnan(nr_loss) else nr_loss)
        plotting.save_svg(fig, args.svg)
    return EXIT_OK if all(r.solution is not None for r in results) else EXIT_DIVERGED


def cmd_ybus_dump(args) -> int:
    _, network = _read_case(args.case)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["i", "j", "g", "b"])
    for i, j, g, b in dump_rows(network, build_ybus(network)):
        writer.writerow([i, j, repr(g), repr(b)])
    if args.out is not None:
        args.out.write_text(buf.getvalue(), encoding="utf-8")
    else:
        sys.stdout.write(buf.getvalue())
    return EXIT_OK


COMMANDS = {"solve": cmd_solve, "strategy": cmd_strategy, "opf": cmd_opf}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    handler = cmd_ybus_dump if args.command == "ybus" else COMMANDS[args.command]
    try:
        return handler(args)
    except (FileNotFoundError, IsADirectoryError, PermissionError) as exc:
        print(f"gridloss: cannot read {exc.filename}: {exc.strerror}", file=sys.stderr)
        return EXIT_USAGE
    except UsageError as exc:
        print(f"gridloss: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (CaseFormatError, NetworkValidationError, StrategyError, UnicodeDecodeError) as exc:
        print(f"gridloss: invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
