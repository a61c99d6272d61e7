"""Command-line interface: ``synthdse <command> [options]``.

Exit status is 0 on success, 1 when inputs fail validation and 2 on
usage errors.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import __version__, io, reports
from .estimator import EstimationError
from .io import InputError, Report, RunManifest
from .metrics import DEFAULT_Z
from .model import FormulaKind, validate_cells
from .variance import LARGE_STRATUM_CE

EXIT_OK, EXIT_INVALID, EXIT_USAGE = 0, 1, 2
P_FLOOR = 1e-300


def _formulas(value: str) -> list[FormulaKind]:
    try:
        return FormulaKind.parse(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"unknown formula {value!r} (cb, alt1, alt2, alt3, all)") from None


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="synthdse", description="Synthetic dual system estimation toolkit.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--format", choices=("csv", "json"), default="csv")
        sp.add_argument("-o", "--output", type=Path, help=f"output file (default: stdout or ${io.OUTPUT_DIR_ENV})")
        return sp

    def inputs(sp, strata=True, geo=False, group_required=False):
        sp.add_argument("--cells", type=Path, required=True, help="stratum,region,C,DD,II")
        if strata:
            sp.add_argument("--strata", type=Path, required=True, help="stratum,CE,EE,MR")
        if geo:
            sp.add_argument("--geo", type=Path, required=group_required or geo == "required",
                            help="region,state[,group]")

    sp = common(sub.add_parser("estimate", help="per-stratum DSE, CCF and DCF"))
    inputs(sp)
    sp = common(sub.add_parser("allocate", help="allocate stratum estimates to regions"))
    inputs(sp)
    sp.add_argument("--formula", type=_formulas, default=_formulas("all"))

    sp = common(sub.add_parser("compare", help="state share differences with confidence intervals"))
    inputs(sp, geo="required")
    sp.add_argument("--se", type=Path, required=True, help="state,se_share_diff")
    sp.add_argument("--z", type=float, default=DEFAULT_Z)
    sp.add_argument("--formula", type=_formulas, default=_formulas("all"))
    sp.add_argument("--plot-data", type=Path, help="write figure-ready share differences here (csv)")

    sp = common(sub.add_parser("sad", help="relative and state adjusted differences per county group"))
    sp.add_argument("--groups", type=Path, action="append",
                    help="published county-group table (repeatable)")
    sp.add_argument("--state-rates", type=Path, help="state,ii_tot,... (default: shipped table)")
    sp.add_argument("--cells", type=Path)
    sp.add_argument("--strata", type=Path)
    sp.add_argument("--geo", type=Path)
    sp.add_argument("--formula", type=_formulas, default=_formulas("all"))
    sp.add_argument("--summary", action="store_true", help="emit the distribution summary per formula")

    sp = common(sub.add_parser("mir", help="mean imputation rate per state"))
    inputs(sp, strata=False, geo="required")

    sp = common(sub.add_parser("homogeneity", help="chi-square test of imputation homogeneity"))
    inputs(sp, strata=False)

    sp = common(sub.add_parser("variance", help="two-state CCF versus DCF comparison"))
    sp.add_argument("--scenarios", type=Path, required=True)
    sp.add_argument("--threshold", type=float, default=LARGE_STRATUM_CE)
    sp.add_argument("--frequency-output", type=Path, help="write the frequency table here")

    sp = common(sub.add_parser("simulate", help="Monte Carlo evaluation of the four formulas"))
    sp.add_argument("--config", type=Path, required=True)
    sp.add_argument("--workers", type=int, default=1)
    sp.add_argument("--seed", type=int, help="override the config seed")
    sp.add_argument("--reps", type=int, help="override the replicate count")

    sp = sub.add_parser("validate", help="check input or fixture self-consistency")
    sp.add_argument("--cells", type=Path)
    sp.add_argument("--strata", type=Path)
    sp.add_argument("--geo", type=Path)
    sp.add_argument("--se", type=Path)
    sp.add_argument("--groups", type=Path, action="append")
    sp.add_argument("--strict", action="store_true", help="treat published-column mismatches as failures")
    return p


def _emit(report: Report, args, name: str | None = None) -> None:
    path = args.output or io.default_output(name or report.name, args.format)
    if args.format == "csv" and report.name == "homogeneity":
        for row in report.rows:
            p = row.get("p_value")
            if isinstance(p, float) and p < P_FLOOR:
                row["p_value"] = f"< {P_FLOOR:g}"
    io.write_report(report, args.format, path)


def _manifest(args, **inputs) -> RunManifest:
    return RunManifest(command=args.command, inputs={k: v for k, v in inputs.items() if v is not None},
                       formulas=[f.value for f in getattr(args, "formula", [])],
                       z=getattr(args, "z", None), seed=getattr(args, "seed", None))


def _run(args) -> int:
    cmd = args.command
    if cmd == "validate":
        return _validate(args)
    if cmd in ("estimate", "allocate", "compare", "mir", "homogeneity"):
        cells = io.load_cells(args.cells)
        strata = io.load_strata(args.strata, cells) if getattr(args, "strata", None) else None
        geo = io.load_geo(args.geo, cells) if getattr(args, "geo", None) else None
        manifest = _manifest(args, cells=args.cells, strata=getattr(args, "strata", None),
                             geo=getattr(args, "geo", None), se=getattr(args, "se", None))
        if cmd == "estimate":
            report = reports.estimate_report(cells, strata)
        elif cmd == "allocate":
            report = reports.allocation_report(cells, strata, args.formula)
        elif cmd == "mir":
            report = reports.mir_report(cells, geo)
        elif cmd == "homogeneity":
            report = reports.homogeneity_report(cells)
        else:
            se = io.load_se(args.se, set(geo.state[c.region] for c in cells))
            manifest.level = "state"
            report, plot = reports.compare_report(cells, strata, geo, se, args.formula, args.z)
            if args.plot_data:
                plot.manifest = manifest
                io.write_report(plot, "csv", args.plot_data)
        report.manifest = manifest
        _emit(report, args)
        return EXIT_OK
    if cmd == "sad":
        return _sad(args)
    if cmd == "variance":
        scenarios = io.load_scenarios(args.scenarios)
        report, freq = reports.variance_report(scenarios, args.threshold)
        report.manifest = freq.manifest = _manifest(args, scenarios=args.scenarios)
        _emit(report, args)
        if args.frequency_output:
            io.write_report(freq, "csv", args.frequency_output)
        return EXIT_OK
    if cmd == "simulate":
        config = io.load_config(args.config)
        if args.seed is not None or args.reps is not None:
            raw = config.to_dict()
            raw["seed"] = raw["seed"] if args.seed is None else args.seed
            raw["n_reps"] = raw["n_reps"] if args.reps is None else args.reps
            config = type(config)(**raw)
        report = reports.simulate_report(config, args.workers)
        report.manifest = _manifest(args, config=args.config)
        report.manifest.seed = config.seed
        _emit(report, args)
        return EXIT_OK
    raise AssertionError(cmd)


def _sad(args) -> int:
    if args.groups:
        rates_path = args.state_rates or io.data_path("state_imputation_rates.csv")
        groups = [g for path in args.groups for g in io.load_county_groups(path)]
        rates = io.load_state_rates(rates_path)
        missing = sorted({g.state for g in groups} - set(rates))
        if missing:
            raise InputError([f"no imputation rate for state {s}" for s in missing])
        report = reports.sad_from_published(groups, rates)
        inputs = {f"groups{i}": p for i, p in enumerate(args.groups)}
        inputs["state_rates"] = rates_path
    elif args.cells and args.strata and args.geo:
        cells = io.load_cells(args.cells)
        strata = io.load_strata(args.strata, cells)
        geo = io.load_geo(args.geo, cells)
        report = reports.sad_from_cells(cells, strata, geo, args.formula)
        inputs = {"cells": args.cells, "strata": args.strata, "geo": args.geo}
    else:
        print("sad: give --groups, or all of --cells, --strata and --geo", file=sys.stderr)
        return EXIT_USAGE
    manifest = _manifest(args, **inputs)
    manifest.level = "group"
    if args.summary:
        rows = [{"formula": f, **s} for f, s in report.extra["summary"].items()]
        report = Report("sad_summary", ["formula", "min", "max", "median", "mean", "sd", "n", "sd_defined"],
                        rows, frozenset({"min", "max", "median", "mean", "sd"}))
    report.manifest = manifest
    _emit(report, args)
    return EXIT_OK


def _validate(args) -> int:
    problems, warnings = [], []
    cells = None
    if args.cells:
        try:
            cells = io.load_cells(args.cells)
        except InputError as exc:
            problems += exc.problems
    if cells is not None:
        problems += validate_cells(cells)
        for path, fn in ((args.strata, io.load_strata), (args.geo, io.load_geo)):
            if path:
                try:
                    fn(path, cells)
                except InputError as exc:
                    problems += exc.problems
        if args.se and args.geo and not problems:
            geo = io.load_geo(args.geo, cells)
            try:
                io.load_se(args.se, {geo.state[c.region] for c in cells})
            except InputError as exc:
                problems += exc.problems
    for path in args.groups or []:
        try:
            groups = io.load_county_groups(path)
        except InputError as exc:
            problems += exc.problems
            continue
        problems += reports.structural_problems(groups)
        warnings += reports.published_discrepancies(groups)
    if not (args.cells or args.groups):
        print("validate: nothing to check (give --cells or --groups)", file=sys.stderr)
        return EXIT_USAGE
    for w in warnings:
        print(f"warning: {w}")
    for p in problems:
        print(f"violation: {p}")
    failed = bool(problems) or (args.strict and bool(warnings))
    print("FAILED" if failed else "OK")
    return EXIT_INVALID if failed else EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    try:
        return _run(args)
    except (InputError, EstimationError) as exc:
        problems = getattr(exc, "problems", [str(exc)])
        for p in problems:
            print(f"error: {p}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
