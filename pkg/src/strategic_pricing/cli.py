"""Command-line interface.

Subcommands: sample, solve, arrangement, export-milp, eval, convergence,
verify, plot-data.  Global flags ``--config``, ``--seed``, ``--out``,
``--format`` apply where meaningful.  Exit codes: 0 success, 2 invalid
configuration or input, 3 solver budget exceeded on a row marked
required-optimal, 1 verification failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from .core import PriceGrid, Sample
from .distributions import (
    DistributionSpec,
    estimate_true_objective,
    sample_circle,
    sample_example1,
    sample_rect_experiment,
)
from .experiments import (
    ConvergenceRecord,
    ExperimentConfig,
    VerifySuiteConfig,
    emit_plot_data,
    records_to_csv,
    run_convergence,
    run_verification_suite,
)
from .geometry import build_arrangement
from .io import dump_json17, policy_from_dict, policy_to_dict, sample_from_dict, sample_to_dict
from .solver import SolveOptions, export_milp, solve_grid_restricted, solve_saa

_DIST_ALIASES = {"rect": "rect_uniform", "rect_uniform": "rect_uniform",
                 "example1": "example1", "circle": "circle"}


def _parse_prices(text: str) -> PriceGrid:
    return PriceGrid(tuple(float(p) for p in text.split(",")))


def _parse_eps(text: str | None) -> tuple[float, ...]:
    if not text:
        return ()
    return tuple(float(e) for e in text.split(","))


def _read_json(path: str) -> dict:
    with open(path, "r", encoding="ascii") as fh:
        return json.load(fh)


def _write_text(path: str, text: str) -> None:
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write(text)


def _emit(doc, args, default_path: str | None = None) -> None:
    text = dump_json17(doc, indent=2) + "\n"
    path = args.out or default_path
    if path:
        _write_text(path, text)
    else:
        sys.stdout.write(text)


def _cmd_sample(args) -> int:
    dist = _DIST_ALIASES[args.dist]
    seed = args.seed if args.seed is not None else 0
    eps = _parse_eps(args.eps)
    if dist == "rect_uniform":
        sample = sample_rect_experiment(args.n, eps or (0.0, 0.0), seed)
    elif dist == "example1":
        sample = sample_example1(args.n, seed)
    else:
        sample = sample_circle(args.n, eps[0] if eps else 0.0, seed)
    _emit(sample_to_dict(sample), args)
    return 0


def _load_sample(path: str) -> Sample:
    return sample_from_dict(_read_json(path))


def _cmd_solve(args) -> int:
    sample = _load_sample(args.input)
    grid = _parse_prices(args.prices)
    options = SolveOptions(
        time_limit_ms=args.time_limit_ms, target_gap=args.gap
    )
    if args.grid_s:
        result = solve_grid_restricted(sample, grid, args.grid_s, options)
    else:
        result = solve_saa(sample, grid, options)
    if args.export_lp:
        _write_text(args.export_lp, export_milp(sample, grid))
    doc = result.to_dict()
    if args.out:
        _write_text(
            args.out,
            dump_json17({"result": result.to_dict(), "policy": policy_to_dict(result.policy)}, indent=2)
            + "\n",
        )
    sys.stdout.write(dump_json17(doc, indent=2) + "\n")
    return 0


def _cmd_arrangement(args) -> int:
    sample = _load_sample(args.input)
    arr = build_arrangement(sample)
    doc = {
        "n_regions": arr.n_regions,
        "signature_size_histogram": {
            str(k): v for k, v in sorted(arr.signature_histogram().items())
        },
        "coverage_counts": [len(c) for c in arr.coverage],
    }
    _emit(doc, args)
    return 0


def _cmd_export_milp(args) -> int:
    sample = _load_sample(args.input)
    grid = _parse_prices(args.prices)
    text = export_milp(sample, grid)
    if args.out:
        _write_text(args.out, text)
    else:
        sys.stdout.write(text)
    return 0


def _cmd_eval(args) -> int:
    policy = policy_from_dict(_read_json(args.policy))
    spec = DistributionSpec(
        _DIST_ALIASES[args.dist], _parse_eps(args.eps), seed=args.seed or 0
    )
    result = estimate_true_objective(
        policy, spec, args.draws, args.seed if args.seed is not None else 0
    )
    _emit(result.to_dict(), args)
    return 0


def _experiment_config(args) -> ExperimentConfig:
    if not args.config:
        raise ValueError("convergence requires --config <json>")
    doc = _read_json(args.config)
    dist_doc = doc["distribution"]
    spec = DistributionSpec(
        id=_DIST_ALIASES[dist_doc["id"]],
        epsilon=tuple(dist_doc.get("eps", ())),
        params=dist_doc.get("params", {}),
    )
    solver_doc = doc.get("solver", {})
    options = SolveOptions(
        time_limit_ms=float(solver_doc.get("time_limit_ms", 60_000)),
        target_gap=float(solver_doc.get("gap", 0.005)),
    )
    seed = args.seed if args.seed is not None else int(doc.get("seed", 0))
    return ExperimentConfig(
        distribution=spec,
        prices=tuple(doc["prices"]),
        schedule=tuple(doc["schedule"]),
        replications=int(doc["replications"]),
        master_seed=seed,
        eval_draws=int(doc.get("eval_draws", 100_000)),
        solver=options,
        out_dir=doc.get("out_dir"),
        workers=int(doc.get("workers", 1)),
        require_optimal=bool(doc.get("require_optimal", False)),
    )


def _cmd_convergence(args) -> int:
    config = _experiment_config(args)
    records = run_convergence(config)
    records_csv = records_to_csv(records)
    plot_csv = emit_plot_data(records)
    out_dir = config.out_dir or "."
    os.makedirs(out_dir, exist_ok=True)
    records_path = os.path.join(out_dir, "records.csv")
    plot_path = os.path.join(out_dir, "plot_data.csv")
    _write_text(records_path, records_csv)
    _write_text(plot_path, plot_csv)
    outputs = {"records": records_path, "plot_data": plot_path}
    if not args.no_figure:
        from .report import parse_plot_csv, render_convergence_figure

        figure_path = os.path.join(out_dir, "convergence.png")
        render_convergence_figure(parse_plot_csv(plot_csv), figure_path)
        outputs["figure"] = figure_path
    if args.format == "json":
        sys.stdout.write(
            dump_json17({"outputs": outputs, "records": [r.row() for r in records]}, indent=2)
            + "\n"
        )
    else:
        sys.stdout.write(records_csv)
    if config.require_optimal and any(r.solver_status != "optimal" for r in records):
        return 3
    return 0


def _cmd_verify(args) -> int:
    overrides = {}
    if args.config:
        overrides = _read_json(args.config)
    config = VerifySuiteConfig(**{k: tuple(v) if isinstance(v, list) else v for k, v in overrides.items()})
    reports, trend = run_verification_suite(config)
    doc = {
        "reports": [r.to_dict() for r in reports],
        "violating_mass_trend": trend,
        "all_passed": all(r.passed for r in reports),
    }
    _emit(doc, args)
    return 0 if doc["all_passed"] else 1


def _parse_records_csv(text: str) -> list[ConvergenceRecord]:
    lines = [ln for ln in text.strip().splitlines() if ln]
    records = []
    for ln in lines[1:]:
        parts = ln.split(",")
        records.append(
            ConvergenceRecord(
                n=int(parts[0]),
                replication=int(parts[1]),
                seed=int(parts[2]),
                in_sample=float(parts[3]),
                out_sample_mean=float(parts[4]),
                out_sample_ci=float(parts[5]),
                solver_status=parts[6],
                gap=float(parts[7]),
                nodes=int(parts[8]),
                wall_ms=float(parts[9]),
            )
        )
    return records


def _cmd_plot_data(args) -> int:
    with open(args.input, "r", encoding="ascii") as fh:
        records = _parse_records_csv(fh.read())
    plot_csv = emit_plot_data(records)
    out = args.out or "plot_data.csv"
    _write_text(out, plot_csv)
    if not args.no_figure:
        from .report import parse_plot_csv, render_convergence_figure

        figure_path = os.path.splitext(out)[0] + ".png"
        render_convergence_figure(parse_plot_csv(plot_csv), figure_path)
    if args.format == "json":
        from .report import parse_plot_csv

        sys.stdout.write(dump_json17(parse_plot_csv(plot_csv), indent=2) + "\n")
    else:
        sys.stdout.write(plot_csv)
    return 0


def _global_flags(parser: argparse.ArgumentParser, suppress: bool) -> None:
    # Subcommands re-accept the global flags (with suppressed defaults so a
    # pre-subcommand value is not clobbered); both positions work.
    d = argparse.SUPPRESS if suppress else None
    parser.add_argument("--config", help="JSON configuration file", default=d)
    parser.add_argument("--seed", type=int, help="master seed", default=d)
    parser.add_argument("--out", help="output path (default: stdout)", default=d)
    parser.add_argument(
        "--format",
        choices=("csv", "json"),
        default=argparse.SUPPRESS if suppress else "csv",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="strategic-pricing",
        description="Exact SAA pricing against strategic buyers: samplers, "
        "solver, arrangement inspection, MILP export, and experiments.",
    )
    _global_flags(parser, suppress=False)
    common = argparse.ArgumentParser(add_help=False)
    _global_flags(common, suppress=True)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=argparse.ArgumentParser)

    p = sub.add_parser("sample", parents=[common], help="draw a sample and write it as JSON")
    p.add_argument("--dist", choices=sorted(_DIST_ALIASES), required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--eps", help="radius or comma-separated radii")
    p.set_defaults(func=_cmd_sample)

    p = sub.add_parser("solve", parents=[common], help="solve the empirical pricing problem")
    p.add_argument("--input", required=True, help="sample JSON file")
    p.add_argument("--prices", required=True, help="comma-separated price grid")
    p.add_argument("--time-limit-ms", type=float, default=60_000)
    p.add_argument("--gap", type=float, default=0.005)
    p.add_argument("--grid-s", type=int, default=0, help="restrict to the S-grid policy class")
    p.add_argument("--export-lp", help="also write the MILP in LP format here")
    p.set_defaults(func=_cmd_solve)

    p = sub.add_parser("arrangement", parents=[common], help="summarize the sample's region decomposition")
    p.add_argument("--input", required=True)
    p.set_defaults(func=_cmd_arrangement)

    p = sub.add_parser("export-milp", parents=[common], help="write the region MILP in LP format")
    p.add_argument("--input", required=True)
    p.add_argument("--prices", required=True)
    p.set_defaults(func=_cmd_export_milp)

    p = sub.add_parser("eval", parents=[common], help="Monte Carlo out-of-sample evaluation of a policy")
    p.add_argument("--policy", required=True, help="policy JSON file")
    p.add_argument("--dist", choices=sorted(_DIST_ALIASES), required=True)
    p.add_argument("--eps")
    p.add_argument("--draws", type=int, default=100_000)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("convergence", parents=[common], help="run the in/out-of-sample convergence experiment")
    p.add_argument("--no-figure", action="store_true", help="skip PNG rendering")
    p.set_defaults(func=_cmd_convergence)

    p = sub.add_parser("verify", parents=[common], help="run the combinatorial verification suite")
    p.set_defaults(func=_cmd_verify)

    p = sub.add_parser("plot-data", parents=[common], help="aggregate convergence records per N")
    p.add_argument("--input", required=True, help="records CSV")
    p.add_argument("--no-figure", action="store_true")
    p.set_defaults(func=_cmd_plot_data)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, KeyError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
