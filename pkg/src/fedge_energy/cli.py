"""
Command-line front end for batch experiments

Results go to stdout as CSV unless --output names a file; logs go to stderr.
Exit codes: 0 success, 2 invalid input, 3 infeasible, 4 tolerance not met.
"""
import argparse
import sys
from pathlib import Path
from typing import List, Optional, Sequence

import polars as pl
from loguru import logger

from .core.baselines import PROTOCOLS, SCHEMES, solve_baseline
from .core.errors import InvalidInputError
from .core.fedsim import make_synthetic_datasets, run_training
from .core.io_handlers import rows_to_frame, write_results_csv
from .core.oracle import MAX_RESOLUTION, audit_solution, grid_solve
from .core.scenario import SystemConfig, desk_scenario, load_scenario, paper_scenario
from .core.solver_noma import t_min_noma
from .core.solver_tdma import t_min_tdma
from .core.sweeps import (
    SWEEP_PARAMS,
    compare_plans,
    compare_protocols,
    crossover_distance,
    parse_plan,
    run_case,
    run_sweep,
)

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_INFEASIBLE = 3
EXIT_TOLERANCE = 4

BUILTIN_SCENARIOS = {"desk_a": desk_scenario, "paper_layout": paper_scenario}


def configure_logging(verbose: bool) -> None:
    logger.remove()
    logger.add(sys.stderr, level="DEBUG" if verbose else "WARNING")


def resolve_scenario(name: str) -> SystemConfig:
    """Scenario file path, or a built-in scenario name when no such file exists."""
    path = Path(name)
    if not path.exists() and name in BUILTIN_SCENARIOS:
        return BUILTIN_SCENARIOS[name]()
    return load_scenario(path)


def _split(values: str) -> List[str]:
    return [item.strip() for item in values.split(",") if item.strip()]


def _emit(frame: pl.DataFrame, output: Optional[str]) -> None:
    text = write_results_csv(frame, output)
    if text is not None:
        sys.stdout.write(text)


def _status_code(status: str) -> int:
    return {"infeasible": EXIT_INFEASIBLE, "tolerance-not-met": EXIT_TOLERANCE}.get(status, EXIT_OK)


def cmd_feasibility(args: argparse.Namespace) -> int:
    config = resolve_scenario(args.scenario)
    t_min = t_min_noma(config) if args.protocol == "noma" else t_min_tdma(config)
    feasible = t_min <= config.plan.max_delay
    verdict = "feasible" if feasible else "infeasible"
    print(f"{config.name} {args.protocol}: t_min = {t_min:.6g} s, T = {config.plan.max_delay:.6g} s, {verdict}")
    return EXIT_OK if feasible else EXIT_INFEASIBLE


def cmd_solve(args: argparse.Namespace) -> int:
    config = resolve_scenario(args.scenario)
    row = run_case(config, args.protocol, args.scheme, timing=args.timing)
    _emit(rows_to_frame([row], config.num_devices), args.output)
    return _status_code(row["status"])


def cmd_sweep(args: argparse.Namespace) -> int:
    config = resolve_scenario(args.scenario)
    values = _split(args.values)
    if not values:
        raise InvalidInputError("--values needs at least one entry")
    protocols = PROTOCOLS if args.protocol == "both" else (args.protocol,)

    if args.plans:
        if args.param != "distance":
            raise InvalidInputError("--plans compares plans over distance; use --param distance")
        plans = [parse_plan(plan) for plan in _split(args.plans)]
        distances = [float(value) for value in values]
        frames = [compare_plans(config, distances, plans, protocol, workers=args.workers) for protocol in protocols]
        frame = pl.concat(frames)
        for protocol, plan_frame in zip(protocols, frames):
            for (m_a, n_a), (m_b, n_b) in zip(plans, plans[1:]):
                crossing = crossover_distance(plan_frame, f"{m_a}x{n_a}", f"{m_b}x{n_b}")
                logger.info(f"{protocol}: {m_a}x{n_a} vs {m_b}x{n_b} crossover at {crossing} m")
        _emit(frame, args.output)
        return EXIT_OK

    schemes = _split(args.schemes)
    frame = run_sweep(config, args.param, values, protocols, schemes, workers=args.workers, timing=args.timing)
    _emit(frame, args.output)
    return EXIT_OK


def cmd_oracle(args: argparse.Namespace) -> int:
    config = resolve_scenario(args.scenario)
    solved = solve_baseline(config, args.protocol, "joint")
    grid = grid_solve(config, args.protocol, args.resolution)
    if solved.status == "infeasible" or grid.status == "infeasible":
        logger.warning(f"{config.name} is infeasible under {args.protocol}")
        return EXIT_INFEASIBLE
    audit = audit_solution(solved, config, args.protocol)
    frame = pl.DataFrame(
        {
            "scenario_id": [config.name],
            "protocol": [args.protocol],
            "resolution": [args.resolution],
            "solver_energy": [solved.energy_total],
            "grid_energy": [grid.energy_total],
            "relative_difference": [(solved.energy_total - grid.energy_total) / grid.energy_total],
            "duality_gap_rel": [solved.duality_gap_rel],
            "audit_passed": [audit.passed],
            "max_constraint_violation": [audit.max_constraint_violation],
            "max_residual": [audit.max_residual],
        }
    )
    _emit(frame, args.output)
    return _status_code(solved.status)


def cmd_simulate(args: argparse.Namespace) -> int:
    datasets = make_synthetic_datasets(
        args.devices, args.samples, dimension=args.dim, noise=args.noise, seed=args.seed
    )
    trajectory = run_training(datasets, args.eta, args.M, args.N, weighted=args.weighted)
    if args.output:
        trajectory.write_csv(args.output)
    else:
        sys.stdout.write(trajectory.to_frame().write_csv())
    return EXIT_OK


def cmd_compare(args: argparse.Namespace) -> int:
    config = resolve_scenario(args.scenario)
    frame = compare_protocols(config)
    _emit(frame, args.output)
    return EXIT_OK if bool(frame["feasible"].any()) else EXIT_INFEASIBLE


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fedge-energy",
        description="Energy-minimal resource allocation for federated edge learning (NOMA and TDMA uplinks)",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="Log solver progress to stderr")
    commands = parser.add_subparsers(dest="command", required=True)

    def scenario_command(name: str, help_text: str) -> argparse.ArgumentParser:
        sub = commands.add_parser(name, help=help_text)
        sub.add_argument("scenario", help="Scenario JSON file or a built-in name (desk_a, paper_layout)")
        sub.add_argument("-o", "--output", help="Write CSV here instead of stdout")
        return sub

    feasibility = scenario_command("feasibility", "Print the minimum training delay against T")
    feasibility.add_argument("--protocol", choices=PROTOCOLS, default="noma")
    feasibility.set_defaults(handler=cmd_feasibility)

    solve = scenario_command("solve", "Solve one scheme and write one result row")
    solve.add_argument("--protocol", choices=PROTOCOLS, default="noma")
    solve.add_argument("--scheme", choices=SCHEMES, default="joint")
    solve.add_argument("--timing", action="store_true", help="Record solver runtime")
    solve.set_defaults(handler=cmd_solve)

    sweep = scenario_command("sweep", "Sweep one parameter and write one row per case")
    sweep.add_argument("--param", choices=SWEEP_PARAMS, required=True)
    sweep.add_argument("--values", required=True, help="Comma-separated values (MN values as 50x8)")
    sweep.add_argument("--protocol", choices=(*PROTOCOLS, "both"), default="both")
    sweep.add_argument("--schemes", default="joint", help=f"Comma-separated subset of {', '.join(SCHEMES)}")
    sweep.add_argument("--plans", help="Comma-separated MxN plans to compare over distance")
    sweep.add_argument("--workers", type=int, default=1)
    sweep.add_argument("--timing", action="store_true", help="Record solver runtimes")
    sweep.set_defaults(handler=cmd_sweep)

    oracle = scenario_command("oracle", "Compare the solver with the grid oracle")
    oracle.add_argument("--protocol", choices=PROTOCOLS, default="noma")
    oracle.add_argument("--resolution", type=int, default=200, help=f"Grid points per device (max {MAX_RESOLUTION})")
    oracle.set_defaults(handler=cmd_oracle)

    simulate = commands.add_parser("simulate", help="Run federated BGD on synthetic data and write the trajectory")
    simulate.add_argument("--devices", type=int, default=2)
    simulate.add_argument("--samples", type=int, default=50)
    simulate.add_argument("--eta", type=float, default=0.1)
    simulate.add_argument("--M", type=int, default=10)
    simulate.add_argument("--N", type=int, default=1)
    simulate.add_argument("--dim", type=int, default=3)
    simulate.add_argument("--noise", type=float, default=0.1)
    simulate.add_argument("--seed", type=int, default=0)
    simulate.add_argument("--weighted", action="store_true", help="Average by sample counts")
    simulate.add_argument("-o", "--output", help="Write CSV here instead of stdout")
    simulate.set_defaults(handler=cmd_simulate)

    compare = scenario_command("compare", "NOMA versus TDMA minimal delays and energies")
    compare.set_defaults(handler=cmd_compare)
    return parser


def run_command(argv: Optional[Sequence[str]] = None) -> int:
    """Parse ``argv``, run the command and return its exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code) if isinstance(e.code, int) else EXIT_INVALID
    configure_logging(args.verbose)
    try:
        return args.handler(args)
    except (FileNotFoundError, ValueError, ArithmeticError) as e:
        logger.error(f"{args.command} failed: {e}")
        return EXIT_INVALID


def main(argv: Optional[Sequence[str]] = None) -> int:
    return run_command(argv)


if __name__ == "__main__":
    sys.exit(main())
