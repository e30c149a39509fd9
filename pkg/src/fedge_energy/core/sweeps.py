"""
Parameter sweeps over scenarios

Each sweep value produces a variant scenario; every (variant, protocol,
scheme) case is solved independently, optionally in a process pool, and
rows come back in input order.
"""
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import polars as pl
from loguru import logger

from .baselines import PROTOCOLS, check_protocol, check_scheme, solve_baseline
from .errors import InvalidInputError
from .io_handlers import result_row, rows_to_frame
from .scenario import SystemConfig, defaults_fingerprint, parse_quantity, with_devices, with_distances, with_plan
from .solver_noma import DEFAULT_OPTIONS, SolverOptions, t_min_noma
from .solver_tdma import t_min_tdma

SWEEP_PARAMS = ("distance", "cycles", "fmax", "pmax", "T", "MN")
DEVICE_SPACING = 45.0
DEFAULT_PLANS: Tuple[Tuple[int, int], ...] = ((50, 8), (30, 15), (20, 25))

_PARAM_KINDS = {"distance": "distance", "cycles": "plain", "fmax": "frequency", "pmax": "power", "T": "time"}

SweepValue = Union[str, float, Tuple[int, int]]


def parse_plan(value: Union[str, Tuple[int, int]]) -> Tuple[int, int]:
    """Parse an (M, N) plan written as ``"50x8"``."""
    if isinstance(value, tuple):
        return int(value[0]), int(value[1])
    parts = str(value).lower().split("x")
    if len(parts) != 2 or not all(part.strip().isdigit() for part in parts):
        raise InvalidInputError(f"Plan must be written MxN (e.g. 50x8), got {value!r}")
    return int(parts[0]), int(parts[1])


def spread_distances(average: float, num_devices: int, spacing: float = DEVICE_SPACING) -> List[float]:
    """Arithmetic progression of distances with the given average."""
    offsets = (np.arange(num_devices) - (num_devices - 1) / 2.0) * spacing
    distances = [float(average + offset) for offset in offsets]
    if min(distances) <= 0:
        raise InvalidInputError(f"Average distance {average} m is too small for {num_devices} devices {spacing} m apart")
    return distances


def apply_parameter(config: SystemConfig, param: str, value: SweepValue) -> SystemConfig:
    """
    Variant of ``config`` with one sweep parameter set.

    distance places the devices around an average distance, cycles sets
    FLOPs per cycle, fmax and pmax set the caps, T the deadline, MN the plan.
    """
    if param not in SWEEP_PARAMS:
        raise InvalidInputError(f"Unknown sweep parameter '{param}', expected one of {', '.join(SWEEP_PARAMS)}")
    if param == "MN":
        global_iters, local_iters = parse_plan(value)  # type: ignore[arg-type]
        variant = with_plan(config, global_iters=global_iters, local_iters=local_iters)
        label = f"{global_iters}x{local_iters}"
    else:
        number = parse_quantity(value, _PARAM_KINDS[param])  # type: ignore[arg-type]
        if param == "distance":
            variant = with_distances(config, spread_distances(number, config.num_devices))
        elif param == "cycles":
            variant = with_devices(config, flops_per_cycle=number)
        elif param == "fmax":
            variant = with_devices(config, max_cpu_freq=number)
        elif param == "pmax":
            variant = replace(config, max_power=number)
        else:
            variant = with_plan(config, max_delay=number)
        label = f"{number:g}"
    return replace(variant, name=f"{config.name}[{param}={label}]")


def run_case(
    config: SystemConfig,
    protocol: str,
    scheme: str,
    options: SolverOptions = DEFAULT_OPTIONS,
    timing: bool = False,
    fingerprint: Optional[str] = None,
) -> Dict[str, Any]:
    """Solve one (scenario, protocol, scheme) case and flatten it into a result row."""
    start = time.perf_counter()
    solution = solve_baseline(config, protocol, scheme, options)
    runtime = time.perf_counter() - start if timing else None
    if solution.status != "optimal":
        logger.warning(f"{config.name} {protocol}/{scheme}: {solution.status}")
    return result_row(solution, config, runtime=runtime, fingerprint=fingerprint)


def _run_task(task: Tuple[SystemConfig, str, str, SolverOptions, bool, str]) -> Dict[str, Any]:
    return run_case(*task)


def run_cases(
    cases: Sequence[Tuple[SystemConfig, str, str]],
    options: SolverOptions = DEFAULT_OPTIONS,
    workers: int = 1,
    timing: bool = False,
) -> List[Dict[str, Any]]:
    """Solve cases in a process pool when workers > 1; rows keep the input order."""
    fingerprint = defaults_fingerprint()
    tasks = [(config, protocol, scheme, options, timing, fingerprint) for config, protocol, scheme in cases]
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as executor:
            return list(executor.map(_run_task, tasks))
    return [_run_task(task) for task in tasks]


def run_sweep(
    config: SystemConfig,
    param: str,
    values: Sequence[SweepValue],
    protocols: Sequence[str] = PROTOCOLS,
    schemes: Sequence[str] = ("joint",),
    options: SolverOptions = DEFAULT_OPTIONS,
    workers: int = 1,
    timing: bool = False,
) -> pl.DataFrame:
    """
    One row per value, protocol and scheme, in that nesting order.

    Raises:
        InvalidInputError: If the parameter, a value, a protocol or a scheme is invalid
    """
    for protocol in protocols:
        check_protocol(protocol)
    for scheme in schemes:
        check_scheme(scheme)
    variants = [apply_parameter(config, param, value) for value in values]
    cases = [(variant, protocol, scheme) for variant in variants for protocol in protocols for scheme in schemes]
    logger.info(f"Sweeping {param} over {len(values)} values: {len(cases)} cases on {workers} worker(s)")
    rows = run_cases(cases, options, workers, timing)
    return rows_to_frame(rows, config.num_devices)


def compare_plans(
    config: SystemConfig,
    distances: Sequence[float],
    plans: Sequence[Tuple[int, int]] = DEFAULT_PLANS,
    protocol: str = "noma",
    options: SolverOptions = DEFAULT_OPTIONS,
    workers: int = 1,
) -> pl.DataFrame:
    """Joint energy for every (M, N) plan at every average distance."""
    check_protocol(protocol)
    keys = [(plan, distance) for plan in plans for distance in distances]
    cases = [
        (apply_parameter(apply_parameter(config, "MN", plan), "distance", distance), protocol, "joint")
        for plan, distance in keys
    ]
    rows = run_cases(cases, options, workers)
    return pl.DataFrame(
        {
            "plan": [f"{m}x{n}" for (m, n), _ in keys],
            "M": [m for (m, _), _ in keys],
            "N": [n for (_, n), _ in keys],
            "distance": [float(d) for _, d in keys],
            "protocol": [protocol] * len(keys),
            "status": [row["status"] for row in rows],
            "energy_total": [row["energy_total"] for row in rows],
        },
        schema_overrides={"energy_total": pl.Float64},
    )


def crossover_distance(frame: pl.DataFrame, plan_a: str, plan_b: str) -> Optional[float]:
    """
    First distance at which the cheaper of two plans changes.

    Only distances where both plans have a finite energy count. Returns
    None when one plan stays cheaper throughout.
    """
    energies = (
        frame.filter(pl.col("plan").is_in([plan_a, plan_b]) & pl.col("energy_total").is_not_null())
        .pivot(on="plan", index="distance", values="energy_total")
        .drop_nulls()
        .sort("distance")
    )
    if plan_a not in energies.columns or plan_b not in energies.columns:
        return None
    previous = None
    for distance, energy_a, energy_b in energies.select("distance", plan_a, plan_b).iter_rows():
        prefers_a = energy_a <= energy_b
        if previous is not None and prefers_a != previous:
            return float(distance)
        previous = prefers_a
    return None


def compare_protocols(config: SystemConfig, options: SolverOptions = DEFAULT_OPTIONS) -> pl.DataFrame:
    """Minimum delays and optimal energies of NOMA and TDMA side by side."""
    rows = []
    for protocol, t_min in (("noma", t_min_noma(config)), ("tdma", t_min_tdma(config))):
        solution = solve_baseline(config, protocol, "joint", options)
        rows.append(
            {
                "protocol": protocol,
                "t_min": t_min,
                "feasible": t_min <= config.plan.max_delay,
                "status": solution.status,
                "energy_total": None if solution.status == "infeasible" else solution.energy_total,
                "duality_gap_rel": None if solution.status == "infeasible" else solution.duality_gap_rel,
            }
        )
    return pl.from_dicts(
        rows,
        schema={
            "protocol": pl.Utf8,
            "t_min": pl.Float64,
            "feasible": pl.Boolean,
            "status": pl.Utf8,
            "energy_total": pl.Float64,
            "duality_gap_rel": pl.Float64,
        },
    )
