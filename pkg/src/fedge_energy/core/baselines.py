"""
Benchmark schemes as restricted variants of the joint solvers

comm_only fixes every CPU at f_max and optimizes communication, comp_only
fixes every transmitter at P_max and stretches computation, delay_min runs
everything at full speed and power.
"""
from typing import Literal, Tuple, Union, get_args

import numpy as np
from loguru import logger

from .errors import InvalidInputError
from .noma_region import max_common_rate, min_energy_powers
from .numerics import golden_section_min
from .scenario import SystemConfig, straggler_time
from .solver_noma import (
    DEFAULT_OPTIONS,
    NomaSolution,
    SolverOptions,
    frequencies_for_time,
    scheduled_solution,
    solve_p1,
)
from .solver_tdma import (
    TdmaSolution,
    dual_scales_tdma,
    p_max_upload_time,
    slots_for_budget,
    solve_p2,
    tdma_solution_from_allocation,
)

SchemeId = Literal["joint", "comm_only", "comp_only", "delay_min"]
Protocol = Literal["noma", "tdma"]
Solution = Union[NomaSolution, TdmaSolution]

SCHEMES: Tuple[str, ...] = get_args(SchemeId)
PROTOCOLS: Tuple[str, ...] = get_args(Protocol)


def check_protocol(protocol: str) -> str:
    if protocol not in PROTOCOLS:
        raise InvalidInputError(f"Unknown protocol '{protocol}', expected one of {', '.join(PROTOCOLS)}")
    return protocol


def check_scheme(scheme: str) -> str:
    if scheme not in SCHEMES:
        raise InvalidInputError(f"Unknown scheme '{scheme}', expected one of {', '.join(SCHEMES)}")
    return scheme


def _infeasible(config: SystemConfig, protocol: str, scheme: str) -> Solution:
    logger.info(f"{scheme} ({protocol}) infeasible for {config.name}")
    if protocol == "noma":
        return NomaSolution.infeasible(config, scheme=scheme)
    return TdmaSolution.infeasible(config, scheme=scheme)


def _fits_deadline(delay: float, config: SystemConfig) -> bool:
    return delay <= config.plan.max_delay * (1 + 1e-12)


# NOMA

def _noma_delay_min(config: SystemConfig, options: SolverOptions) -> Solution:
    plan = config.plan
    rate = max_common_rate(config)
    t_up = plan.upload_bits / rate
    t_loc = straggler_time(config)
    if not _fits_deadline(plan.global_iters * (plan.local_iters * t_loc + t_up), config):
        return _infeasible(config, "noma", "delay_min")
    powers = np.full(config.num_devices, config.max_power)
    return scheduled_solution(
        config, config.max_freqs.copy(), powers, t_loc, t_up, rate, scheme="delay_min", primal_source="baseline"
    )


def _noma_comm_only(config: SystemConfig, options: SolverOptions) -> Solution:
    plan = config.plan
    t_loc = straggler_time(config)
    rate_cap = max_common_rate(config)
    lo = plan.upload_bits / rate_cap
    hi = plan.round_budget - plan.local_iters * t_loc
    if hi < lo * (1 - 1e-12):
        return _infeasible(config, "noma", "comm_only")
    hi = max(hi, lo)

    def powers_at(t_up: float) -> np.ndarray:
        rate = min(plan.upload_bits / t_up, rate_cap)
        return min_energy_powers(rate, config.channel_gains, config.channel, config.max_power)

    t_up = golden_section_min(lambda t: t * float(powers_at(t).sum()), lo, hi, tol=options.polish_tol)
    rate = min(plan.upload_bits / t_up, rate_cap)
    return scheduled_solution(
        config, config.max_freqs.copy(), powers_at(t_up), t_loc, t_up, rate,
        scheme="comm_only", primal_source="baseline",
    )


def _noma_comp_only(config: SystemConfig, options: SolverOptions) -> Solution:
    plan = config.plan
    rate = max_common_rate(config)
    t_up = plan.upload_bits / rate
    t_loc = (plan.round_budget - t_up) / plan.local_iters
    if t_loc < straggler_time(config) * (1 - 1e-12):
        return _infeasible(config, "noma", "comp_only")
    t_loc = max(t_loc, straggler_time(config))
    powers = np.full(config.num_devices, config.max_power)
    return scheduled_solution(
        config, frequencies_for_time(t_loc, config, options), powers, t_loc, t_up, rate,
        scheme="comp_only", primal_source="baseline",
    )


# TDMA

def _full_power_slots(config: SystemConfig) -> np.ndarray:
    return np.array(
        [
            p_max_upload_time(config.plan.upload_bits, float(h), config.channel, config.max_power)
            for h in config.channel_gains
        ]
    )


def _tdma_delay_min(config: SystemConfig, options: SolverOptions) -> Solution:
    plan = config.plan
    slots = _full_power_slots(config)
    t_loc = straggler_time(config)
    if not _fits_deadline(plan.global_iters * (plan.local_iters * t_loc + float(slots.sum())), config):
        return _infeasible(config, "tdma", "delay_min")
    return tdma_solution_from_allocation(
        config, config.max_freqs.copy(), slots, t_loc, scheme="delay_min", primal_source="baseline"
    )


def _tdma_comm_only(config: SystemConfig, options: SolverOptions) -> Solution:
    plan = config.plan
    t_loc = straggler_time(config)
    budget = plan.round_budget - plan.local_iters * t_loc
    slots = _full_power_slots(config)
    if float(slots.sum()) > budget * (1 + 1e-12):
        return _infeasible(config, "tdma", "comm_only")
    priced = slots_for_budget(budget, config, float(dual_scales_tdma(config)[-1]))
    if priced is not None:
        slots = priced[1]
    return tdma_solution_from_allocation(
        config, config.max_freqs.copy(), slots, t_loc, scheme="comm_only", primal_source="baseline"
    )


def _tdma_comp_only(config: SystemConfig, options: SolverOptions) -> Solution:
    plan = config.plan
    slots = _full_power_slots(config)
    t_loc = (plan.round_budget - float(slots.sum())) / plan.local_iters
    if t_loc < straggler_time(config) * (1 - 1e-12):
        return _infeasible(config, "tdma", "comp_only")
    t_loc = max(t_loc, straggler_time(config))
    return tdma_solution_from_allocation(
        config, frequencies_for_time(t_loc, config, options), slots, t_loc,
        scheme="comp_only", primal_source="baseline",
    )


_BASELINES = {
    ("noma", "delay_min"): _noma_delay_min,
    ("noma", "comm_only"): _noma_comm_only,
    ("noma", "comp_only"): _noma_comp_only,
    ("tdma", "delay_min"): _tdma_delay_min,
    ("tdma", "comm_only"): _tdma_comm_only,
    ("tdma", "comp_only"): _tdma_comp_only,
}


def solve_baseline(
    config: SystemConfig,
    protocol: str,
    scheme: str,
    options: SolverOptions = DEFAULT_OPTIONS,
) -> Solution:
    """
    Solve one scheme for one uplink protocol.

    ``joint`` dispatches to solve_p1 / solve_p2. The other schemes carry no
    dual certificate, so their dual_value and duality_gap_rel are NaN and
    their status is ``optimal`` or ``infeasible``.

    Raises:
        InvalidInputError: If protocol or scheme is unknown
    """
    check_protocol(protocol)
    check_scheme(scheme)
    if scheme == "joint":
        return solve_p1(config, options) if protocol == "noma" else solve_p2(config, options)
    solution = _BASELINES[(protocol, scheme)](config, options)
    if solution.status != "infeasible":
        logger.debug(f"{scheme} ({protocol}) for {config.name}: energy {solution.energy_total:.6e} J")
    return solution
