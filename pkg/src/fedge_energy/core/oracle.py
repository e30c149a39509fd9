"""
Brute-force cross-checks for the solvers

grid_solve searches log-spaced power grids exhaustively for K <= 3;
audit_solution recomputes every constraint of a reported allocation and,
when the solution carries multipliers, its complementary slackness and
frequency stationarity.
"""
import math
from dataclasses import dataclass, field
from typing import Dict, Iterator, Optional, Union

import numpy as np
from loguru import logger

from .baselines import check_protocol
from .errors import InvalidInputError, SizeError
from .noma_region import region_slack, scheduled_rates, subset_masks
from .scenario import SystemConfig, straggler_time
from .solver_noma import (
    DEFAULT_OPTIONS,
    NomaSolution,
    SolverOptions,
    frequencies_for_time,
    frequency_floor,
    scheduled_solution,
)
from .solver_tdma import TdmaSolution, tdma_solution_from_allocation

MAX_ORACLE_DEVICES = 3
MAX_RESOLUTION = 400
GRID_CHUNK = 1 << 16

Solution = Union[NomaSolution, TdmaSolution]


def power_grid(config: SystemConfig, resolution: int) -> np.ndarray:
    """Log-spaced powers over [1e-6 P_max, P_max]."""
    return np.geomspace(1e-6 * config.max_power, config.max_power, resolution)


def _grid_chunks(resolution: int, size: int) -> Iterator[np.ndarray]:
    """Grid index tuples in lexicographic order, one chunk at a time."""
    total = resolution**size
    for start in range(0, total, GRID_CHUNK):
        flat = np.arange(start, min(start + GRID_CHUNK, total))
        yield np.stack(np.unravel_index(flat, (resolution,) * size), axis=1)


def _noma_upload_times(powers: np.ndarray, config: SystemConfig) -> np.ndarray:
    """S / common rate for each row of powers, from the full subset check."""
    masks = subset_masks(config.num_devices)
    received = powers * config.channel_gains
    capacity = config.channel.bandwidth * np.log2(1.0 + received @ masks.T / config.channel.noise_power)
    common = np.min(capacity / masks.sum(axis=1), axis=1)
    return config.plan.upload_bits / common


def _tdma_upload_times(powers: np.ndarray, config: SystemConfig) -> np.ndarray:
    rates = config.channel.bandwidth * np.log2(1.0 + powers * config.channel_gains / config.channel.noise_power)
    return config.plan.upload_bits / rates


def grid_solve(
    config: SystemConfig,
    protocol: str,
    resolution: int = 200,
    options: SolverOptions = DEFAULT_OPTIONS,
) -> Solution:
    """
    Exhaustive search over per-device power grids.

    Each grid point fixes the powers; upload times follow from the rate
    requirement (NOMA: S over the common rate from every subset constraint,
    TDMA: S over each slot's Shannon rate), the local time takes the rest of
    the round and frequencies are the smallest meeting it. Ties go to the
    lowest lexicographic grid index.

    Raises:
        SizeError: If K > 3 or resolution > 400
    """
    check_protocol(protocol)
    K = config.num_devices
    if K > MAX_ORACLE_DEVICES:
        raise SizeError(f"Grid oracle handles at most {MAX_ORACLE_DEVICES} devices, got {K}")
    if resolution > MAX_RESOLUTION:
        raise SizeError(f"Grid resolution is capped at {MAX_RESOLUTION}, got {resolution}")
    if resolution < 2:
        raise InvalidInputError(f"Grid resolution must be at least 2, got {resolution}")

    plan = config.plan
    M, N = plan.global_iters, plan.local_iters
    grid = power_grid(config, resolution)
    t_straggler = straggler_time(config)
    floor = frequency_floor(config, options)
    upload_times = _noma_upload_times if protocol == "noma" else _tdma_upload_times

    best_energy, best_index = math.inf, None
    for index in _grid_chunks(resolution, K):
        powers = grid[index]
        times = upload_times(powers, config)
        total_time = times if protocol == "noma" else times.sum(axis=1)
        t_loc = (plan.round_budget - total_time) / N
        feasible = t_loc >= t_straggler * (1 - 1e-12)
        safe_t_loc = np.where(feasible, np.maximum(t_loc, t_straggler), 1.0)
        freqs = np.clip(config.cycles / safe_t_loc[:, None], floor, config.max_freqs)
        comm = np.sum(powers * (times[:, None] if protocol == "noma" else times), axis=1)
        energy = M * N * (freqs**2 @ (config.cycles * config.capacitance)) + M * comm
        energy = np.where(feasible, energy, np.inf)
        position = int(np.argmin(energy))
        if energy[position] < best_energy:
            best_energy, best_index = float(energy[position]), index[position]

    if best_index is None:
        logger.info(f"Grid oracle found no feasible point for {config.name} ({protocol})")
        return NomaSolution.infeasible(config) if protocol == "noma" else TdmaSolution.infeasible(config)

    powers = grid[best_index]
    times = upload_times(powers[None, :], config)[0]
    total_time = float(times) if protocol == "noma" else float(np.sum(times))
    t_loc = max((plan.round_budget - total_time) / N, t_straggler)
    cpu_freqs = frequencies_for_time(t_loc, config, options)
    logger.debug(f"Grid oracle best for {config.name} ({protocol}): {best_energy:.6e} J at index {tuple(best_index)}")
    if protocol == "noma":
        rate = plan.upload_bits / total_time
        return scheduled_solution(config, cpu_freqs, powers, t_loc, total_time, rate, scheme="grid", primal_source="grid")
    return tdma_solution_from_allocation(config, cpu_freqs, times, t_loc, scheme="grid", primal_source="grid")


@dataclass(frozen=True)
class AuditReport:
    """
    Outcome of an audit.

    Violations and residuals are relative: constraint violations against
    the constraint's own scale, slackness and stationarity against the
    total energy.
    """

    max_constraint_violation: float
    complementary_slackness_residuals: np.ndarray
    stationarity_residuals: np.ndarray
    objective: float
    passed: bool
    slackness_applicable: bool
    violations: Dict[str, float] = field(default_factory=dict)

    @property
    def max_residual(self) -> float:
        residuals = np.concatenate((self.complementary_slackness_residuals, self.stationarity_residuals))
        return float(np.max(residuals)) if residuals.size else 0.0


def _violation(excess: np.ndarray, scale: Union[float, np.ndarray]) -> float:
    ratio = np.maximum(np.asarray(excess, dtype=float), 0.0) / scale
    return float(np.max(ratio)) if ratio.size else 0.0


def _frequency_stationarity(
    solution: Solution,
    weights: np.ndarray,
    config: SystemConfig,
    energy: float,
    options: SolverOptions,
) -> np.ndarray:
    """Central-difference derivative of M N c s f^2 + c w / f, scaled by f / E, sign-aware at the bounds."""
    MN = config.plan.global_iters * config.plan.local_iters
    f = solution.cpu_freqs
    step = 1e-6 * f

    def lagrangian(freq: np.ndarray) -> np.ndarray:
        return MN * config.cycles * config.capacitance * freq**2 + config.cycles * weights / freq

    derivative = (lagrangian(f + step) - lagrangian(f - step)) / (2.0 * step)
    at_max = f >= config.max_freqs * (1 - 1e-9)
    at_floor = f <= frequency_floor(config, options) * (1 + 1e-9)
    derivative = np.where(at_max, np.maximum(derivative, 0.0), derivative)
    derivative = np.where(at_floor, np.minimum(derivative, 0.0), derivative)
    return np.abs(derivative) * f / energy


def audit_solution(
    solution: Solution,
    config: SystemConfig,
    protocol: Optional[str] = None,
    options: SolverOptions = DEFAULT_OPTIONS,
    constraint_tol: float = 1e-6,
    residual_tol: float = 1e-5,
) -> AuditReport:
    """
    Recompute every constraint of a reported allocation and check its certificate.

    Energies and bits are rebuilt from the reported powers, times and (for
    NOMA) the decoding schedule. NOMA checks all 2^K - 1 subset
    inequalities. Complementary slackness and stationarity are only
    evaluated when the solution carries multipliers.
    """
    protocol = check_protocol(protocol or solution.protocol)
    if protocol != solution.protocol:
        raise InvalidInputError(f"Solution is {solution.protocol}, audit requested for {protocol}")
    if solution.status == "infeasible":
        return AuditReport(math.inf, np.array([]), np.array([]), math.nan, False, False, {"status": math.inf})

    plan = config.plan
    M, N, S, T = plan.global_iters, plan.local_iters, plan.upload_bits, plan.max_delay
    powers, f, t_loc = solution.powers, solution.cpu_freqs, solution.t_loc
    gains, channel = config.channel_gains, config.channel

    if isinstance(solution, NomaSolution):
        t_up = solution.t_up
        rates = scheduled_rates(powers, gains, channel, solution.decoding)
        bits = rates * t_up
        comm = M * float(np.sum(powers * t_up))
        delay = M * (N * t_loc + t_up)
        slack = region_slack(rates, powers, gains, channel)
        subset_scale = np.maximum(subset_masks(config.num_devices) @ rates, channel.bandwidth * 1e-12)
        region = _violation(-slack, subset_scale)
        fractions = np.array([fraction for _, fraction in solution.decoding])
        schedule = max(abs(float(fractions.sum()) - 1.0), _violation(-fractions, 1.0))
    else:
        times = solution.upload_times
        rates = channel.bandwidth * np.log2(1.0 + powers * gains / channel.noise_power)
        bits = rates * times
        comm = M * float(np.sum(powers * times))
        delay = M * (N * t_loc + float(times.sum()))
        region = 0.0
        schedule = _violation(-times, T)

    comp = M * N * float(np.sum(config.cycles * config.capacitance * f**2))
    energy = comp + comm
    violations = {
        "bits": _violation(S - bits, S),
        "delay": _violation(delay - T, T),
        "local_time": _violation(config.cycles / f - t_loc, t_loc),
        "power_max": _violation(powers - config.max_power, config.max_power),
        "power_min": _violation(-powers, config.max_power),
        "freq_max": _violation(f - config.max_freqs, config.max_freqs),
        "freq_min": _violation(frequency_floor(config, options) - f, config.max_freqs),
        "region": region,
        "schedule": schedule,
    }
    max_violation = max(violations.values())

    duals = solution.duals
    scale = max(energy, 1e-300)
    if duals is None:
        slackness = np.array([])
        stationarity = np.array([])
    elif isinstance(solution, NomaSolution):
        slackness = np.abs(np.concatenate((
            duals.lam * (S - bits),
            duals.mu * (t_loc - config.cycles / f),
            [duals.nu * (T - delay)],
        ))) / scale
        stationarity = _frequency_stationarity(solution, duals.mu, config, scale, options)
    else:
        slackness = np.abs(np.concatenate((
            duals.omega * (t_loc - config.cycles / f),
            [duals.zeta * (T - delay)],
        ))) / scale
        stationarity = _frequency_stationarity(solution, duals.omega, config, scale, options)

    residuals = np.concatenate((slackness, stationarity))
    passed = max_violation <= constraint_tol and bool(np.all(residuals <= residual_tol))
    if not passed:
        worst = max(violations, key=lambda name: violations[name])
        logger.debug(
            f"Audit failed for {config.name} ({protocol}): worst constraint {worst}={violations[worst]:.3e}, "
            f"largest residual {float(np.max(residuals)) if residuals.size else 0.0:.3e}"
        )
    return AuditReport(
        max_constraint_violation=max_violation,
        complementary_slackness_residuals=slackness,
        stationarity_residuals=stationarity,
        objective=energy,
        passed=passed,
        slackness_applicable=duals is not None,
        violations=violations,
    )
