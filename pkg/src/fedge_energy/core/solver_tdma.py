"""
Energy-minimal joint allocation under TDMA uplink

Each device owns a slot of t_k seconds, so its rate constraint only couples
its own energy and slot length. With the energy written as the minimal one
for S bits in t_k seconds, the dual function splits into closed-form
frequency subproblems and one bisection per device on the upload time.
"""
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, Optional, Tuple

import numpy as np
from loguru import logger

from .errors import BracketError, DualInfeasibleError, InvalidInputError
from .numerics import CutOracleResult, bisect_root
from .scenario import ChannelModel, SystemConfig, straggler_time
from .solver_noma import (
    DEFAULT_OPTIONS,
    SolveStatus,
    SolverOptions,
    attach_certificate,
    computation_energy,
    dual_ascent,
    frequencies_for_time,
    frequency_floor,
    optimal_cpu_frequencies,
)

OVERFLOW_EXPONENT = 60.0

_LN2 = math.log(2.0)


@dataclass(frozen=True)
class TdmaDualPoint:
    """Multipliers for the local-time (omega) and delay (zeta) constraints."""

    omega: np.ndarray
    zeta: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "omega", np.asarray(self.omega, dtype=float))
        object.__setattr__(self, "zeta", float(self.zeta))

    def as_vector(self) -> np.ndarray:
        return np.append(self.omega, self.zeta)

    @classmethod
    def from_vector(cls, vector: np.ndarray) -> "TdmaDualPoint":
        vector = np.asarray(vector, dtype=float)
        return cls(omega=vector[:-1], zeta=float(vector[-1]))


@dataclass(frozen=True)
class TdmaDualEvaluation:
    value: float
    subgradient: np.ndarray
    cpu_freqs: np.ndarray
    t_loc: float
    upload_times: np.ndarray
    energies: np.ndarray


@dataclass(frozen=True)
class TdmaSolution:
    """
    Primal allocation under TDMA.

    ``energies`` are per-round upload energies p_k t_k; ``rates`` are the
    Shannon rates of each slot at its power.
    """

    cpu_freqs: np.ndarray
    powers: np.ndarray
    rates: np.ndarray
    energies: np.ndarray
    upload_times: np.ndarray
    t_loc: float
    energy_total: float
    energy_comm: float
    energy_comp: float
    delay: float
    dual_value: float
    duality_gap_rel: float
    status: SolveStatus
    scheme: str = "joint"
    duals: Optional[TdmaDualPoint] = None
    iterations: int = 0
    primal_source: str = ""
    details: Dict[str, float] = field(default_factory=dict)

    @property
    def protocol(self) -> str:
        return "tdma"

    @property
    def upload_time(self) -> float:
        return float(np.sum(self.upload_times))

    @property
    def bits(self) -> np.ndarray:
        return self.rates * self.upload_times

    @classmethod
    def infeasible(cls, config: SystemConfig, scheme: str = "joint") -> "TdmaSolution":
        nan = np.full(config.num_devices, np.nan)
        return cls(
            cpu_freqs=nan, powers=nan, rates=nan, energies=nan, upload_times=nan, t_loc=math.nan,
            energy_total=math.nan, energy_comm=math.nan, energy_comp=math.nan, delay=math.nan,
            dual_value=math.nan, duality_gap_rel=math.nan, status="infeasible", scheme=scheme,
        )


# Per-device closed forms

def p_max_upload_time(upload_bits: float, gain: float, channel: ChannelModel, max_power: float) -> float:
    """Shortest slot for S bits: the slot length at full power."""
    return upload_bits / (channel.bandwidth * math.log2(1.0 + max_power * gain / channel.noise_power))


def t_min_tdma(config: SystemConfig) -> float:
    """Minimum training delay under TDMA: full speed and every slot at P_max."""
    plan = config.plan
    slots = sum(
        p_max_upload_time(plan.upload_bits, float(h), config.channel, config.max_power) for h in config.channel_gains
    )
    return plan.global_iters * (plan.local_iters * straggler_time(config) + slots)


def upload_energy_given_time(t: float, upload_bits: float, gain: float, channel: ChannelModel) -> float:
    """
    Minimal energy to send ``upload_bits`` in ``t`` seconds: (2^(S/(B t)) - 1) t noise / h.

    Returns +inf once S/(B t) exceeds 60.
    """
    if not t > 0:
        raise InvalidInputError(f"Upload time must be positive, got {t}")
    exponent = upload_bits / (channel.bandwidth * t)
    if exponent > OVERFLOW_EXPONENT:
        return math.inf
    return math.expm1(exponent * _LN2) * t * channel.noise_power / gain


def upload_time_residual(tau: float, zeta: float, upload_bits: float, gain: float, channel: ChannelModel) -> float:
    """
    Derivative of upload energy plus zeta*t at t = tau.

    2^u (noise/h)(1 - u ln2) - noise/h + zeta with u = S/(B tau); increasing in tau.
    """
    scaled = min(upload_bits / (channel.bandwidth * tau), OVERFLOW_EXPONENT) * _LN2
    a = channel.noise_power / gain
    return a * (math.expm1(scaled) * (1.0 - scaled) - scaled) + zeta


def optimal_upload_time(
    zeta: float,
    gain: float,
    channel: ChannelModel,
    upload_bits: float,
    max_power: float,
    t_ceiling: float,
) -> float:
    """
    Slot length minimizing upload energy + zeta * t, within [P_max time, t_ceiling].

    The stationarity residual is increasing in t, so the root is bracketed
    by doubling from the full-power slot and found by bisection. With
    zeta = 0 the energy keeps falling with t and the ceiling is returned.
    """
    if not zeta >= 0:
        raise InvalidInputError(f"Delay price must be non-negative, got {zeta}")
    t_power = p_max_upload_time(upload_bits, gain, channel, max_power)
    if t_ceiling <= t_power:
        return t_power

    def residual(tau: float) -> float:
        return upload_time_residual(tau, zeta, upload_bits, gain, channel)

    if residual(t_power) >= 0:
        return t_power
    if zeta == 0 or residual(t_ceiling) < 0:
        return t_ceiling

    lo, hi = t_power, min(2.0 * t_power, t_ceiling)
    while residual(hi) < 0:
        lo, hi = hi, min(2.0 * hi, t_ceiling)
    return bisect_root(residual, lo, hi, tol=1e-14)


def optimal_upload_times(zeta: float, config: SystemConfig) -> np.ndarray:
    plan = config.plan
    return np.array(
        [
            optimal_upload_time(zeta, float(h), config.channel, plan.upload_bits, config.max_power, plan.round_budget)
            for h in config.channel_gains
        ]
    )


def upload_energies(upload_times: np.ndarray, config: SystemConfig) -> np.ndarray:
    S = config.plan.upload_bits
    return np.array(
        [upload_energy_given_time(float(t), S, float(h), config.channel) for t, h in zip(upload_times, config.channel_gains)]
    )


# Dual function

def dual_value_tdma(
    point: TdmaDualPoint,
    config: SystemConfig,
    options: SolverOptions = DEFAULT_OPTIONS,
) -> TdmaDualEvaluation:
    """
    Evaluate the TDMA dual function and the constraint residuals at its minimizer.

    The residual vector [t_loc - c / f, T - delay] is a subgradient in the
    convention of dual_value_noma.

    Raises:
        DualInfeasibleError: If the point violates zeta * M * N >= sum(omega)
    """
    plan = config.plan
    K = config.num_devices
    M, N, T = plan.global_iters, plan.local_iters, plan.max_delay
    if point.omega.shape != (K,):
        raise InvalidInputError(f"Dual point needs {K} omega entries")
    if np.any(point.omega < 0) or point.zeta < 0:
        raise DualInfeasibleError("Dual variables must be non-negative")
    coefficient = point.zeta * M * N - float(point.omega.sum())
    if coefficient < -1e-12 * max(point.zeta * M * N, float(point.omega.sum())):
        raise DualInfeasibleError(
            f"zeta * M * N - sum(omega) = {coefficient:.3e} < 0: dual function is unbounded"
        )
    coefficient = max(coefficient, 0.0)

    cpu_freqs = optimal_cpu_frequencies(point.omega, config, options)
    local_times = config.cycles / cpu_freqs
    at_boundary = coefficient <= 1e-12 * max(point.zeta * M * N, 1e-300)
    t_loc = float(np.max(local_times)) if at_boundary else 0.0
    comp_value = float(
        np.sum(M * N * config.cycles * config.capacitance * cpu_freqs**2 + config.cycles * point.omega / cpu_freqs)
    )

    upload_times = optimal_upload_times(point.zeta, config)
    energies = upload_energies(upload_times, config)
    value = (
        comp_value
        + coefficient * t_loc
        + M * float(np.sum(energies + point.zeta * upload_times))
        - point.zeta * T
    )
    subgradient = np.append(t_loc - local_times, T - M * (N * t_loc + float(upload_times.sum())))
    return TdmaDualEvaluation(
        value=value,
        subgradient=subgradient,
        cpu_freqs=cpu_freqs,
        t_loc=t_loc,
        upload_times=upload_times,
        energies=energies,
    )


def dual_scales_tdma(config: SystemConfig) -> np.ndarray:
    """Magnitudes used to normalize (omega, zeta) for the ellipsoid."""
    plan = config.plan
    K = config.num_devices
    M, N, T = plan.global_iters, plan.local_iters, plan.max_delay
    t0 = plan.round_budget
    stretched = computation_energy(config.cycles / (t0 / N), config)
    slot = t0 / (2.0 * K)
    comm_rough = M * float(np.sum(upload_energies(np.full(K, slot), config)))
    zeta0 = (2.0 * stretched + min(comm_rough, 1e6 * stretched + 1.0)) / T
    omega0 = zeta0 * M * N / (2.0 * K)
    return np.append(np.full(K, omega0), zeta0)


# Primal assembly

def tdma_solution_from_allocation(
    config: SystemConfig,
    cpu_freqs: np.ndarray,
    upload_times: np.ndarray,
    t_loc: float,
    **extra,
) -> TdmaSolution:
    """Assemble a TdmaSolution with powers on the rate-tight curve of each slot."""
    plan = config.plan
    M, N = plan.global_iters, plan.local_iters
    cpu_freqs = np.asarray(cpu_freqs, dtype=float)
    upload_times = np.asarray(upload_times, dtype=float)
    energies = upload_energies(upload_times, config)
    powers = np.minimum(energies / upload_times, config.max_power)
    rates = config.channel.bandwidth * np.log2(1.0 + powers * config.channel_gains / config.channel.noise_power)
    energy_comp = computation_energy(cpu_freqs, config)
    energy_comm = M * float(np.sum(powers * upload_times))
    values = dict(dual_value=math.nan, duality_gap_rel=math.nan, status="optimal")
    values.update(extra)
    return TdmaSolution(
        cpu_freqs=cpu_freqs,
        powers=powers,
        rates=rates,
        energies=powers * upload_times,
        upload_times=upload_times,
        t_loc=float(t_loc),
        energy_total=energy_comp + energy_comm,
        energy_comm=energy_comm,
        energy_comp=energy_comp,
        delay=M * (N * t_loc + float(upload_times.sum())),
        **values,
    )


def is_tdma_feasible(solution: TdmaSolution, config: SystemConfig, options: SolverOptions = DEFAULT_OPTIONS) -> bool:
    plan = config.plan
    if not (np.all(np.isfinite(solution.powers)) and np.all(solution.upload_times > 0)):
        return False
    floor = frequency_floor(config, options)
    return bool(
        np.all(solution.bits >= plan.upload_bits * (1 - 1e-6))
        and solution.delay <= plan.max_delay * (1 + 1e-9)
        and np.all(solution.powers >= 0)
        and np.all(solution.powers <= config.max_power * (1 + 1e-12))
        and np.all(solution.cpu_freqs >= floor * (1 - 1e-12))
        and np.all(solution.cpu_freqs <= config.max_freqs * (1 + 1e-12))
        and solution.t_loc >= float(np.max(config.cycles / solution.cpu_freqs)) * (1 - 1e-12)
    )


def _solve_price(
    total_time: Callable[[float], float],
    target: float,
    zeta_guess: float,
) -> float:
    """
    Price zeta at which a non-increasing time function meets ``target``.

    Brackets on log zeta by factors of ten around the guess, then bisects.

    Raises:
        BracketError: If no price in [1e-300, 1e300] meets the target
    """

    def gap(log_zeta: float) -> float:
        return total_time(math.exp(log_zeta)) - target

    lo = hi = math.log(max(zeta_guess, 1e-300))
    step = math.log(10.0)
    while gap(lo) < 0:
        lo -= step
        if lo < math.log(1e-300):
            raise BracketError(f"Time {total_time(1e-300):.6g} s stays below {target:.6g} s at every price")
    while gap(hi) > 0:
        hi += step
        if hi > math.log(1e300):
            raise BracketError(f"Time {total_time(1e300):.6g} s stays above {target:.6g} s at every price")
    if lo == hi:
        return math.exp(lo)
    return math.exp(bisect_root(gap, lo, hi, tol=1e-13))


def _local_time_at_price(zeta: float, config: SystemConfig) -> float:
    """Delay-priced local time, cbrt(2 sum(s c^3) / zeta) within [straggler, T/(M N)]."""
    plan = config.plan
    weight = 2.0 * float(np.sum(config.capacitance * config.cycles**3))
    upper = plan.round_budget / plan.local_iters
    return float(np.clip(np.cbrt(weight / zeta), straggler_time(config), upper))


def polish_tdma(config: SystemConfig, options: SolverOptions = DEFAULT_OPTIONS) -> TdmaSolution:
    """
    Reduced-primal optimum by one price bisection on the delay constraint.

    For a price zeta the local time and every slot length have closed forms
    and the round delay is non-increasing in zeta; the price that makes the
    deadline tight gives the optimum. The local time is then recomputed from
    the slots so the delay is exactly T.
    """
    plan = config.plan
    M, N = plan.global_iters, plan.local_iters
    scales = dual_scales_tdma(config)

    def delay(zeta: float) -> float:
        return M * (N * _local_time_at_price(zeta, config) + float(optimal_upload_times(zeta, config).sum()))

    zeta = _solve_price(delay, plan.max_delay, float(scales[-1]))
    upload_times = optimal_upload_times(zeta, config)
    t_loc = max((plan.round_budget - float(upload_times.sum())) / N, straggler_time(config))
    cpu_freqs = frequencies_for_time(t_loc, config, options)
    return tdma_solution_from_allocation(
        config, cpu_freqs, upload_times, t_loc, primal_source="polish", details={"zeta": zeta}
    )


def slots_for_budget(
    budget: float,
    config: SystemConfig,
    zeta_guess: float,
    bounds: Optional[Tuple[float, float]] = None,
) -> Optional[Tuple[float, np.ndarray]]:
    """
    Price and slot lengths whose total meets a per-round upload budget.

    ``bounds`` restricts the price search to an interval; None is returned
    when the budget is not reachable there.
    """

    def total(zeta: float) -> float:
        return float(optimal_upload_times(zeta, config).sum())

    if bounds is None:
        try:
            zeta = _solve_price(total, budget, zeta_guess)
        except BracketError as e:
            logger.debug(f"Upload budget {budget:.6g} s unreachable: {e}")
            return None
    else:
        lo, hi = bounds
        if total(lo) < budget:
            zeta = lo
        elif total(hi) > budget * (1 + 1e-12):
            return None
        else:
            zeta = math.exp(bisect_root(lambda s: total(math.exp(s)) - budget, math.log(lo), math.log(hi), tol=1e-13))
    return zeta, optimal_upload_times(zeta, config)


def recover_from_duals_tdma(
    point: TdmaDualPoint,
    config: SystemConfig,
    options: SolverOptions = DEFAULT_OPTIONS,
) -> Optional[TdmaSolution]:
    """
    Primal allocation from a dual point, with a repair sweep on zeta.

    Slots follow the price zeta; when their total misses the budget left by
    the local time, zeta is re-solved over [zeta / 10, 10 zeta + 1].
    """
    plan = config.plan
    N = plan.local_iters
    cpu_freqs = optimal_cpu_frequencies(point.omega, config, options)
    t_loc = float(np.max(config.cycles / cpu_freqs))
    budget = plan.round_budget - N * t_loc
    if budget <= 0:
        return None
    upload_times = optimal_upload_times(point.zeta, config)
    if abs(float(upload_times.sum()) - budget) > 1e-9 * budget:
        repaired = slots_for_budget(budget, config, point.zeta, bounds=(point.zeta / 10.0, 10.0 * point.zeta + 1.0))
        if repaired is None:
            return None
        upload_times = repaired[1]
    solution = tdma_solution_from_allocation(config, cpu_freqs, upload_times, t_loc, primal_source="dual")
    return solution if is_tdma_feasible(solution, config, options) else None


def kkt_duals_tdma(solution: TdmaSolution, config: SystemConfig) -> TdmaDualPoint:
    """
    Multipliers satisfying the KKT conditions at a polished TDMA allocation.

    omega_k = 2 M N s_k f_k^3; zeta is the slot price, raised to sum(omega)/(M N)
    when needed, with any excess assigned to devices at f_max.
    """
    M, N = config.plan.global_iters, config.plan.local_iters
    omega = 2.0 * M * N * config.capacitance * solution.cpu_freqs**3
    zeta = max(solution.details.get("zeta", 0.0), float(omega.sum()) / (M * N))
    capped = solution.cpu_freqs >= config.max_freqs * (1 - 1e-9)
    deficit = zeta * M * N - float(omega.sum())
    if deficit > 0 and np.any(capped):
        omega = omega + np.where(capped, deficit / int(capped.sum()), 0.0)
    return TdmaDualPoint(omega=omega, zeta=zeta)


def _saturated_solution(config: SystemConfig) -> TdmaSolution:
    plan = config.plan
    slots = np.array(
        [p_max_upload_time(plan.upload_bits, float(h), config.channel, config.max_power) for h in config.channel_gains]
    )
    solution = tdma_solution_from_allocation(
        config, config.max_freqs.copy(), slots, straggler_time(config), primal_source="saturated"
    )
    return attach_certificate(solution, solution.energy_total, None, "optimal", 0)


def solve_p2(config: SystemConfig, options: SolverOptions = DEFAULT_OPTIONS) -> TdmaSolution:
    """
    Energy-minimal TDMA allocation meeting the training deadline.

    Statuses follow solve_p1: ``infeasible`` below the minimum delay,
    ``optimal`` within ``options.gap_tol`` relative gap, else
    ``tolerance-not-met``.
    """
    K = config.num_devices
    plan = config.plan
    M, N = plan.global_iters, plan.local_iters
    t_min = t_min_tdma(config)
    if t_min > plan.max_delay * (1 + 1e-12):
        logger.info(f"TDMA infeasible for {config.name}: t_min {t_min:.6g} s > T {plan.max_delay:.6g} s")
        return TdmaSolution.infeasible(config)
    if t_min >= plan.max_delay * (1 - 1e-9):
        logger.info(f"TDMA deadline of {config.name} equals the minimum delay; returning the saturated point")
        return _saturated_solution(config)

    logger.info(f"Solving TDMA allocation for {config.name} (K={K}, M={M}, N={N}, T={plan.max_delay:g})")
    scales = dual_scales_tdma(config)
    dimension = K + 1

    def oracle(theta: np.ndarray) -> CutOracleResult:
        negative = np.flatnonzero(theta < 0)
        if negative.size:
            g = np.zeros(dimension)
            g[negative[0]] = -1.0
            return CutOracleResult("feasibility", g)
        point = TdmaDualPoint.from_vector(theta * scales)
        if float(point.omega.sum()) - point.zeta * M * N > 0:
            return CutOracleResult("feasibility", np.append(scales[:K], -M * N * scales[-1]))
        evaluation = dual_value_tdma(point, config, options)
        return CutOracleResult("objective", -evaluation.subgradient * scales, evaluation.value)

    result = dual_ascent(oracle, dimension, options)
    ellipsoid_duals = TdmaDualPoint.from_vector(np.maximum(result.point, 0.0) * scales)

    polished = polish_tdma(config, options)
    candidates = [polished]
    recovered = recover_from_duals_tdma(ellipsoid_duals, config, options)
    if recovered is not None:
        candidates.append(recovered)
    else:
        logger.debug("TDMA dual recovery did not give a feasible allocation; using the polished primal")
    feasible = [c for c in candidates if is_tdma_feasible(c, config, options)]
    if not feasible:
        logger.warning(f"No feasible TDMA allocation recovered for {config.name}")
        return attach_certificate(polished, result.value, ellipsoid_duals, "tolerance-not-met", result.iterations)
    best = min(feasible, key=lambda c: c.energy_total)

    duals, dual_value = ellipsoid_duals, result.value
    try:
        kkt = kkt_duals_tdma(polished, config)
        kkt_value = dual_value_tdma(kkt, config, options).value
        if kkt_value >= dual_value - 1e-6 * max(1.0, best.energy_total):
            duals, dual_value = kkt, kkt_value
    except DualInfeasibleError as e:
        logger.debug(f"KKT multipliers rejected: {e}")

    gap = (best.energy_total - dual_value) / max(1.0, best.energy_total)
    status: SolveStatus = "optimal" if gap <= options.gap_tol else "tolerance-not-met"
    if status != "optimal":
        logger.warning(f"TDMA duality gap {gap:.3e} above {options.gap_tol:g} for {config.name}")
    logger.info(
        f"TDMA solved for {config.name}: energy {best.energy_total:.6e} J, gap {gap:.2e}, "
        f"{result.iterations} ellipsoid cuts, source {best.primal_source}"
    )
    return attach_certificate(best, dual_value, duals, status, result.iterations)
