"""
Energy-minimal joint allocation under NOMA uplink

Pipeline:
    1. Feasibility against the minimum training delay
    2. Dual decomposition of the convexified problem over (lambda, mu, nu):
       per-device CPU frequency subproblems in closed form plus one joint
       energy/time subproblem over the capacity region
    3. Ellipsoid ascent on the dual function with feasibility cuts for the
       dual domain (nu * M * N >= sum(mu))
    4. Primal recovery from the dual optimum with SIC time-sharing
    5. Polish on the reduced primal (delay-tight, minimum-power common rate)
       and a KKT certificate rebuilt from the polished point
"""
import itertools
import math
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Dict, List, Literal, Optional, Sequence, Tuple, TypeVar

import numpy as np
from loguru import logger

from .errors import DualInfeasibleError, InvalidInputError, NumericalDomainError
from .noma_region import (
    DecodingOrder,
    Schedule,
    MAX_SCHEDULE_DEVICES,
    bit_region_contains,
    BitAllocation,
    max_common_rate,
    min_energy_powers,
    scheduled_rates,
    time_sharing,
    weighted_corner_bits,
    weighted_order,
)
from .numerics import CutOracleResult, EllipsoidResult, ellipsoid_max, golden_section_min, minimize_convex_box
from .scenario import DeviceProfile, SystemConfig, straggler_time

SolveStatus = Literal["optimal", "infeasible", "tolerance-not-met"]
SolutionT = TypeVar("SolutionT")

_LN2 = math.log(2.0)


@dataclass(frozen=True)
class SolverOptions:
    """Tolerances and caps shared by the NOMA and TDMA solvers."""

    tol: float = 1e-5
    max_iter_factor: int = 50
    radius_factor: float = 1e3
    gap_tol: float = 1e-3
    tie_tol: float = 1e-7
    inner_tol: float = 1e-10
    f_floor_ratio: float = 1e-6
    t_floor: float = 1e-12
    polish_tol: float = 1e-12

    def max_iter(self, dimension: int) -> int:
        return self.max_iter_factor * dimension * dimension


DEFAULT_OPTIONS = SolverOptions()


@dataclass(frozen=True)
class NomaDualPoint:
    """Multipliers for the bit (lam), local-time (mu) and delay (nu) constraints."""

    lam: np.ndarray
    mu: np.ndarray
    nu: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "lam", np.asarray(self.lam, dtype=float))
        object.__setattr__(self, "mu", np.asarray(self.mu, dtype=float))
        object.__setattr__(self, "nu", float(self.nu))

    def as_vector(self) -> np.ndarray:
        return np.concatenate((self.lam, self.mu, [self.nu]))

    @classmethod
    def from_vector(cls, vector: np.ndarray, size: int) -> "NomaDualPoint":
        vector = np.asarray(vector, dtype=float)
        return cls(lam=vector[:size], mu=vector[size : 2 * size], nu=float(vector[2 * size]))


@dataclass(frozen=True)
class NomaDualEvaluation:
    """Dual function value, its subgradient and the Lagrangian minimizers."""

    value: float
    subgradient: np.ndarray
    cpu_freqs: np.ndarray
    t_loc: float
    powers: np.ndarray
    energies: np.ndarray
    t_up: float
    bits: np.ndarray
    order: DecodingOrder


@dataclass(frozen=True)
class NomaSolution:
    """
    Primal allocation under NOMA with its energy breakdown and dual certificate.

    ``decoding`` is the SIC time-sharing schedule; its fractions sum to one and
    the average corner rates equal ``rates``.
    """

    cpu_freqs: np.ndarray
    powers: np.ndarray
    rates: np.ndarray
    bits: np.ndarray
    energies: np.ndarray
    t_loc: float
    t_up: float
    decoding: Schedule
    energy_total: float
    energy_comm: float
    energy_comp: float
    delay: float
    dual_value: float
    duality_gap_rel: float
    status: SolveStatus
    scheme: str = "joint"
    duals: Optional[NomaDualPoint] = None
    iterations: int = 0
    primal_source: str = ""
    details: Dict[str, float] = field(default_factory=dict)

    @property
    def protocol(self) -> str:
        return "noma"

    @property
    def upload_time(self) -> float:
        return self.t_up

    @classmethod
    def infeasible(cls, config: SystemConfig, scheme: str = "joint") -> "NomaSolution":
        nan = np.full(config.num_devices, np.nan)
        return cls(
            cpu_freqs=nan, powers=nan, rates=nan, bits=nan, energies=nan,
            t_loc=math.nan, t_up=math.nan, decoding=[],
            energy_total=math.nan, energy_comm=math.nan, energy_comp=math.nan, delay=math.nan,
            dual_value=math.nan, duality_gap_rel=math.nan, status="infeasible", scheme=scheme,
        )


# Closed forms shared with the TDMA solver

def frequency_floor(config: SystemConfig, options: SolverOptions = DEFAULT_OPTIONS) -> np.ndarray:
    """Smallest CPU frequency the solvers assign, a fixed fraction of f_max."""
    return options.f_floor_ratio * config.max_freqs


def optimal_cpu_frequency(
    dual_weight: float,
    device: DeviceProfile,
    M: int,
    N: int,
    f_floor: Optional[float] = None,
) -> float:
    """
    Minimizer of M N c s f^2 + c w / f over (0, f_max] for cycle count c.

    Returns cbrt(w / (2 M N s)) clamped to [f_floor, f_max]; the floor
    defaults to 1e-6 f_max.
    """
    if not dual_weight >= 0:
        raise InvalidInputError(f"Dual weight must be non-negative, got {dual_weight}")
    if f_floor is None:
        f_floor = DEFAULT_OPTIONS.f_floor_ratio * device.max_cpu_freq
    unclamped = np.cbrt(dual_weight / (2.0 * M * N * device.capacitance_coeff))
    return float(min(max(unclamped, f_floor), device.max_cpu_freq))


def optimal_cpu_frequencies(
    weights: np.ndarray,
    config: SystemConfig,
    options: SolverOptions = DEFAULT_OPTIONS,
) -> np.ndarray:
    """Vector form of optimal_cpu_frequency over all devices."""
    M, N = config.plan.global_iters, config.plan.local_iters
    unclamped = np.cbrt(np.asarray(weights, dtype=float) / (2.0 * M * N * config.capacitance))
    return np.clip(unclamped, frequency_floor(config, options), config.max_freqs)


def computation_energy(cpu_freqs: np.ndarray, config: SystemConfig) -> float:
    """Energy of all M N local updates on every device."""
    M, N = config.plan.global_iters, config.plan.local_iters
    return float(M * N * np.sum(config.cycles * config.capacitance * np.asarray(cpu_freqs) ** 2))


def frequencies_for_time(t_loc: float, config: SystemConfig, options: SolverOptions = DEFAULT_OPTIONS) -> np.ndarray:
    """Smallest frequencies finishing one local update within ``t_loc``."""
    return np.clip(config.cycles / t_loc, frequency_floor(config, options), config.max_freqs)


# Feasibility

def t_min_noma(config: SystemConfig) -> float:
    """Minimum training delay under NOMA: full speed and max-min common rate at P_max."""
    plan = config.plan
    return plan.global_iters * (
        plan.local_iters * straggler_time(config) + plan.upload_bits / max_common_rate(config)
    )


# Joint energy/time subproblem

def _tie_weights(lam: np.ndarray, order: DecodingOrder) -> np.ndarray:
    ordered = lam[list(order)]
    return ordered - np.append(ordered[1:], 0.0)


def _maximize_rate_utility(
    lam: np.ndarray,
    config: SystemConfig,
    options: SolverOptions = DEFAULT_OPTIONS,
    warm_start: Optional[np.ndarray] = None,
) -> Tuple[np.ndarray, float, DecodingOrder]:
    """
    Powers maximizing sum_j w_j B log2(1 + Q_j / noise) - M sum(p) over [0, P_max]^K.

    Q_j are prefix sums of received power along the weight order and
    w_j = lam_{pi(j)} - lam_{pi(j+1)}. This is the joint subproblem per unit
    of upload time; it does not depend on t_up.
    """
    K = config.num_devices
    M = config.plan.global_iters
    gains = config.channel_gains
    noise = config.channel.noise_power
    bandwidth = config.channel.bandwidth
    p_max = config.max_power
    order = weighted_order(lam)
    if not np.any(lam > 0):
        return np.zeros(K), 0.0, order

    idx = list(order)
    w = _tie_weights(lam, order)
    h_sorted = gains[idx]
    scale = M * p_max

    def utility(p_sorted: np.ndarray) -> Tuple[float, np.ndarray]:
        levels = noise + np.cumsum(p_sorted * h_sorted)
        value = float(w @ (bandwidth * np.log2(levels / noise))) - M * float(p_sorted.sum())
        terms = w * bandwidth / (_LN2 * levels)
        tail = np.cumsum(terms[::-1])[::-1]
        return value, h_sorted * tail - M

    def f(x: np.ndarray) -> float:
        return -utility(p_max * x)[0] / scale

    def grad(x: np.ndarray) -> np.ndarray:
        return -utility(p_max * x)[1] * p_max / scale

    x0 = None
    if warm_start is not None:
        x0 = np.asarray(warm_start, dtype=float)[idx] / p_max
    x = minimize_convex_box(f, grad, np.zeros(K), np.ones(K), tol=options.inner_tol, x0=x0)
    powers = np.empty(K)
    powers[idx] = p_max * x
    value = utility(p_max * x)[0]
    return powers, value, order


def inner_energy_time(
    lam: Sequence[float],
    nu: float,
    config: SystemConfig,
    options: SolverOptions = DEFAULT_OPTIONS,
) -> Tuple[np.ndarray, float]:
    """
    Optimal energies and upload time of the joint subproblem.

    The objective is positively homogeneous in (e, t_up): with p = e / t_up
    it equals t_up * (psi(p) - nu M). The power problem is solved once over
    the box and t_up goes to the end of [t_floor, T / M] favoured by the sign
    of psi* - nu M.

    Returns:
        (energies, t_up)
    """
    lam = np.asarray(lam, dtype=float)
    if lam.shape != (config.num_devices,) or np.any(lam < 0) or nu < 0:
        raise InvalidInputError("Multipliers must be non-negative with one lambda per device")
    powers, psi, _ = _maximize_rate_utility(lam, config, options)
    t_up = _select_upload_time(psi, nu, config, options)
    return powers * t_up, t_up


def _select_upload_time(psi: float, nu: float, config: SystemConfig, options: SolverOptions) -> float:
    if psi > nu * config.plan.global_iters:
        return config.plan.round_budget
    return options.t_floor


# Dual function

def _check_dual_point(point: NomaDualPoint, config: SystemConfig) -> float:
    K = config.num_devices
    if point.lam.shape != (K,) or point.mu.shape != (K,):
        raise InvalidInputError(f"Dual point needs {K} lambda and {K} mu entries")
    if np.any(point.lam < 0) or np.any(point.mu < 0) or point.nu < 0:
        raise DualInfeasibleError("Dual variables must be non-negative")
    MN = config.plan.global_iters * config.plan.local_iters
    coefficient = point.nu * MN - float(point.mu.sum())
    if coefficient < -1e-12 * max(point.nu * MN, float(point.mu.sum())):
        raise DualInfeasibleError(
            f"nu * M * N - sum(mu) = {coefficient:.3e} < 0: dual function is unbounded"
        )
    return max(coefficient, 0.0)


def dual_value_noma(
    point: NomaDualPoint,
    config: SystemConfig,
    options: SolverOptions = DEFAULT_OPTIONS,
    warm_start: Optional[np.ndarray] = None,
) -> NomaDualEvaluation:
    """
    Evaluate the NOMA dual function and a subgradient.

    The subgradient holds the constraint residuals at the Lagrangian
    minimizer, [s - S, t_loc - c / f, T - delay]; its negative is a
    supergradient of the (concave) dual function.

    Raises:
        DualInfeasibleError: If the point violates nu * M * N >= sum(mu)
    """
    coefficient = _check_dual_point(point, config)
    plan = config.plan
    M, N, S, T = plan.global_iters, plan.local_iters, plan.upload_bits, plan.max_delay

    cpu_freqs = optimal_cpu_frequencies(point.mu, config, options)
    local_times = config.cycles / cpu_freqs
    at_boundary = coefficient <= 1e-12 * max(point.nu * M * N, 1e-300)
    t_loc = float(np.max(local_times)) if at_boundary else 0.0
    comp_value = float(
        np.sum(M * N * config.cycles * config.capacitance * cpu_freqs**2 + config.cycles * point.mu / cpu_freqs)
    )

    powers, psi, _ = _maximize_rate_utility(point.lam, config, options, warm_start)
    t_up = _select_upload_time(psi, point.nu, config, options)
    energies = powers * t_up
    alloc, order = weighted_corner_bits(point.lam, energies, t_up, config.channel_gains, config.channel)
    bits = alloc.bits

    value = (
        comp_value
        + coefficient * t_loc
        + float(point.lam @ (S - bits))
        + M * float(energies.sum())
        + point.nu * M * t_up
        - point.nu * T
    )
    subgradient = np.concatenate(
        (bits - S, t_loc - local_times, [T - M * (N * t_loc + t_up)])
    )
    return NomaDualEvaluation(
        value=value,
        subgradient=subgradient,
        cpu_freqs=cpu_freqs,
        t_loc=t_loc,
        powers=powers,
        energies=energies,
        t_up=t_up,
        bits=bits,
        order=order,
    )


def dual_scales(config: SystemConfig) -> np.ndarray:
    """
    Magnitudes used to normalize (lam, mu, nu) for the ellipsoid.

    lam ~ M noise t0 / (h_mean S), nu ~ rough energy / T with computation
    stretched over the whole budget, mu balanced so that sum(mu) = nu M N / 2.
    """
    plan = config.plan
    K = config.num_devices
    M, N, S, T = plan.global_iters, plan.local_iters, plan.upload_bits, plan.max_delay
    t0 = plan.round_budget
    noise = config.channel.noise_power
    h_mean = float(np.mean(config.channel_gains))

    lam0 = M * noise * t0 / (h_mean * S)
    stretched = computation_energy(config.cycles / (t0 / N), config)
    exponent = min(S / (config.channel.bandwidth * t0), 60.0)
    comm_rough = M * K * noise / h_mean * math.expm1(exponent * _LN2) * t0
    nu0 = (2.0 * stretched + comm_rough) / T
    mu0 = nu0 * M * N / (2.0 * K)
    return np.concatenate((np.full(K, lam0), np.full(K, mu0), [nu0]))


# Primal assembly

def noma_solution_from_allocation(
    config: SystemConfig,
    cpu_freqs: np.ndarray,
    powers: np.ndarray,
    t_loc: float,
    t_up: float,
    decoding: Schedule,
    **extra,
) -> NomaSolution:
    """Assemble a NomaSolution (rates, bits, energy breakdown) from primal variables."""
    plan = config.plan
    M, N = plan.global_iters, plan.local_iters
    cpu_freqs = np.asarray(cpu_freqs, dtype=float)
    powers = np.asarray(powers, dtype=float)
    rates = scheduled_rates(powers, config.channel_gains, config.channel, decoding)
    energies = powers * t_up
    energy_comp = computation_energy(cpu_freqs, config)
    energy_comm = M * float(energies.sum())
    values = dict(
        dual_value=math.nan,
        duality_gap_rel=math.nan,
        status="optimal",
    )
    values.update(extra)
    return NomaSolution(
        cpu_freqs=cpu_freqs,
        powers=powers,
        rates=rates,
        bits=rates * t_up,
        energies=energies,
        t_loc=float(t_loc),
        t_up=float(t_up),
        decoding=list(decoding),
        energy_total=energy_comp + energy_comm,
        energy_comm=energy_comm,
        energy_comp=energy_comp,
        delay=M * (N * t_loc + t_up),
        **values,
    )


def is_noma_feasible(solution: NomaSolution, config: SystemConfig, options: SolverOptions = DEFAULT_OPTIONS) -> bool:
    """Primal feasibility of a NOMA allocation within the solver tolerances."""
    plan = config.plan
    if not (np.all(np.isfinite(solution.powers)) and math.isfinite(solution.t_up) and solution.t_up > 0):
        return False
    floor = frequency_floor(config, options)
    checks = (
        np.all(solution.bits >= plan.upload_bits * (1 - 1e-6)),
        solution.delay <= plan.max_delay * (1 + 1e-9),
        np.all(solution.powers >= 0),
        np.all(solution.powers <= config.max_power * (1 + 1e-12)),
        np.all(solution.cpu_freqs >= floor * (1 - 1e-12)),
        np.all(solution.cpu_freqs <= config.max_freqs * (1 + 1e-12)),
        solution.t_loc >= float(np.max(config.cycles / solution.cpu_freqs)) * (1 - 1e-12),
    )
    if not all(checks):
        return False
    alloc = BitAllocation(bits=np.maximum(solution.bits, 0.0), energies=solution.energies, t_up=solution.t_up)
    return bit_region_contains(alloc, config.channel_gains, config.channel)


def _tie_group_orders(lam: np.ndarray, order: DecodingOrder, tie_tol: float, limit: int = 5040) -> List[DecodingOrder]:
    """Orders obtained by permuting devices whose multipliers tie, base order first."""
    threshold = tie_tol * float(np.max(lam)) if lam.size else 0.0
    groups: List[List[int]] = [[order[0]]]
    for k in order[1:]:
        if abs(lam[groups[-1][-1]] - lam[k]) <= threshold:
            groups[-1].append(k)
        else:
            groups.append([k])
    count = math.prod(math.factorial(len(group)) for group in groups)
    if count > limit:
        return [order]
    orders = [
        tuple(itertools.chain.from_iterable(choice))
        for choice in itertools.product(*(itertools.permutations(group) for group in groups))
    ]
    orders.remove(order)
    return [order] + orders


def recover_from_duals(
    point: NomaDualPoint,
    config: SystemConfig,
    options: SolverOptions = DEFAULT_OPTIONS,
) -> Optional[NomaSolution]:
    """
    Primal allocation suggested by a (near) optimal dual point.

    Frequencies follow the mu-subproblem, the upload window takes the rest
    of the per-round budget, powers come from the joint subproblem and the
    decoding time-shares across tied lambda orders. Returns None when this
    does not give a feasible allocation.
    """
    plan = config.plan
    N, S = plan.local_iters, plan.upload_bits
    cpu_freqs = optimal_cpu_frequencies(point.mu, config, options)
    t_loc = float(np.max(config.cycles / cpu_freqs))
    t_up = plan.round_budget - N * t_loc
    if t_up <= 0:
        return None

    powers, _, order = _maximize_rate_utility(point.lam, config, options)
    orders = _tie_group_orders(point.lam, order, options.tie_tol)
    target = np.full(config.num_devices, S / t_up)
    schedule = time_sharing(powers, config.channel_gains, config.channel, target, orders=orders)
    if schedule is None:
        return None
    solution = noma_solution_from_allocation(config, cpu_freqs, powers, t_loc, t_up, schedule, primal_source="dual")
    return solution if is_noma_feasible(solution, config, options) else None


def _upload_window(config: SystemConfig) -> Tuple[float, float]:
    plan = config.plan
    lo = plan.upload_bits / max_common_rate(config)
    hi = plan.round_budget - plan.local_iters * straggler_time(config)
    return lo, hi


def reduced_energy(t_up: float, config: SystemConfig, options: SolverOptions = DEFAULT_OPTIONS) -> float:
    """
    Least total energy for a given upload window t_up.

    Computation fills the rest of the round at the smallest frequencies and
    powers are the minimum-power allocation for the common rate S / t_up.
    """
    plan = config.plan
    t_loc = (plan.round_budget - t_up) / plan.local_iters
    cpu_freqs = frequencies_for_time(t_loc, config, options)
    rate = min(plan.upload_bits / t_up, max_common_rate(config))
    powers = min_energy_powers(rate, config.channel_gains, config.channel, config.max_power)
    return computation_energy(cpu_freqs, config) + plan.global_iters * t_up * float(powers.sum())


def _weakest_first(config: SystemConfig) -> DecodingOrder:
    gains = config.channel_gains
    return tuple(int(k) for k in np.lexsort((np.arange(gains.size), gains)))


def allocation_at_upload_time(
    t_up: float,
    config: SystemConfig,
    options: SolverOptions = DEFAULT_OPTIONS,
    **extra,
) -> NomaSolution:
    """Reduced-primal allocation at a fixed upload window, with its SIC schedule."""
    plan = config.plan
    t_loc = (plan.round_budget - t_up) / plan.local_iters
    cpu_freqs = frequencies_for_time(t_loc, config, options)
    rate = min(plan.upload_bits / t_up, max_common_rate(config))
    powers = min_energy_powers(rate, config.channel_gains, config.channel, config.max_power)
    return scheduled_solution(config, cpu_freqs, powers, t_loc, t_up, rate, **extra)


def scheduled_solution(
    config: SystemConfig,
    cpu_freqs: np.ndarray,
    powers: np.ndarray,
    t_loc: float,
    t_up: float,
    rate: float,
    **extra,
) -> NomaSolution:
    """Allocation at a common rate, decoded by time-sharing over SIC orders (weakest-first tried first)."""
    base = _weakest_first(config)
    target = np.full(config.num_devices, rate)
    orders = [base]
    if config.num_devices <= MAX_SCHEDULE_DEVICES:
        orders += [order for order in itertools.permutations(range(config.num_devices)) if order != base]
    schedule = time_sharing(powers, config.channel_gains, config.channel, target, orders=orders)
    if schedule is None:
        logger.warning("No SIC time-sharing reaches the common rate; falling back to the weakest-first corner")
        schedule = [(base, 1.0)]
    return noma_solution_from_allocation(config, cpu_freqs, powers, t_loc, t_up, schedule, **extra)


def polish_noma(config: SystemConfig, options: SolverOptions = DEFAULT_OPTIONS) -> NomaSolution:
    """Minimize the reduced energy over the upload window by golden section."""
    lo, hi = _upload_window(config)
    hi = max(hi, lo)
    t_up = golden_section_min(lambda t: reduced_energy(t, config, options), lo, hi, tol=options.polish_tol)
    return allocation_at_upload_time(t_up, config, options, primal_source="polish")


def kkt_duals_noma(
    solution: NomaSolution,
    config: SystemConfig,
    options: SolverOptions = DEFAULT_OPTIONS,
) -> NomaDualPoint:
    """
    Multipliers satisfying the KKT conditions at a reduced-primal allocation.

    mu_k = 2 M N s_k f_k^3 from frequency stationarity. lam comes from power
    stationarity along the weakest-first order: with D_j the marginal-rate
    weights, D_j = max(M ln2 / (B h_j), D_{j+1}) and
    lam_j - lam_{j+1} = (D_j - D_{j+1}) (noise + Q_j). nu is the larger of
    sum(mu) / (M N) and psi* / M so the point stays dual feasible.
    """
    plan = config.plan
    M, N = plan.global_iters, plan.local_iters
    gains = config.channel_gains
    noise = config.channel.noise_power
    bandwidth = config.channel.bandwidth

    mu = 2.0 * M * N * config.capacitance * solution.cpu_freqs**3

    order = list(_weakest_first(config))
    levels = noise + np.cumsum((solution.powers * gains)[order])
    marginal = M * _LN2 / (bandwidth * gains[order])
    weights_d = np.maximum.accumulate(marginal[::-1])[::-1]
    increments = (weights_d - np.append(weights_d[1:], 0.0)) * levels
    lam = np.empty(config.num_devices)
    lam[order] = np.cumsum(increments[::-1])[::-1]

    _, psi, _ = _maximize_rate_utility(lam, config, options, warm_start=solution.powers)
    nu = max(float(mu.sum()) / (M * N), psi / M)
    capped = solution.cpu_freqs >= config.max_freqs * (1 - 1e-9)
    deficit = nu * M * N - float(mu.sum())
    if deficit > 0 and np.any(capped):
        mu = mu + np.where(capped, deficit / int(capped.sum()), 0.0)
    return NomaDualPoint(lam=lam, mu=mu, nu=nu)


def _saturated_solution(config: SystemConfig, options: SolverOptions) -> NomaSolution:
    """The single operating point when T equals the minimum delay."""
    lo, _ = _upload_window(config)
    rate = max_common_rate(config)
    powers = np.full(config.num_devices, config.max_power)
    cpu_freqs = config.max_freqs.copy()
    t_loc = straggler_time(config)
    solution = scheduled_solution(config, cpu_freqs, powers, t_loc, lo, rate, primal_source="saturated")
    return attach_certificate(solution, solution.energy_total, None, "optimal", 0)


def attach_certificate(
    solution: SolutionT,
    dual_value: float,
    duals: Optional[Any],
    status: SolveStatus,
    iterations: int,
) -> SolutionT:
    """Copy of a NOMA or TDMA solution carrying its dual bound, gap and status."""
    gap = (solution.energy_total - dual_value) / max(1.0, solution.energy_total)
    return replace(
        solution,
        dual_value=dual_value,
        duality_gap_rel=gap,
        status=status,
        duals=duals,
        iterations=iterations,
    )


def dual_ascent(
    oracle: Callable[[np.ndarray], CutOracleResult],
    dimension: int,
    options: SolverOptions,
) -> EllipsoidResult:
    """
    Ellipsoid ascent on the scaled dual from the all-ones center.

    A search that never evaluates the dual function comes back with value
    -inf and zero cuts; the caller then relies on the primal polish and the
    KKT certificate alone.
    """
    center = np.ones(dimension)
    try:
        return ellipsoid_max(
            oracle,
            center,
            radius0=options.radius_factor * float(np.linalg.norm(center)),
            tol=options.tol,
            max_iter=options.max_iter(dimension),
        )
    except NumericalDomainError as e:
        logger.warning(f"Dual ascent abandoned: {e}")
        return EllipsoidResult(center, -math.inf, "tolerance-not-met", 0, math.inf)


def solve_p1(config: SystemConfig, options: SolverOptions = DEFAULT_OPTIONS) -> NomaSolution:
    """
    Energy-minimal NOMA allocation meeting the training deadline.

    Returns a NomaSolution with status ``infeasible`` when the deadline is
    below the minimum training delay, ``optimal`` when the relative duality
    gap is within ``options.gap_tol`` and ``tolerance-not-met`` otherwise.
    """
    K = config.num_devices
    plan = config.plan
    M, N = plan.global_iters, plan.local_iters
    t_min = t_min_noma(config)
    if t_min > plan.max_delay * (1 + 1e-12):
        logger.info(f"NOMA infeasible for {config.name}: t_min {t_min:.6g} s > T {plan.max_delay:.6g} s")
        return NomaSolution.infeasible(config)
    if t_min >= plan.max_delay * (1 - 1e-9):
        logger.info(f"NOMA deadline of {config.name} equals the minimum delay; returning the saturated point")
        return _saturated_solution(config, options)

    logger.info(f"Solving NOMA allocation for {config.name} (K={K}, M={M}, N={N}, T={plan.max_delay:g})")
    scales = dual_scales(config)
    dimension = 2 * K + 1
    warm: Dict[str, np.ndarray] = {}

    def oracle(theta: np.ndarray) -> CutOracleResult:
        negative = np.flatnonzero(theta < 0)
        if negative.size:
            g = np.zeros(dimension)
            g[negative[0]] = -1.0
            return CutOracleResult("feasibility", g)
        point = NomaDualPoint.from_vector(theta * scales, K)
        if point.nu * M * N - float(point.mu.sum()) < 0:
            g = np.concatenate((np.zeros(K), scales[K : 2 * K], [-M * N * scales[-1]]))
            return CutOracleResult("feasibility", g)
        evaluation = dual_value_noma(point, config, options, warm_start=warm.get("powers"))
        warm["powers"] = evaluation.powers
        return CutOracleResult("objective", -evaluation.subgradient * scales, evaluation.value)

    result = dual_ascent(oracle, dimension, options)
    ellipsoid_duals = NomaDualPoint.from_vector(np.maximum(result.point, 0.0) * scales, K)

    polished = polish_noma(config, options)
    candidates = [polished]
    recovered = recover_from_duals(ellipsoid_duals, config, options)
    if recovered is not None:
        candidates.append(recovered)
    else:
        logger.debug("Dual recovery did not give a feasible allocation; using the polished primal")
    feasible = [c for c in candidates if is_noma_feasible(c, config, options)]
    if not feasible:
        logger.warning(f"No feasible NOMA allocation recovered for {config.name}")
        best = candidates[0]
        return attach_certificate(best, result.value, ellipsoid_duals, "tolerance-not-met", result.iterations)
    best = min(feasible, key=lambda c: c.energy_total)

    duals, dual_value = ellipsoid_duals, result.value
    try:
        kkt = kkt_duals_noma(polished, config, options)
        kkt_value = dual_value_noma(kkt, config, options, warm_start=best.powers).value
        if kkt_value >= dual_value - 1e-6 * max(1.0, best.energy_total):
            duals, dual_value = kkt, kkt_value
    except DualInfeasibleError as e:
        logger.debug(f"KKT multipliers rejected: {e}")

    gap = (best.energy_total - dual_value) / max(1.0, best.energy_total)
    status: SolveStatus = "optimal" if gap <= options.gap_tol else "tolerance-not-met"
    if status != "optimal":
        logger.warning(f"NOMA duality gap {gap:.3e} above {options.gap_tol:g} for {config.name}")
    logger.info(
        f"NOMA solved for {config.name}: energy {best.energy_total:.6e} J, gap {gap:.2e}, "
        f"{result.iterations} ellipsoid cuts, source {best.primal_source}"
    )
    return attach_certificate(best, dual_value, duals, status, result.iterations)
