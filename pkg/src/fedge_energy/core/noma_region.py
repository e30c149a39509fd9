"""
Gaussian multiple-access capacity region

Corner rates under successive interference cancellation (SIC), membership
tests for the rate region and its bit/energy perspective form, the greedy
weighted-sum corner, the max-min common rate, minimum-power common-rate
allocations and time-sharing schedules over decoding orders.

A decoding order ``pi`` lists device indices (0-based); ``pi[-1]`` is
decoded first and ``pi[0]`` last, so ``pi[0]`` sees no interference.
"""
import itertools
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import List, Optional, Sequence, Tuple

import numpy as np
from loguru import logger
from scipy.optimize import linprog

from .errors import InvalidInputError, SizeError
from .scenario import ChannelModel, SystemConfig

DecodingOrder = Tuple[int, ...]
Schedule = List[Tuple[DecodingOrder, float]]

MAX_EXHAUSTIVE_DEVICES = 20
MAX_SCHEDULE_DEVICES = 7
RATE_TOLERANCE = 1e-9  # times bandwidth, in bits/s

_LN2 = math.log(2.0)


@dataclass(frozen=True)
class BitAllocation:
    """Bits s_k and energies e_k delivered over an upload window of t_up seconds."""

    bits: np.ndarray
    energies: np.ndarray
    t_up: float

    def __post_init__(self) -> None:
        bits = np.asarray(self.bits, dtype=float)
        energies = np.asarray(self.energies, dtype=float)
        if bits.shape != energies.shape or bits.ndim != 1:
            raise InvalidInputError(f"Bits {bits.shape} and energies {energies.shape} must be equal-length vectors")
        if np.any(bits < 0) or np.any(energies < 0):
            raise InvalidInputError("Bits and energies must be non-negative")
        if not self.t_up > 0:
            raise InvalidInputError(f"Upload time must be positive, got {self.t_up}")
        object.__setattr__(self, "bits", bits)
        object.__setattr__(self, "energies", energies)


def _vectors(powers: Sequence[float], gains: Sequence[float]) -> Tuple[np.ndarray, np.ndarray]:
    powers = np.asarray(powers, dtype=float)
    gains = np.asarray(gains, dtype=float)
    if powers.ndim != 1 or powers.shape != gains.shape:
        raise InvalidInputError(f"Powers {powers.shape} and gains {gains.shape} must be equal-length vectors")
    if np.any(powers < 0):
        raise InvalidInputError("Powers must be non-negative")
    if np.any(gains <= 0):
        raise InvalidInputError("Gains must be positive")
    return powers, gains


def _check_order(order: Sequence[int], size: int) -> DecodingOrder:
    order = tuple(int(k) for k in order)
    if sorted(order) != list(range(size)):
        raise InvalidInputError(f"Decoding order {order} is not a permutation of {size} devices")
    return order


def sic_corner_rates(
    powers: Sequence[float],
    gains: Sequence[float],
    noise: float,
    bandwidth: float,
    order: Sequence[int],
) -> np.ndarray:
    """
    Per-device rates (bits/s) at the SIC corner of ``order``.

    r_{pi(k)} = B log2((noise + sum_{n<=k} q_{pi(n)}) / (noise + sum_{n<k} q_{pi(n)}))
    with received powers q = p h.
    """
    powers, gains = _vectors(powers, gains)
    order = _check_order(order, powers.size)
    received = (powers * gains)[list(order)]
    levels = noise + np.concatenate(([0.0], np.cumsum(received)))
    rates = np.empty_like(powers)
    rates[list(order)] = bandwidth * np.log2(levels[1:] / levels[:-1])
    return rates


def sum_capacity(powers: Sequence[float], gains: Sequence[float], channel: ChannelModel) -> float:
    """B log2(1 + sum_k p_k h_k / noise)."""
    powers, gains = _vectors(powers, gains)
    return channel.bandwidth * math.log2(1.0 + float(powers @ gains) / channel.noise_power)


@lru_cache(maxsize=32)
def subset_masks(size: int) -> np.ndarray:
    """Indicator rows of every nonempty subset of ``size`` devices, shape (2^K - 1, K)."""
    if size > MAX_EXHAUSTIVE_DEVICES:
        raise SizeError(f"Exhaustive subset checks are capped at {MAX_EXHAUSTIVE_DEVICES} devices, got {size}")
    codes = np.arange(1, 2**size, dtype=np.int64)
    masks = ((codes[:, None] >> np.arange(size)) & 1).astype(float)
    masks.setflags(write=False)
    return masks


def region_slack(
    rates: Sequence[float],
    powers: Sequence[float],
    gains: Sequence[float],
    channel: ChannelModel,
) -> np.ndarray:
    """Capacity minus rate sum for every nonempty subset (negative entries are violations)."""
    powers, gains = _vectors(powers, gains)
    rates = np.asarray(rates, dtype=float)
    if rates.shape != powers.shape:
        raise InvalidInputError(f"Rates {rates.shape} and powers {powers.shape} must have equal length")
    masks = subset_masks(powers.size)
    capacity = channel.bandwidth * np.log2(1.0 + masks @ (powers * gains) / channel.noise_power)
    return capacity - masks @ rates


def region_contains(
    rates: Sequence[float],
    powers: Sequence[float],
    gains: Sequence[float],
    channel: ChannelModel,
    tol_abs: Optional[float] = None,
) -> bool:
    """
    True iff ``rates`` lies in the capacity region at ``powers``.

    Every one of the 2^K - 1 subset constraints is checked.

    Raises:
        SizeError: If K exceeds 20
    """
    if tol_abs is None:
        tol_abs = RATE_TOLERANCE * channel.bandwidth
    rates = np.asarray(rates, dtype=float)
    if not (np.all(np.isfinite(rates)) and np.all(np.isfinite(np.asarray(powers, dtype=float)))):
        raise InvalidInputError("Rates and powers must be finite")
    return bool(np.all(region_slack(rates, powers, gains, channel) >= -tol_abs))


def bit_region_contains(alloc: BitAllocation, gains: Sequence[float], channel: ChannelModel) -> bool:
    """
    True iff the bits are deliverable with energies ``alloc.energies`` in ``alloc.t_up`` seconds.

    This is the rate region scaled by t_up, with powers e / t_up.
    """
    t_up = alloc.t_up
    return region_contains(
        alloc.bits / t_up,
        alloc.energies / t_up,
        gains,
        channel,
    )


def weighted_order(weights: Sequence[float]) -> DecodingOrder:
    """Devices sorted by weight, largest first; ties go to the lower index."""
    weights = np.asarray(weights, dtype=float)
    return tuple(int(k) for k in np.lexsort((np.arange(weights.size), -weights)))


def corner_bits(
    energies: Sequence[float],
    t_up: float,
    gains: Sequence[float],
    channel: ChannelModel,
    order: Sequence[int],
) -> np.ndarray:
    """Bits delivered in t_up seconds at the SIC corner of ``order``."""
    if not t_up > 0:
        raise InvalidInputError(f"Upload time must be positive, got {t_up}")
    powers = np.asarray(energies, dtype=float) / t_up
    return t_up * sic_corner_rates(powers, gains, channel.noise_power, channel.bandwidth, order)


def weighted_corner_bits(
    weights: Sequence[float],
    energies: Sequence[float],
    t_up: float,
    gains: Sequence[float],
    channel: ChannelModel,
) -> Tuple[BitAllocation, DecodingOrder]:
    """
    Bit vector maximizing sum_k weights_k s_k over the bit region at (energies, t_up).

    The device with the largest weight is decoded last.

    Raises:
        InvalidInputError: If a weight is negative or t_up is not positive
    """
    weights = np.asarray(weights, dtype=float)
    if np.any(weights < 0) or not np.all(np.isfinite(weights)):
        raise InvalidInputError("Weights must be finite and non-negative")
    order = weighted_order(weights)
    bits = corner_bits(energies, t_up, gains, channel, order)
    return BitAllocation(bits=np.maximum(bits, 0.0), energies=np.asarray(energies, dtype=float), t_up=t_up), order


def common_rate(powers: Sequence[float], gains: Sequence[float], channel: ChannelModel) -> float:
    """
    Largest rate every device can hold simultaneously at ``powers``.

    For subsets of size m only the m weakest received powers matter.
    """
    powers, gains = _vectors(powers, gains)
    received = np.sort(powers * gains)
    sizes = np.arange(1, received.size + 1)
    return float(np.min(channel.bandwidth * np.log2(1.0 + np.cumsum(received) / channel.noise_power) / sizes))


def max_common_rate(config: SystemConfig) -> float:
    """Max-min common rate with every device at the power cap."""
    powers = np.full(config.num_devices, config.max_power)
    return common_rate(powers, config.channel_gains, config.channel)


def min_energy_powers(
    rate: float,
    gains: Sequence[float],
    channel: ChannelModel,
    max_power: float,
) -> np.ndarray:
    """
    Minimum total power letting every device send at ``rate`` simultaneously.

    In received-power terms the feasible set is {q : q(A) >= noise (2^{|A| r/B} - 1)
    for all A, q_k <= P_max h_k}, a capped contra-polymatroid. Its cheapest
    point (cost sum q_k / h_k) is the greedy vertex that serves the weakest
    device first; the cap enters through the monotone closure
    G_j = min_{m >= j} (U_m - phi(m)) over prefix sums U of capped powers.

    Raises:
        InvalidInputError: If the rate exceeds the max-min common rate at the cap
    """
    gains = np.asarray(gains, dtype=float)
    if not rate >= 0:
        raise InvalidInputError(f"Rate must be non-negative, got {rate}")
    size = gains.size
    if rate == 0:
        return np.zeros(size)

    order = np.lexsort((np.arange(size), gains))
    caps = max_power * gains[order]
    counts = np.arange(1, size + 1)
    required = channel.noise_power * np.expm1(counts * rate * _LN2 / channel.bandwidth)
    slack = np.cumsum(caps) - required
    if np.min(slack) < -1e-12 * max(float(np.sum(caps)), float(required[-1])):
        raise InvalidInputError(f"Common rate {rate:.6e} bits/s exceeds what the power cap allows")

    closure = np.minimum.accumulate(slack[::-1])[::-1]
    closure = np.maximum(closure, 0.0)
    increments = np.diff(np.concatenate(([0.0], closure)))
    received = np.clip(caps - increments, 0.0, caps)

    powers = np.empty(size)
    powers[order] = received / gains[order]
    return np.minimum(powers, max_power)


def scheduled_rates(
    powers: Sequence[float],
    gains: Sequence[float],
    channel: ChannelModel,
    schedule: Schedule,
) -> np.ndarray:
    """Average rates of a time-sharing schedule over SIC corners."""
    powers, gains = _vectors(powers, gains)
    rates = np.zeros_like(powers)
    for order, fraction in schedule:
        rates += fraction * sic_corner_rates(powers, gains, channel.noise_power, channel.bandwidth, order)
    return rates


def time_sharing(
    powers: Sequence[float],
    gains: Sequence[float],
    channel: ChannelModel,
    target: Sequence[float],
    orders: Optional[Sequence[DecodingOrder]] = None,
    rel_tol: float = 1e-9,
) -> Optional[Schedule]:
    """
    Time-sharing schedule over SIC corners whose average rates meet ``target``.

    Solves a linear program maximizing the smallest relative margin over the
    convex hull of the candidate corners (all K! orders by default). The
    basic solution uses at most K + 1 orders.

    Returns:
        List of (order, fraction) with fractions summing to one, or None if
        no combination of the candidate corners reaches the target

    Raises:
        SizeError: If all orders are requested for more than 7 devices
    """
    powers, gains = _vectors(powers, gains)
    target = np.asarray(target, dtype=float)
    size = powers.size
    if orders is None:
        if size > MAX_SCHEDULE_DEVICES:
            raise SizeError(f"Time-sharing over all orders is capped at {MAX_SCHEDULE_DEVICES} devices, got {size}")
        orders = list(itertools.permutations(range(size)))
    orders = [_check_order(order, size) for order in orders]

    corners = np.array(
        [sic_corner_rates(powers, gains, channel.noise_power, channel.bandwidth, order) for order in orders]
    )
    active = target > 0
    if not np.any(active):
        return [(orders[0], 1.0)]

    ratios = corners[:, active] / target[active]
    single = np.min(ratios, axis=1)
    if single[0] >= 1.0 - rel_tol:
        return [(orders[0], 1.0)]
    if len(orders) == 1:
        return None

    # Variables: fractions w (one per order) and margin z; maximize z.
    count = len(orders)
    objective = np.zeros(count + 1)
    objective[-1] = -1.0
    a_ub = np.hstack([-ratios.T, np.ones((int(active.sum()), 1))])
    b_ub = -np.ones(int(active.sum()))
    a_eq = np.concatenate((np.ones(count), [0.0]))[None, :]
    bounds = [(0.0, None)] * count + [(-1.0, 1.0)]
    result = linprog(objective, A_ub=a_ub, b_ub=b_ub, A_eq=a_eq, b_eq=[1.0], bounds=bounds, method="highs")
    if not result.success:
        logger.debug(f"Time-sharing LP failed: {result.message}")
        return None
    margin = float(result.x[-1])
    if margin < -rel_tol:
        logger.debug(f"Time-sharing cannot reach the target (margin {margin:.3e})")
        return None

    fractions = np.where(result.x[:count] > 1e-12, result.x[:count], 0.0)
    fractions /= fractions.sum()
    return [(orders[i], float(fractions[i])) for i in range(count) if fractions[i] > 0]
