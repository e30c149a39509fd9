"""Tests for solver_tdma module"""
import math

import numpy as np
import pytest

from fedge_energy.core import solver_noma
from fedge_energy.core.baselines import solve_baseline
from fedge_energy.core.errors import DualInfeasibleError, InvalidInputError, NumericalDomainError
from fedge_energy.core.scenario import ChannelModel, desk_scenario, with_plan
from fedge_energy.core.solver_noma import solve_p1, t_min_noma
from fedge_energy.core.solver_tdma import (
    TdmaDualPoint,
    dual_scales_tdma,
    dual_value_tdma,
    is_tdma_feasible,
    optimal_upload_time,
    optimal_upload_times,
    p_max_upload_time,
    solve_p2,
    t_min_tdma,
    upload_energy_given_time,
    upload_time_residual,
)

S_BITS = 2e6
GAIN = 1e-9


@pytest.fixture(scope="module")
def desk_tdma():
    """Joint TDMA allocation of DESK-A, solved once per module"""
    return solve_p2(desk_scenario())


@pytest.fixture
def channel():
    return ChannelModel.from_defaults()


def _random_dual_points(config, count, seed):
    rng = np.random.default_rng(seed)
    K = config.num_devices
    MN = config.plan.global_iters * config.plan.local_iters
    scales = dual_scales_tdma(config)
    points = []
    for _ in range(count):
        point = TdmaDualPoint.from_vector(rng.uniform(0.0, 3.0, size=K + 1) * scales)
        points.append(TdmaDualPoint(omega=point.omega, zeta=max(point.zeta, float(point.omega.sum()) / MN)))
    return points


def test_t_min_tdma(desk_a):
    """Test the minimum TDMA delay of DESK-A"""
    assert t_min_tdma(desk_a) == pytest.approx(4.40132, rel=1e-5)
    assert t_min_tdma(desk_a) >= t_min_noma(desk_a)


def test_t_min_tdma_tiny_upload(desk_a):
    """Test that the minimum delay tends to M N times the local time as S vanishes"""
    config = with_plan(desk_a, upload_bits=1e-3)
    assert t_min_tdma(config) == pytest.approx(4.0, rel=1e-6)
    assert t_min_tdma(config) == pytest.approx(t_min_noma(config), rel=1e-6)


def test_upload_energy_given_time(channel):
    """Test the minimal upload energy at 1 s and near the Shannon limit"""
    assert upload_energy_given_time(1.0, S_BITS, GAIN, channel) == pytest.approx(1e-4, rel=1e-12)
    assert upload_energy_given_time(100.0, S_BITS, GAIN, channel) == pytest.approx(6.93e-5, rel=5e-3)


def test_upload_energy_decreases_with_time(channel):
    """Test that doubling the slot never increases the energy"""
    times = 0.1 * 2.0 ** np.arange(12)
    energies = [upload_energy_given_time(float(t), S_BITS, GAIN, channel) for t in times]
    assert all(later <= earlier for earlier, later in zip(energies, energies[1:]))


def test_upload_energy_overflow_guard(channel):
    """Test that very short slots report infinite energy"""
    assert upload_energy_given_time(0.01, S_BITS, GAIN, channel) == math.inf


def test_upload_energy_rejects_non_positive_time(channel):
    """Test that a slot must be positive"""
    with pytest.raises(InvalidInputError, match="Upload time must be positive"):
        upload_energy_given_time(0.0, S_BITS, GAIN, channel)


def test_optimal_upload_time_interior_root(channel):
    """Test the stationarity root at a price chosen to put it at 2 s"""
    zeta = 7.58991e-6
    tau = optimal_upload_time(zeta, GAIN, channel, S_BITS, 0.1, 15.0)
    assert tau == pytest.approx(2.0, abs=1e-3)
    assert abs(upload_time_residual(tau, zeta, S_BITS, GAIN, channel)) < 1e-9



def test_optimal_upload_time_recovers_random_interior_roots(channel):
    """Test the slot length and residual at prices placing the root at random interior times"""
    rng = np.random.default_rng(5)
    for _ in range(100):
        gain = float(10.0 ** rng.uniform(-11.0, -9.0))
        upload_bits = float(rng.uniform(2e5, 3e6))
        t_power = p_max_upload_time(upload_bits, gain, channel, 0.1)
        target = t_power * float(rng.uniform(1.05, 20.0))
        zeta = -upload_time_residual(target, 0.0, upload_bits, gain, channel)
        assert zeta > 0
        tau = optimal_upload_time(zeta, gain, channel, upload_bits, 0.1, 100.0 * t_power)
        assert tau == pytest.approx(target, rel=1e-8)
        assert abs(upload_time_residual(tau, zeta, upload_bits, gain, channel)) <= 1e-9 * zeta

def test_optimal_upload_time_power_cap(channel):
    """Test that a high price pushes the slot down to the full-power time"""
    tau = optimal_upload_time(1e3, GAIN, channel, S_BITS, 0.1, 15.0)
    assert tau == pytest.approx(p_max_upload_time(S_BITS, GAIN, channel, 0.1))
    assert tau == pytest.approx(0.100329, rel=1e-5)


def test_optimal_upload_time_zero_price(channel):
    """Test that without a delay price the slot takes the ceiling"""
    assert optimal_upload_time(0.0, GAIN, channel, S_BITS, 0.1, 15.0) == 15.0


def test_optimal_upload_time_rejects_negative_price(channel):
    """Test that the price must be non-negative"""
    with pytest.raises(InvalidInputError, match="non-negative"):
        optimal_upload_time(-1.0, GAIN, channel, S_BITS, 0.1, 15.0)


def test_total_upload_time_non_increasing_in_price(paper_layout):
    """Test the monotonicity the price search relies on"""
    config = with_plan(paper_layout, global_iters=2, local_iters=2, upload_bits=2e6, max_delay=100.0)
    totals = [float(optimal_upload_times(zeta, config).sum()) for zeta in np.geomspace(1e-9, 1e-2, 40)]
    assert all(later <= earlier * (1 + 1e-12) for earlier, later in zip(totals, totals[1:]))


def test_dual_value_at_zero_multipliers(desk_a):
    """Test that the zero-price dual value is the upload energy over the longest slots"""
    evaluation = dual_value_tdma(TdmaDualPoint(omega=np.zeros(2), zeta=0.0), desk_a)
    ceiling = desk_a.plan.round_budget
    expected = desk_a.plan.global_iters * sum(
        upload_energy_given_time(ceiling, S_BITS, float(h), desk_a.channel) for h in desk_a.channel_gains
    )
    assert evaluation.value == pytest.approx(expected, rel=1e-6)
    np.testing.assert_allclose(evaluation.upload_times, np.full(2, ceiling))


def test_dual_value_rejects_infeasible_point(desk_a):
    """Test the zeta M N >= sum(omega) domain check"""
    with pytest.raises(DualInfeasibleError, match="unbounded"):
        dual_value_tdma(TdmaDualPoint(omega=np.ones(2), zeta=0.0), desk_a)


def test_weak_duality_against_baselines(desk_a, desk_tdma):
    """Test that dual values never exceed feasible primal energies"""
    primal = [desk_tdma.energy_total]
    for scheme in ("delay_min", "comm_only", "comp_only"):
        primal.append(solve_baseline(desk_a, "tdma", scheme).energy_total)
    for point in _random_dual_points(desk_a, 8, seed=3):
        assert dual_value_tdma(point, desk_a).value <= min(primal) * (1 + 1e-9)


def test_dual_function_midpoint_concavity(desk_a):
    """Test concavity of the TDMA dual function on random pairs"""
    points = _random_dual_points(desk_a, 6, seed=9)
    for a, b in zip(points[::2], points[1::2]):
        mid = TdmaDualPoint.from_vector(0.5 * (a.as_vector() + b.as_vector()))
        g_a = dual_value_tdma(a, desk_a).value
        g_b = dual_value_tdma(b, desk_a).value
        g_mid = dual_value_tdma(mid, desk_a).value
        assert g_mid >= 0.5 * (g_a + g_b) - 1e-9 * max(1.0, abs(g_a), abs(g_b))


def test_solve_p2_desk(desk_a, desk_tdma):
    """Test the joint TDMA allocation of DESK-A"""
    solution = desk_tdma
    assert solution.status == "optimal"
    assert solution.protocol == "tdma"
    assert solution.duality_gap_rel <= 1e-3
    assert solution.dual_value <= solution.energy_total * (1 + 1e-9)
    assert is_tdma_feasible(solution, desk_a)
    assert solution.delay <= desk_a.plan.max_delay * (1 + 1e-9)
    assert solution.upload_time == pytest.approx(float(solution.upload_times.sum()))
    assert solution.details["zeta"] > 0


def test_solve_p2_slots_are_rate_tight(desk_a, desk_tdma):
    """Test that every slot carries exactly S bits"""
    np.testing.assert_allclose(desk_tdma.bits, np.full(2, desk_a.plan.upload_bits), rtol=1e-6)


def test_solve_p2_not_below_noma(desk_a, desk_tdma):
    """Test that TDMA never needs less energy than NOMA on the same scenario"""
    noma = solve_p1(desk_a)
    assert desk_tdma.energy_total >= noma.energy_total * (1 - 1e-6)


def test_solve_p2_beats_delay_min(desk_a, desk_tdma):
    """Test the joint design against full speed and full power"""
    delay_min = solve_baseline(desk_a, "tdma", "delay_min")
    assert delay_min.energy_total == pytest.approx(0.840132, rel=1e-5)
    assert desk_tdma.energy_total <= delay_min.energy_total


def test_solve_p2_at_minimum_delay(desk_a):
    """Test that T equal to the minimum delay gives full speed and full power"""
    config = with_plan(desk_a, max_delay=t_min_tdma(desk_a))
    solution = solve_p2(config)
    assert solution.status == "optimal"
    np.testing.assert_allclose(solution.cpu_freqs, config.max_freqs)
    np.testing.assert_allclose(solution.powers, np.full(2, config.max_power))


def test_solve_p2_infeasible_between_minimum_delays(desk_a):
    """Test a deadline that NOMA meets but TDMA cannot"""
    config = with_plan(desk_a, max_delay=4.38)
    assert solve_p2(config).status == "infeasible"
    assert solve_p1(config).status != "infeasible"


def test_solve_p2_energy_non_increasing_in_deadline(desk_a, desk_tdma):
    """Test that a tighter deadline never lowers the optimal energy"""
    tight = solve_p2(with_plan(desk_a, max_delay=10.0))
    assert tight.status == "optimal"
    assert desk_tdma.energy_total <= tight.energy_total * (1 + 1e-9)


def test_solve_p2_random_scenarios(random_solutions):
    """Test a closed duality gap on seeded random scenarios and that NOMA never costs more"""
    for config, noma, tdma in random_solutions:
        assert tdma.status == "optimal", config.name
        assert tdma.duality_gap_rel <= 1e-3
        assert is_tdma_feasible(tdma, config)
        assert noma.energy_total <= tdma.energy_total * (1 + 1e-3)


def test_solve_p2_without_dual_ascent(desk_a, desk_tdma, monkeypatch):
    """Test that an abandoned ellipsoid search still returns the polished slots"""

    def failing_search(*args, **kwargs):
        raise NumericalDomainError("Ellipsoid never reached a feasible center in 0 cuts")

    monkeypatch.setattr(solver_noma, "ellipsoid_max", failing_search)
    solution = solve_p2(desk_a)
    assert solution.iterations == 0
    assert is_tdma_feasible(solution, desk_a)
    assert solution.energy_total == pytest.approx(desk_tdma.energy_total, rel=1e-3)
    assert solution.dual_value <= solution.energy_total * (1 + 1e-9)
