"""Tests for baselines module"""
import math

import numpy as np
import pytest

from fedge_energy.core.baselines import PROTOCOLS, SCHEMES, solve_baseline
from fedge_energy.core.errors import InvalidInputError
from fedge_energy.core.scenario import with_devices, with_plan


@pytest.fixture
def three_devices(paper_layout):
    """Three devices at 100/150/200 m with a light training plan"""
    config = with_plan(paper_layout, global_iters=2, local_iters=2, upload_bits=2e6, max_delay=60.0)
    return with_devices(config, flops_per_update=1e9)


def test_scheme_and_protocol_names():
    """Test the closed scheme and protocol enumerations"""
    assert SCHEMES == ("joint", "comm_only", "comp_only", "delay_min")
    assert PROTOCOLS == ("noma", "tdma")


def test_delay_min_noma_desk(desk_a):
    """Test the full-speed, full-power energy of DESK-A under NOMA"""
    solution = solve_baseline(desk_a, "noma", "delay_min")
    assert solution.status == "optimal"
    assert solution.scheme == "delay_min"
    assert solution.energy_total == pytest.approx(0.872949, rel=1e-5)
    assert math.isnan(solution.duality_gap_rel)
    assert solution.primal_source == "baseline"


def test_delay_min_independent_of_deadline(desk_a):
    """Test that the delay-min energy does not depend on T"""
    for protocol in PROTOCOLS:
        short = solve_baseline(desk_a, protocol, "delay_min")
        long = solve_baseline(with_plan(desk_a, max_delay=300.0), protocol, "delay_min")
        assert long.energy_total == pytest.approx(short.energy_total, rel=1e-12)


def test_comm_only_runs_at_full_speed(desk_a):
    """Test that communication-only design keeps every CPU at f_max"""
    for protocol in PROTOCOLS:
        solution = solve_baseline(desk_a, protocol, "comm_only")
        np.testing.assert_allclose(solution.cpu_freqs, desk_a.max_freqs)
        assert np.all(solution.powers <= desk_a.max_power * (1 + 1e-12))


def test_comp_only_transmits_at_full_power(desk_a):
    """Test that computation-only design keeps every transmitter at P_max"""
    for protocol in PROTOCOLS:
        solution = solve_baseline(desk_a, protocol, "comp_only")
        np.testing.assert_allclose(solution.powers, np.full(2, desk_a.max_power))
        assert np.all(solution.cpu_freqs < desk_a.max_freqs)


def test_comp_only_saves_computation_energy(desk_a):
    """Test that stretching computation lowers its energy below delay-min"""
    relaxed = with_plan(desk_a, max_delay=300.0)
    for protocol in PROTOCOLS:
        comp_only = solve_baseline(relaxed, protocol, "comp_only")
        delay_min = solve_baseline(relaxed, protocol, "delay_min")
        assert comp_only.energy_comp < delay_min.energy_comp


@pytest.mark.parametrize("protocol", PROTOCOLS)
def test_joint_dominates_baselines_desk(desk_a, protocol):
    """Test that the joint design is never worse than a restricted one"""
    joint = solve_baseline(desk_a, protocol, "joint")
    assert joint.status == "optimal"
    for scheme in ("comm_only", "comp_only", "delay_min"):
        baseline = solve_baseline(desk_a, protocol, scheme)
        assert baseline.status == "optimal"
        assert joint.energy_total <= baseline.energy_total * (1 + 1e-6)


@pytest.mark.parametrize("protocol", PROTOCOLS)
def test_joint_dominates_baselines_three_devices(three_devices, protocol):
    """Test dominance on unequal channel gains"""
    joint = solve_baseline(three_devices, protocol, "joint")
    assert joint.status != "infeasible"
    for scheme in ("comm_only", "comp_only", "delay_min"):
        baseline = solve_baseline(three_devices, protocol, scheme)
        assert joint.energy_total <= baseline.energy_total * (1 + 1e-6)



def test_joint_dominates_baselines_random(random_solutions):
    """Test dominance on seeded random scenarios for both protocols"""
    for config, noma, tdma in random_solutions:
        for protocol, joint in (("noma", noma), ("tdma", tdma)):
            for scheme in ("comm_only", "comp_only", "delay_min"):
                baseline = solve_baseline(config, protocol, scheme)
                assert baseline.status != "infeasible", (config.name, protocol, scheme)
                assert joint.energy_total <= baseline.energy_total * (1 + 1e-6)

@pytest.mark.parametrize("scheme", SCHEMES)
def test_infeasible_deadline(desk_a, scheme):
    """Test that every scheme reports a deadline below the minimum delay"""
    config = with_plan(desk_a, max_delay=4.0)
    for protocol in PROTOCOLS:
        solution = solve_baseline(config, protocol, scheme)
        assert solution.status == "infeasible"
        assert solution.scheme == scheme
        assert math.isnan(solution.energy_total)


def test_unknown_scheme_and_protocol(desk_a):
    """Test that unknown names are rejected"""
    with pytest.raises(InvalidInputError, match="Unknown scheme 'greedy'"):
        solve_baseline(desk_a, "noma", "greedy")
    with pytest.raises(InvalidInputError, match="Unknown protocol 'fdma'"):
        solve_baseline(desk_a, "fdma", "joint")
