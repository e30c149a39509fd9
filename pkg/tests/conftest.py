"""Pytest configuration and fixtures for fedge-energy tests"""
import numpy as np
import pytest
from loguru import logger

from fedge_energy.core.fedsim import DeviceData, make_synthetic_datasets
from fedge_energy.core.scenario import (
    DEFAULTS,
    DEFAULTS_ENV,
    ChannelModel,
    DeviceProfile,
    SystemConfig,
    TrainingPlan,
    desk_scenario,
    paper_scenario,
    save_scenario,
    with_plan,
)
from fedge_energy.core.solver_noma import solve_p1
from fedge_energy.core.solver_tdma import solve_p2, t_min_tdma

RANDOM_SCENARIO_SEEDS = range(9)


@pytest.fixture(autouse=True)
def clean_defaults(monkeypatch):
    """Fixture that keeps default overrides from the environment out of every test"""
    monkeypatch.delenv(DEFAULTS_ENV, raising=False)
    yield


@pytest.fixture
def quiet_logs():
    """Fixture that silences loguru output for noisy tests"""
    logger.disable("fedge_energy")
    yield
    logger.enable("fedge_energy")


@pytest.fixture
def log_messages():
    """Fixture that collects fedge_energy log messages at debug level"""
    messages = []
    handler_id = logger.add(messages.append, level="DEBUG", format="{message}", filter="fedge_energy")
    yield messages
    logger.remove(handler_id)


@pytest.fixture
def desk_a():
    """Two identical devices at 100 m, M = N = 2, S = 2 Mbit, T = 30 s"""
    return desk_scenario()


@pytest.fixture
def paper_layout():
    """Three devices at 100/150/200 m with the evaluation training plan"""
    return paper_scenario()


@pytest.fixture
def scenario_file(tmp_path, desk_a):
    """DESK-A written as a scenario JSON file"""
    return save_scenario(desk_a, tmp_path / "desk_a.json")


@pytest.fixture
def synthetic_datasets():
    """Two equal-size devices on a fixed-seed linear model"""
    return make_synthetic_datasets(2, 40, dimension=3, noise=0.1, seed=7)


@pytest.fixture
def single_sample():
    """One device holding the sample x = 1, y = 2"""
    return [DeviceData(inputs=[[1.0]], targets=[2.0])]


def _random_scenario(seed):
    rng = np.random.default_rng(seed)
    num_devices = 1 + seed % 3
    devices = tuple(
        DeviceProfile(
            flops_per_update=float(rng.uniform(1e8, 1e9)) * DEFAULTS["flops_per_cycle"],
            distance=float(rng.uniform(50.0, 250.0)),
        )
        for _ in range(num_devices)
    )
    plan = TrainingPlan(
        global_iters=int(rng.integers(1, 4)),
        local_iters=int(rng.integers(1, 4)),
        upload_bits=float(rng.uniform(2e5, 3e6)),
        max_delay=1.0,
    )
    config = SystemConfig(devices=devices, channel=ChannelModel.from_defaults(DEFAULTS), plan=plan, name=f"random_{seed}")
    # t_min_tdma >= t_min_noma, so both protocols are feasible
    return with_plan(config, max_delay=t_min_tdma(config) * float(rng.uniform(1.2, 4.0)))


@pytest.fixture(scope="session")
def random_scenarios():
    """Seeded scenarios with one to three devices and a deadline above both minimum delays"""
    return [_random_scenario(seed) for seed in RANDOM_SCENARIO_SEEDS]


@pytest.fixture(scope="session")
def random_solutions(random_scenarios):
    """(config, NOMA solution, TDMA solution) for every random scenario, solved once per session"""
    return [(config, solve_p1(config), solve_p2(config)) for config in random_scenarios]
