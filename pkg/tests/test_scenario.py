"""Tests for scenario module"""
import json

import pytest

from fedge_energy.core.errors import InvalidInputError
from fedge_energy.core.scenario import (
    DEFAULTS,
    DEFAULTS_ENV,
    ChannelModel,
    DeviceProfile,
    TrainingPlan,
    dbm_to_watts,
    defaults_fingerprint,
    effective_defaults,
    load_scenario,
    local_update_energy,
    local_update_time,
    parse_quantity,
    path_loss_gain,
    scenario_from_dict,
    scenario_to_dict,
    straggler_time,
    with_distances,
    with_plan,
)


def _device(**changes):
    values = dict(flops_per_update=1e9, distance=100.0)
    values.update(changes)
    return DeviceProfile(**values)


def test_path_loss_gain_reference_distance():
    """Test that the gain at the reference distance is beta_0"""
    channel = ChannelModel.from_defaults()
    assert path_loss_gain(1.0, channel) == pytest.approx(1e-3, rel=1e-12)


def test_path_loss_gain_examples():
    """Test path loss at 100 m and 200 m"""
    channel = ChannelModel.from_defaults()
    assert path_loss_gain(100.0, channel) == pytest.approx(1e-9, rel=1e-12)
    assert path_loss_gain(200.0, channel) == pytest.approx(1.25e-10, rel=1e-12)


def test_path_loss_gain_rejects_non_positive_distance():
    """Test that zero or negative distances are rejected"""
    channel = ChannelModel.from_defaults()
    with pytest.raises(InvalidInputError, match="Distance must be positive"):
        path_loss_gain(0.0, channel)
    with pytest.raises(InvalidInputError, match="Distance must be positive"):
        path_loss_gain(-5.0, channel)


def test_gains_decrease_with_distance(paper_layout):
    """Test that channel gains fall strictly with distance"""
    gains = paper_layout.channel_gains
    assert gains[0] > gains[1] > gains[2]


def test_dbm_to_watts():
    """Test dBm conversion examples"""
    assert dbm_to_watts(0.0) == pytest.approx(1e-3)
    assert dbm_to_watts(-100.0) == pytest.approx(1e-13)
    assert dbm_to_watts(30.0) == pytest.approx(1.0)


def test_local_update_time():
    """Test local update time examples"""
    assert local_update_time(_device(), 1e9) == pytest.approx(1.0)
    assert local_update_time(_device(flops_per_update=2e9), 0.5e9) == pytest.approx(4.0)


def test_local_update_energy():
    """Test local update energy examples"""
    assert local_update_energy(_device(), 1e9) == pytest.approx(0.1)
    assert local_update_energy(_device(), 0.5e9) == pytest.approx(0.025)


def test_local_update_rejects_out_of_range_frequency():
    """Test that frequencies outside (0, f_max] are rejected"""
    with pytest.raises(InvalidInputError, match="outside"):
        local_update_time(_device(), 2e9)
    with pytest.raises(InvalidInputError, match="outside"):
        local_update_energy(_device(), 0.0)


def test_cycles_use_flops_per_cycle():
    """Test that cycles per update are FLOPs divided by FLOPs per cycle"""
    device = _device(flops_per_update=8e9, flops_per_cycle=4.0)
    assert device.cycles == pytest.approx(2e9)
    assert local_update_time(device, 1e9) == pytest.approx(2.0)


def test_device_needs_exactly_one_of_distance_or_gain():
    """Test the distance/gain exclusivity check"""
    with pytest.raises(InvalidInputError, match="exactly one of distance or gain"):
        DeviceProfile(flops_per_update=1e9)
    with pytest.raises(InvalidInputError, match="exactly one of distance or gain"):
        DeviceProfile(flops_per_update=1e9, distance=10.0, gain=1e-6)


def test_explicit_gain_overrides_path_loss():
    """Test that a device with an explicit gain skips the path-loss model"""
    config = scenario_from_dict(
        {
            "devices": [{"flops_per_update": 1e9, "gain": "-90 dB"}],
            "plan": {"M": 1, "N": 1, "upload_bits": 1e6, "max_delay": 10},
        }
    )
    assert config.channel_gains[0] == pytest.approx(1e-9)


def test_training_plan_validation():
    """Test that plans need integer counts and positive S and T"""
    with pytest.raises(InvalidInputError, match="global_iters"):
        TrainingPlan(global_iters=0, local_iters=1, upload_bits=1.0, max_delay=1.0)
    with pytest.raises(InvalidInputError, match="local_iters"):
        TrainingPlan(global_iters=1, local_iters=2.5, upload_bits=1.0, max_delay=1.0)
    with pytest.raises(InvalidInputError, match="max_delay"):
        TrainingPlan(global_iters=1, local_iters=1, upload_bits=1.0, max_delay=0.0)


def test_round_budget(desk_a):
    """Test that the per-round budget is T / M"""
    assert desk_a.plan.round_budget == pytest.approx(15.0)
    assert straggler_time(desk_a) == pytest.approx(1.0)


@pytest.mark.parametrize(
    "value,kind,expected",
    [
        ("2 MHz", "frequency", 2e6),
        ("-100 dBm", "power", 1e-13),
        ("100 mW", "power", 0.1),
        ("4.9 Gbits", "bits", 4.9e9),
        ("0.5 km", "distance", 500.0),
        ("250 ms", "time", 0.25),
        ("6 GFLOPs", "flops", 6e9),
        (3, "plain", 3.0),
    ],
)
def test_parse_quantity(value, kind, expected):
    """Test unit parsing for every quantity kind"""
    assert parse_quantity(value, kind) == pytest.approx(expected)


def test_parse_quantity_errors():
    """Test malformed quantities and unknown units"""
    with pytest.raises(InvalidInputError, match="Unknown power unit"):
        parse_quantity("3 furlongs", "power")
    with pytest.raises(InvalidInputError, match="Malformed"):
        parse_quantity("fast", "frequency")
    with pytest.raises(InvalidInputError, match="Unknown quantity kind"):
        parse_quantity(1.0, "colour")
    with pytest.raises(InvalidInputError, match="Expected a time quantity"):
        parse_quantity(True, "time")


def test_scenario_from_dict_applies_defaults():
    """Test that omitted channel and device constants fall back to the defaults"""
    config = scenario_from_dict(
        {
            "name": "minimal",
            "devices": [{"flops_per_update": "1 GFLOPs", "distance": "100 m"}],
            "plan": {"M": 2, "N": 3, "upload_bits": "2 Mbits", "max_delay": "30 s"},
        }
    )
    assert config.name == "minimal"
    assert config.channel.bandwidth == DEFAULTS["bandwidth"]
    assert config.channel.noise_power == DEFAULTS["noise_power"]
    assert config.devices[0].max_cpu_freq == DEFAULTS["max_cpu_freq"]
    assert config.max_power == DEFAULTS["max_power"]
    assert config.plan.local_iters == 3
    assert config.plan.upload_bits == pytest.approx(2e6)


def test_scenario_from_dict_rejects_unknown_keys():
    """Test that unknown keys are reported by section"""
    data = {
        "devices": [{"flops_per_update": 1e9, "distance": 100, "colour": "red"}],
        "plan": {"M": 1, "N": 1, "upload_bits": 1e6, "max_delay": 10},
    }
    with pytest.raises(InvalidInputError, match=r"Unknown keys in devices\[0\]: colour"):
        scenario_from_dict(data)


def test_scenario_from_dict_rejects_missing_plan_keys():
    """Test that a plan without max_delay is rejected"""
    data = {"devices": [{"flops_per_update": 1e9, "distance": 100}], "plan": {"M": 1, "N": 1, "upload_bits": 1e6}}
    with pytest.raises(InvalidInputError, match="plan is missing required keys: max_delay"):
        scenario_from_dict(data)


def test_scenario_from_dict_rejects_empty_devices():
    """Test that a scenario needs at least one device"""
    with pytest.raises(InvalidInputError, match="non-empty list"):
        scenario_from_dict({"devices": [], "plan": {"M": 1, "N": 1, "upload_bits": 1, "max_delay": 1}})


def test_scenario_dict_round_trip(desk_a):
    """Test that serializing and parsing a scenario gives the same configuration"""
    assert scenario_from_dict(scenario_to_dict(desk_a)) == desk_a


def test_load_scenario(scenario_file, desk_a):
    """Test loading a saved scenario file"""
    config = load_scenario(scenario_file)
    assert config == desk_a
    assert config.name == "desk_a"


def test_load_scenario_uses_file_stem_as_name(tmp_path, desk_a):
    """Test that a scenario without a name is named after its file"""
    data = scenario_to_dict(desk_a)
    del data["name"]
    path = tmp_path / "bench_3.json"
    path.write_text(json.dumps(data))
    assert load_scenario(path).name == "bench_3"


def test_load_scenario_missing_file(tmp_path):
    """Test loading a file that does not exist"""
    with pytest.raises(FileNotFoundError, match="Scenario file not found"):
        load_scenario(tmp_path / "missing.json")


def test_load_scenario_invalid_json(tmp_path):
    """Test loading a file that is not JSON"""
    path = tmp_path / "broken.json"
    path.write_text("{not json")
    with pytest.raises(InvalidInputError, match="not valid JSON"):
        load_scenario(path)


def test_effective_defaults_override(monkeypatch):
    """Test overriding default constants through the environment"""
    monkeypatch.setenv(DEFAULTS_ENV, json.dumps({"max_power": "200 mW", "bandwidth": "1 MHz"}))
    defaults = effective_defaults()
    assert defaults["max_power"] == pytest.approx(0.2)
    assert defaults["bandwidth"] == pytest.approx(1e6)
    assert defaults["noise_power"] == DEFAULTS["noise_power"]


def test_effective_defaults_rejects_unknown_keys(monkeypatch):
    """Test that overrides may only name known constants"""
    monkeypatch.setenv(DEFAULTS_ENV, json.dumps({"warp_factor": 9}))
    with pytest.raises(InvalidInputError, match="Unknown keys"):
        effective_defaults()


def test_defaults_fingerprint_tracks_overrides(monkeypatch):
    """Test that the fingerprint changes when a default changes"""
    baseline = defaults_fingerprint()
    assert baseline == defaults_fingerprint(DEFAULTS)
    monkeypatch.setenv(DEFAULTS_ENV, json.dumps({"max_power": 0.2}))
    assert defaults_fingerprint() != baseline


def test_with_plan_and_distances(desk_a):
    """Test scenario variant helpers"""
    longer = with_plan(desk_a, max_delay=60.0)
    assert longer.plan.max_delay == 60.0
    assert desk_a.plan.max_delay == 30.0

    moved = with_distances(desk_a, [50.0, 200.0])
    assert moved.channel_gains[0] == pytest.approx(8e-9)
    assert moved.channel_gains[1] == pytest.approx(1.25e-10)
    with pytest.raises(InvalidInputError, match="Expected 2 distances"):
        with_distances(desk_a, [50.0])
