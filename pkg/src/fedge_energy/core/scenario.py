"""
Scenario data model for federated edge learning energy studies

Holds the device, channel and training-plan value types, unit parsing for
scenario files, the path-loss channel model and the per-device local
update time/energy formulas.
"""
import hashlib
import json
import math
import os
import re
from dataclasses import dataclass, field, replace
from functools import cached_property
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
from loguru import logger

from .errors import InvalidInputError

DEFAULTS_ENV = "FEDGE_ENERGY_DEFAULTS"

# SI units throughout. Channel constants follow the evaluation setup; the
# compute constants and the power cap are artifact choices.
DEFAULTS: Dict[str, float] = {
    "bandwidth": 2e6,
    "noise_power": 1e-13,
    "pathloss_exponent": 3.0,
    "ref_gain": 1e-3,
    "ref_distance": 1.0,
    "capacitance_coeff": 1e-28,
    "flops_per_cycle": 1.0,
    "max_cpu_freq": 1e9,
    "max_power": 0.1,
}

# Quantity kind used when a default is overridden with a unit string
_DEFAULT_KINDS = {
    "bandwidth": "frequency",
    "noise_power": "power",
    "pathloss_exponent": "plain",
    "ref_gain": "gain",
    "ref_distance": "distance",
    "capacitance_coeff": "plain",
    "flops_per_cycle": "plain",
    "max_cpu_freq": "frequency",
    "max_power": "power",
}

_QUANTITY_RE = re.compile(r"^\s*([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)\s*([A-Za-z/]*)\s*$")


def dbm_to_watts(level: float) -> float:
    """Convert a power level in dBm to watts."""
    return 10.0 ** (level / 10.0) * 1e-3


def db_to_linear(level: float) -> float:
    """Convert a power ratio in dB to a linear ratio."""
    return 10.0 ** (level / 10.0)


_UNITS: Dict[str, Dict[str, Any]] = {
    "power": {"": 1.0, "w": 1.0, "mw": 1e-3, "kw": 1e3, "dbm": dbm_to_watts, "dbw": db_to_linear},
    "frequency": {"": 1.0, "hz": 1.0, "khz": 1e3, "mhz": 1e6, "ghz": 1e9, "cycles/s": 1.0},
    "bits": {"": 1.0, "b": 1.0, "bit": 1.0, "bits": 1.0, "kbits": 1e3, "mbits": 1e6, "gbits": 1e9},
    "gain": {"": 1.0, "db": db_to_linear},
    "distance": {"": 1.0, "m": 1.0, "km": 1e3},
    "time": {"": 1.0, "s": 1.0, "ms": 1e-3, "min": 60.0},
    "flops": {"": 1.0, "flops": 1.0, "kflops": 1e3, "mflops": 1e6, "gflops": 1e9, "tflops": 1e12},
    "plain": {"": 1.0},
}


def parse_quantity(value: Union[int, float, str], kind: str) -> float:
    """
    Convert a scenario-file quantity to SI units.

    Args:
        value: Plain number (taken as SI) or a string such as ``"-100 dBm"``
        kind: One of power, frequency, bits, gain, distance, time, flops, plain

    Returns:
        The quantity in SI units

    Raises:
        InvalidInputError: If the kind or unit is unknown or the text is malformed
    """
    if kind not in _UNITS:
        raise InvalidInputError(f"Unknown quantity kind: {kind}")
    if isinstance(value, bool):
        raise InvalidInputError(f"Expected a {kind} quantity, got {value!r}")
    if isinstance(value, (int, float)):
        return float(value)
    if not isinstance(value, str):
        raise InvalidInputError(f"Expected a {kind} quantity, got {value!r}")

    match = _QUANTITY_RE.match(value)
    if match is None:
        raise InvalidInputError(f"Malformed {kind} quantity: {value!r}")
    number = float(match.group(1))
    unit = match.group(2).lower()
    converter = _UNITS[kind].get(unit)
    if converter is None:
        raise InvalidInputError(f"Unknown {kind} unit {match.group(2)!r} in {value!r}")
    if callable(converter):
        return float(converter(number))
    return number * converter


def effective_defaults() -> Dict[str, float]:
    """
    Default constants with the environment override applied.

    The override is a JSON object in ``FEDGE_ENERGY_DEFAULTS`` whose keys must
    be a subset of ``DEFAULTS``; values may carry unit suffixes.
    """
    defaults = dict(DEFAULTS)
    raw = os.getenv(DEFAULTS_ENV)
    if not raw:
        return defaults
    try:
        overrides = json.loads(raw)
    except json.JSONDecodeError as e:
        raise InvalidInputError(f"{DEFAULTS_ENV} is not valid JSON: {e}") from e
    if not isinstance(overrides, dict):
        raise InvalidInputError(f"{DEFAULTS_ENV} must hold a JSON object")
    unknown = sorted(set(overrides) - set(DEFAULTS))
    if unknown:
        raise InvalidInputError(f"Unknown keys in {DEFAULTS_ENV}: {', '.join(unknown)}")
    for key, value in overrides.items():
        defaults[key] = parse_quantity(value, _DEFAULT_KINDS[key])
        if not defaults[key] > 0:
            raise InvalidInputError(f"Default {key} must be positive, got {defaults[key]}")
    logger.debug(f"Default overrides from {DEFAULTS_ENV}: {sorted(overrides)}")
    return defaults


def defaults_fingerprint(defaults: Optional[Mapping[str, float]] = None) -> str:
    """Short SHA-256 fingerprint of the effective default constants."""
    if defaults is None:
        defaults = effective_defaults()
    canonical = json.dumps({k: repr(float(v)) for k, v in sorted(defaults.items())}, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:12]


def _require_positive(name: str, value: float) -> None:
    if not (isinstance(value, (int, float)) and math.isfinite(value) and value > 0):
        raise InvalidInputError(f"{name} must be positive and finite, got {value!r}")


@dataclass(frozen=True)
class ChannelModel:
    """Path-loss channel and receiver constants shared by all devices."""

    ref_gain: float
    ref_distance: float
    pathloss_exponent: float
    noise_power: float
    bandwidth: float

    def __post_init__(self) -> None:
        for name in ("ref_gain", "ref_distance", "pathloss_exponent", "noise_power", "bandwidth"):
            _require_positive(name, getattr(self, name))
        if self.pathloss_exponent < 1:
            raise InvalidInputError(f"pathloss_exponent must be >= 1, got {self.pathloss_exponent}")

    @classmethod
    def from_defaults(cls, defaults: Optional[Mapping[str, float]] = None, **overrides: float) -> "ChannelModel":
        values = dict(effective_defaults() if defaults is None else defaults)
        values.update(overrides)
        return cls(
            ref_gain=values["ref_gain"],
            ref_distance=values["ref_distance"],
            pathloss_exponent=values["pathloss_exponent"],
            noise_power=values["noise_power"],
            bandwidth=values["bandwidth"],
        )


@dataclass(frozen=True)
class DeviceProfile:
    """
    Compute model of one edge device.

    ``flops_per_update`` is the total work of one local update (FLOPs per
    sample times the local dataset size). The uplink gain comes either from
    ``distance`` through the path-loss model or from an explicit ``gain``.
    """

    flops_per_update: float
    flops_per_cycle: float = DEFAULTS["flops_per_cycle"]
    capacitance_coeff: float = DEFAULTS["capacitance_coeff"]
    max_cpu_freq: float = DEFAULTS["max_cpu_freq"]
    distance: Optional[float] = None
    gain: Optional[float] = None

    def __post_init__(self) -> None:
        for name in ("flops_per_update", "flops_per_cycle", "capacitance_coeff", "max_cpu_freq"):
            _require_positive(name, getattr(self, name))
        if (self.distance is None) == (self.gain is None):
            raise InvalidInputError("A device needs exactly one of distance or gain")
        if self.distance is not None:
            _require_positive("distance", self.distance)
        if self.gain is not None:
            _require_positive("gain", self.gain)
        if not math.isfinite(self.cycles):
            raise InvalidInputError(f"Total cycles per update must be finite, got {self.cycles}")

    @property
    def cycles(self) -> float:
        """CPU cycles per local update (F_k / C_k)."""
        return self.flops_per_update / self.flops_per_cycle


@dataclass(frozen=True)
class TrainingPlan:
    """Global rounds M, local steps N, upload size S and training deadline T."""

    global_iters: int
    local_iters: int
    upload_bits: float
    max_delay: float

    def __post_init__(self) -> None:
        for name in ("global_iters", "local_iters"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, np.integer)) or value < 1:
                raise InvalidInputError(f"{name} must be an integer >= 1, got {value!r}")
        _require_positive("upload_bits", self.upload_bits)
        _require_positive("max_delay", self.max_delay)

    @property
    def round_budget(self) -> float:
        """Time available per global round, T / M."""
        return self.max_delay / self.global_iters


@dataclass(frozen=True)
class SystemConfig:
    """Complete scenario: devices, channel, training plan and the common power cap."""

    devices: Tuple[DeviceProfile, ...]
    channel: ChannelModel
    plan: TrainingPlan
    max_power: float = DEFAULTS["max_power"]
    name: str = field(default="scenario", compare=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "devices", tuple(self.devices))
        if not self.devices:
            raise InvalidInputError("A scenario needs at least one device")
        _require_positive("max_power", self.max_power)

    @property
    def num_devices(self) -> int:
        return len(self.devices)

    @cached_property
    def channel_gains(self) -> np.ndarray:
        """Linear uplink power gains h_k, in device order."""
        gains = np.array(
            [
                device.gain if device.gain is not None else path_loss_gain(device.distance, self.channel)
                for device in self.devices
            ],
            dtype=float,
        )
        gains.setflags(write=False)
        return gains

    @cached_property
    def cycles(self) -> np.ndarray:
        values = np.array([device.cycles for device in self.devices], dtype=float)
        values.setflags(write=False)
        return values

    @cached_property
    def capacitance(self) -> np.ndarray:
        values = np.array([device.capacitance_coeff for device in self.devices], dtype=float)
        values.setflags(write=False)
        return values

    @cached_property
    def max_freqs(self) -> np.ndarray:
        values = np.array([device.max_cpu_freq for device in self.devices], dtype=float)
        values.setflags(write=False)
        return values


def path_loss_gain(distance: float, channel: ChannelModel) -> float:
    """
    Channel power gain beta_0 * (d / d_0) ** (-alpha_0).

    Raises:
        InvalidInputError: If the distance is not positive
    """
    if not (distance is not None and math.isfinite(distance) and distance > 0):
        raise InvalidInputError(f"Distance must be positive, got {distance!r}")
    return channel.ref_gain * (distance / channel.ref_distance) ** (-channel.pathloss_exponent)


def _check_frequency(device: DeviceProfile, cpu_freq: float) -> None:
    if not (math.isfinite(cpu_freq) and 0 < cpu_freq <= device.max_cpu_freq * (1 + 1e-12)):
        raise InvalidInputError(
            f"CPU frequency {cpu_freq!r} outside (0, {device.max_cpu_freq}]"
        )


def local_update_time(device: DeviceProfile, cpu_freq: float) -> float:
    """Seconds for one local update at ``cpu_freq``."""
    _check_frequency(device, cpu_freq)
    return device.cycles / cpu_freq


def local_update_energy(device: DeviceProfile, cpu_freq: float) -> float:
    """Joules for one local update at ``cpu_freq`` (DVFS model, energy per cycle grows as f**2)."""
    _check_frequency(device, cpu_freq)
    return device.cycles * device.capacitance_coeff * cpu_freq**2


def straggler_time(config: SystemConfig) -> float:
    """Shortest possible local update time of the slowest device."""
    return float(np.max(config.cycles / config.max_freqs))


# Scenario files

_DEVICE_KEYS = {
    "flops_per_update": "flops",
    "flops_per_cycle": "plain",
    "capacitance_coeff": "plain",
    "max_cpu_freq": "frequency",
    "distance": "distance",
    "gain": "gain",
}
_CHANNEL_KEYS = {
    "bandwidth": "frequency",
    "noise_power": "power",
    "ref_gain": "gain",
    "ref_distance": "distance",
    "pathloss_exponent": "plain",
}
_PLAN_KEYS = {"M": "count", "N": "count", "upload_bits": "bits", "max_delay": "time"}
_TOP_KEYS = {"name", "devices", "channel", "plan", "max_power"}


def _reject_unknown(section: str, data: Mapping[str, Any], allowed: Sequence[str]) -> None:
    unknown = sorted(set(data) - set(allowed))
    if unknown:
        raise InvalidInputError(f"Unknown keys in {section}: {', '.join(unknown)}")


def _as_mapping(section: str, data: Any) -> Mapping[str, Any]:
    if not isinstance(data, Mapping):
        raise InvalidInputError(f"Section {section} must be an object, got {type(data).__name__}")
    return data


def _parse_count(section: str, key: str, value: Any) -> int:
    if isinstance(value, bool) or not isinstance(value, (int, float)) or value != int(value):
        raise InvalidInputError(f"{section}.{key} must be an integer, got {value!r}")
    return int(value)


def scenario_from_dict(data: Mapping[str, Any], defaults: Optional[Mapping[str, float]] = None) -> SystemConfig:
    """
    Build a SystemConfig from the JSON scenario schema.

    Missing device and channel constants are taken from the effective defaults.

    Raises:
        InvalidInputError: On unknown keys, missing required keys or bad values
    """
    defaults = effective_defaults() if defaults is None else dict(defaults)
    data = _as_mapping("scenario", data)
    _reject_unknown("scenario", data, sorted(_TOP_KEYS))
    for required in ("devices", "plan"):
        if required not in data:
            raise InvalidInputError(f"Scenario is missing required key: {required}")

    raw_devices = data["devices"]
    if not isinstance(raw_devices, list) or not raw_devices:
        raise InvalidInputError("Scenario devices must be a non-empty list")

    devices = []
    for index, raw in enumerate(raw_devices):
        section = f"devices[{index}]"
        raw = _as_mapping(section, raw)
        _reject_unknown(section, raw, sorted(_DEVICE_KEYS))
        if "flops_per_update" not in raw:
            raise InvalidInputError(f"{section} is missing required key: flops_per_update")
        values = {key: parse_quantity(raw[key], kind) for key, kind in _DEVICE_KEYS.items() if key in raw}
        devices.append(
            DeviceProfile(
                flops_per_update=values["flops_per_update"],
                flops_per_cycle=values.get("flops_per_cycle", defaults["flops_per_cycle"]),
                capacitance_coeff=values.get("capacitance_coeff", defaults["capacitance_coeff"]),
                max_cpu_freq=values.get("max_cpu_freq", defaults["max_cpu_freq"]),
                distance=values.get("distance"),
                gain=values.get("gain"),
            )
        )

    raw_channel = _as_mapping("channel", data.get("channel", {}))
    _reject_unknown("channel", raw_channel, sorted(_CHANNEL_KEYS))
    channel = ChannelModel.from_defaults(
        defaults, **{key: parse_quantity(raw_channel[key], kind) for key, kind in _CHANNEL_KEYS.items() if key in raw_channel}
    )

    raw_plan = _as_mapping("plan", data["plan"])
    _reject_unknown("plan", raw_plan, sorted(_PLAN_KEYS))
    missing = [key for key in _PLAN_KEYS if key not in raw_plan]
    if missing:
        raise InvalidInputError(f"plan is missing required keys: {', '.join(missing)}")
    plan = TrainingPlan(
        global_iters=_parse_count("plan", "M", raw_plan["M"]),
        local_iters=_parse_count("plan", "N", raw_plan["N"]),
        upload_bits=parse_quantity(raw_plan["upload_bits"], "bits"),
        max_delay=parse_quantity(raw_plan["max_delay"], "time"),
    )

    max_power = parse_quantity(data.get("max_power", defaults["max_power"]), "power")
    name = str(data.get("name", "scenario"))
    return SystemConfig(devices=tuple(devices), channel=channel, plan=plan, max_power=max_power, name=name)


def scenario_to_dict(config: SystemConfig) -> Dict[str, Any]:
    """Serialize a SystemConfig to the JSON scenario schema, all values in SI units."""
    devices = []
    for device in config.devices:
        entry: Dict[str, Any] = {
            "flops_per_update": device.flops_per_update,
            "flops_per_cycle": device.flops_per_cycle,
            "capacitance_coeff": device.capacitance_coeff,
            "max_cpu_freq": device.max_cpu_freq,
        }
        if device.gain is not None:
            entry["gain"] = device.gain
        else:
            entry["distance"] = device.distance
        devices.append(entry)
    channel = config.channel
    return {
        "name": config.name,
        "devices": devices,
        "channel": {
            "bandwidth": channel.bandwidth,
            "noise_power": channel.noise_power,
            "ref_gain": channel.ref_gain,
            "ref_distance": channel.ref_distance,
            "pathloss_exponent": channel.pathloss_exponent,
        },
        "plan": {
            "M": config.plan.global_iters,
            "N": config.plan.local_iters,
            "upload_bits": config.plan.upload_bits,
            "max_delay": config.plan.max_delay,
        },
        "max_power": config.max_power,
    }


def load_scenario(file_path: Union[str, Path]) -> SystemConfig:
    """
    Load a scenario JSON file.

    Raises:
        FileNotFoundError: If the file does not exist
        InvalidInputError: If the file is not valid JSON or violates the schema
    """
    file_path = Path(file_path)
    if not file_path.exists():
        raise FileNotFoundError(f"Scenario file not found: {file_path}")
    try:
        data = json.loads(file_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise InvalidInputError(f"Scenario file {file_path} is not valid JSON: {e}") from e
    if isinstance(data, Mapping) and "name" not in data:
        data = {**data, "name": file_path.stem}
    config = scenario_from_dict(data)
    logger.debug(f"Loaded scenario {config.name} with {config.num_devices} devices from {file_path}")
    return config


def save_scenario(config: SystemConfig, file_path: Union[str, Path]) -> Path:
    """Write a scenario JSON file (SI units) and return its path."""
    from .io_handlers import _validate_output_path

    file_path = _validate_output_path(Path(file_path))
    file_path.write_text(json.dumps(scenario_to_dict(config), indent=2) + "\n", encoding="utf-8")
    logger.debug(f"Saved scenario {config.name} to {file_path}")
    return file_path


# Scenario variants

def with_plan(config: SystemConfig, **changes: Any) -> SystemConfig:
    """Copy of ``config`` with TrainingPlan fields replaced (global_iters, local_iters, ...)."""
    return replace(config, plan=replace(config.plan, **changes))


def with_devices(config: SystemConfig, **changes: Any) -> SystemConfig:
    """Copy of ``config`` with the same DeviceProfile fields replaced on every device."""
    return replace(config, devices=tuple(replace(device, **changes) for device in config.devices))


def with_distances(config: SystemConfig, distances: Sequence[float]) -> SystemConfig:
    """Copy of ``config`` with devices placed at ``distances`` (explicit gains dropped)."""
    if len(distances) != config.num_devices:
        raise InvalidInputError(
            f"Expected {config.num_devices} distances, got {len(distances)}"
        )
    devices = tuple(
        replace(device, distance=float(distance), gain=None)
        for device, distance in zip(config.devices, distances)
    )
    return replace(config, devices=devices)


def desk_scenario(max_delay: float = 30.0, defaults: Optional[Mapping[str, float]] = None) -> SystemConfig:
    """Two identical devices at 100 m, M = N = 2, S = 2 Mbit: the standard desk check."""
    defaults = effective_defaults() if defaults is None else dict(defaults)
    device = DeviceProfile(
        flops_per_update=1e9 * defaults["flops_per_cycle"],
        flops_per_cycle=defaults["flops_per_cycle"],
        capacitance_coeff=defaults["capacitance_coeff"],
        max_cpu_freq=defaults["max_cpu_freq"],
        distance=100.0,
    )
    return SystemConfig(
        devices=(device, device),
        channel=ChannelModel.from_defaults(defaults),
        plan=TrainingPlan(global_iters=2, local_iters=2, upload_bits=2e6, max_delay=max_delay),
        max_power=defaults["max_power"],
        name="desk_a",
    )


def paper_scenario(
    global_iters: int = 30,
    local_iters: int = 15,
    max_delay: float = 850.0,
    flops_per_sample: float = 6e9,
    samples: int = 1000,
    upload_bits: float = 4.9e9,
    distances: Sequence[float] = (100.0, 150.0, 200.0),
    defaults: Optional[Mapping[str, float]] = None,
    **device_overrides: float,
) -> SystemConfig:
    """
    Three-device evaluation layout: samples split evenly, CNN-sized updates.

    The compute constants the evaluation never states come from the defaults
    and can be overridden per call (``flops_per_cycle``, ``max_cpu_freq``, ...).
    """
    defaults = effective_defaults() if defaults is None else dict(defaults)
    per_device = samples / len(distances)
    devices = tuple(
        DeviceProfile(
            flops_per_update=flops_per_sample * per_device,
            flops_per_cycle=device_overrides.get("flops_per_cycle", defaults["flops_per_cycle"]),
            capacitance_coeff=device_overrides.get("capacitance_coeff", defaults["capacitance_coeff"]),
            max_cpu_freq=device_overrides.get("max_cpu_freq", defaults["max_cpu_freq"]),
            distance=float(distance),
        )
        for distance in distances
    )
    return SystemConfig(
        devices=devices,
        channel=ChannelModel.from_defaults(defaults),
        plan=TrainingPlan(
            global_iters=global_iters,
            local_iters=local_iters,
            upload_bits=upload_bits,
            max_delay=max_delay,
        ),
        max_power=device_overrides.get("max_power", defaults["max_power"]),
        name="paper_layout",
    )
