"""
Result rows and CSV files using Polars
"""
import os
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union

import numpy as np
import polars as pl
from loguru import logger

from .scenario import SystemConfig, defaults_fingerprint

BASE_COLUMNS = (
    "scenario_id",
    "protocol",
    "scheme",
    "T",
    "status",
    "energy_total",
    "energy_comm",
    "energy_comp",
    "t_up",
    "t_loc",
    "duality_gap_rel",
)
TAIL_COLUMNS = ("solver_runtime", "defaults_fingerprint")
DEVICE_PREFIXES = ("f", "p", "r")
_TEXT_COLUMNS = {"scenario_id", "protocol", "scheme", "status", "defaults_fingerprint"}


def _validate_output_path(file_path: Path) -> Path:
    """
    Check that a result table, training trajectory or scenario file can be written to ``file_path``.

    Returns:
        ``file_path`` unchanged

    Raises:
        ValueError: If the parent directory does not exist
        PermissionError: If an existing file is not writable
    """
    if not file_path.parent.exists():
        raise ValueError(f"Directory does not exist: {file_path.parent}")
    if file_path.exists() and not os.access(file_path, os.W_OK):
        raise PermissionError(f"Cannot write to {file_path}")
    return file_path


def result_columns(num_devices: int) -> List[str]:
    """Fixed column order: scenario fields, per-device f_k, p_k, r_k, runtime, fingerprint."""
    per_device = [f"{prefix}_{k}" for prefix in DEVICE_PREFIXES for k in range(num_devices)]
    return [*BASE_COLUMNS, *per_device, *TAIL_COLUMNS]


def result_schema(num_devices: int) -> Dict[str, Any]:
    return {name: (pl.Utf8 if name in _TEXT_COLUMNS else pl.Float64) for name in result_columns(num_devices)}


def result_row(
    solution: Any,
    config: SystemConfig,
    runtime: Optional[float] = None,
    fingerprint: Optional[str] = None,
) -> Dict[str, Any]:
    """
    Flatten a NOMA or TDMA solution into one result row.

    ``t_up`` holds the NOMA upload window or the TDMA slot total.
    ``solver_runtime`` stays null unless a runtime is given.
    """
    row: Dict[str, Any] = {
        "scenario_id": config.name,
        "protocol": solution.protocol,
        "scheme": solution.scheme,
        "T": config.plan.max_delay,
        "status": solution.status,
        "energy_total": solution.energy_total,
        "energy_comm": solution.energy_comm,
        "energy_comp": solution.energy_comp,
        "t_up": solution.upload_time,
        "t_loc": solution.t_loc,
        "duality_gap_rel": solution.duality_gap_rel,
    }
    for prefix, values in zip(DEVICE_PREFIXES, (solution.cpu_freqs, solution.powers, solution.rates)):
        for k, value in enumerate(np.asarray(values, dtype=float)):
            row[f"{prefix}_{k}"] = float(value)
    row["solver_runtime"] = runtime
    row["defaults_fingerprint"] = fingerprint or defaults_fingerprint()
    return {name: (None if isinstance(v, float) and np.isnan(v) else v) for name, v in row.items()}


def rows_to_frame(rows: Sequence[Dict[str, Any]], num_devices: int) -> pl.DataFrame:
    """Result rows as a DataFrame with the fixed column order and types."""
    schema = result_schema(num_devices)
    ordered = [{name: row.get(name) for name in schema} for row in rows]
    return pl.from_dicts(ordered, schema=schema) if ordered else pl.DataFrame(schema=schema)


def write_results_csv(frame: pl.DataFrame, file_path: Optional[Union[str, Path]] = None) -> Optional[str]:
    """
    Write results as CSV with a header row.

    Returns the CSV text when no path is given; floats use shortest
    round-trip formatting so reruns give identical bytes.
    """
    if file_path is None:
        return frame.write_csv()
    file_path = _validate_output_path(Path(file_path))
    frame.write_csv(file_path)
    logger.info(f"Wrote {frame.height} result rows to {file_path}")
    return None


def read_results_csv(file_path: Union[str, Path]) -> pl.DataFrame:
    file_path = Path(file_path)
    if not file_path.exists():
        raise FileNotFoundError(f"Results file not found: {file_path}")
    header = pl.read_csv(file_path, n_rows=0).columns
    overrides = {name: pl.Utf8 for name in header if name in _TEXT_COLUMNS}
    return pl.read_csv(file_path, schema_overrides=overrides)
