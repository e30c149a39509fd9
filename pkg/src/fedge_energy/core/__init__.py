"""
Core functionality for fedge_energy
"""

from .baselines import PROTOCOLS, SCHEMES, SchemeId, solve_baseline
from .errors import (
    BracketError,
    DivergenceError,
    DualInfeasibleError,
    InvalidInputError,
    NumericalDomainError,
    SizeError,
)
from .fedsim import (
    DeviceData,
    ModelParams,
    TrainingTrajectory,
    average_params,
    centralized_descent,
    device_loss_grad,
    federated_round,
    global_loss,
    make_synthetic_datasets,
    run_training,
    sample_loss,
    stability_threshold,
)
from .io_handlers import read_results_csv, result_columns, result_row, rows_to_frame, write_results_csv
from .noma_region import (
    BitAllocation,
    bit_region_contains,
    common_rate,
    corner_bits,
    max_common_rate,
    min_energy_powers,
    region_contains,
    scheduled_rates,
    sic_corner_rates,
    sum_capacity,
    time_sharing,
    weighted_corner_bits,
)
from .numerics import (
    CutOracleResult,
    EllipsoidResult,
    EllipsoidState,
    bisect_root,
    ellipsoid_max,
    ellipsoid_step,
    golden_section_min,
    minimize_convex_box,
)
from .oracle import AuditReport, audit_solution, grid_solve
from .scenario import (
    DEFAULTS,
    ChannelModel,
    DeviceProfile,
    SystemConfig,
    TrainingPlan,
    db_to_linear,
    dbm_to_watts,
    defaults_fingerprint,
    desk_scenario,
    effective_defaults,
    load_scenario,
    local_update_energy,
    local_update_time,
    paper_scenario,
    parse_quantity,
    path_loss_gain,
    save_scenario,
    scenario_from_dict,
    scenario_to_dict,
    straggler_time,
    with_devices,
    with_distances,
    with_plan,
)
from .solver_noma import (
    NomaDualPoint,
    NomaSolution,
    SolverOptions,
    dual_value_noma,
    inner_energy_time,
    optimal_cpu_frequency,
    solve_p1,
    t_min_noma,
)
from .solver_tdma import (
    TdmaDualPoint,
    TdmaSolution,
    dual_value_tdma,
    optimal_upload_time,
    solve_p2,
    t_min_tdma,
    upload_energy_given_time,
)
from .sweeps import apply_parameter, compare_plans, compare_protocols, crossover_distance, run_case, run_sweep

__all__ = [
    # Errors
    'InvalidInputError',
    'BracketError',
    'SizeError',
    'DualInfeasibleError',
    'NumericalDomainError',
    'DivergenceError',
    # Scenario
    'DEFAULTS',
    'ChannelModel',
    'DeviceProfile',
    'TrainingPlan',
    'SystemConfig',
    'parse_quantity',
    'dbm_to_watts',
    'db_to_linear',
    'effective_defaults',
    'defaults_fingerprint',
    'path_loss_gain',
    'local_update_time',
    'local_update_energy',
    'straggler_time',
    'scenario_from_dict',
    'scenario_to_dict',
    'load_scenario',
    'save_scenario',
    'with_plan',
    'with_devices',
    'with_distances',
    'desk_scenario',
    'paper_scenario',
    # Numerics
    'bisect_root',
    'golden_section_min',
    'EllipsoidState',
    'EllipsoidResult',
    'CutOracleResult',
    'ellipsoid_step',
    'ellipsoid_max',
    'minimize_convex_box',
    # Capacity region
    'BitAllocation',
    'sic_corner_rates',
    'sum_capacity',
    'region_contains',
    'bit_region_contains',
    'corner_bits',
    'weighted_corner_bits',
    'common_rate',
    'max_common_rate',
    'min_energy_powers',
    'scheduled_rates',
    'time_sharing',
    # NOMA solver
    'SolverOptions',
    'NomaDualPoint',
    'NomaSolution',
    't_min_noma',
    'optimal_cpu_frequency',
    'inner_energy_time',
    'dual_value_noma',
    'solve_p1',
    # TDMA solver
    'TdmaDualPoint',
    'TdmaSolution',
    't_min_tdma',
    'upload_energy_given_time',
    'optimal_upload_time',
    'dual_value_tdma',
    'solve_p2',
    # Baselines
    'SchemeId',
    'SCHEMES',
    'PROTOCOLS',
    'solve_baseline',
    # Oracle
    'AuditReport',
    'grid_solve',
    'audit_solution',
    # Federated simulation
    'DeviceData',
    'ModelParams',
    'TrainingTrajectory',
    'sample_loss',
    'device_loss_grad',
    'global_loss',
    'average_params',
    'federated_round',
    'run_training',
    'centralized_descent',
    'stability_threshold',
    'make_synthetic_datasets',
    # Results and sweeps
    'result_columns',
    'result_row',
    'rows_to_frame',
    'write_results_csv',
    'read_results_csv',
    'apply_parameter',
    'run_case',
    'run_sweep',
    'compare_plans',
    'crossover_distance',
    'compare_protocols',
]
