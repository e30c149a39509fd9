"""
fedge-energy - Energy-minimal resource allocation for federated edge learning
"""

from .core import (
    DeviceProfile,
    ChannelModel,
    NomaSolution,
    SolverOptions,
    SystemConfig,
    TdmaSolution,
    TrainingPlan,
    audit_solution,
    desk_scenario,
    grid_solve,
    load_scenario,
    run_sweep,
    run_training,
    solve_baseline,
    solve_p1,
    solve_p2,
    t_min_noma,
    t_min_tdma,
)

__version__ = "0.1.0"
__all__ = [
    'ChannelModel',
    'DeviceProfile',
    'TrainingPlan',
    'SystemConfig',
    'SolverOptions',
    'NomaSolution',
    'TdmaSolution',
    'load_scenario',
    'desk_scenario',
    't_min_noma',
    't_min_tdma',
    'solve_p1',
    'solve_p2',
    'solve_baseline',
    'grid_solve',
    'audit_solution',
    'run_sweep',
    'run_training',
]
