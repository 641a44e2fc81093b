"""Speed-advisory collision avoidance toolkit: MDP compilation, Q-table
policies, and Monte Carlo encounter evaluation."""

from .grid import Axis, DiscretizationGrid, default_speed_grid, interpolants
from .logic import (
    Advisory,
    LogicConfig,
    NoiseModel,
    RewardWeights,
    SpeedState,
    baseline_logic,
    dynamics_step,
    is_nmac,
    make_logic,
    reward,
    transitions,
)
from .policy import (
    BeliefParticle,
    CompositeAdvisory,
    best_action,
    blend,
    load,
    qmdp_action,
    save,
)
from .solver import QTable, bellman_backup, solve
from .simulator import SimConfig, SimResult, run_set, simulate

__version__ = "0.1.0"
