"""Distributed adaptive consensus for uncertain multi-agent systems on directed graphs."""

from .adaptation import (
    SCHEMES,
    centralized_update,
    composite_energy,
    distributed_update,
    example1_update,
    local_update,
    manifold_coords,
    zhang_params,
    zhang_update,
)
from .agents import (
    AgentParams,
    RegressorSpec,
    ScenarioSpec,
    eval_rho,
    eval_zeta,
    nominal_field,
    uncertain_field,
)
from .graph import (
    ConsensusTransform,
    DirectedNetwork,
    build_network,
    build_transform,
    has_spanning_tree,
    laplacian,
    left_null_vector,
    load_network,
)
from .scenario import load_scenario
from .simulator import TrajectoryLog, rk4_step, run, tail_metrics
from .stability import (
    AppendixScratch,
    GainCertificate,
    assumption1_sigma,
    is_hurwitz,
    select_gains,
    solve_lyapunov,
)

__version__ = "0.1.0"
