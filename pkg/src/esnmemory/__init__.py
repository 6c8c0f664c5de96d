"""Linear echo-state networks as short-term memories for input streams.

The network ``x[n] = W x[n-1] + Z s[n]`` folds N steps of L input streams
into M node states. This package builds such networks, recovers sparse or
low-rank inputs from the final state, and evaluates the coherence and
node-count bounds that govern when recovery succeeds.
"""

from .network import (
    EsnNetwork, MeasurementOperator, NetworkSpec, adjoint, apply_forward, build_network,
    build_operator, evolve, stack_inputs, unstack_inputs,
)
from .bases import (
    JointBasis, OrthonormalBasis, coherence_joint, coherence_lowrank, coherence_single,
    joint_basis, make_basis,
)
from .solvers import (
    RecoveryResult, SolverOptions, brute_force_sparse, operator_norm, soft_threshold,
    solve_l1, solve_nuclear, svt,
)
from .harness import (
    GridConfig, LowRankStructure, PhaseGrid, SparseStructure, TrialConfig, TrialResult,
    phase_diagram, rmse, run_trial,
)

__version__ = "0.1.0"
