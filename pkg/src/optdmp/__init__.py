"""Learning optimal controllers with dynamic movement primitives.

Solve parametric fixed-endpoint optimal control problems, encode the
solutions as primitives, estimate how suboptimal a generalised primitive is
from the anchor's optimal cost and value gradient, and use that estimate to
decide where new anchors are needed.
"""

from .dmp import BasisSet, Dmp, DmpParams, clock, deviation, forcing, learn_weights, rollout
from .dynamics import SystemDynamics, eval_actuation_inverse, eval_drift, example_system, get_system
from .errors import (
    BudgetError,
    CapabilityError,
    ContractError,
    NumericalError,
    OptDmpError,
    OutOfRegionError,
    SolverStateError,
)
from .ocp import (
    OcpProblem,
    Trajectory,
    reverse_problem,
    reverse_trajectory,
    solve,
    trajectory_cost,
    transcribe,
)
from .sampler import (
    Anchor,
    Box,
    LearningSetup,
    SampleGrid,
    SamplerConfig,
    build_grid,
    query,
    sample_direction,
    sample_line,
)
from .value import (
    SuboptimalityReport,
    ValueAnchor,
    first_order_estimate,
    recover_input,
    suboptimality,
    value_gradient_at_anchor,
)

__version__ = "0.1.0"
