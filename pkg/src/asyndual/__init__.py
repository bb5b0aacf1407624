"""Dual proximal-gradient solver and delay simulator for multi-cluster networks.

Agents are grouped into clusters that must agree on a shared decision while
an affine constraint couples the clusters' decisions network-wide.  The
library solves the Fenchel dual of that problem with per-agent proximal
gradient steps driven by bounded-delay neighbor communication, and ships
independent centralized oracles plus diagnostics that check the step-size
certificates and ergodic convergence rates numerically.
"""


class ValidationError(ValueError):
    """Raised when inputs (graphs, scenarios, splits, step sizes) are invalid."""


class NumericalError(RuntimeError):
    """Raised when a numerical procedure fails (divergence, non-convergence)."""


from .topology import ClusterNetwork, NeighborSets, GraphMatrices  # noqa: E402
from .costs import SmoothCost, NonsmoothCost, CouplingConstraint, DualBoxes  # noqa: E402
from .operators import AgentOperators, SystemOperators, assemble, certify_step_sizes  # noqa: E402
from .delays import DelaySchedule, StampedBuffer, d_from_q, stamp_for_read  # noqa: E402
from .solver import AgentState, RunReport, run  # noqa: E402
from .oracles import OracleSolution, solve_waterfilling, solve_projected_gradient  # noqa: E402
from .scenario import Scenario, load_scenario  # noqa: E402

__all__ = [
    "ValidationError",
    "NumericalError",
    "ClusterNetwork",
    "NeighborSets",
    "GraphMatrices",
    "SmoothCost",
    "NonsmoothCost",
    "CouplingConstraint",
    "DualBoxes",
    "AgentOperators",
    "SystemOperators",
    "assemble",
    "certify_step_sizes",
    "DelaySchedule",
    "StampedBuffer",
    "d_from_q",
    "stamp_for_read",
    "AgentState",
    "RunReport",
    "run",
    "OracleSolution",
    "solve_waterfilling",
    "solve_projected_gradient",
    "Scenario",
    "load_scenario",
]

__version__ = "0.1.0"
