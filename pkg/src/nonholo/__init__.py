"""Constrained-connection mechanics and minimum-effort optimal control.

Submodules build on one another: ``geometry`` (chart-level kernel),
``constraints`` (distributions, projectors, constrained connection),
``dynamics`` (mechanical systems and integration), ``optimality``
(basis-coefficient adjoint conditions), ``classical`` (coordinate
costate oracle), ``shooting`` (boundary-value solver and cross
verification), ``coin`` (closed-form fixture model), ``cli``.
"""

from .constraints import ConstraintSet, DistributionBasis, ProjectorPair
from .dynamics import DynState, MechanicalSystem, Trajectory
from .geometry import DEFAULT_FD, FdScheme
from .optimality import AdjointState, ConditionMode, ExtremalState, ExtremalTrajectory
from .shooting import OcpSpec, ShootingResult, SolveOptions

__all__ = [
    "AdjointState", "ConditionMode", "ConstraintSet", "DEFAULT_FD",
    "DistributionBasis", "DynState", "ExtremalState", "ExtremalTrajectory",
    "FdScheme", "MechanicalSystem", "OcpSpec", "ProjectorPair",
    "ShootingResult", "SolveOptions", "Trajectory",
]

__version__ = "0.1.0"
