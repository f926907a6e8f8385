"""Reduced measures for semilinear equations -Au = f(x, u) + mu with
Dirichlet-form operators, discretized on finite grids."""

from .errors import FormError, InvariantViolation, LabError, SolverError, ValidationError
from .dirichlet import (
    FormMatrix, GreenOperator, OperatorSpec, StateSpace, assemble, beurling_deny, build_space,
    green, perturb, resolvent, restrict, weights,
)
from .measures import DiscreteMeasure, tv_norm
from .nonlinearity import (
    Nonlinearity, bounded, envelope, exponential, expression, power, reflect, tabulated,
    truncate_above, truncate_below, validate,
)
from .capacity import capacity, classify_atom
from .solver import (
    existence_from_sub_super, max_of_subsolutions, minimal_between, residual_measure, solve,
    solve_between, solve_fixed_point,
)
from .reduction import admissible_approx, project, reduce, reduce_min

__version__ = "0.1.0"
