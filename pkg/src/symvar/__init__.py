"""Group-invariant variational principles on finite groups, finite metric
spaces, symmetric grids and piecewise-constant controls."""

from symvar.errors import HypothesisError, SymvarError
from symvar.group import (
    FiniteGroup,
    check_group,
    generate_group,
    is_convex_wrt_group,
    is_invariant_point,
    separation,
    symmetrize,
)

__version__ = "0.1.0"

__all__ = [
    "FiniteGroup",
    "HypothesisError",
    "SymvarError",
    "check_group",
    "generate_group",
    "is_convex_wrt_group",
    "is_invariant_point",
    "separation",
    "symmetrize",
    "__version__",
]
