"""Second-order cone programming: program builder, modeling helpers and an
interior-point solver."""
from .ipm import ConeSolution, KktResiduals, SolverOptions, Status, solve
from .program import (Affine, ConeProgram, add_geometric_mean_tree,
                      add_hyperbolic)

__all__ = ["Affine", "ConeProgram", "ConeSolution", "KktResiduals",
           "SolverOptions", "Status", "add_geometric_mean_tree",
           "add_hyperbolic", "solve"]
