"""Eigenvalue asymptotics for the Laplacian on a rectangle whose lower wall
carries a rapid periodic oscillation.

The package computes the three-term eigenvalue expansion of a double Dirichlet
eigenvalue under a boundary perturbation of period eps = 1/(2N+1), builds the
matching boundary-layer fields on the periodicity strip, assembles a composite
approximation, and verifies predictions against direct finite-element
eigenvalue solves.
"""

from .cell import (CellBundle, CellConstants, cell_constants, estimate_decay,
                   solve_cell_bundle)
from .composite import (AsymptoticPrediction, CompositeField,
                        compose_approximation, composite_pair,
                        predicted_lambda, residual_norm)
from .corrector import (BranchCorrection, SolvabilityError,
                        corrector_pipeline, extrapolate_corrections)
from .limitspec import (LAMBDA0, DegenerateClusterError, EigenCluster,
                        diagonalize_boundary_form, limit_cluster)
from .meshgen import (EpsilonParam, Mesh, Tag, export_mesh, mesh_limit_domain,
                      mesh_perturbed_domain, mesh_strip)
from .modes1d import OracleBranch, oracle_corrections
from .profile import Profile, eval_profile, make_profile, parse_descriptor
from .series import CosineSeries
from .studycli import (ConvergenceReport, StudyConfig, StudyError, fit_slope,
                       pair_branches, run_study, write_report)

__all__ = [
    "AsymptoticPrediction",
    "BranchCorrection",
    "CellBundle",
    "CellConstants",
    "CompositeField",
    "ConvergenceReport",
    "CosineSeries",
    "DegenerateClusterError",
    "EigenCluster",
    "EpsilonParam",
    "LAMBDA0",
    "Mesh",
    "OracleBranch",
    "Profile",
    "SolvabilityError",
    "StudyConfig",
    "StudyError",
    "Tag",
    "cell_constants",
    "compose_approximation",
    "composite_pair",
    "corrector_pipeline",
    "diagonalize_boundary_form",
    "estimate_decay",
    "eval_profile",
    "export_mesh",
    "extrapolate_corrections",
    "fit_slope",
    "limit_cluster",
    "make_profile",
    "mesh_limit_domain",
    "mesh_perturbed_domain",
    "mesh_strip",
    "oracle_corrections",
    "pair_branches",
    "parse_descriptor",
    "predicted_lambda",
    "residual_norm",
    "run_study",
    "solve_cell_bundle",
    "write_report",
]
