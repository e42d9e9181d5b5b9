"""Quantum Fisher information, the Bures metric and their discrepancy at rank-change points."""
from .discontinuity import (BranchHessian, ContinuityVerdict, DirectionalLimit, JumpReport,
                            RegularizationTrace, continuity_verdict, directional_limit,
                            directional_taylor_zeroth, jump, regularization_limit, regularize,
                            track_vanishing_branches, unit_direction, vanishing_branch_hessians)
from .errors import *  # noqa: F401,F403
from .families import (BUILTINS, DerivativeBundle, FiniteDifferenceConfig, StateFamily,
                       builtin_family, evaluate_bundle, reparametrize, square_coordinate_map,
                       validate_family)
from .hermitian import EigenDecomposition, eigh, kernel_projector, psd_sqrt
from .metrology import (CramerRaoBound, MetricMatrix, SLDSet, bures_distance_sq, continuous_qfi,
                        cramer_rao_lower_bound, kernel_hessian_sum, numeric_bures_metric,
                        qfi_from_sld, qfi_spectral, sld, truncated_metric, uhlmann_fidelity)

__version__ = "0.1.0"
