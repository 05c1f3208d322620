"""Bayesian D-optimal designs for dose-response models with shared parameters."""

from .core import (AllocationMeasure, CompositeDesign, Design, DesignSpace, DiscretePrior,
                   ModelKind, ParameterStructure, SharingMode, ValidationResult,
                   product_prior, validate_design)
from .criteria import (EquivalenceReport, InfoMatrix, SingularDesignError, bayes_logdet,
                       check_equivalence, d_efficiency, info_matrix_composite,
                       info_matrix_individual, tau)
from .kernels import BACKEND
from .models import eval_regression, gradient_group, gradient_individual
from .pso import PsoConfig, PsoResult, decode, encode, optimize
from .saturated import (CaseLabel, CaseSelectionError, NoRootError, SaturatedSolution,
                        common_location_design, common_location_scale_design,
                        locally_d_optimal, saturated_individual, solve_emax_auxiliary,
                        solve_interior_point, u_threshold)

__version__ = "0.1.0"
