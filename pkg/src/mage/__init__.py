"""mage: a numerical laboratory for degenerate complex Monge-Ampere
Dirichlet problems in the circle-invariant product reduction.

The package solves the nondegenerate continuation family with a damped
Newton method, certifies the uniform sandwich and mass decay along the
schedule, evaluates the classical gradient and trace identities as
testable left/right sides, monitors the divisor-weighted a priori
estimates, and validates everything against closed-form geodesic oracles.
"""

from .grid import ReducedGrid, PERIODIC_X, TRUNCATED_RHO
from .geometry import (BackgroundGeometry, FamilyForm, TestConfigModel,
                       build_omega_s, build_test_config_form, divisor_norm,
                       flat_torus_background, p1_model_background)
from .ma_core import (HermitianPair, assemble_pair, blocki_sides, gamma_fn,
                      laplacian_prime, reduced_hessian, yau_aubin_sides)
from .solvers import (BoundarySpec, PotentialField, SolveOptions,
                      newton_solve, shift_to_epsilon_background,
                      solve_poisson_hat)
from .continuation import (ContinuationResult, ContinuationSchedule,
                           choose_fs, ma_mass, run_continuation)
from .monitors import (MonitorReport, blocki_alpha_scan, boundary_c2_check,
                       gradient_growth_fit, laplacian_growth_fit,
                       yau_aubin_scan)
from .oracles import (OracleSpec, manufactured, pluriharmonic_ray,
                      product_ray, toric_segment)

__version__ = "0.1.0"

__all__ = [
    "ReducedGrid", "PERIODIC_X", "TRUNCATED_RHO",
    "BackgroundGeometry", "FamilyForm", "TestConfigModel",
    "build_omega_s", "build_test_config_form", "divisor_norm",
    "flat_torus_background", "p1_model_background",
    "HermitianPair", "assemble_pair", "blocki_sides", "gamma_fn",
    "laplacian_prime", "reduced_hessian", "yau_aubin_sides",
    "BoundarySpec", "PotentialField", "SolveOptions", "newton_solve",
    "shift_to_epsilon_background", "solve_poisson_hat",
    "ContinuationResult", "ContinuationSchedule", "choose_fs", "ma_mass",
    "run_continuation",
    "MonitorReport", "blocki_alpha_scan", "boundary_c2_check",
    "gradient_growth_fit", "laplacian_growth_fit", "yau_aubin_scan",
    "OracleSpec", "manufactured", "pluriharmonic_ray", "product_ray",
    "toric_segment",
    "__version__",
]
