"""Numerical laboratory for elliptic operators with Carleson-type coefficients.

The package builds coefficient fields on a periodic half-space mesh,
measures Carleson-type norms of them, smooths and flattens them, solves
the associated Dirichlet problems with finite elements and reports
boundary norm ratios of the solutions.
"""
from .errors import (ConfigurationError, ConvergenceError, DegenerateInputError, DkpLabError,
                     EpsilonUnreachableError, FieldError, NotApplicableError, NotInvertibleError,
                     NumericalError, QuadratureError)
from .mesh import CylMesh, HalfSpaceMesh, build_mesh
from .fields import (MatrixField, carleson_bump, check_ellipticity, constant, dkp_smooth,
                     log_oscillation, make_preset, whitney_piecewise)
from .carleson import cm_norm, dkp_norm, linfty_whitney_norm, weak_dkp_norm
from .functionals import area_square, avg_ntmax, dual_witness, lp_norm, ntmax, truncated_ntmax
from .elliptic import FourierExtension, solve_dirichlet, solve_inhomogeneous, solve_weighted
from .smoothing import decompose, initial_split, kernel_mass, mollify
from .chgvar import build_rho, conjugate, invert_rho, structure_check
from .probes import (ProbeReport, bilipschitz_stability_probe, dirichlet_probe, ibp_identity_probe,
                     moser_probe, perturbation_probe, poisson_duality_probe, regularity_probe)

__version__ = "0.1.0"
