"""Adjoint sensitivities of long-time averages through stationary densities.

1D unimodal maps are handled with a discrete transfer operator; the Lorenz
attractor with a streamline mesh anchored on a Poincare section.
"""
from .adjoint_surface import (lorenz_adjoint, manifold_sensitivity, node_areas, normal_offset,
                              parameter_sensitivity, sensitivity,
                              solve_section_adjoint, surface_adjoint, surface_divergence)
from .attractor_mesh import (AttractorMesh, build_mesh, fit_attractor_section, fit_section,
                             sample_poincare, seed_positions, trace_streamline)
from .density1d import (build_fp_matrix, gradient_convergence, left_eigenvector, map_adjoint,
                        sensitivity_1d, sensitivity_fd_1d, solve_adjoint_1d, stationary_density)
from .density_surface import (build_section_operator, density_log_ratio, mean_quantity,
                              poincare_density, section_density, surface_density)
from .dynsys import LORENZ, OdeSystem, ensemble_mean, integrate_to_crossing, rhs, rk4_step
from .maps1d import Map1D, eval_map, invert_branch, map_slope, param_derivative
from .oracle import histogram_density, regression_sensitivity, smoothness_scan

__version__ = "0.1.0"
