"""qcreg: landmark-constrained quasi-conformal registration of disk meshes."""

__version__ = "0.1.0"

from ._kernels import backend as kernel_backend  # noqa: F401
from .beltrami import (BeltramiField, BoundaryCondition, alpha_coefficients,  # noqa: F401
                       assemble_lbs, boundary_energy, clamp_mu, compute_mu,
                       jacobian, lbs_residual, lbs_solve)
from .curvature import CurvatureField, CurvatureImage, curvature_image, mean_curvature  # noqa: F401
from .landmarks import (LandmarkSet, curve_discrepancy, detect_landmark_curve,  # noqa: F401
                        resample_curve)
from .mesh import (PlanarMesh, TriMesh, boundary_loop, face_areas,  # noqa: F401
                   face_derivatives, load_mesh, load_planar, save_mesh, save_planar)
from .parameterize import DiskParam, disk_conformal_parameterize, pull_back_to_surface  # noqa: F401
from .registration import (RegistrationParams, RegistrationResult, evaluate_metrics,  # noqa: F401
                           loss_grad_mu, loss_landmark, loss_mu, register)
from .report import MetricsRecord, read_report, write_report  # noqa: F401
from .spectral import (GridField, Spectrum, dft2, disk_to_square, grid_to_mu,  # noqa: F401
                       idft2, lowpass, mu_to_grid, square_to_disk)
from .synth import SynthConfig, distort_disk, random_smooth_mu, synthetic_brain, unit_disk_mesh  # noqa: F401
