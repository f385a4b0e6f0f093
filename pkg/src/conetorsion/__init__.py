"""Torsional energy, symmetrization and constant-curvature checks in cones."""

from .cmc import (CenterFit, CurveGamma, arc_about_origin, boundary_curve, half_circle,
                  locate_center, mean_curvature_identity_gap, minkowski1_residual,
                  minkowski2_residual, orthogonality_defect, spherical_cap,
                  spheroid_meridian, tilted_arc, umbilicity_gap)
from .estimators import (CenterLocator, OmegaSymmetrizer, PerimeterFlow, TorsionFlow,
                         TorsionSolver)
from .exceptions import (ConeTorsionError, InvalidProfileError, MeshFailure,
                         NoDirichletBoundary, NonConstantCurvature, NonConvergence,
                         NotSpherical, StepFailure, VolumeMismatch)
from .geometry import (ConeSpec, PolarGraph, cosine_profile, isoperimetric_gap,
                       normalize_volume, random_profile, relative_perimeter,
                       sector_of_same_volume, volume)
from .mesh import AXIS, GAMMA, GAMMA1, SectorMesh, generate_mesh, read_mesh_text
from .shapeflow import (DeformationField, FlowState, MeshParams, flow_perimeter,
                        flow_torsion, overdetermined_residual, project_volume_preserving,
                        shape_derivative)
from .symmetrize import (RearrangedProfile, decreasing_rearrangement, distribution_function,
                         omega_symmetrize, polya_szego_gap, symmetrization_target)
from .torsion import FemField, TorsionReport, solve_torsion, torsional_energy

__version__ = "0.1.0"
