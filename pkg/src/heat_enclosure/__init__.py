"""Enclosure-method simulator and reconstructor for heat conduction with an insulated cavity."""
__version__ = "0.1.0"

from .geometry import Disk, Rect, Scene, ShapeUnion, distance_to_point, rasterize, support_function  # noqa: E402
from .grid import BACKEND  # noqa: E402
from .probes import DirectionalProbe, PointProbe, TemporalProfile, laplace_of_profile  # noqa: E402
from .forward import SolverOptions, TimeGrid, simulate  # noqa: E402
from .indicator import build_sweep, compute_indicator, distance_estimate, regress_support  # noqa: E402
from .oracle import cavity_weight, ntd_gap_boundary, ntd_gap_energy, verify_basic_identity  # noqa: E402
from .reconstruct import ball_complement_enclosure, halfplane_intersection, hausdorff_convex  # noqa: E402

__all__ = [
    "BACKEND", "DirectionalProbe", "Disk", "PointProbe", "Rect", "Scene", "ShapeUnion", "SolverOptions",
    "TemporalProfile", "TimeGrid", "ball_complement_enclosure", "build_sweep", "cavity_weight", "compute_indicator",
    "distance_estimate", "distance_to_point", "halfplane_intersection", "hausdorff_convex", "laplace_of_profile",
    "ntd_gap_boundary", "ntd_gap_energy", "rasterize", "regress_support", "simulate", "support_function",
    "verify_basic_identity",
]
