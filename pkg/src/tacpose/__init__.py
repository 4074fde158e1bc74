"""Planar tactile object-pose estimation toolkit.

Simulates a cylindrical end-effector covered by a distributed tactile array,
learns a diffusion-based inverse sensor model from SDF-generated contact
data, and tracks object pose with a particle filter that injects generated
hypotheses into the belief.
"""

__version__ = "0.1.0"

from .geometry import compose, inverse, relative, wrap_angle, wrap_pi
from .mesh import TriangleMesh, load_mesh
from .sdf import SdfGrid, build_sdf, gradient, load_sdfgrid, query, save_sdfgrid

__all__ = [
    "TriangleMesh",
    "SdfGrid",
    "build_sdf",
    "query",
    "gradient",
    "save_sdfgrid",
    "load_sdfgrid",
    "load_mesh",
    "compose",
    "inverse",
    "relative",
    "wrap_angle",
    "wrap_pi",
    "__version__",
]
