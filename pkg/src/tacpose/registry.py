"""Test-object registry: procedural meshes, per-object setup, artifact paths.

Objects are closed prisms (extruded silhouettes) sized so their diameters
match the reference object set; estimation is planar, so the silhouette at
the sensing band is what matters. Symmetric objects use the ADD-S metric
and a halved orientation workspace.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .contact import EndEffector
from .dataset import Workspace
from .mesh import TriangleMesh, box_mesh, cylinder_mesh, extrude_polygon
from .sdf import SdfGrid, build_sdf, load_sdfgrid, save_sdfgrid


def star_polygon(control_angles, control_radii, n: int = 96) -> np.ndarray:
    """Star-shaped polygon from radius control points (periodic linear interp)."""
    ca = np.asarray(control_angles, dtype=float)
    cr = np.asarray(control_radii, dtype=float)
    order = np.argsort(ca)
    ca, cr = ca[order], cr[order]
    ca = np.concatenate([ca, [ca[0] + 2.0 * np.pi]])
    cr = np.concatenate([cr, [cr[0]]])
    ang = np.arange(n) / n * 2.0 * np.pi
    shifted = ca[0] + np.mod(ang - ca[0], 2.0 * np.pi)
    rad = np.interp(shifted, ca, cr)
    return np.column_stack([rad * np.cos(ang), rad * np.sin(ang)])


def _bulky_box() -> TriangleMesh:
    return box_mesh((0.244, 0.244, 0.30), center=(0.0, 0.0, 0.15))


def _cracker_box() -> TriangleMesh:
    return box_mesh((0.06, 0.158, 0.21), center=(0.0, 0.0, 0.105))


def _mustard_bottle() -> TriangleMesh:
    ang = np.arange(48) / 48 * 2.0 * np.pi
    poly = np.column_stack([0.0475 * np.cos(ang), 0.029 * np.sin(ang)])
    return extrude_polygon(poly, 0.0, 0.172)


def _mug() -> TriangleMesh:
    body, handle = 0.0415, 0.0615
    ang = np.arange(72) / 72 * 2.0 * np.pi
    rad = np.full(72, body)
    half_in, half_out = 0.18, 0.34
    d = np.abs(np.angle(np.exp(1j * ang)))  # distance from angle 0
    rad = np.where(d <= half_in, handle, rad)
    ramp = (half_out - d) / (half_out - half_in)
    mid = (d > half_in) & (d < half_out)
    rad[mid] = body + (handle - body) * ramp[mid]
    poly = np.column_stack([rad * np.cos(ang), rad * np.sin(ang)])
    return extrude_polygon(poly, 0.0, 0.0708)


def _power_drill() -> TriangleMesh:
    # Elongated motor housing with a nose, a rear bulge, and a grip lobe.
    angles = [0.0, 0.45, 0.9, 1.5, 2.2, 2.8, np.pi, 3.6, 4.1, 4.6, 5.1, 5.6]
    radii = np.array(
        [0.085, 0.052, 0.040, 0.036, 0.038, 0.050, 0.064, 0.072, 0.055, 0.034, 0.036, 0.050]
    ) * 0.97639
    poly = star_polygon(angles, radii, n=96)
    return extrude_polygon(poly, 0.0, 0.17)


def _disk() -> TriangleMesh:
    return cylinder_mesh(0.05, 0.25, 64)


@dataclass(frozen=True)
class ObjectSpec:
    object_id: str
    symmetry: str  # none | discrete | continuous
    z_ee: float
    builder: callable

    @property
    def symmetric(self) -> bool:
        return self.symmetry in ("discrete", "continuous")

    @property
    def theta_max(self) -> float:
        return np.pi if self.symmetric else 2.0 * np.pi

    def end_effector(self, axis_samples: int = 16) -> EndEffector:
        return EndEffector(z_ee=self.z_ee, axis_samples=axis_samples)

    def workspace(self) -> Workspace:
        return Workspace(theta_max=self.theta_max)


REGISTRY = {
    "001_bulky_box": ObjectSpec("001_bulky_box", "discrete", 0.30, _bulky_box),
    "003_cracker_box": ObjectSpec("003_cracker_box", "discrete", 0.20, _cracker_box),
    "006_mustard_bottle": ObjectSpec("006_mustard_bottle", "discrete", 0.20, _mustard_bottle),
    "025_mug": ObjectSpec("025_mug", "none", 0.20, _mug),
    "035_power_drill": ObjectSpec("035_power_drill", "none", 0.18, _power_drill),
    "disk": ObjectSpec("disk", "continuous", 0.20, _disk),
}

_mesh_cache: dict = {}


def get_object(object_id: str) -> ObjectSpec:
    try:
        return REGISTRY[object_id]
    except KeyError:
        raise KeyError(f"unknown object '{object_id}'; known: {sorted(REGISTRY)}") from None


def object_mesh(spec: ObjectSpec) -> TriangleMesh:
    if spec.object_id not in _mesh_cache:
        _mesh_cache[spec.object_id] = spec.builder()
    return _mesh_cache[spec.object_id]


def object_diameter(spec: ObjectSpec) -> float:
    return object_mesh(spec).diameter


def default_bbox(spec: ObjectSpec):
    mesh = object_mesh(spec)
    lo, hi = mesh.bounds
    half_xy = max(0.2, float(np.abs([lo[0], hi[0], lo[1], hi[1]]).max()) + 0.06)
    z_lo = float(lo[2]) - 0.02
    z_hi = max(float(hi[2]), spec.z_ee) + 0.02
    return np.array([-half_xy, -half_xy, z_lo]), np.array([half_xy, half_xy, z_hi])


def object_grid(spec: ObjectSpec, resolution: int = 128, cache_dir=None) -> SdfGrid:
    """Build the object's SDF grid, reusing a cached file when available."""
    if cache_dir is not None:
        path = Path(cache_dir) / f"{spec.object_id}_{resolution}.sdfgrid"
        if path.exists():
            return load_sdfgrid(path)
    grid = build_sdf(object_mesh(spec), bbox=default_bbox(spec), resolution=resolution)
    if cache_dir is not None:
        Path(cache_dir).mkdir(parents=True, exist_ok=True)
        save_sdfgrid(grid, path)
    return grid
