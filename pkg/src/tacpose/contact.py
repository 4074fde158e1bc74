"""Contact constraints between a cylindrical sensorized end-effector and an object.

The end-effector is a vertical cylinder of radius ``radius`` whose sensing
band spans ``[z_ee - sensing_height, z_ee]``. Contact validity is evaluated
in the object frame against the object's SDF: no sampled sensor-surface
point may penetrate beyond ``delta_pen``, and the closest one must lie below
``delta_max``. Gradient-based projection translates the object in the plane
until the constraint holds; the object orientation never changes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import geometry as geo
from .sdf import SdfGrid, gradient, query

DELTA_PEN = -0.003  # m, max penetration (compliant layer)
DELTA_MAX = 0.0  # m, max gap still counting as contact
CONTACT_TOL = 1e-4  # m, slack on both bounds
PROJECTION_DELTA = DELTA_PEN / 2.0  # fixed depth for deterministic enforcement


class ProjectionError(RuntimeError):
    """Raised when a pose cannot be projected into a valid contact."""


@dataclass(frozen=True)
class EndEffector:
    radius: float = 0.035
    sensing_height: float = 0.15
    z_ee: float = 0.20  # top of the sensing band
    axis_samples: int = 16

    def __post_init__(self):
        if self.radius <= 0 or self.axis_samples < 2:
            raise ValueError("end-effector needs radius > 0 and >= 2 axis samples")

    def axis_z(self) -> np.ndarray:
        return np.linspace(self.z_ee - self.sensing_height, self.z_ee, self.axis_samples)


@dataclass(frozen=True)
class ContactConfig:
    object_pose: np.ndarray  # (3,) world
    sensor_pose: np.ndarray  # (3,) world

    def __post_init__(self):
        object.__setattr__(self, "object_pose", np.asarray(self.object_pose, dtype=float).reshape(3))
        object.__setattr__(self, "sensor_pose", np.asarray(self.sensor_pose, dtype=float).reshape(3))

    @property
    def relative_pose(self) -> np.ndarray:
        """Object pose expressed in the sensor frame."""
        return geo.relative(self.sensor_pose, self.object_pose)


def axis_points_object(obj_poses, sensor_poses, ee: EndEffector):
    """Axis sample points expressed in the object frame, shape (N, K, 3)."""
    obj = np.atleast_2d(np.asarray(obj_poses, dtype=float))
    sen = np.atleast_2d(np.asarray(sensor_poses, dtype=float))
    obj, sen = np.broadcast_arrays(obj, sen)
    zk = ee.axis_z()
    k = len(zk)
    world = np.empty((len(sen), k, 3))
    world[:, :, 0] = sen[:, 0:1]
    world[:, :, 1] = sen[:, 1:2]
    world[:, :, 2] = zk[None, :]
    c, s = np.cos(obj[:, 2]), np.sin(obj[:, 2])
    dx = world[:, :, 0] - obj[:, 0:1]
    dy = world[:, :, 1] - obj[:, 1:2]
    out = np.empty_like(world)
    out[:, :, 0] = c[:, None] * dx + s[:, None] * dy
    out[:, :, 1] = -s[:, None] * dx + c[:, None] * dy
    out[:, :, 2] = world[:, :, 2]
    return out


def closest_axis_point(config: ContactConfig, grid: SdfGrid, ee: EndEffector):
    """Axis sample with minimal signed distance, in the object frame.

    Returns (point, phi, index, far_field); ties resolve to the lowest
    sample index, and far_field flags configs whose samples all fall
    outside the grid bounds.
    """
    pts = axis_points_object(config.object_pose, config.sensor_pose, ee)[0]
    phi, outside = query(grid, pts, return_outside=True)
    idx = int(np.argmin(phi))  # argmin takes the first (lowest-index) minimum
    return pts[idx], float(phi[idx]), idx, bool(outside.all())


def _draw_delta(delta, n, rng):
    if np.isscalar(delta):
        return np.full(n, float(delta))
    lo, hi = float(delta[0]), float(delta[1])
    if rng is None:
        raise ValueError("a generator is required to sample delta from a range")
    return rng.uniform(lo, hi, size=n)


def project_poses(
    obj_poses,
    sensor_poses,
    grid: SdfGrid,
    ee: EndEffector,
    delta=PROJECTION_DELTA,
    rng=None,
    max_iters: int = 4,
    tol: float = CONTACT_TOL,
):
    """Project object poses into contact with the sensor axis (batched).

    delta is either a fixed signed depth or a (lo, hi) range sampled per
    pose. Returns (poses (N, 3), ok (N,)); failed rows keep their last
    iterate with ok=False. Orientations are returned unchanged.
    """
    poses = np.atleast_2d(np.asarray(obj_poses, dtype=float)).copy()
    sen = np.atleast_2d(np.asarray(sensor_poses, dtype=float))
    if len(sen) == 1 and len(poses) > 1:
        sen = np.broadcast_to(sen, poses.shape)
    n = len(poses)
    dlt = _draw_delta(delta, n, rng)
    ok = np.zeros(n, dtype=bool)
    jittered = np.zeros(n, dtype=bool)
    active = np.arange(n)
    zk = ee.axis_z()

    for it in range(max_iters + 1):
        if len(active) == 0:
            break
        pts = axis_points_object(poses[active], sen[active], ee)
        phi = query(grid, pts.reshape(-1, 3)).reshape(len(active), len(zk))
        kmin = np.argmin(phi, axis=1)
        phimin = phi[np.arange(len(active)), kmin]

        # Converged: every axis sample clear of delta_pen, min inside the band.
        clear = (phi - ee.radius > DELTA_PEN - tol).all(axis=1)
        depth = phimin - ee.radius
        done = clear & (depth > DELTA_PEN - tol) & (depth < DELTA_MAX + tol)
        ok[active[done]] = True

        move = ~done
        if not move.any() or it == max_iters:
            break
        sel = active[move]
        pmin = pts[move, kmin[move]]
        g = gradient(grid, pmin)
        gxy = g[:, :2]
        gnorm = np.linalg.norm(gxy, axis=1)
        degen = gnorm < 1e-6
        if degen.any():
            retry = degen & ~jittered[sel]
            if retry.any():
                # One jittered retry: nudge the evaluation point off the ridge.
                shift = 0.25 * grid.spacing[:2] * np.array([1.0, -1.0])
                g2 = gradient(grid, pmin[retry] + np.r_[shift, 0.0])
                gxy[retry] = g2[:, :2]
                gnorm[retry] = np.linalg.norm(g2[:, :2], axis=1)
                jittered[sel[retry]] = True
                degen = gnorm < 1e-6
        step_obj = (phimin[move] - (ee.radius + dlt[sel]))[:, None] * (
            gxy / np.maximum(gnorm, 1e-30)[:, None]
        )
        step_obj[degen] = 0.0
        c, s = np.cos(poses[sel, 2]), np.sin(poses[sel, 2])
        poses[sel, 0] += c * step_obj[:, 0] - s * step_obj[:, 1]
        poses[sel, 1] += s * step_obj[:, 0] + c * step_obj[:, 1]
        active = sel[~degen]

    poses[:, 2] = geo.wrap_angle(poses[:, 2])
    return poses, ok


def project_to_contact(
    config: ContactConfig,
    grid: SdfGrid,
    ee: EndEffector,
    delta=PROJECTION_DELTA,
    rng=None,
) -> np.ndarray:
    """Project a single configuration; raises ProjectionError on failure."""
    poses, ok = project_poses(config.object_pose, config.sensor_pose, grid, ee, delta, rng)
    if not ok[0]:
        raise ProjectionError(
            f"projection failed for object pose {config.object_pose} "
            f"(zero gradient or no convergence within the iteration budget)"
        )
    return poses[0]


def contact_point_values(obj_poses, sensor_poses, grid: SdfGrid, ee: EndEffector, layout):
    """Signed distances of all sampled sensor-surface points, shape (N, P).

    Points are the taxel positions plus the axis samples inflated by the
    cylinder radius (a lower bound for the surface between taxel rows).
    """
    obj = np.atleast_2d(np.asarray(obj_poses, dtype=float))
    sen = np.atleast_2d(np.asarray(sensor_poses, dtype=float))
    rel = geo.relative(sen, obj)
    tax_obj = geo.transform_points_inverse(rel, layout.positions)
    if tax_obj.ndim == 2:
        tax_obj = tax_obj[None]
    phi_tax = query(grid, tax_obj.reshape(-1, 3)).reshape(len(obj), -1)
    axis_obj = axis_points_object(obj, sen, ee)
    phi_axis = query(grid, axis_obj.reshape(-1, 3)).reshape(len(obj), -1) - ee.radius
    return np.concatenate([phi_tax, phi_axis], axis=1)


def check_contacts(obj_poses, sensor_poses, grid, ee, layout, tol: float = CONTACT_TOL):
    """Vectorized contact validity test; returns a boolean array."""
    vals = contact_point_values(obj_poses, sensor_poses, grid, ee, layout)
    no_penetration = (vals > DELTA_PEN - tol).all(axis=1)
    touching = vals.min(axis=1) < DELTA_MAX + tol
    return no_penetration & touching


def check_contact(config: ContactConfig, grid, ee, layout, tol: float = CONTACT_TOL) -> bool:
    return bool(check_contacts(config.object_pose, config.sensor_pose, grid, ee, layout, tol)[0])
