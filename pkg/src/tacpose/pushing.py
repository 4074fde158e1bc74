"""Transition models: static objects and a scripted quasi-static pusher.

The pusher resolves sensor-object overlap by carrying the object along the
push direction by the penetration depth, with an off-center push inducing a
proportional rotation about the object center. It stands in for full rigid
contact dynamics; constants here are implementation choices, not reported
values.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import geometry as geo
from .contact import EndEffector, axis_points_object
from .sdf import SdfGrid, query


class StaticTransition:
    """Dirac transition: poses pass through bit-identical."""

    def apply(self, poses, u_t, rng):
        return poses


@dataclass
class PusherParams:
    sigma_xy: float = 0.003  # process noise on carried particles, m
    sigma_theta: float = 0.02  # rad
    rotation_gain: float = 0.6  # fraction of the pivot rotation transferred
    carry_margin: float = 1e-6  # m, ensures displacement >= penetration


def push_map(poses, u_prev, u_t, grid: SdfGrid, ee: EndEffector, params: PusherParams):
    """Quasi-static overlap resolution along the push direction.

    Returns (new poses, pushed mask). Objects whose silhouette the sensor
    sweep penetrates are translated so the overlap resolves, and rotated
    about their center proportionally to the contact lever arm.
    """
    poses = np.atleast_2d(np.asarray(poses, dtype=float)).copy()
    u_prev = np.asarray(u_prev, dtype=float)
    u_t = np.asarray(u_t, dtype=float)
    step = u_t[:2] - u_prev[:2]
    step_len = np.linalg.norm(step)
    pts = axis_points_object(poses, u_t, ee)
    phi = query(grid, pts.reshape(-1, 3)).reshape(len(poses), -1)
    kmin = np.argmin(phi, axis=1)
    phimin = phi[np.arange(len(poses)), kmin]
    overlap = ee.radius - phimin
    pushed = overlap > 0
    if not pushed.any() or step_len < 1e-12:
        return poses, np.zeros(len(poses), dtype=bool)

    d_hat = step / step_len
    carry = (overlap[pushed] + params.carry_margin)[:, None] * d_hat[None, :]
    # Rotation from pushing off-center: contact lever arm vs push direction.
    contact_obj = pts[pushed, kmin[pushed]]
    c, s = np.cos(poses[pushed, 2]), np.sin(poses[pushed, 2])
    lever = np.empty((pushed.sum(), 2))
    lever[:, 0] = c * contact_obj[:, 0] - s * contact_obj[:, 1]
    lever[:, 1] = s * contact_obj[:, 0] + c * contact_obj[:, 1]
    lever_sq = np.maximum(np.einsum("ij,ij->i", lever, lever), ee.radius**2)
    omega = params.rotation_gain * (lever[:, 0] * carry[:, 1] - lever[:, 1] * carry[:, 0]) / lever_sq

    poses[pushed, 0] += carry[:, 0]
    poses[pushed, 1] += carry[:, 1]
    poses[pushed, 2] = geo.wrap_angle(poses[pushed, 2] + omega)
    return poses, pushed


class ScriptedPusherTransition:
    """Per-particle quasi-static pusher with Gaussian process noise.

    Tracks the previous sensor pose internally; the first call is a no-op
    beyond noise.
    """

    def __init__(self, grid: SdfGrid, ee: EndEffector, params: PusherParams = PusherParams()):
        self.grid = grid
        self.ee = ee
        self.params = params
        self.last_u = None

    def reset(self):
        self.last_u = None

    def apply(self, poses, u_t, rng):
        u_t = np.asarray(u_t, dtype=float)
        if self.last_u is None:
            out = np.atleast_2d(np.asarray(poses, dtype=float)).copy()
        else:
            out, _ = push_map(poses, self.last_u, u_t, self.grid, self.ee, self.params)
        self.last_u = u_t.copy()
        n = len(out)
        out[:, :2] += self.params.sigma_xy * rng.standard_normal((n, 2))
        out[:, 2] = geo.wrap_angle(out[:, 2] + self.params.sigma_theta * rng.standard_normal(n))
        return out


def simulate_push_episode(
    gt_pose,
    grid: SdfGrid,
    ee: EndEffector,
    n_pushes: int,
    rng,
    params: PusherParams = PusherParams(),
    step_size: float = 0.005,
    push_depth: float = 0.04,
    retreat: float = 0.08,
):
    """Scripted pushing: approach, push through, break contact, reposition.

    The ground-truth object follows the noise-free push map. Returns
    (sensor poses (T, 3), ground-truth poses (T, 3)).
    """
    gt = np.asarray(gt_pose, dtype=float).copy()
    quiet = PusherParams(sigma_xy=0.0, sigma_theta=0.0, rotation_gain=params.rotation_gain)
    u_list, gt_list = [], []
    u = None
    for _ in range(n_pushes):
        ang = rng.uniform(0.0, 2.0 * np.pi)
        heading = -np.array([np.cos(ang), np.sin(ang)])
        # Start just outside the surface along the approach ray, then drive
        # toward the object center past first contact.
        start_xy = _surface_start(gt, grid, ee, ang, retreat)
        target_xy = start_xy + heading * (np.linalg.norm(gt[:2] - start_xy) * 0.4 + push_depth)
        u = np.array([start_xy[0], start_xy[1], rng.uniform(0.0, 2.0 * np.pi)])
        n_steps = max(int(np.ceil(np.linalg.norm(target_xy - start_xy) / step_size)), 1)
        for k in range(1, n_steps + 1):
            u_next = u.copy()
            u_next[:2] = start_xy + (target_xy - start_xy) * k / n_steps
            gt = push_map(gt, u, u_next, grid, ee, quiet)[0][0]
            u = u_next
            u_list.append(u.copy())
            gt_list.append(gt.copy())
        # Contact break: retreat along the approach ray without pushing.
        back = u.copy()
        back[:2] = u[:2] - heading * retreat
        u = back
        u_list.append(u.copy())
        gt_list.append(gt.copy())
    return np.asarray(u_list), np.asarray(gt_list)


def _surface_start(gt, grid, ee, ang, margin):
    """Point on the approach ray where the sensor first clears the object."""
    direction = np.array([np.cos(ang), np.sin(ang)])
    probe = np.array([gt[0] + direction[0], gt[1] + direction[1], 0.0])
    # Walk outward until the sensor no longer overlaps the silhouette.
    for r in np.arange(0.0, 0.6, 0.01):
        xy = gt[:2] + direction * r
        u = np.array([xy[0], xy[1], 0.0])
        pts = axis_points_object(gt, u, ee)[0]
        if query(grid, pts).min() > ee.radius + margin * 0.25:
            return xy
    return gt[:2] + direction * 0.6
