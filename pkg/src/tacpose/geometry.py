"""Planar rigid-body transforms for object and sensor poses.

A pose is a length-3 array ``[x, y, theta]`` acting on the xy-plane;
z coordinates pass through untouched. All helpers accept either a single
pose ``(3,)`` or a batch ``(N, 3)`` and broadcast accordingly.
"""

from __future__ import annotations

import numpy as np

TWO_PI = 2.0 * np.pi


def wrap_angle(theta):
    """Wrap angles to [0, 2*pi)."""
    return np.mod(theta, TWO_PI)


def wrap_pi(theta):
    """Wrap angles to (-pi, pi]."""
    return np.pi - np.mod(np.pi - np.asarray(theta, dtype=float), TWO_PI)


def angle_diff(a, b):
    """Smallest signed difference a - b on the unit circle, in (-pi, pi]."""
    return wrap_pi(np.asarray(a, dtype=float) - np.asarray(b, dtype=float))


def compose(a, b):
    """Compose poses: the transform of ``a`` applied after ``b``.

    ``compose(u, rel)`` maps a pose expressed relative to frame ``u``
    back into the world frame.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    ca, sa = np.cos(a[..., 2]), np.sin(a[..., 2])
    out = np.empty(np.broadcast_shapes(a.shape, b.shape), dtype=float)
    out[..., 0] = a[..., 0] + ca * b[..., 0] - sa * b[..., 1]
    out[..., 1] = a[..., 1] + sa * b[..., 0] + ca * b[..., 1]
    out[..., 2] = wrap_angle(a[..., 2] + b[..., 2])
    return out


def inverse(a):
    """Inverse pose, so that compose(a, inverse(a)) is the identity."""
    a = np.asarray(a, dtype=float)
    ca, sa = np.cos(a[..., 2]), np.sin(a[..., 2])
    out = np.empty_like(a)
    out[..., 0] = -(ca * a[..., 0] + sa * a[..., 1])
    out[..., 1] = -(-sa * a[..., 0] + ca * a[..., 1])
    out[..., 2] = wrap_angle(-a[..., 2])
    return out


def relative(u, x):
    """Pose of ``x`` expressed in the frame of ``u`` (inverse(u) composed with x)."""
    return compose(inverse(u), x)


def transform_points(pose, points):
    """Apply a planar pose to 3D points; z passes through.

    ``pose`` may be ``(3,)`` with points ``(M, 3)`` -> ``(M, 3)``, or
    ``(N, 3)`` with points ``(M, 3)`` -> ``(N, M, 3)``.
    """
    pose = np.asarray(pose, dtype=float)
    pts = np.asarray(points, dtype=float)
    single = pose.ndim == 1
    p = np.atleast_2d(pose)
    c, s = np.cos(p[:, 2]), np.sin(p[:, 2])
    x = c[:, None] * pts[None, :, 0] - s[:, None] * pts[None, :, 1] + p[:, 0:1]
    y = s[:, None] * pts[None, :, 0] + c[:, None] * pts[None, :, 1] + p[:, 1:2]
    z = np.broadcast_to(pts[None, :, 2], x.shape)
    out = np.stack([x, y, z], axis=-1)
    return out[0] if single else out


def transform_points_inverse(pose, points):
    """Express world points in the frame of ``pose`` (planar, z untouched)."""
    pose = np.asarray(pose, dtype=float)
    pts = np.asarray(points, dtype=float)
    single = pose.ndim == 1
    p = np.atleast_2d(pose)
    c, s = np.cos(p[:, 2]), np.sin(p[:, 2])
    dx = pts[None, :, 0] - p[:, 0:1]
    dy = pts[None, :, 1] - p[:, 1:2]
    x = c[:, None] * dx + s[:, None] * dy
    y = -s[:, None] * dx + c[:, None] * dy
    z = np.broadcast_to(pts[None, :, 2], x.shape)
    out = np.stack([x, y, z], axis=-1)
    return out[0] if single else out


def pose_metric_sq(a, b, weights=(1.0, 1.0, 0.1)):
    """Squared weighted pose distance with the angle wrapped to the circle."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    w = np.asarray(weights, dtype=float)
    dx = a[..., 0] - b[..., 0]
    dy = a[..., 1] - b[..., 1]
    dth = angle_diff(a[..., 2], b[..., 2])
    return (w[0] * dx) ** 2 + (w[1] * dy) ** 2 + (w[2] * dth) ** 2
