"""Pose-error metrics and sampling diagnostics.

ADD is the mean displacement of corresponding model points under the
estimated vs. ground-truth transforms; ADD-S matches each point to its
nearest ground-truth point instead (for symmetric objects). Planar poses
are lifted to 3D transforms (rotation about z, translation in xy). Values
are normalized by object diameter; normalized values below 0.1 count as
successful estimates.
"""

from __future__ import annotations

import numpy as np
from scipy.spatial import cKDTree

from . import geometry as geo

SUCCESS_THRESHOLD = 0.1


def add(model_points, est_pose, gt_pose):
    """Average distance of corresponding model points, in meters."""
    pts = np.asarray(model_points, dtype=float)
    if pts.size == 0:
        raise ValueError("empty model point set")
    p_est = geo.transform_points(np.asarray(est_pose, dtype=float), pts)
    p_gt = geo.transform_points(np.asarray(gt_pose, dtype=float), pts)
    return float(np.linalg.norm(p_est - p_gt, axis=1).mean())


def add_s(model_points, est_pose, gt_pose):
    """Average distance to the closest ground-truth point (symmetric ADD).

    Nearest neighbors come from a KD-tree; equals the brute-force double
    loop exactly.
    """
    pts = np.asarray(model_points, dtype=float)
    if pts.size == 0:
        raise ValueError("empty model point set")
    p_est = geo.transform_points(np.asarray(est_pose, dtype=float), pts)
    p_gt = geo.transform_points(np.asarray(gt_pose, dtype=float), pts)
    d, _ = cKDTree(p_gt).query(p_est, k=1)
    return float(d.mean())


def normalized_add(value: float, d_obj: float) -> float:
    if d_obj <= 0:
        raise ValueError("object diameter must be positive")
    return float(value) / float(d_obj)


def pose_error(model_points, est_pose, gt_pose, symmetric: bool, d_obj: float) -> float:
    """Normalized ADD or ADD-S depending on the object's symmetry class."""
    fn = add_s if symmetric else add
    return normalized_add(fn(model_points, est_pose, gt_pose), d_obj)


def median_iqr(values):
    """(median, interquartile range) with linear-interpolation quartiles."""
    v = np.asarray(values, dtype=float)
    q1, q2, q3 = np.percentile(v, [25.0, 50.0, 75.0])
    return float(q2), float(q3 - q1)


def success_count(normalized_errors, threshold: float = SUCCESS_THRESHOLD) -> int:
    return int(np.sum(np.asarray(normalized_errors, dtype=float) < threshold))


def avg_loglik(sampler, gt_configs, observations, log_likelihood_fn, n_samples: int, rng):
    """Mean log-likelihood of ground-truth observations under sampled poses.

    ``sampler(z, n, rng)`` yields relative pose hypotheses for one
    observation; ``log_likelihood_fn(z, rel_poses)`` scores them. Averages
    over every (ground-truth config, sample) pair.
    """
    total = 0.0
    count = 0
    for z in observations:
        poses = sampler(z, n_samples, rng)
        ll = np.atleast_1d(log_likelihood_fn(z, poses))
        total += float(ll.sum())
        count += ll.size
    return total / max(count, 1)


def map_hypothesis(poses, loglik):
    """Highest-likelihood pose among hypotheses."""
    poses = np.atleast_2d(np.asarray(poses, dtype=float))
    return poses[int(np.argmax(np.atleast_1d(loglik)))]
