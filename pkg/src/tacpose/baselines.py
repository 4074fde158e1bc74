"""Local-sampling and simulated force-torque baselines.

The local sampler explores around surviving particles with uniform
cylindrical perturbations about the sensor axis, progressively tightening
the orientation bound with each contact, and projects every perturbed pose
back onto the contact manifold. The force-torque variant condenses the
array response into a single virtual contact point before likelihood
evaluation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import geometry as geo
from .contact import PROJECTION_DELTA, project_poses
from .filter import (
    Belief,
    FilterConfig,
    belief_estimate,
    consistency_scores,
    ess,
    low_variance_resample,
    normalize_log_weights,
)
from .sensor import LikelihoodParams, expected_activation, log_likelihood, sigma_tilde
from .sdf import query


@dataclass(frozen=True)
class LocalSamplerConfig:
    radius_range: tuple = (0.0, 0.03)
    angle_range: tuple = (-np.pi, np.pi)
    orientation_range: tuple = (-np.pi, np.pi)
    orientation_decay: float = 0.6  # k_theta
    floor_clip: float = 0.1  # rad, keeps late-contact sampling stochastic
    delta: float = PROJECTION_DELTA


def orientation_bound(config: LocalSamplerConfig, contact_n: int) -> float:
    """Decayed orientation bound, floor-clipped; contact_n is 1-based."""
    if contact_n < 1:
        raise ValueError("contact index is 1-based")
    return max(config.orientation_decay ** (contact_n - 1) * config.orientation_range[1], config.floor_clip)


def cylindrical_perturb(poses, u_t, config: LocalSamplerConfig, contact_n: int, rng):
    """Uniform cylindrical-coordinate noise about the sensor axis."""
    poses = np.atleast_2d(np.asarray(poses, dtype=float))
    n = len(poses)
    v = poses[:, :2] - u_t[:2]
    r = np.linalg.norm(v, axis=1)
    a = np.arctan2(v[:, 1], v[:, 0])
    r = r + rng.uniform(config.radius_range[0], config.radius_range[1], n)
    a = a + rng.uniform(config.angle_range[0], config.angle_range[1], n)
    b = orientation_bound(config, contact_n)
    th = poses[:, 2] + rng.uniform(-b, b, n)
    out = np.empty_like(poses)
    out[:, 0] = u_t[0] + r * np.cos(a)
    out[:, 1] = u_t[1] + r * np.sin(a)
    out[:, 2] = geo.wrap_angle(th)
    return out


def local_sampling_propose(
    belief: Belief,
    z_t,
    u_t,
    grid,
    layout,
    ee,
    config: FilterConfig,
    ls_config: LocalSamplerConfig,
    rng,
    likelihood_fn=None,
):
    """One contact of the local-sampling baseline (measurement + explore).

    likelihood_fn(z, rel_poses) -> log-likelihoods; defaults to the full
    tactile array model. Returns (belief, info) like the injection scheme.
    """
    u_t = np.asarray(u_t, dtype=float)
    contact_n = belief.contact_count + 1
    if likelihood_fn is None:
        likelihood_fn = lambda z, rel: log_likelihood(z, rel, grid, layout, config.likelihood)

    ll_pred = likelihood_fn(z_t, geo.relative(u_t, belief.poses))
    with np.errstate(divide="ignore"):
        logw_pred = np.log(belief.weights) + ll_pred
    w_pred = normalize_log_weights(logw_pred)

    survivors, _ = low_variance_resample(belief.poses, w_pred, len(belief), rng)
    perturbed = cylindrical_perturb(survivors, u_t, ls_config, contact_n, rng)
    projected, ok = project_poses(perturbed, u_t, grid, ee, ls_config.delta, rng)
    projected[~ok] = survivors[~ok]  # rare medial-axis failures keep the survivor

    ll_hyp = likelihood_fn(z_t, geo.relative(u_t, projected))
    cons = consistency_scores(
        projected, belief.poses, belief.weights, config.k_neighbors, belief.bandwidth, config.metric_weights
    )
    score = ll_hyp + (np.log(np.maximum(cons, 1e-300)) if config.consistency_in_log else cons)

    union_poses = np.concatenate([belief.poses, projected])
    weights = normalize_log_weights(np.concatenate([logw_pred, score]))
    pre = Belief(union_poses, weights, belief.contact_count, belief.bandwidth)
    info = {"n_injected": len(projected), "dropped": int((~ok).sum())}
    info["mean"], info["map"] = belief_estimate(pre)
    info["ess"] = ess(weights)

    n = config.n_particles
    if len(union_poses) > n or info["ess"] < config.ess_frac * len(union_poses):
        poses, weights = low_variance_resample(union_poses, weights, n, rng)
        info["resampled"] = True
    else:
        poses = union_poses
        info["resampled"] = False
    new_h = max(config.h_min, belief.bandwidth * config.gamma_h)
    return Belief(poses, weights, belief.contact_count + 1, new_h), info


# ---------------------------------------------------------------------------
# Simulated force-torque reduction
# ---------------------------------------------------------------------------

def ft_reduce(obs, layout, noise_floor: float = 0.2):
    """Condense the array response to (mean activation, virtual contact point).

    Active taxels are averaged in value and position; the centroid is
    projected radially back onto the cylinder surface. Returns None when no
    taxel is active. A centroid on the axis falls back to the direction of
    the lowest-index active taxel.
    """
    z = np.asarray(obs, dtype=float)
    active = np.flatnonzero(z > noise_floor)
    if len(active) == 0:
        return None
    zbar = float(z[active].mean())
    centroid = layout.positions[active].mean(axis=0)
    rad = np.hypot(centroid[0], centroid[1])
    if rad < 1e-12:
        direction = layout.positions[active[0], :2]
        direction = direction / np.linalg.norm(direction)
    else:
        direction = centroid[:2] / rad
    qbar = np.array([layout.radius * direction[0], layout.radius * direction[1], centroid[2]])
    return zbar, qbar


def ft_log_likelihood(reduced, relative_pose, grid, lik: LikelihoodParams = LikelihoodParams(), d_max: float = 0.003):
    """Single-virtual-taxel Gaussian log-likelihood; constant if no contact."""
    rel = np.atleast_2d(np.asarray(relative_pose, dtype=float))
    if reduced is None:
        return np.zeros(len(rel)) if np.asarray(relative_pose).ndim > 1 else 0.0
    zbar, qbar = reduced
    pts = geo.transform_points_inverse(rel, qbar[None, :]).reshape(-1, 3)
    phi = query(grid, pts)
    mu = np.clip(expected_activation(phi, d_max), 0.0, 1.0)
    sig = sigma_tilde(phi, lik)
    ll = -0.5 * np.log(2.0 * np.pi) - np.log(sig) - 0.5 * ((zbar - mu) / sig) ** 2
    return ll if np.asarray(relative_pose).ndim > 1 else float(ll[0])


def make_ft_likelihood(layout, lik: LikelihoodParams, grid, noise_floor: float = 0.2):
    """Adapter matching the likelihood_fn signature of the proposers."""

    def fn(z, rel_poses):
        return ft_log_likelihood(ft_reduce(z, layout, noise_floor), rel_poses, grid, lik)

    return fn
