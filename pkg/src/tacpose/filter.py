"""Particle filter over object pose with belief-informed hypothesis injection.

The belief is a weighted particle set over world-frame planar poses. Each
contact runs: predict through the transition model, weight by the tactile
observation likelihood, inject inverse-model hypotheses scored by likelihood
plus a kernel consistency term against the predicted set, then resample the
union back to the particle budget. All weight math happens in log space
with max-subtraction.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace

import numpy as np

from . import geometry as geo
from .sensor import LikelihoodParams, log_likelihood


@dataclass(frozen=True)
class FilterConfig:
    n_particles: int = 300
    n_inject: int = 100
    ess_frac: float = 0.6
    h_min: float = 0.02
    h_max: float = 0.1
    gamma_h: float = 0.7  # bandwidth decay per contact
    k_neighbors: int = 5
    metric_weights: tuple = (1.0, 1.0, 0.1)
    likelihood: LikelihoodParams = LikelihoodParams()
    ddim_steps: int = 80
    ddim_eta: float = 0.2
    consistency_in_log: bool = False  # add log(score) instead of the raw score

    def __post_init__(self):
        if not 0.0 < self.ess_frac <= 1.0:
            raise ValueError("ess_frac must be in (0, 1]")
        if self.k_neighbors < 1 or self.h_min > self.h_max:
            raise ValueError("bad neighbor count or bandwidth bounds")


@dataclass(frozen=True)
class Belief:
    poses: np.ndarray  # (N, 3) world frame
    weights: np.ndarray  # (N,) normalized
    contact_count: int = 0
    bandwidth: float = 0.1

    def __post_init__(self):
        object.__setattr__(self, "poses", np.asarray(self.poses, dtype=float))
        object.__setattr__(self, "weights", np.asarray(self.weights, dtype=float))

    def __len__(self):
        return len(self.poses)


def init_belief(workspace, n: int, rng, h_max: float = 0.1) -> Belief:
    """Uniform prior over the workspace."""
    poses = workspace.sample_poses(n, rng)
    return Belief(poses=poses, weights=np.full(n, 1.0 / n), bandwidth=h_max)


def predict(belief: Belief, u_t, model, rng) -> Belief:
    """Propagate particles through the transition model."""
    poses = model.apply(belief.poses, np.asarray(u_t, dtype=float), rng)
    return replace(belief, poses=poses)


def normalize_log_weights(logw):
    """Log weights -> normalized linear weights via max-subtraction."""
    logw = np.asarray(logw, dtype=float)
    finite = np.isfinite(logw)
    if not finite.any():
        warnings.warn("all particle weights underflowed; resetting to uniform")
        return np.full(len(logw), 1.0 / len(logw))
    shifted = logw - logw[finite].max()
    w = np.exp(shifted, where=finite, out=np.zeros_like(shifted))
    total = w.sum()
    if total <= 0:
        warnings.warn("all particle weights underflowed; resetting to uniform")
        return np.full(len(logw), 1.0 / len(logw))
    return w / total


def measurement_update(belief: Belief, z_t, u_t, grid, layout, lik: LikelihoodParams = LikelihoodParams()) -> Belief:
    """Reweight by the observation likelihood of each particle."""
    rel = geo.relative(np.asarray(u_t, dtype=float), belief.poses)
    ll = log_likelihood(z_t, rel, grid, layout, lik)
    with np.errstate(divide="ignore"):
        logw = np.log(belief.weights) + ll
    return replace(belief, weights=normalize_log_weights(logw))


def ess(weights) -> float:
    """Effective sample size 1 / sum(w^2) for normalized weights."""
    w = np.asarray(weights, dtype=float)
    return float(1.0 / np.sum(w * w))


def lvr_indices(weights, n_out: int, rng) -> np.ndarray:
    """Systematic (low-variance) resampling with a single uniform offset."""
    w = np.asarray(weights, dtype=float)
    positions = (rng.random() + np.arange(n_out)) / n_out
    cumulative = np.cumsum(w)
    cumulative[-1] = 1.0  # guard rounding
    return np.searchsorted(cumulative, positions)


def low_variance_resample(poses, weights, n_out: int, rng):
    idx = lvr_indices(weights, n_out, rng)
    return poses[idx].copy(), np.full(n_out, 1.0 / n_out)


def consistency_scores(candidates, prior_poses, prior_weights, k: int, h: float, metric_weights=(1.0, 1.0, 0.1)):
    """Kernel-weighted support of candidates under the prior particle set.

    Weight-normalized mean of a Gaussian kernel over the k nearest prior
    particles in the weighted pose metric (angles wrapped on the circle).
    Returns scores in [0, 1], shape (M,).
    """
    cand = np.atleast_2d(np.asarray(candidates, dtype=float))
    prior = np.atleast_2d(np.asarray(prior_poses, dtype=float))
    pw = np.asarray(prior_weights, dtype=float)
    lam = np.asarray(metric_weights, dtype=float)
    dx = cand[:, None, 0] - prior[None, :, 0]
    dy = cand[:, None, 1] - prior[None, :, 1]
    dth = geo.wrap_pi(cand[:, None, 2] - prior[None, :, 2])
    d2 = (lam[0] * dx) ** 2 + (lam[1] * dy) ** 2 + (lam[2] * dth) ** 2
    k_eff = min(k, prior.shape[0])
    nn = np.argpartition(d2, k_eff - 1, axis=1)[:, :k_eff]
    rows = np.arange(len(cand))[:, None]
    kern = np.exp(-0.5 * d2[rows, nn] / h**2)
    wsel = pw[nn]
    denom = wsel.sum(axis=1)
    # Zero-weight neighborhoods fall back to an unweighted mean.
    out = np.where(denom > 0, (wsel * kern).sum(axis=1) / np.maximum(denom, 1e-300), kern.mean(axis=1))
    return out


def consistency_score(candidate, belief: Belief, k: int, h: float, metric_weights=(1.0, 1.0, 0.1)) -> float:
    return float(consistency_scores(candidate, belief.poses, belief.weights, k, h, metric_weights)[0])


def belief_estimate(belief: Belief):
    """(weighted mean pose with circular mean angle, highest-weight pose)."""
    if len(belief) == 0:
        raise ValueError("empty belief")
    w = belief.weights
    mean = np.empty(3)
    mean[0] = np.sum(w * belief.poses[:, 0])
    mean[1] = np.sum(w * belief.poses[:, 1])
    mean[2] = geo.wrap_angle(
        np.arctan2(np.sum(w * np.sin(belief.poses[:, 2])), np.sum(w * np.cos(belief.poses[:, 2])))
    )
    map_pose = belief.poses[int(np.argmax(w))].copy()
    return mean, map_pose


def inject(
    belief: Belief,
    z_t,
    u_t,
    hypothesis_sampler,
    grid,
    layout,
    config: FilterConfig,
    rng,
):
    """Belief-informed particle injection for one contact.

    ``hypothesis_sampler(z, n, rng)`` must return constraint-satisfying
    poses in the sensor frame. Returns (belief, info); info carries the
    pre-resample estimates and diagnostics. With no sampler or n_inject=0
    this reduces to a measurement update plus ESS-triggered resampling.
    """
    u_t = np.asarray(u_t, dtype=float)
    lik = config.likelihood

    rel_pred = geo.relative(u_t, belief.poses)
    ll_pred = log_likelihood(z_t, rel_pred, grid, layout, lik)
    with np.errstate(divide="ignore"):
        logw_pred = np.log(belief.weights) + ll_pred

    info = {"dropped": 0, "n_injected": 0}
    if hypothesis_sampler is None or config.n_inject == 0:
        if hypothesis_sampler is None and config.n_inject > 0:
            warnings.warn("inverse model unavailable; skipping hypothesis injection")
        union_poses = belief.poses
        union_logw = logw_pred
    else:
        rel_hyp = hypothesis_sampler(z_t, config.n_inject, rng)
        info["n_injected"] = len(rel_hyp)
        hyp_world = geo.compose(u_t, rel_hyp)
        ll_hyp = log_likelihood(z_t, rel_hyp, grid, layout, lik)
        cons = consistency_scores(
            hyp_world, belief.poses, belief.weights, config.k_neighbors, belief.bandwidth, config.metric_weights
        )
        if config.consistency_in_log:
            score = ll_hyp + np.log(np.maximum(cons, 1e-300))
        else:
            score = ll_hyp + cons
        union_poses = np.concatenate([belief.poses, hyp_world])
        union_logw = np.concatenate([logw_pred, score])

    weights = normalize_log_weights(union_logw)
    pre = Belief(union_poses, weights, belief.contact_count, belief.bandwidth)
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
