"""Distributed tactile array: layout, response simulation, and likelihoods.

Taxels sit on the cylinder surface of the end-effector. Each taxel's
expected activation is a piecewise linear function of its signed distance
to the object surface; the array response adds Gaussian noise, optional
inactive patches (domain randomization for imperfect contacts), clipping
to [0, 1], and a noise-floor threshold.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace

import numpy as np

from . import geometry as geo
from .sdf import SdfGrid, query

NOISE_FLOOR = 0.2  # zeta: activations below this are zeroed
Z_MAX_RAW = 3000  # raw-count normalization constant


@dataclass(frozen=True)
class TaxelLayout:
    positions: np.ndarray  # (N_tax, 3) sensor frame, on the cylinder surface
    radius: float
    density: float  # taxels per cm^2, as requested

    def __post_init__(self):
        p = np.ascontiguousarray(np.asarray(self.positions, dtype=np.float64))
        p.setflags(write=False)
        object.__setattr__(self, "positions", p)

    @property
    def n_taxels(self) -> int:
        return len(self.positions)


@dataclass(frozen=True)
class SensorParams:
    sigma_tax: float = 0.02  # activation noise std
    d_max: float = 0.003  # m, max distance producing activation
    p_fail: float = 0.0  # probability of an inactive patch per observation
    noise_floor: float = NOISE_FLOOR
    patch_angle_range: tuple = (np.deg2rad(20.0), np.deg2rad(120.0))
    patch_height_range: tuple = (0.25, 1.0)  # fraction of sensing height

    def __post_init__(self):
        if self.d_max <= 0:
            raise ValueError("d_max must be positive")
        if not 0.0 <= self.p_fail <= 1.0:
            raise ValueError("p_fail must be a probability")


@dataclass(frozen=True)
class LikelihoodParams:
    """Distance-dependent observation noise for filtering (logistic blend)."""

    sigma_min: float = 0.4
    sigma_max: float = 1.2
    kappa: float = 1000.0
    d0: float = 0.01  # m


def make_cylindrical_layout(radius: float, height: float, density: float, z_base: float = 0.05) -> TaxelLayout:
    """Near-uniform taxel grid on the unwrapped cylinder.

    Rows and columns are chosen so each taxel covers ~1/density cm^2; the
    actual count is reported via the returned layout. z spans
    [z_base, z_base + height].
    """
    if density <= 0:
        raise ValueError("density must be positive")
    cell = 1.0 / np.sqrt(density)  # cm
    width_cm = 2.0 * np.pi * radius * 100.0
    height_cm = height * 100.0
    cols = max(int(round(width_cm / cell)), 1)
    rows = max(int(round(height_cm / cell)), 1)
    if rows * cols < 4:
        raise ValueError(f"density {density} yields only {rows * cols} taxels")
    ang = (np.arange(cols) + 0.5) / cols * 2.0 * np.pi
    zs = z_base + (np.arange(rows) + 0.5) / rows * height
    aa, zz = np.meshgrid(ang, zs, indexing="ij")
    pos = np.column_stack(
        [radius * np.cos(aa.ravel()), radius * np.sin(aa.ravel()), zz.ravel()]
    )
    return TaxelLayout(positions=pos, radius=radius, density=density)


def expected_activation(phi, d_max: float = 0.003):
    """Piecewise linear distance response: 1 - phi/d_max below d_max, else 0.

    Negative distances yield values above 1; clipping happens downstream.
    """
    phi = np.asarray(phi, dtype=float)
    return np.where(phi < d_max, 1.0 - phi / d_max, 0.0)


def taxels_in_object_frame(relative_pose, layout: TaxelLayout):
    """Taxel centers expressed in the object frame for relative pose(s)."""
    return geo.transform_points_inverse(relative_pose, layout.positions)


def taxel_distances(relative_pose, grid: SdfGrid, layout: TaxelLayout):
    pts = taxels_in_object_frame(relative_pose, layout)
    flat = pts.reshape(-1, 3)
    return query(grid, flat).reshape(pts.shape[:-1])


def sample_observation(
    config,
    grid: SdfGrid,
    layout: TaxelLayout,
    params: SensorParams,
    rng,
) -> np.ndarray:
    """Simulate one array response for a contact configuration.

    Gaussian noise around the expected activations, an optional contiguous
    inactive patch (angular band x height band) re-drawn around mean zero,
    then clip to [0, 1] and zero out readings below the noise floor.
    ``config`` may be a ContactConfig or a bare relative pose.
    """
    rel = getattr(config, "relative_pose", config)
    phi = taxel_distances(rel, grid, layout)
    mu = expected_activation(phi, params.d_max)
    z = mu + params.sigma_tax * rng.standard_normal(mu.shape) if params.sigma_tax > 0 else mu.copy()
    if params.p_fail > 0 and rng.random() < params.p_fail:
        mask = _patch_mask(layout, params, rng)
        # Inactive patch: same noise level around mean zero.
        if params.sigma_tax > 0:
            z[mask] = params.sigma_tax * rng.standard_normal(int(mask.sum()))
        else:
            z[mask] = 0.0
    z = np.clip(z, 0.0, 1.0)
    z[z < params.noise_floor] = 0.0
    return z


def sample_observations(relative_poses, grid: SdfGrid, layout: TaxelLayout, params: SensorParams, rng):
    """Batched observation simulation for relative poses (N, 3) -> (N, N_tax).

    Statistically identical to per-config sampling; noise is drawn as one
    matrix and patches per triggered record.
    """
    rel = np.atleast_2d(np.asarray(relative_poses, dtype=float))
    phi = taxel_distances(rel, grid, layout)
    mu = expected_activation(phi, params.d_max)
    z = mu + params.sigma_tax * rng.standard_normal(mu.shape) if params.sigma_tax > 0 else mu.copy()
    if params.p_fail > 0:
        hit = rng.random(len(rel)) < params.p_fail
        for i in np.flatnonzero(hit):
            mask = _patch_mask(layout, params, rng)
            z[i, mask] = params.sigma_tax * rng.standard_normal(int(mask.sum())) if params.sigma_tax > 0 else 0.0
    z = np.clip(z, 0.0, 1.0)
    z[z < params.noise_floor] = 0.0
    return z


def _patch_mask(layout: TaxelLayout, params: SensorParams, rng) -> np.ndarray:
    """Boolean mask for one contiguous angular x height patch of taxels."""
    ang = np.arctan2(layout.positions[:, 1], layout.positions[:, 0])
    z = layout.positions[:, 2]
    z_lo_all, z_hi_all = z.min(), z.max()
    span = z_hi_all - z_lo_all
    width = rng.uniform(*params.patch_angle_range)
    center = rng.uniform(-np.pi, np.pi)
    dh = np.abs(geo.wrap_pi(ang - center))
    band = rng.uniform(*params.patch_height_range) * span
    z0 = z_lo_all + rng.uniform(0.0, max(span - band, 0.0) + 1e-12)
    return (dh <= width / 2.0) & (z >= z0) & (z <= z0 + band)


def sigma_tilde(phi, lik: LikelihoodParams):
    """Distance-dependent std: high in contact, decaying to sigma_min outside."""
    phi = np.asarray(phi, dtype=float)
    t = np.clip(lik.kappa * (phi - lik.d0), -500.0, 500.0)
    return lik.sigma_min + (lik.sigma_max - lik.sigma_min) / (1.0 + np.exp(t))


def log_likelihood(
    obs: np.ndarray,
    relative_pose,
    grid: SdfGrid,
    layout: TaxelLayout,
    lik: LikelihoodParams = LikelihoodParams(),
    d_max: float = 0.003,
):
    """Observation log-likelihood, summed over taxels.

    Accepts a single relative pose (3,) or a batch (N, 3); returns a scalar
    or (N,). The model mean is the clipped expected activation and the
    per-taxel std follows the logistic distance blend.
    """
    rel = np.asarray(relative_pose, dtype=float)
    single = rel.ndim == 1
    phi = taxel_distances(np.atleast_2d(rel), grid, layout)
    mu = np.clip(expected_activation(phi, d_max), 0.0, 1.0)
    sig = sigma_tilde(phi, lik)
    z = np.asarray(obs, dtype=float)[None, :]
    ll = -0.5 * np.log(2.0 * np.pi) - np.log(sig) - 0.5 * ((z - mu) / sig) ** 2
    out = ll.sum(axis=1)
    return float(out[0]) if single else out


def preprocess_raw(raw, baseline, z_max: float = Z_MAX_RAW, noise_floor: float = NOISE_FLOOR):
    """Convert raw integer counts to normalized activations.

    Subtract the startup baseline, clip negatives, normalize by z_max, and
    zero readings below the noise floor.
    """
    raw = np.asarray(raw, dtype=float)
    base = np.asarray(baseline, dtype=float)
    if raw.shape != base.shape:
        raise ValueError(f"raw/baseline length mismatch: {raw.shape} vs {base.shape}")
    z = np.maximum(raw - base, 0.0) / float(z_max)
    z = np.clip(z, 0.0, 1.0)
    z[z < noise_floor] = 0.0
    return z


# ---------------------------------------------------------------------------
# Observation logs (line-delimited JSON)
# ---------------------------------------------------------------------------

def write_observation_log(path, records) -> None:
    """records: iterable of (t, sensor_pose, z [, object_pose])."""
    with open(path, "w") as fh:
        for rec in records:
            t, u, z = rec[0], rec[1], rec[2]
            row = {"t": float(t), "u": [float(v) for v in u], "z": [float(v) for v in z]}
            if len(rec) > 3 and rec[3] is not None:
                row["gt"] = [float(v) for v in rec[3]]
            fh.write(json.dumps(row) + "\n")


def read_observation_log(path):
    out = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            row = json.loads(line)
            out.append(
                (
                    float(row["t"]),
                    np.asarray(row["u"], dtype=float),
                    np.asarray(row["z"], dtype=float),
                    np.asarray(row["gt"], dtype=float) if "gt" in row else None,
                )
            )
    return out
