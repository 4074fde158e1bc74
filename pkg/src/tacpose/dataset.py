"""Contact dataset generation with histogram-balanced coverage.

Object poses are drawn uniformly from the workspace, projected into contact
with a uniformly posed sensor, and paired with a simulated observation.
Projection concentrates samples near convex surface regions, so accepted
records are capped per joint bin over (contact angle of the sensor seen from
the object, relative orientation). Oversampling continues until the target
record count is reached or the draw budget runs out.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, asdict
from pathlib import Path

import numpy as np

from . import geometry as geo
from .contact import DELTA_MAX, DELTA_PEN, project_poses
from .sensor import SensorParams, sample_observations


@dataclass(frozen=True)
class Workspace:
    x: tuple = (0.2, 0.6)
    y: tuple = (-0.3, 0.3)
    theta_max: float = 2.0 * np.pi  # pi for symmetric objects

    def sample_poses(self, n, rng):
        return np.column_stack(
            [
                rng.uniform(self.x[0], self.x[1], n),
                rng.uniform(self.y[0], self.y[1], n),
                rng.uniform(0.0, self.theta_max, n),
            ]
        )


@dataclass(frozen=True)
class BinSpec:
    n_pos: int = 50  # contact-angle bins
    n_ori: int = 100  # orientation bins
    n_bin: int = 10  # records kept per joint bin


@dataclass
class ContactDataset:
    poses: np.ndarray  # (N, 3) object pose in the sensor frame
    observations: np.ndarray  # (N, N_tax) float32
    meta: dict

    def __len__(self):
        return len(self.poses)


def bin_ids(rel_poses, spec: BinSpec, theta_max: float):
    """Joint bin index over (contact angle, relative orientation).

    The contact angle is the bearing of the sensor as seen from the object
    frame; orientation is the relative angle folded into [0, theta_max).
    """
    rel = np.atleast_2d(np.asarray(rel_poses, dtype=float))
    sensor_in_obj = geo.inverse(rel)
    ang = np.mod(np.arctan2(sensor_in_obj[:, 1], sensor_in_obj[:, 0]), 2.0 * np.pi)
    ia = np.minimum((ang / (2.0 * np.pi) * spec.n_pos).astype(int), spec.n_pos - 1)
    th = np.mod(rel[:, 2], theta_max)
    io = np.minimum((th / theta_max * spec.n_ori).astype(int), spec.n_ori - 1)
    return ia * spec.n_ori + io


def generate_dataset(
    grid,
    layout,
    ee,
    workspace: Workspace,
    n_records: int,
    bin_spec: BinSpec,
    sensor_params: SensorParams,
    rng,
    budget_factor: int = 20,
    batch: int = 4096,
) -> ContactDataset:
    """Generate up to n_records balanced contact pairs."""
    counts = np.zeros(bin_spec.n_pos * bin_spec.n_ori, dtype=np.int32)
    kept_rel = []
    draws = 0
    failures = 0
    budget = budget_factor * n_records
    total = 0
    while total < n_records and draws < budget:
        m = min(batch, budget - draws)
        draws += m
        obj = workspace.sample_poses(m, rng)
        sen = workspace.sample_poses(m, rng)
        sen[:, 2] = rng.uniform(0.0, 2.0 * np.pi, m)
        proj, ok = project_poses(obj, sen, grid, ee, (DELTA_PEN, DELTA_MAX), rng)
        failures += int((~ok).sum())
        rel = geo.relative(sen[ok], proj[ok])
        ids = bin_ids(rel, bin_spec, workspace.theta_max)
        for r, b in zip(rel, ids):
            if counts[b] < bin_spec.n_bin:
                counts[b] += 1
                kept_rel.append(r)
                total += 1
                if total >= n_records:
                    break

    rel_poses = np.asarray(kept_rel) if kept_rel else np.zeros((0, 3))
    obs = np.zeros((0, layout.n_taxels), dtype=np.float32)
    if len(rel_poses):
        chunks = [
            sample_observations(rel_poses[s : s + batch], grid, layout, sensor_params, rng).astype(np.float32)
            for s in range(0, len(rel_poses), batch)
        ]
        obs = np.concatenate(chunks)

    meta = {
        "n_records": int(len(rel_poses)),
        "requested": int(n_records),
        "draws": int(draws),
        "projection_failures": int(failures),
        "budget_exhausted": bool(total < n_records),
        "bin_spec": asdict(bin_spec),
        "theta_max": float(workspace.theta_max),
        "workspace": {"x": list(workspace.x), "y": list(workspace.y)},
        "n_taxels": int(layout.n_taxels),
        "density": float(layout.density),
        "occupied_bins": int((counts > 0).sum()),
        "max_bin_count": int(counts.max()) if counts.size else 0,
    }
    if meta["budget_exhausted"]:
        meta["warning"] = "draw budget exhausted before reaching the requested record count"
    return ContactDataset(poses=rel_poses, observations=obs, meta=meta)


def save_dataset(ds: ContactDataset, path) -> None:
    path = Path(path)
    np.savez(path.with_suffix(".npz"), poses=ds.poses, observations=ds.observations)
    path.with_suffix(".json").write_text(json.dumps(ds.meta, indent=2))


def load_dataset(path) -> ContactDataset:
    path = Path(path)
    blob = np.load(path.with_suffix(".npz"))
    meta = json.loads(path.with_suffix(".json").read_text())
    return ContactDataset(poses=blob["poses"], observations=blob["observations"], meta=meta)
