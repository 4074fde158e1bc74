"""Conditional denoising diffusion over relative object poses.

Forward process: ``x_t = sqrt(abar_t) x_0 + sqrt(1 - abar_t) eps`` on poses
normalized to network coordinates (positions scaled by the workspace bound,
angle wrapped to (-pi, pi] and scaled by 1/pi). The denoiser is trained to
predict the added noise under a channel-weighted MSE; inference runs DDIM
over a subset of timesteps with adjustable stochasticity, followed by SDF
projection so every hypothesis satisfies the contact constraint.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import geometry as geo
from .contact import PROJECTION_DELTA, project_poses
from .denoiser import Adam, DenoiserNet, TrainingError, timestep_embedding, weighted_mse_loss

POS_SCALE = 0.4  # m, workspace-relative position bound in the sensor frame
ANG_SCALE = np.pi

CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class NoiseSchedule:
    """Linear beta schedule; alpha_bar[0] = 1 so index t in [0, T]."""

    n_steps: int = 100
    beta_start: float = 1e-3
    beta_end: float = 0.1
    betas: np.ndarray = field(init=False)
    alpha_bars: np.ndarray = field(init=False)

    def __post_init__(self):
        if not (0.0 < self.beta_start < self.beta_end < 1.0):
            raise ValueError("need 0 < beta_start < beta_end < 1")
        betas = np.linspace(self.beta_start, self.beta_end, self.n_steps)
        abars = np.concatenate([[1.0], np.cumprod(1.0 - betas)])
        object.__setattr__(self, "betas", betas)
        object.__setattr__(self, "alpha_bars", abars)

    @property
    def terminal_alpha_bar(self) -> float:
        return float(self.alpha_bars[-1])


def normalize_pose(poses):
    """Map relative poses to network coordinates in ~[-1, 1]^3."""
    p = np.atleast_2d(np.asarray(poses, dtype=float))
    out = np.empty_like(p)
    out[:, 0] = p[:, 0] / POS_SCALE
    out[:, 1] = p[:, 1] / POS_SCALE
    out[:, 2] = geo.wrap_pi(p[:, 2]) / ANG_SCALE
    return out


def denormalize_pose(npose):
    p = np.atleast_2d(np.asarray(npose, dtype=float))
    out = np.empty_like(p)
    out[:, 0] = p[:, 0] * POS_SCALE
    out[:, 1] = p[:, 1] * POS_SCALE
    out[:, 2] = geo.wrap_angle(p[:, 2] * ANG_SCALE)
    return out


def forward_diffuse(x0, t, eps, schedule: NoiseSchedule):
    """Noisy sample at step t (1-based) for normalized poses x0."""
    t = np.atleast_1d(np.asarray(t, dtype=int))
    if np.any(t < 1) or np.any(t > schedule.n_steps):
        raise ValueError("t must lie in [1, T]")
    ab = schedule.alpha_bars[t][:, None]
    return np.sqrt(ab) * np.atleast_2d(x0) + np.sqrt(1.0 - ab) * np.atleast_2d(eps)


@dataclass
class TrainConfig:
    epochs: int = 500
    batch_size: int = 64
    lr: float = 1e-3
    lr_step: int = 100
    lr_gamma: float = 0.95
    patience: int = 200
    holdout_frac: float = 0.1
    loss_weights: tuple = (1.0, 1.0, 0.1)
    n_steps: int = 100
    beta_start: float = 1e-3
    beta_end: float = 0.1
    emb_dim: int = 16
    hidden: int = 128
    dtype: str = "float64"

    def schedule(self) -> NoiseSchedule:
        return NoiseSchedule(self.n_steps, self.beta_start, self.beta_end)


@dataclass
class DenoiserParams:
    net: DenoiserNet
    schedule: NoiseSchedule
    loss_history: np.ndarray
    meta: dict


def train_denoiser(poses, observations, config: TrainConfig, rng, verbose: bool = False) -> DenoiserParams:
    """Fit the noise predictor on (relative pose, observation) pairs.

    Deterministic for a fixed generator state. Early stopping monitors the
    weighted MSE on a held-out split with fixed (t, eps) draws; the best
    weights are restored at the end.
    """
    poses = np.asarray(poses, dtype=float)
    observations = np.asarray(observations, dtype=float)
    if len(poses) == 0:
        raise ValueError("empty training set")
    schedule = config.schedule()
    dtype = np.dtype(config.dtype)
    x0 = normalize_pose(poses).astype(dtype)
    obs = observations.astype(dtype)
    w = np.asarray(config.loss_weights, dtype=dtype)

    net = DenoiserNet(obs.shape[1], config.hidden, config.emb_dim, rng=rng, dtype=dtype)
    opt = Adam(net.parameters(), lr=config.lr)

    perm = rng.permutation(len(x0))
    n_hold = int(round(config.holdout_frac * len(x0)))
    hold, train = perm[:n_hold], perm[n_hold:]
    if len(train) == 0:
        train, hold = perm, perm[:0]
    t_hold = rng.integers(1, schedule.n_steps + 1, size=len(hold))
    eps_hold = rng.standard_normal((len(hold), 3)).astype(dtype)
    if len(hold):
        xh = forward_diffuse(x0[hold], t_hold, eps_hold, schedule).astype(dtype)
        inp_hold = np.concatenate(
            [xh, timestep_embedding(t_hold, schedule.n_steps, config.emb_dim).astype(dtype), obs[hold]], axis=1
        )

    history = []
    best_loss, best_params, best_epoch = np.inf, net.copy_parameters(), -1
    n_train = len(train)
    batches = max(n_train // config.batch_size, 1)
    t_start = time.time()
    for epoch in range(config.epochs):
        opt.lr = config.lr * config.lr_gamma ** (epoch // config.lr_step)
        order = train[rng.permutation(n_train)]
        epoch_loss = 0.0
        for b in range(batches):
            idx = order[b * config.batch_size : (b + 1) * config.batch_size]
            t = rng.integers(1, schedule.n_steps + 1, size=len(idx))
            eps = rng.standard_normal((len(idx), 3)).astype(dtype)
            xt = forward_diffuse(x0[idx], t, eps, schedule).astype(dtype)
            inp = np.concatenate(
                [xt, timestep_embedding(t, schedule.n_steps, config.emb_dim).astype(dtype), obs[idx]], axis=1
            )
            pred, acts = net.forward(inp, cache=True)
            loss, dpred = weighted_mse_loss(pred, eps, w)
            if not np.isfinite(loss):
                raise TrainingError(f"non-finite loss at epoch {epoch}, batch {b}: {loss}")
            grads = net.backward(acts, dpred)
            opt.step(net.parameters(), grads)
            epoch_loss += loss
        epoch_loss /= batches

        if len(hold):
            pred_h = net.forward(inp_hold)
            monitor, _ = weighted_mse_loss(pred_h, eps_hold, w)
        else:
            monitor = epoch_loss
        history.append((epoch_loss, monitor))
        if monitor < best_loss:
            best_loss, best_params, best_epoch = monitor, net.copy_parameters(), epoch
        if epoch - best_epoch >= config.patience:
            break
        if verbose and (epoch % 50 == 0 or epoch == config.epochs - 1):
            print(f"  epoch {epoch:4d}  train {epoch_loss:.4f}  holdout {monitor:.4f}")

    net.set_parameters(best_params)
    meta = {
        "version": CHECKPOINT_VERSION,
        "n_obs": int(obs.shape[1]),
        "hidden": config.hidden,
        "emb_dim": config.emb_dim,
        "n_steps": schedule.n_steps,
        "beta_start": schedule.beta_start,
        "beta_end": schedule.beta_end,
        "terminal_alpha_bar": schedule.terminal_alpha_bar,
        "pos_scale": POS_SCALE,
        "ang_scale": ANG_SCALE,
        "loss_weights": list(map(float, config.loss_weights)),
        "epochs_run": len(history),
        "best_epoch": best_epoch,
        "best_holdout_loss": float(best_loss),
        "train_seconds": time.time() - t_start,
        "dtype": config.dtype,
    }
    return DenoiserParams(net=net, schedule=schedule, loss_history=np.asarray(history), meta=meta)


def ddim_timesteps(n_steps: int, s: int) -> np.ndarray:
    """S strictly increasing timesteps from 1 to T (inclusive)."""
    if s > n_steps:
        raise ValueError("S must be <= T")
    if s == 1:
        return np.array([n_steps], dtype=int)
    return np.rint(1 + (n_steps - 1) * np.arange(s) / (s - 1)).astype(int)


def ddim_steps(predict_fn, schedule: NoiseSchedule, s: int, eta: float, n: int, rng, dim: int = 3):
    """Generic DDIM chain: predict_fn(x, t_int) -> predicted noise.

    Returns samples in normalized coordinates, shape (n, dim).
    """
    taus = ddim_timesteps(schedule.n_steps, s)
    ab = schedule.alpha_bars
    x = rng.standard_normal((n, dim))
    for i in range(len(taus) - 1, -1, -1):
        t = int(taus[i])
        t_prev = int(taus[i - 1]) if i > 0 else 0
        ab_t, ab_prev = ab[t], ab[t_prev]
        eps_hat = predict_fn(x, t)
        x0_hat = (x - np.sqrt(1.0 - ab_t) * eps_hat) / np.sqrt(ab_t)
        sigma = eta * np.sqrt((1.0 - ab_prev) / (1.0 - ab_t) * (1.0 - ab_t / ab_prev))
        resid = np.sqrt(max(1.0 - ab_prev - sigma**2, 0.0))
        x = np.sqrt(ab_prev) * x0_hat + resid * eps_hat
        if eta > 0 and sigma > 0:
            x = x + sigma * rng.standard_normal(x.shape)
    return x


def make_conditioned_predictor(net: DenoiserNet, obs, n_steps: int):
    """Closure predicting noise for a fixed observation.

    The observation block of the first layer is folded into a constant,
    so each step only multiplies the pose and timestep-embedding columns.
    """
    dtype = net.dtype
    z = np.asarray(obs, dtype=dtype)
    d_head = 3 + net.emb_dim
    w1_head = net.weights[0][:d_head]
    z_const = z @ net.weights[0][d_head:] + net.biases[0]
    emb_cache = {}

    def predict(x, t):
        if t not in emb_cache:
            emb_cache[t] = timestep_embedding(t, n_steps, net.emb_dim).astype(dtype)
        emb = emb_cache[t]
        head = np.concatenate([x.astype(dtype), np.broadcast_to(emb, (len(x), net.emb_dim))], axis=1)
        h = np.maximum(head @ w1_head + z_const, 0.0)
        for w, b in zip(net.weights[1:-1], net.biases[1:-1]):
            h = np.maximum(h @ w + b, 0.0)
        return (h @ net.weights[-1] + net.biases[-1]).astype(float)

    return predict


def ddim_sample(params: DenoiserParams, obs, s: int = 80, eta: float = 0.2, n: int = 100, rng=None):
    """Draw n pose hypotheses (sensor frame) conditioned on an observation."""
    if rng is None:
        rng = np.random.default_rng()
    predict = make_conditioned_predictor(params.net, obs, params.schedule.n_steps)
    x = ddim_steps(predict, params.schedule, s, eta, n, rng)
    return denormalize_pose(x)


def enforce_constraints(poses, grid, ee, delta=PROJECTION_DELTA, redraw=None, rng=None):
    """Project hypotheses onto the contact manifold (sensor at the origin).

    Failed projections are replaced once from ``redraw(count)`` if given,
    then dropped. Returns (valid poses, dropped count).
    """
    origin = np.zeros(3)
    out, ok = project_poses(poses, origin, grid, ee, delta, rng)
    if not ok.all() and redraw is not None:
        fresh = redraw(int((~ok).sum()))
        out2, ok2 = project_poses(fresh, origin, grid, ee, delta, rng)
        out[~ok] = out2
        ok[~ok] = ok2
    return out[ok], int((~ok).sum())


def sample_hypotheses(
    params: DenoiserParams,
    obs,
    grid,
    ee,
    n: int = 100,
    s: int = 80,
    eta: float = 0.2,
    delta=PROJECTION_DELTA,
    rng=None,
    project: bool = True,
):
    """DDIM sampling plus constraint enforcement; the full inverse model."""
    poses = ddim_sample(params, obs, s=s, eta=eta, n=n, rng=rng)
    if not project:
        return poses, 0
    return enforce_constraints(
        poses, grid, ee, delta, redraw=lambda k: ddim_sample(params, obs, s=s, eta=eta, n=k, rng=rng), rng=rng
    )


# ---------------------------------------------------------------------------
# Checkpoints: binary weight blob + JSON hyperparameter sidecar
# ---------------------------------------------------------------------------

def save_checkpoint(params: DenoiserParams, path) -> None:
    path = Path(path)
    arrays = {f"w{i}": w for i, w in enumerate(params.net.weights)}
    arrays.update({f"b{i}": b for i, b in enumerate(params.net.biases)})
    arrays["loss_history"] = params.loss_history
    np.savez(path.with_suffix(".npz"), **arrays)
    path.with_suffix(".json").write_text(json.dumps(params.meta, indent=2))


def load_checkpoint(path) -> DenoiserParams:
    path = Path(path)
    meta = json.loads(path.with_suffix(".json").read_text())
    if meta.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version: {meta.get('version')}")
    blob = np.load(path.with_suffix(".npz"))
    net = DenoiserNet(meta["n_obs"], meta["hidden"], meta["emb_dim"], dtype=np.dtype(meta["dtype"]))
    n_layers = len(net.weights)
    net.weights = [blob[f"w{i}"] for i in range(n_layers)]
    net.biases = [blob[f"b{i}"] for i in range(n_layers)]
    schedule = NoiseSchedule(meta["n_steps"], meta["beta_start"], meta["beta_end"])
    return DenoiserParams(net=net, schedule=schedule, loss_history=blob["loss_history"], meta=meta)
