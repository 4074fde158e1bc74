"""Noise-prediction network: a small fully connected MLP with manual backprop.

Input is the concatenation [noisy pose (3) | timestep embedding | taxel
observation]; output is the predicted noise (3,). Three hidden ReLU layers
of 128 units. Training uses Adam with a stepped learning-rate decay. The
implementation is plain numpy so that training is deterministic for a fixed
seed and gradients can be verified against finite differences.
"""

from __future__ import annotations

import numpy as np

POSE_DIM = 3


class TrainingError(RuntimeError):
    """Raised when training diverges (non-finite loss)."""


def timestep_embedding(t, t_max: int, dim: int = 16):
    """Sinusoidal features of t/t_max with octave-spaced frequencies."""
    t = np.atleast_1d(np.asarray(t, dtype=np.float64))
    half = dim // 2
    freqs = 2.0 ** np.arange(half)
    phase = 2.0 * np.pi * freqs[None, :] * (t[:, None] / float(t_max))
    return np.concatenate([np.sin(phase), np.cos(phase)], axis=1)


class DenoiserNet:
    """input -> 128 -> 128 -> 128 -> 3, ReLU between layers."""

    def __init__(self, n_obs: int, hidden: int = 128, emb_dim: int = 16, rng=None, dtype=np.float64):
        self.n_obs = int(n_obs)
        self.hidden = int(hidden)
        self.emb_dim = int(emb_dim)
        self.dtype = np.dtype(dtype)
        sizes = [POSE_DIM + self.emb_dim + self.n_obs, hidden, hidden, hidden, POSE_DIM]
        if rng is None:
            rng = np.random.default_rng(0)
        self.weights = [
            (rng.standard_normal((a, b)) * np.sqrt(2.0 / a)).astype(self.dtype)
            for a, b in zip(sizes[:-1], sizes[1:])
        ]
        self.biases = [np.zeros(b, dtype=self.dtype) for b in sizes[1:]]

    @property
    def input_dim(self) -> int:
        return POSE_DIM + self.emb_dim + self.n_obs

    def parameters(self):
        return self.weights + self.biases

    def set_parameters(self, params):
        k = len(self.weights)
        self.weights = [np.asarray(p, dtype=self.dtype) for p in params[:k]]
        self.biases = [np.asarray(p, dtype=self.dtype) for p in params[k:]]

    def copy_parameters(self):
        return [p.copy() for p in self.parameters()]

    def forward(self, x, cache: bool = False):
        """x: (B, input_dim). Returns output or (output, activations)."""
        acts = [np.asarray(x, dtype=self.dtype)]
        h = acts[0]
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ w + b
            if i < len(self.weights) - 1:
                h = np.maximum(h, 0.0)
            acts.append(h)
        if cache:
            return acts[-1], acts
        return acts[-1]

    def backward(self, acts, dout):
        """Gradients of all parameters given d(loss)/d(output)."""
        gw = [None] * len(self.weights)
        gb = [None] * len(self.biases)
        delta = np.asarray(dout, dtype=self.dtype)
        for i in range(len(self.weights) - 1, -1, -1):
            inp = acts[i]
            gw[i] = inp.T @ delta
            gb[i] = delta.sum(axis=0)
            if i > 0:
                delta = delta @ self.weights[i].T
                delta = delta * (acts[i] > 0)  # ReLU mask (acts stores post-ReLU)
        return gw + gb


def weighted_mse_loss(pred, target, channel_weights):
    """Mean over the batch of ||w * (pred - target)||^2 and its pred-gradient."""
    w2 = np.asarray(channel_weights, dtype=pred.dtype) ** 2
    diff = pred - target
    loss = float(np.mean(np.sum(w2 * diff * diff, axis=1)))
    dpred = 2.0 * w2 * diff / len(pred)
    return loss, dpred


class Adam:
    def __init__(self, params, lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        corr1 = 1.0 - b1**self.t
        corr2 = 1.0 - b2**self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            p -= self.lr * (m / corr1) / (np.sqrt(v / corr2) + self.eps)
