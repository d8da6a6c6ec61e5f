"""Drift network: small MLP on (x, time embedding) plus score guidance.

The network computes f1(x, t) + f2(t) * score, where f1 is an MLP whose final
layer starts at zero and f2 is one learnable scalar per timestep initialized
to 1, so a fresh network outputs exactly the guided score.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import UsageError
from .rng import RngStream
from .tape import Var


def sinusoidal_embedding(n_positions: int, dim: int) -> np.ndarray:
    """Transformer-style sin/cos position table, one row per timestep index."""
    pos = np.arange(n_positions)[:, None]
    half = dim // 2
    freq = np.exp(-np.log(10000.0) * (np.arange(half)[None, :] / max(half, 1)))
    ang = pos * freq
    return np.concatenate([np.sin(ang), np.cos(ang)], axis=1)


@dataclass
class DriftNet:
    dim: int
    n_steps: int
    hidden_width: int = 64
    hidden_layers: int = 2
    time_embedding_dim: int = 64
    guidance: bool = True
    params: dict = field(default_factory=dict)
    emb_table: np.ndarray = None

    @classmethod
    def init(cls, dim, n_steps, rng: RngStream, hidden_width=64, hidden_layers=2,
             time_embedding_dim=64, guidance=True) -> "DriftNet":
        net = cls(dim, n_steps, hidden_width, hidden_layers, time_embedding_dim, guidance)
        net.emb_table = sinusoidal_embedding(n_steps + 1, time_embedding_dim)
        in_dim = dim + time_embedding_dim
        p = {}
        width = hidden_width
        for layer in range(hidden_layers):
            fan_in = in_dim if layer == 0 else width
            p[f"W{layer}"] = rng.normal((fan_in, width)) / np.sqrt(fan_in)
            p[f"b{layer}"] = np.zeros(width)
        # zero-initialized head keeps f1 identically zero at the start
        p["Wout"] = np.zeros((width, dim))
        p["bout"] = np.zeros(dim)
        p["f2"] = np.ones(n_steps + 1)
        net.params = p
        return net

    def step_index(self, t: float) -> int:
        if not 0.0 <= t <= 1.0:
            raise UsageError(f"time {t} outside [0, 1]")
        return int(round(t * self.n_steps))


def _tanh(v):
    return v.tanh() if isinstance(v, Var) else np.tanh(v)


def drift_forward(net: DriftNet, x, t: float, score=None, params=None):
    """Evaluate f1(x, t) + f2(t) * score (or f1 alone with guidance off).

    `x` / `score` / parameter values may be tape variables, in which case the
    result participates in reverse-mode differentiation.
    """
    p = net.params if params is None else params
    idx = net.step_index(t)
    single = not isinstance(x, Var) and np.ndim(x) == 1
    if single:
        x = np.asarray(x, dtype=float)[None, :]
        if score is not None and not isinstance(score, Var):
            score = np.asarray(score, dtype=float)[None, :]
    d = x.shape[-1]
    if d != net.dim:
        raise UsageError(f"input dimension {d} does not match network dimension {net.dim}")
    if net.guidance:
        if score is None:
            raise UsageError("guidance is enabled but no score was provided")
        if score.shape[-1] != net.dim:
            raise UsageError("score dimension does not match network dimension")

    emb = net.emb_table[idx : idx + 1]  # (1, temb), constant w.r.t. parameters
    W0, b0 = p["W0"], p["b0"]
    # split the first affine layer so the constant embedding never needs a tape node
    h = _tanh(x @ W0[: net.dim] + emb @ W0[net.dim :] + b0)
    for layer in range(1, net.hidden_layers):
        h = _tanh(h @ p[f"W{layer}"] + p[f"b{layer}"])
    f1 = h @ p["Wout"] + p["bout"]
    if net.guidance:
        out = f1 + score * p["f2"][idx]
    else:
        out = f1
    if single and not isinstance(out, Var):
        return out[0]
    return out
