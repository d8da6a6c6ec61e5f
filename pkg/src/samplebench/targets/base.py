"""Target density interface: unnormalized log-density, score, and extras."""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from ..errors import UsageError


class NfeCounter:
    """Thread-safe count of target queries (one per point per fused call)."""

    def __init__(self):
        self._lock = threading.Lock()
        self._value = 0

    def add(self, n: int):
        with self._lock:
            self._value += int(n)

    @property
    def value(self) -> int:
        return self._value

    def reset(self):
        with self._lock:
            self._value = 0


@dataclass
class ModeModel:
    """Mode descriptors: per-sample probability over M disjoint mode cells."""

    n_modes: int
    prob: Callable[[np.ndarray], np.ndarray]  # (n, d) -> (n, M) rows summing to 1
    true_mode_probs: Optional[np.ndarray] = None


@dataclass
class TargetDensity:
    """Unnormalized density gamma with analytic score; batch-first evaluation.

    `log_unnorm` and `grad_log_unnorm` take (n, d) arrays.  `score_hvp`, when
    present, maps (x, v) to the Hessian-vector product of log gamma at x and
    lets the score participate in reverse-mode training.
    """

    dim: int
    log_unnorm: Callable[[np.ndarray], np.ndarray]
    grad_log_unnorm: Callable[[np.ndarray], np.ndarray]
    true_log_z: Optional[float] = None
    exact_sampler: Optional[Callable] = None  # (RngStream, n) -> (n, d)
    mode_model: Optional[ModeModel] = None
    score_hvp: Optional[Callable] = None  # (x, v) -> (n, d)
    name: str = ""
    nfe: NfeCounter = field(default_factory=NfeCounter)

    def _batch(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            x = x[None, :]
        if x.shape[-1] != self.dim:
            raise UsageError(f"point dimension {x.shape[-1]} != target dimension {self.dim}")
        if not np.all(np.isfinite(x)):
            raise UsageError("target evaluated at non-finite point")
        return x

    def log_density(self, x) -> np.ndarray:
        xb = self._batch(x)
        self.nfe.add(len(xb))
        out = self.log_unnorm(xb)
        return out[0] if np.ndim(x) == 1 else out

    def grad(self, x) -> np.ndarray:
        xb = self._batch(x)
        self.nfe.add(len(xb))
        out = self.grad_log_unnorm(xb)
        return out[0] if np.ndim(x) == 1 else out

    def logdensity_and_grad(self, x):
        """Fused value+gradient; counts a single query per point."""
        xb = self._batch(x)
        self.nfe.add(len(xb))
        vals = self.log_unnorm(xb)
        grads = self.grad_log_unnorm(xb)
        if np.ndim(x) == 1:
            return vals[0], grads[0]
        return vals, grads


def target_logdensity_and_grad(target: TargetDensity, x):
    """(log gamma(x), grad log gamma(x)) for a single point; one NFE."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise UsageError("target_logdensity_and_grad expects a single point")
    return target.logdensity_and_grad(x)
