"""Task datasets and the primal/dual within-task objectives."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .losses import LossKind, loss_conjugate, loss_value

__all__ = [
    "TaskDataset",
    "TaskSplit",
    "as_bias",
    "empirical_risk",
    "regularized_empirical_risk",
    "dual_objective",
    "dual_objective_scaled",
    "primal_from_dual",
]


def _check_lambda(lam) -> float:
    lam = float(lam)
    if not lam > 0:
        raise ValueError(f"lambda must be positive, got {lam}")
    return lam


def as_bias(h, d: int) -> np.ndarray:
    """Validate a bias vector of length ``d``."""
    h = np.asarray(h, dtype=np.float64)
    if h.shape != (d,):
        raise ValueError(f"bias must have shape ({d},), got {h.shape}")
    if not np.all(np.isfinite(h)):
        raise ValueError("bias must be finite")
    return h


@dataclass(frozen=True, eq=False)
class TaskDataset:
    """Labelled examples of one task.

    ``radius`` is the largest row norm of ``X`` unless given explicitly, in
    which case every row must fit in the ball of that radius.
    """

    X: np.ndarray
    y: np.ndarray
    loss: LossKind
    radius: float = field(default=None)

    def __post_init__(self):
        X = np.array(self.X, dtype=np.float64)
        y = np.array(self.y, dtype=np.float64).ravel()
        if X.ndim != 2:
            raise ValueError(f"X must be 2-D, got shape {X.shape}")
        n, d = X.shape
        if n < 1 or d < 1:
            raise ValueError(f"need n >= 1 and d >= 1, got {X.shape}")
        if y.shape != (n,):
            raise ValueError(f"y has {y.size} labels for {n} rows")
        if not np.all(np.isfinite(X)):
            raise ValueError("inputs must be finite")
        loss = LossKind.coerce(self.loss)
        loss.check_labels(y)
        norms = np.linalg.norm(X, axis=1)
        radius = float(norms.max()) if self.radius is None else float(self.radius)
        if np.any(norms > radius * (1 + 1e-12) + 1e-300):
            raise ValueError(f"row norm {norms.max():.6g} exceeds radius bound {radius:.6g}")
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "loss", loss)
        object.__setattr__(self, "radius", radius)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    def _check_w(self, w) -> np.ndarray:
        w = np.asarray(w, dtype=np.float64)
        if w.shape != (self.d,):
            raise ValueError(f"expected vector of shape ({self.d},), got {w.shape}")
        return w


@dataclass(frozen=True, eq=False)
class TaskSplit:
    train: TaskDataset
    test: TaskDataset

    def __post_init__(self):
        if self.train.d != self.test.d:
            raise ValueError("train and test dimensions differ")
        if self.train.loss is not self.test.loss:
            raise ValueError("train and test use different losses")

    @property
    def d(self) -> int:
        return self.train.d

    @property
    def loss(self) -> LossKind:
        return self.train.loss


def empirical_risk(data: TaskDataset, w) -> float:
    w = data._check_w(w)
    return float(np.mean(loss_value(data.loss, data.X @ w, data.y)))


def regularized_empirical_risk(data: TaskDataset, lam, h, w) -> float:
    lam = _check_lambda(lam)
    w = data._check_w(w)
    h = as_bias(h, data.d)
    diff = w - h
    return empirical_risk(data, w) + 0.5 * lam * float(diff @ diff)


def dual_objective_scaled(data: TaskDataset, lam, h, v) -> float:
    """Dual objective evaluated at ``u = v / n``.

    Taking the per-example conjugate arguments ``v = n u`` directly avoids the
    round trip ``n * (v / n)`` that can push a boundary point out of the
    conjugate's domain.
    """
    lam = _check_lambda(lam)
    h = as_bias(h, data.d)
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (data.n,):
        raise ValueError(f"dual vector must have shape ({data.n},), got {v.shape}")
    conj = np.asarray(loss_conjugate(data.loss, v, data.y))
    if np.any(np.isinf(conj)):
        return np.inf
    n = data.n
    xtu = data.X.T @ v / n
    return float(conj.mean() + (xtu @ xtu) / (2.0 * lam) - h @ xtu)


def dual_objective(data: TaskDataset, lam, h, u) -> float:
    """``g*(u) + ||X^T u||^2 / (2 lam) - <X h, u>`` with ``g*(u) = mean_k l_k^*(n u_k)``."""
    u = np.asarray(u, dtype=np.float64)
    return dual_objective_scaled(data, lam, h, data.n * u)


def primal_from_dual(data: TaskDataset, lam, h, u) -> np.ndarray:
    lam = _check_lambda(lam)
    h = as_bias(h, data.d)
    u = np.asarray(u, dtype=np.float64)
    if u.shape != (data.n,):
        raise ValueError(f"dual vector must have shape ({data.n},), got {u.shape}")
    return h - data.X.T @ u / lam
