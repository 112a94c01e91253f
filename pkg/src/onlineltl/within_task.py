"""Biased-regularised online SGD for a single task and its certificates.

The primal solver :func:`sgd_inner` and the dual coordinate solver
:func:`dual_coordinate_inner` generate the same primal iterates; the second
additionally carries the growing dual vector whose last value certifies the
quality of the approximate meta-gradient.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .losses import LossKind, loss_subgradient, loss_value, pick_subgradient, select_subgradient
from .task_data import (
    TaskDataset,
    _check_lambda,
    as_bias,
    dual_objective_scaled,
    regularized_empirical_risk,
)

__all__ = [
    "InnerRun",
    "sgd_inner",
    "dual_coordinate_inner",
    "sgd_batch",
    "approx_meta_gradient",
    "regret_bound",
    "epsilon_certificate",
    "inner_regret_gap",
]


@dataclass(frozen=True, eq=False)
class InnerRun:
    """Trajectory summary of one within-task run.

    ``iterates`` (shape ``(n + 1, d)``) is only kept when requested; ``first``,
    ``averaged`` and ``last`` are always available.
    """

    first: np.ndarray
    averaged: np.ndarray
    last: np.ndarray
    step_losses: np.ndarray
    dual_iterate: Optional[np.ndarray] = None
    iterates: Optional[np.ndarray] = None

    @property
    def n(self) -> int:
        return self.step_losses.shape[0]


def sgd_inner(data: TaskDataset, lam, h, keep_iterates: bool = False) -> InnerRun:
    """Online subgradient descent on the biased regularised risk, one pass in stored order.

    Step ``k`` uses ``gamma_k = 1 / (k lam)`` and the subgradient
    ``x_k u_k + lam (w_k - h)`` where ``u_k`` is chosen by :func:`pick_subgradient`.
    The returned ``dual_iterate`` holds the chosen ``u_k``.
    """
    lam = _check_lambda(lam)
    h = as_bias(h, data.d)
    n = data.n
    w = h.copy()
    total = np.zeros_like(h)
    losses = np.empty(n)
    chosen = np.empty(n)
    path = [w.copy()] if keep_iterates else None
    for k in range(1, n + 1):
        x = data.X[k - 1]
        y = data.y[k - 1]
        yhat = float(x @ w)
        diff = w - h
        losses[k - 1] = loss_value(data.loss, yhat, y) + 0.5 * lam * float(diff @ diff)
        u = pick_subgradient(loss_subgradient(data.loss, yhat, y))
        chosen[k - 1] = u
        total += w
        s = x * u + lam * diff
        w = w - s / (k * lam)
        if keep_iterates:
            path.append(w.copy())
    return InnerRun(
        first=h.copy(),
        averaged=total / n,
        last=w,
        step_losses=losses,
        dual_iterate=chosen,
        iterates=np.array(path) if keep_iterates else None,
    )


def dual_coordinate_inner(data: TaskDataset, lam, h, keep_iterates: bool = False) -> InnerRun:
    """Primal-dual version: append one dual coordinate per example, recover the primal by KKT.

    After ``k`` examples the primal point is ``h - X_k^T u / (k lam)``, recomputed
    from the full dual vector at every step.
    """
    lam = _check_lambda(lam)
    h = as_bias(h, data.d)
    n = data.n
    u = np.zeros(n)
    w = h.copy()
    total = np.zeros_like(h)
    losses = np.empty(n)
    path = [w.copy()] if keep_iterates else None
    for k in range(1, n + 1):
        x = data.X[k - 1]
        y = data.y[k - 1]
        yhat = float(x @ w)
        diff = w - h
        losses[k - 1] = loss_value(data.loss, yhat, y) + 0.5 * lam * float(diff @ diff)
        u[k - 1] = pick_subgradient(loss_subgradient(data.loss, yhat, y))
        total += w
        w = h - data.X[:k].T @ u[:k] / (k * lam)
        if keep_iterates:
            path.append(w.copy())
    return InnerRun(
        first=h.copy(),
        averaged=total / n,
        last=w,
        step_losses=losses,
        dual_iterate=u,
        iterates=np.array(path) if keep_iterates else None,
    )


def sgd_batch(X, Y, kind, lam, H):
    """Run :func:`sgd_inner` on many problems at once.

    Shapes broadcast over leading batch axes: ``X`` is ``(..., n, d)``, ``Y`` is
    ``(..., n)``, ``lam`` broadcasts against the batch shape and ``H`` against
    ``(..., d)``. Labels are not validated here.

    Returns
    -------
    averaged, last : ndarray
        Averaged and last iterates, shape ``(..., d)``.
    """
    kind = LossKind.coerce(kind)
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    lam = np.asarray(lam, dtype=np.float64)[..., None]
    H = np.asarray(H, dtype=np.float64)
    n = X.shape[-2]
    w = H + np.zeros(np.broadcast_shapes(H.shape, X.shape[:-2] + X.shape[-1:], lam.shape))
    total = np.zeros_like(w)
    for k in range(1, n + 1):
        x = X[..., k - 1, :]
        total += w
        yhat = np.sum(x * w, axis=-1)
        u = select_subgradient(kind, yhat, Y[..., k - 1])
        s = x * u[..., None] + lam * (w - H)
        w = w - s / (k * lam)
    return total / n, w


def approx_meta_gradient(run: InnerRun, lam, h) -> np.ndarray:
    """``-lam (w_last - h)``: an epsilon-subgradient of the meta-objective at ``h``."""
    lam = _check_lambda(lam)
    h = as_bias(h, run.last.shape[0])
    return -lam * (run.last - h)


def regret_bound(data: TaskDataset, lam) -> float:
    """``2 R^2 L^2 (log n + 1) / (lam n)`` for the stored radius and the loss' Lipschitz constant."""
    lam = _check_lambda(lam)
    L = data.loss.lipschitz
    return 2.0 * data.radius**2 * L**2 * (math.log(data.n) + 1.0) / (lam * data.n)


def _check_instance(run: InnerRun, data: TaskDataset, erm) -> None:
    if run.n != data.n or run.last.shape[0] != data.d:
        raise ValueError("inner run does not match the dataset")
    if erm.w.shape != (data.d,) or erm.u.shape != (data.n,):
        raise ValueError("ERM solution does not match the dataset")


def epsilon_certificate(run: InnerRun, data: TaskDataset, lam, h, erm) -> float:
    """Dual suboptimality bound of the scaled last dual iterate ``u_tilde / n``.

    Computed as ``Psi_h(u_tilde / n) + Phi_h(w_erm)``, which upper-bounds
    ``Psi_h(u_tilde / n) - min Psi_h`` because ``Phi_h(w_erm) >= min Phi_h = -min Psi_h``.
    """
    if run.dual_iterate is None:
        raise ValueError("inner run carries no dual iterate")
    _check_instance(run, data, erm)
    psi = dual_objective_scaled(data, lam, h, run.dual_iterate)
    return psi + regularized_empirical_risk(data, lam, h, erm.w)


def inner_regret_gap(run: InnerRun, data: TaskDataset, lam, h, erm) -> float:
    """Average paid regularised loss minus the regularised empirical risk at the ERM point."""
    _check_instance(run, data, erm)
    return float(np.mean(run.step_losses)) - regularized_empirical_risk(data, lam, h, erm.w)
