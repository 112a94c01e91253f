"""Online estimation of the shared bias by SGD over a stream of tasks."""

from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np
from sklearn.exceptions import ConvergenceWarning

from .erm import exact_meta_gradient, fista_batch
from .task_data import TaskDataset, as_bias
from .within_task import approx_meta_gradient, sgd_batch, sgd_inner

__all__ = ["GradientMode", "MetaConfig", "MetaRun", "meta_step", "meta_train", "BiasGrid"]


class GradientMode(str, enum.Enum):
    APPROX_SGD = "sgd"
    EXACT_ERM = "erm"


@dataclass(frozen=True)
class MetaConfig:
    lam: float
    gamma: float
    gradient_mode: GradientMode = GradientMode.APPROX_SGD
    max_iters: int = 2000
    gap_tolerance: float = 1e-6

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError(f"lam must be positive, got {self.lam}")
        if not self.gamma >= 0:
            raise ValueError(f"gamma must be non-negative, got {self.gamma}")
        object.__setattr__(self, "gradient_mode", GradientMode(self.gradient_mode))


@dataclass(frozen=True, eq=False)
class MetaRun:
    bias_iterates: np.ndarray  # (T + 1, d)
    meta_gradients: np.ndarray  # (T, d)
    running_averages: Optional[np.ndarray] = None  # (T, d), row t-1 is the mean of h^(1..t)

    @property
    def T(self) -> int:
        return self.meta_gradients.shape[0]

    @property
    def averaged_bias(self) -> np.ndarray:
        return self.bias_iterates[:-1].mean(axis=0)

    @property
    def last_bias(self) -> np.ndarray:
        return self.bias_iterates[-1]


def meta_step(h, task: TaskDataset, cfg: MetaConfig):
    """One update ``h - gamma * grad``; returns ``(h_next, grad)``."""
    h = as_bias(h, task.d)
    if cfg.gradient_mode is GradientMode.APPROX_SGD:
        run = sgd_inner(task, cfg.lam, h)
        grad = approx_meta_gradient(run, cfg.lam, h)
    else:
        grad = exact_meta_gradient(
            task, cfg.lam, h, max_iters=cfg.max_iters, gap_tolerance=cfg.gap_tolerance
        )
    return h - cfg.gamma * grad, grad


def meta_train(tasks: Iterable[TaskDataset], cfg: MetaConfig, keep_running_averages: bool = True) -> MetaRun:
    """Fold :func:`meta_step` over ``tasks`` starting from ``h = 0``."""
    tasks = list(tasks)
    if not tasks:
        raise ValueError("empty task stream")
    d, loss = tasks[0].d, tasks[0].loss
    for i, task in enumerate(tasks):
        if task.d != d or task.loss is not loss:
            raise ValueError(f"task {i} has d={task.d}, loss={task.loss.value}; expected d={d}, loss={loss.value}")
    h = np.zeros(d)
    biases = [h]
    grads = []
    for task in tasks:
        h, g = meta_step(h, task, cfg)
        biases.append(h)
        grads.append(g)
    biases = np.array(biases)
    averages = None
    if keep_running_averages:
        averages = np.cumsum(biases[:-1], axis=0) / np.arange(1, len(tasks) + 1)[:, None]
    return MetaRun(bias_iterates=biases, meta_gradients=np.array(grads), running_averages=averages)


class BiasGrid:
    """Independent meta-learners, one per ``(lam, gamma)`` cell, updated together.

    Every cell sees the same task stream; updates are vectorised across cells.
    Cell ``c`` follows exactly the recursion of :func:`meta_train` with
    ``MetaConfig(lams[c], gammas[c], mode)``.
    """

    def __init__(self, lams, gammas, d, gradient_mode=GradientMode.APPROX_SGD,
                 max_iters=2000, gap_tolerance=1e-6):
        self.lams = np.asarray(lams, dtype=np.float64)
        self.gammas = np.asarray(gammas, dtype=np.float64)
        if self.lams.shape != self.gammas.shape or self.lams.ndim != 1:
            raise ValueError("lams and gammas must be 1-D arrays of equal length")
        self.mode = GradientMode(gradient_mode)
        self.max_iters = max_iters
        self.gap_tolerance = gap_tolerance
        self.current = np.zeros((self.lams.size, d))
        self._sum = np.zeros_like(self.current)
        self.t = 0
        self.n_unconverged = 0

    def update(self, task: TaskDataset) -> np.ndarray:
        """Consume one task; returns the meta-gradients used, shape ``(cells, d)``."""
        H = self.current
        self._sum += H
        self.t += 1
        if self.mode is GradientMode.APPROX_SGD:
            _, last = sgd_batch(task.X, task.y, task.loss, self.lams, H)
        else:
            C = self.lams.size
            last, _, _, _, conv = fista_batch(
                np.broadcast_to(task.X, (C,) + task.X.shape),
                np.broadcast_to(task.y, (C,) + task.y.shape),
                task.loss, self.lams, H, radius=task.radius,
                max_iters=self.max_iters, gap_tolerance=self.gap_tolerance,
            )
            if not conv.all():
                self.n_unconverged += int((~conv).sum())
                warnings.warn(f"{int((~conv).sum())} ERM solves did not converge", ConvergenceWarning, stacklevel=2)
        grad = -self.lams[:, None] * (last - H)
        self.current = H - self.gammas[:, None] * grad
        return grad

    @property
    def averaged(self) -> np.ndarray:
        """Mean of ``h^(1..t)`` per cell (zeros before any task)."""
        if self.t == 0:
            return np.zeros_like(self.current)
        return self._sum / self.t
