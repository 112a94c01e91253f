"""scikit-learn compatible front ends.

``BiasedSGD`` is the within-task learner for one dataset; ``OnlineBiasLearner``
learns its bias from a stream of tasks and hands out configured ``BiasedSGD``
instances.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .erm import fista_solve
from .losses import LossKind
from .meta import GradientMode, MetaConfig, meta_step
from .task_data import TaskDataset, TaskSplit, as_bias, empirical_risk
from .within_task import sgd_inner

__all__ = ["BiasedSGD", "OnlineBiasLearner"]


class BiasedSGD(BaseEstimator):
    """Linear model trained by one pass of SGD on ``risk + lam/2 ||w - bias||^2``.

    Parameters
    ----------
    lam : float
        Regularisation strength.
    bias : array-like of shape (n_features,), optional
        Centre of the regulariser; zeros when omitted.
    loss : {"absolute", "hinge"}
    solver : {"sgd", "erm"}
        ``"sgd"`` keeps the averaged SGD iterate, ``"erm"`` the FISTA minimiser.
    """

    def __init__(self, lam=1.0, bias=None, loss="absolute", solver="sgd",
                 max_iters=2000, gap_tolerance=1e-6):
        self.lam = lam
        self.bias = bias
        self.loss = loss
        self.solver = solver
        self.max_iters = max_iters
        self.gap_tolerance = gap_tolerance

    def fit(self, X, y):
        X, y = check_X_y(X, y, y_numeric=True, dtype=np.float64)
        data = TaskDataset(X, y, LossKind.coerce(self.loss))
        h = np.zeros(data.d) if self.bias is None else as_bias(self.bias, data.d)
        if self.solver == "sgd":
            run = sgd_inner(data, self.lam, h)
            self.coef_ = run.averaged
            self.last_iterate_ = run.last
        elif self.solver == "erm":
            sol = fista_solve(data, self.lam, h, self.max_iters, self.gap_tolerance)
            self.coef_ = sol.w
            self.dual_coef_ = sol.u
            self.duality_gap_ = sol.gap
            self.converged_ = sol.converged
        else:
            raise ValueError(f"unknown solver {self.solver!r}")
        self.n_features_in_ = data.d
        return self

    def decision_function(self, X):
        check_is_fitted(self, "coef_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, expected {self.n_features_in_}")
        return X @ self.coef_

    def predict(self, X):
        scores = self.decision_function(X)
        if LossKind.coerce(self.loss) is LossKind.HINGE:
            return np.where(scores >= 0, 1.0, -1.0)
        return scores

    def score(self, X, y):
        """Negative mean loss on ``(X, y)`` (higher is better)."""
        check_is_fitted(self, "coef_")
        X, y = check_X_y(X, y, y_numeric=True, dtype=np.float64)
        return -empirical_risk(TaskDataset(X, y, LossKind.coerce(self.loss)), self.coef_)


def _as_task(task, loss) -> TaskDataset:
    if isinstance(task, TaskSplit):
        return task.train
    if isinstance(task, TaskDataset):
        return task
    X, y = task
    X, y = check_X_y(X, y, y_numeric=True, dtype=np.float64)
    return TaskDataset(X, y, loss)


class OnlineBiasLearner(BaseEstimator):
    """Meta-learns the regularisation bias by SGD over a stream of tasks.

    Tasks are ``(X, y)`` pairs, :class:`TaskDataset` or :class:`TaskSplit`
    objects (the training part is used). ``bias_`` is the running average of
    the bias iterates, or the newest iterate with ``bias_estimate="last"``.
    """

    def __init__(self, lam=1.0, gamma=1.0, loss="absolute", gradient_mode="sgd",
                 bias_estimate="average", max_iters=2000, gap_tolerance=1e-6):
        self.lam = lam
        self.gamma = gamma
        self.loss = loss
        self.gradient_mode = gradient_mode
        self.bias_estimate = bias_estimate
        self.max_iters = max_iters
        self.gap_tolerance = gap_tolerance

    def _config(self) -> MetaConfig:
        return MetaConfig(self.lam, self.gamma, GradientMode(self.gradient_mode),
                          self.max_iters, self.gap_tolerance)

    def partial_fit(self, X, y):
        """Consume one task."""
        task = _as_task((X, y), LossKind.coerce(self.loss))
        return self._consume(task)

    def _consume(self, task: TaskDataset):
        if not hasattr(self, "current_bias_"):
            self.n_features_in_ = task.d
            self.current_bias_ = np.zeros(task.d)
            self._bias_sum = np.zeros(task.d)
            self.n_tasks_ = 0
        elif task.d != self.n_features_in_:
            raise ValueError(f"task has {task.d} features, expected {self.n_features_in_}")
        self._bias_sum = self._bias_sum + self.current_bias_
        self.n_tasks_ += 1
        self.current_bias_, self.last_meta_gradient_ = meta_step(self.current_bias_, task, self._config())
        return self

    def fit(self, tasks, y=None):
        for attr in ("current_bias_", "_bias_sum", "n_tasks_", "n_features_in_", "last_meta_gradient_"):
            self.__dict__.pop(attr, None)
        loss = LossKind.coerce(self.loss)
        for task in tasks:
            self._consume(_as_task(task, loss))
        if not hasattr(self, "current_bias_"):
            raise ValueError("no tasks given")
        return self

    @property
    def bias_(self) -> np.ndarray:
        check_is_fitted(self, "current_bias_")
        if self.bias_estimate == "last":
            return self.current_bias_
        if self.bias_estimate != "average":
            raise ValueError("bias_estimate must be 'average' or 'last'")
        return self._bias_sum / self.n_tasks_

    def make_task_estimator(self, solver="sgd") -> BiasedSGD:
        return BiasedSGD(lam=self.lam, bias=self.bias_.copy(), loss=self.loss, solver=solver,
                         max_iters=self.max_iters, gap_tolerance=self.gap_tolerance)

    def transform(self, tasks, solver="sgd"):
        """Within-task weight vectors obtained with the learned bias, one row per task."""
        loss = LossKind.coerce(self.loss)
        rows = []
        for task in tasks:
            data = _as_task(task, loss)
            rows.append(self.make_task_estimator(solver).fit(data.X, data.y).coef_)
        return np.array(rows)

    def score(self, splits, solver="sgd"):
        """Negative mean test-split error over ``TaskSplit`` objects."""
        errs = []
        for s in splits:
            est = self.make_task_estimator(solver).fit(s.train.X, s.train.y)
            errs.append(empirical_risk(s.test, est.coef_))
        return -float(np.mean(errs))
