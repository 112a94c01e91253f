"""Transfer-risk estimation, online hyperparameter selection and fixed-bias baselines."""

from __future__ import annotations

import csv
import enum
import math
import warnings
from dataclasses import dataclass, field
from typing import List, NamedTuple, Optional, Sequence

import numpy as np
from sklearn.exceptions import ConvergenceWarning

from .environments import TaskCollection
from .erm import fista_batch
from .losses import LossKind, loss_value
from .meta import BiasGrid, GradientMode
from .within_task import sgd_batch

__all__ = [
    "Solver",
    "Metric",
    "HyperGrid",
    "LearningCurve",
    "ErrorStats",
    "test_error",
    "cell_errors",
    "horizons",
    "online_model_selection",
    "baseline_curves",
    "aggregate_curves",
    "theoretical_rates",
    "write_curve_csv",
    "read_curve_csv",
]


class Solver(str, enum.Enum):
    SGD = "sgd"
    ERM = "erm"


class Metric(str, enum.Enum):
    LOSS = "loss"
    ZERO_ONE = "zero_one"


@dataclass(frozen=True)
class HyperGrid:
    lambdas: Sequence[float]
    gammas: Sequence[float] = (0.0,)

    def __post_init__(self):
        lams = tuple(float(v) for v in self.lambdas)
        gams = tuple(float(v) for v in self.gammas)
        if not lams or not gams:
            raise ValueError("grid lists must be nonempty")
        if any(not v > 0 for v in lams):
            raise ValueError("lambdas must be positive")
        if any(v < 0 for v in gams):
            raise ValueError("gammas must be non-negative")
        for name, vals in (("lambdas", lams), ("gammas", gams)):
            if any(b <= a for a, b in zip(vals, vals[1:])):
                raise ValueError(f"{name} must be strictly increasing")
        object.__setattr__(self, "lambdas", lams)
        object.__setattr__(self, "gammas", gams)

    @classmethod
    def logspace(cls, lam_range=(1e-6, 1e3), gamma_range=(1e-6, 1e3), count=10) -> "HyperGrid":
        return cls(
            np.logspace(math.log10(lam_range[0]), math.log10(lam_range[1]), count),
            np.logspace(math.log10(gamma_range[0]), math.log10(gamma_range[1]), count),
        )

    def cells(self):
        """``(lams, gammas)`` arrays of length ``p * r``, lambda-major."""
        lams = np.repeat(np.asarray(self.lambdas), len(self.gammas))
        gams = np.tile(np.asarray(self.gammas), len(self.lambdas))
        return lams, gams


@dataclass(eq=False)
class LearningCurve:
    method: str
    t: np.ndarray
    mean_error: np.ndarray
    std_error: np.ndarray
    selected_lambda: np.ndarray
    selected_gamma: np.ndarray
    validation_errors: Optional[np.ndarray] = field(default=None, repr=False)
    selected_cell: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=int)
        if np.any(np.diff(self.t) <= 0):
            raise ValueError("t must be strictly increasing")
        for name in ("mean_error", "std_error", "selected_lambda", "selected_gamma"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.shape != self.t.shape:
                raise ValueError(f"{name} has shape {arr.shape}, expected {self.t.shape}")
            setattr(self, name, arr)
        if np.any(self.std_error < 0):
            raise ValueError("std_error must be non-negative")


class ErrorStats(NamedTuple):
    mean: float
    std: float
    n_skipped: int = 0


def _task_errors(W, X, Y, kind: LossKind, metric: Metric):
    # W (..., T, d), X (T, m, d), Y (T, m) -> per-task errors (..., T)
    pred = np.einsum("tmd,...td->...tm", X, W)
    if metric is Metric.LOSS:
        return loss_value(kind, pred, Y).mean(axis=-1)
    if kind is not LossKind.HINGE:
        raise ValueError("zero_one metric needs classification tasks")
    return (pred * Y <= 0).mean(axis=-1)


def _deploy(Xtr, Ytr, kind, lams, H, solver: Solver, max_iters, gap_tolerance):
    """Train on every (cell, task) pair. ``lams`` (C,), ``H`` (C, d) -> weights (C, T, d)."""
    if solver is Solver.SGD:
        W, _ = sgd_batch(Xtr, Ytr, kind, lams[:, None], H[:, None, :])
        return W, 0
    C, (T, n, d) = lams.size, Xtr.shape
    Xf = np.broadcast_to(Xtr, (C, T, n, d)).reshape(C * T, n, d)
    Yf = np.broadcast_to(Ytr, (C, T, n)).reshape(C * T, n)
    W, _, _, _, conv = fista_batch(
        Xf, Yf, kind, np.repeat(lams, T), np.repeat(H, T, axis=0),
        max_iters=max_iters, gap_tolerance=gap_tolerance,
    )
    return W.reshape(C, T, d), int((~conv).sum())


def cell_errors(biases, lams, tasks: TaskCollection, solver=Solver.SGD, metric=Metric.LOSS,
                max_iters=2000, gap_tolerance=1e-6):
    """Per-cell transfer-risk estimates.

    Cell ``c`` trains every task of ``tasks`` with bias ``biases[c]`` and
    regularisation ``lams[c]``, then averages the test-split error across tasks.

    Returns
    -------
    mean, std : ndarray (C,)
        Mean and population standard deviation over tasks with finite error.
    n_skipped : ndarray (C,) of int
        Tasks whose solution was not finite.
    n_unconverged : int
        ERM solves stopped by the iteration cap (their last iterate is used).
    """
    solver, metric = Solver(solver), Metric(metric)
    biases = np.atleast_2d(np.asarray(biases, dtype=float))
    lams = np.broadcast_to(np.asarray(lams, dtype=float), (biases.shape[0],)).copy()
    Xtr, Ytr, Xte, Yte = tasks.stacked()
    with np.errstate(over="ignore", invalid="ignore"):
        W, unconverged = _deploy(Xtr, Ytr, tasks.loss, lams, biases, solver, max_iters, gap_tolerance)
        errs = _task_errors(W, Xte, Yte, tasks.loss, metric)
    finite = np.isfinite(errs)
    count = finite.sum(axis=1)
    safe = np.where(finite, errs, 0.0)
    with np.errstate(invalid="ignore", divide="ignore"):
        mean = safe.sum(axis=1) / count
        var = (np.where(finite, errs - mean[:, None], 0.0) ** 2).sum(axis=1) / count
    return mean, np.sqrt(var), errs.shape[1] - count, unconverged


def test_error(bias, lam, tasks: TaskCollection, solver=Solver.SGD, metric=Metric.LOSS,
               max_iters=2000, gap_tolerance=1e-6) -> ErrorStats:
    """Mean and std over tasks of the test-split error of the deployed within-task model.

    SGD deploys the averaged iterate, ERM the FISTA solution. Tasks whose
    trained model is not finite are skipped and counted.
    """
    mean, std, skipped, unconverged = cell_errors(
        np.asarray(bias, dtype=float)[None], [lam], tasks, solver, metric, max_iters, gap_tolerance
    )
    if unconverged:
        warnings.warn(f"{unconverged} ERM solves did not converge", ConvergenceWarning, stacklevel=2)
    return ErrorStats(float(mean[0]), float(std[0]), int(skipped[0]))


test_error.__test__ = False  # not a pytest test


def horizons(T: int, eval_every: int = 1) -> np.ndarray:
    """Recorded stream positions: 1, every ``eval_every``-th task, and ``T``."""
    if T < 1 or eval_every < 1:
        raise ValueError("T and eval_every must be >= 1")
    ts = set(range(eval_every, T + 1, eval_every)) | {1, T}
    return np.array(sorted(ts))


def online_model_selection(train_stream: TaskCollection, val_tasks: TaskCollection,
                           test_tasks: TaskCollection, grid: HyperGrid,
                           gradient_mode=GradientMode.APPROX_SGD, solver=Solver.SGD,
                           eval_every: int = 1, bias_estimate: str = "average",
                           metric=Metric.LOSS, method: str = "LTL",
                           max_iters: int = 2000, gap_tolerance: float = 1e-6,
                           record_validation: bool = False) -> LearningCurve:
    """Track one meta-learner per ``(lambda, gamma)`` cell along the training stream.

    At each recorded position ``t`` every cell's bias (the running average of
    its first ``t`` iterates, or its newest iterate when
    ``bias_estimate='last'``) is validated with the cell's own lambda; the
    best cell's error on ``test_tasks`` becomes the curve value at ``t``.
    """
    if bias_estimate not in ("average", "last"):
        raise ValueError("bias_estimate must be 'average' or 'last'")
    solver, metric = Solver(solver), Metric(metric)
    lams, gams = grid.cells()
    meta = BiasGrid(lams, gams, train_stream.d, gradient_mode, max_iters, gap_tolerance)
    ts = horizons(len(train_stream), eval_every)
    record = set(ts.tolist())
    out = {k: [] for k in ("mean", "std", "lam", "gam", "val", "cell")}
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConvergenceWarning)
        for t, split in enumerate(train_stream.splits, start=1):
            meta.update(split.train)
            if t not in record:
                continue
            biases = meta.averaged if bias_estimate == "average" else meta.current
            val, _, _, _ = cell_errors(biases, lams, val_tasks, solver, metric, max_iters, gap_tolerance)
            best = int(np.argmin(np.where(np.isnan(val), np.inf, val)))
            mean, std, _, _ = cell_errors(biases[best], lams[best], test_tasks, solver, metric,
                                          max_iters, gap_tolerance)
            out["mean"].append(mean[0])
            out["std"].append(std[0])
            out["lam"].append(lams[best])
            out["gam"].append(gams[best])
            out["val"].append(val)
            out["cell"].append(best)
    return LearningCurve(
        method=method, t=ts, mean_error=out["mean"], std_error=out["std"],
        selected_lambda=out["lam"], selected_gamma=out["gam"],
        validation_errors=np.array(out["val"]) if record_validation else None,
        selected_cell=np.array(out["cell"]),
    )


def baseline_curves(fixed_bias, lambdas, val_tasks: TaskCollection, test_tasks: TaskCollection,
                    t=(1,), solver=Solver.SGD, metric=Metric.LOSS, method: str = "ITL",
                    max_iters: int = 2000, gap_tolerance: float = 1e-6) -> LearningCurve:
    """Fixed-bias reference: validate lambda only and report a flat curve over ``t``."""
    lams = np.asarray(lambdas, dtype=float)
    bias = np.asarray(fixed_bias, dtype=float)
    if bias.shape != (val_tasks.d,):
        raise ValueError(f"fixed_bias must have shape ({val_tasks.d},)")
    H = np.broadcast_to(bias, (lams.size, bias.size))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConvergenceWarning)
        val, _, _, _ = cell_errors(H, lams, val_tasks, solver, metric, max_iters, gap_tolerance)
        best = int(np.argmin(np.where(np.isnan(val), np.inf, val)))
        mean, std, _, _ = cell_errors(bias, lams[best], test_tasks, solver, metric, max_iters, gap_tolerance)
    t = np.asarray(t, dtype=int)
    k = t.size
    return LearningCurve(
        method=method, t=t, mean_error=np.full(k, mean[0]), std_error=np.full(k, std[0]),
        selected_lambda=np.full(k, lams[best]), selected_gamma=np.full(k, np.nan),
        validation_errors=np.tile(val, (k, 1)), selected_cell=np.full(k, best),
    )


def _geomean(values: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.exp(np.mean(np.log(values), axis=0))


def aggregate_curves(curves: List[LearningCurve]) -> LearningCurve:
    """Pointwise mean and population std across repetitions.

    Selected hyperparameters are summarised by their geometric mean across runs.
    """
    if not curves:
        raise ValueError("no curves to aggregate")
    t = curves[0].t
    for c in curves:
        if not np.array_equal(c.t, t) or c.method != curves[0].method:
            raise ValueError("curves disagree on method or horizons")
    means = np.array([c.mean_error for c in curves])
    return LearningCurve(
        method=curves[0].method, t=t, mean_error=means.mean(axis=0), std_error=means.std(axis=0),
        selected_lambda=_geomean(np.array([c.selected_lambda for c in curves])),
        selected_gamma=_geomean(np.array([c.selected_gamma for c in curves])),
    )


def theoretical_rates(var_h: Optional[float], mean_norm: Optional[float], n: int, T: int,
                      R: float = 1.0, L: float = 1.0):
    """Closed-form ``(lambda, gamma)``.

    ``lambda = (R L / var_h) sqrt(2 (log n + 1) / n)`` and
    ``gamma = (sqrt(2) ||m|| / (L R)) / sqrt(T (1 + 4 (log n + 1) / n))``.
    """
    if var_h is None or mean_norm is None:
        raise ValueError("theoretical rates need the environment's Var_h and ||m||")
    c = math.log(n) + 1.0
    lam = (R * L / var_h) * math.sqrt(2.0 * c / n)
    gamma = (math.sqrt(2.0) * mean_norm / (L * R)) * math.sqrt(1.0 / (T * (1.0 + 4.0 * c / n)))
    return lam, gamma


CSV_HEADER = ["method", "t", "mean_error", "std_error", "lambda", "gamma"]


def _fmt(v: float) -> str:
    return "" if math.isnan(v) else repr(float(v))


def write_curve_csv(curves, path) -> None:
    """Write one or more curves as ``method,t,mean_error,std_error,lambda,gamma`` rows."""
    if isinstance(curves, LearningCurve):
        curves = [curves]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for c in curves:
            for i in range(c.t.size):
                writer.writerow([c.method, int(c.t[i]), _fmt(c.mean_error[i]), _fmt(c.std_error[i]),
                                 _fmt(c.selected_lambda[i]), _fmt(c.selected_gamma[i])])


def read_curve_csv(path) -> List[LearningCurve]:
    rows: dict = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != CSV_HEADER:
            raise ValueError(f"unexpected header {reader.fieldnames}")
        for r in reader:
            rows.setdefault(r["method"], []).append(r)

    def num(s):
        return float(s) if s != "" else np.nan

    return [
        LearningCurve(
            method=m,
            t=[int(r["t"]) for r in rs],
            mean_error=[num(r["mean_error"]) for r in rs],
            std_error=[num(r["std_error"]) for r in rs],
            selected_lambda=[num(r["lambda"]) for r in rs],
            selected_gamma=[num(r["gamma"]) for r in rs],
        )
        for m, rs in rows.items()
    ]
