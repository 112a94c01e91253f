"""Runtime certificate checks on random problem instances.

Each check returns ``(passed, detail)``; :func:`run_all` prints one line per
check. Used by ``onlineltl certify``.
"""

from __future__ import annotations

import warnings
from typing import Callable, Dict, Tuple

import numpy as np
from sklearn.exceptions import ConvergenceWarning

from .erm import exact_meta_gradient, fista_solve, meta_objective_value
from .losses import LossKind, conjugate_prox, loss_conjugate, loss_prox, loss_subgradient, loss_value
from .task_data import TaskDataset, regularized_empirical_risk
from .within_task import (
    approx_meta_gradient,
    dual_coordinate_inner,
    epsilon_certificate,
    inner_regret_gap,
    regret_bound,
    sgd_inner,
)

__all__ = ["random_instance", "CHECKS", "run_all"]


def _random_kind(rng) -> LossKind:
    return (LossKind.ABSOLUTE, LossKind.HINGE)[int(rng.integers(2))]


def random_instance(rng: np.random.Generator, kind=None, n_max=20, d_max=10, lam_range=(1e-3, 1e2)):
    """Random ``(data, lam, h)``: rows inside the unit ball, log-uniform ``lam``."""
    kind = LossKind.coerce(kind) if kind is not None else _random_kind(rng)
    n = int(rng.integers(1, n_max + 1))
    d = int(rng.integers(1, d_max + 1))
    X = rng.standard_normal((n, d))
    X *= rng.uniform(0.2, 1.0, size=(n, 1)) / np.linalg.norm(X, axis=1, keepdims=True)
    if kind is LossKind.ABSOLUTE:
        y = 2.0 * rng.standard_normal(n)
    else:
        y = rng.choice([-1.0, 1.0], size=n)
    lam = float(10 ** rng.uniform(np.log10(lam_range[0]), np.log10(lam_range[1])))
    h = rng.standard_normal(d)
    return TaskDataset(X, y, kind), lam, h


def check_loss_calculus(rng, count) -> Tuple[bool, str]:
    worst = 0.0
    for _ in range(count):
        kind = _random_kind(rng)
        y = float(rng.choice([-1.0, 1.0])) if kind is LossKind.HINGE else float(rng.normal(scale=3))
        eta = float(10 ** rng.uniform(-2, 2))
        a = float(rng.normal(scale=5))
        p = loss_prox(kind, eta, a, y)
        worst = max(worst, loss_subgradient(kind, p, y).distance(eta * (a - p)) / eta)
        q = conjugate_prox(kind, eta, a, y)
        worst = max(worst, abs(q + eta * loss_prox(kind, eta, a / eta, y) - a))
        yhat = float(rng.normal(scale=3))
        u = pick = float(np.clip(rng.normal(), -1, 1))
        if kind is LossKind.HINGE:
            u = -y * abs(pick)
        fy = loss_value(kind, yhat, y) + loss_conjugate(kind, u, y) - u * yhat
        worst = max(worst, -fy)
    return worst <= 1e-9, f"max violation {worst:.2e}"


def check_solver_equivalence(rng, count):
    worst = 0.0
    for _ in range(count):
        data, lam, h = random_instance(rng)
        a = sgd_inner(data, lam, h, keep_iterates=True).iterates
        b = dual_coordinate_inner(data, lam, h, keep_iterates=True).iterates
        worst = max(worst, np.max(np.abs(a - b)) / max(1.0, np.max(np.abs(a))))
    return worst <= 1e-10, f"max relative difference {worst:.2e}"


def check_fista_gap(rng, count):
    bad, lowest = 0, np.inf
    for _ in range(count):
        data, lam, h = random_instance(rng, lam_range=(1e-2, 1e2))
        sol = fista_solve(data, lam, h)
        bad += not (sol.converged and sol.gap < 1e-6)
        lowest = min(lowest, sol.gap)
    return bad == 0 and lowest >= -1e-12, f"{bad} unconverged, smallest gap {lowest:.2e}"


def check_meta_gradient(rng, count, step=1e-4):
    worst = 0.0
    for _ in range(count):
        data, lam, h = random_instance(rng, n_max=8, d_max=4, lam_range=(1e-1, 1e1))
        g = exact_meta_gradient(data, lam, h, gap_tolerance=1e-8, max_iters=50000)
        fd = np.empty_like(h)
        for i in range(h.size):
            e = np.zeros_like(h)
            e[i] = step
            fd[i] = (meta_objective_value(data, lam, h + e, gap_tolerance=1e-8, max_iters=50000)
                     - meta_objective_value(data, lam, h - e, gap_tolerance=1e-8, max_iters=50000)) / (2 * step)
        worst = max(worst, np.max(np.abs(fd - g)))
    return worst <= 1e-4, f"max abs error {worst:.2e}"


def check_epsilon_subgradient(rng, count):
    worst = -np.inf
    for _ in range(count):
        data, lam, h = random_instance(rng, lam_range=(1e-2, 1e2))
        run = sgd_inner(data, lam, h)
        erm = fista_solve(data, lam, h)
        eps = epsilon_certificate(run, data, lam, h, erm)
        g = approx_meta_gradient(run, lam, h)
        h2 = h + rng.standard_normal(h.size) * rng.uniform(0, 10) / np.sqrt(h.size)
        lhs = regularized_empirical_risk(data, lam, h2, fista_solve(data, lam, h2).w)
        rhs = regularized_empirical_risk(data, lam, h, erm.w) + g @ (h2 - h) - eps
        worst = max(worst, rhs - lhs)
    return worst <= 1e-6, f"max violation {worst:.2e}"


def check_regret_bound(rng, count):
    worst = -np.inf
    for _ in range(count):
        data, lam, h = random_instance(rng, lam_range=(1e-2, 1e2))
        run = sgd_inner(data, lam, h)
        erm = fista_solve(data, lam, h)
        worst = max(worst, inner_regret_gap(run, data, lam, h, erm) - regret_bound(data, lam))
    return worst <= 1e-6, f"max excess over bound {worst:.2e}"


CHECKS: Dict[str, Callable] = {
    "loss calculus": check_loss_calculus,
    "SGD / dual coordinate equivalence": check_solver_equivalence,
    "FISTA duality gap": check_fista_gap,
    "meta-gradient vs finite differences": check_meta_gradient,
    "epsilon-subgradient certificate": check_epsilon_subgradient,
    "inner regret bound": check_regret_bound,
}


def run_all(count: int = 50, seed: int = 0, echo=print) -> bool:
    ok = True
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConvergenceWarning)
        for i, (name, check) in enumerate(CHECKS.items()):
            rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(i,)))
            n = count if name != "meta-gradient vs finite differences" else max(1, count // 5)
            passed, detail = check(rng, n)
            ok &= passed
            echo(f"{'PASS' if passed else 'FAIL'}  {name}: {detail}")
    return ok
