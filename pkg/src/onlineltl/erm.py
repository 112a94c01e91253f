"""Biased ERM by accelerated proximal gradient (FISTA) on the dual problem.

The dual of ``min_w mean_k l_k(<x_k, w>) + lam/2 ||w - h||^2`` is split as

    F_h(u) = ||X^T u||^2 / (2 lam) - <X h, u>        (smooth, (n R^2 / lam)-smooth)
    G(u)   = mean_k l_k^*(n u_k)                      (separable, proximable)

and FISTA runs with step ``lam / (n R^2)`` from ``u = 0``. The primal point is
``h - X^T u / lam`` and the loop stops once the duality gap
``Phi_h(w) + Psi_h(u)`` falls below the tolerance.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from sklearn.exceptions import ConvergenceWarning

from .losses import LossKind, conjugate_prox, loss_conjugate, loss_value
from .task_data import TaskDataset, _check_lambda, as_bias, regularized_empirical_risk

__all__ = [
    "ErmSolution",
    "fista_solve",
    "fista_batch",
    "meta_objective_value",
    "exact_meta_gradient",
]


@dataclass(frozen=True, eq=False)
class ErmSolution:
    w: np.ndarray
    u: np.ndarray
    gap: float
    iters: int
    converged: bool


def _project_dual(kind: LossKind, v, Y):
    # v = n u: per-example conjugate arguments
    if kind is LossKind.ABSOLUTE:
        return np.clip(v, -1.0, 1.0)
    return Y * np.clip(Y * v, -1.0, 0.0)


def fista_batch(X, Y, kind, lam, H, radius=None, max_iters=2000, gap_tolerance=1e-6):
    """Solve ``B`` independent biased ERM problems with dual FISTA.

    Parameters
    ----------
    X : ndarray, shape (B, n, d)
    Y : ndarray, shape (B, n)
        Labels, assumed valid for ``kind``.
    lam : float or ndarray, shape (B,)
    H : ndarray, shape (B, d)
    radius : float or ndarray, shape (B,), optional
        Row-norm bound used in the step size; defaults to each problem's max row norm.

    Each problem stops on its own gap, so its iterates do not depend on the
    other members of the batch.

    Returns
    -------
    W : ndarray (B, d)
    U : ndarray (B, n)
    gap : ndarray (B,)
    iters : ndarray (B,) of int
    converged : ndarray (B,) of bool
    """
    kind = LossKind.coerce(kind)
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    B, n, d = X.shape
    lam = np.broadcast_to(np.asarray(lam, dtype=np.float64), (B,)).copy()
    if np.any(lam <= 0):
        raise ValueError("lambda must be positive")
    H = np.broadcast_to(np.asarray(H, dtype=np.float64), (B, d)).copy()
    if radius is None:
        radius = np.linalg.norm(X, axis=2).max(axis=1)
    radius = np.broadcast_to(np.asarray(radius, dtype=np.float64), (B,)).copy()
    # all-zero inputs: any step works, the smooth part is then linear
    radius[radius <= 0] = 1.0
    step = lam / (n * radius**2)

    W = H.copy()
    U = np.zeros((B, n))
    gap = np.full(B, np.inf)
    iters = np.zeros(B, dtype=int)
    converged = np.zeros(B, dtype=bool)

    idx = np.arange(B)
    Xa, Ya, Ha, la, sa = X, Y, H, lam, step
    Ka = Xa @ Xa.transpose(0, 2, 1)
    XHa = np.einsum("bnd,bd->bn", Xa, Ha)
    u_prev = np.zeros((B, n))
    p = np.zeros((B, n))
    t = 1.0
    for k in range(1, max_iters + 1):
        grad = np.einsum("bij,bj->bi", Ka, p) / la[:, None] - XHa
        a = p - sa[:, None] * grad
        eta = (n * sa)[:, None]
        u = conjugate_prox(kind, eta, n * a, Ya) / n
        xtu = np.einsum("bnd,bn->bd", Xa, u)
        w = Ha - xtu / la[:, None]
        v = _project_dual(kind, n * u, Ya)
        xtv = np.einsum("bnd,bn->bd", Xa, v) / n
        sq = np.einsum("bd,bd->b", xtv, xtv)
        diff = w - Ha
        primal = loss_value(kind, np.einsum("bnd,bd->bn", Xa, w), Ya).mean(axis=1)
        primal = primal + 0.5 * la * np.einsum("bd,bd->b", diff, diff)
        dual = (
            loss_conjugate(kind, v, Ya).mean(axis=1)
            + sq / (2.0 * la)
            - np.einsum("bn,bn->b", XHa, v) / n
        )
        g = primal + dual

        W[idx], U[idx], gap[idx], iters[idx] = w, u, g, k
        done = g < gap_tolerance
        if done.any():
            converged[idx[done]] = True
            keep = ~done
            if not keep.any():
                break
            idx = idx[keep]
            Xa, Ya, Ha, la, sa = Xa[keep], Ya[keep], Ha[keep], la[keep], sa[keep]
            Ka, XHa = Ka[keep], XHa[keep]
            u, u_prev = u[keep], u_prev[keep]

        t_next = (1.0 + np.sqrt(1.0 + 4.0 * t * t)) / 2.0
        p = u + ((t - 1.0) / t_next) * (u - u_prev)
        u_prev = u
        t = t_next
    return W, U, gap, iters, converged


def fista_solve(data: TaskDataset, lam, h, max_iters: int = 2000, gap_tolerance: float = 1e-6) -> ErmSolution:
    """Minimise the biased regularised empirical risk of ``data`` to a duality-gap tolerance.

    Non-convergence within ``max_iters`` is reported through ``converged=False``;
    the last iterate is returned either way.
    """
    lam = _check_lambda(lam)
    h = as_bias(h, data.d)
    W, U, gap, iters, conv = fista_batch(
        data.X[None], data.y[None], data.loss, lam, h[None],
        radius=data.radius, max_iters=max_iters, gap_tolerance=gap_tolerance,
    )
    return ErmSolution(w=W[0], u=U[0], gap=float(gap[0]), iters=int(iters[0]), converged=bool(conv[0]))


def _solve_or_warn(data, lam, h, **kwargs) -> ErmSolution:
    sol = fista_solve(data, lam, h, **kwargs)
    if not sol.converged:
        warnings.warn(
            f"FISTA stopped after {sol.iters} iterations with duality gap {sol.gap:.3g}",
            ConvergenceWarning,
            stacklevel=3,
        )
    return sol


def meta_objective_value(data: TaskDataset, lam, h, **kwargs) -> float:
    """Minimum value of the biased regularised empirical risk as a function of the bias ``h``.

    Emits a :class:`~sklearn.exceptions.ConvergenceWarning` when the solver does
    not reach its tolerance.
    """
    sol = _solve_or_warn(data, lam, h, **kwargs)
    return regularized_empirical_risk(data, lam, h, sol.w)


def exact_meta_gradient(data: TaskDataset, lam, h, **kwargs) -> np.ndarray:
    """Gradient ``-lam (w_h - h)`` of :func:`meta_objective_value` at ``h``."""
    sol = _solve_or_warn(data, lam, h, **kwargs)
    return -float(lam) * (sol.w - as_bias(h, data.d))
