import warnings

import numpy as np
import pytest
from sklearn.exceptions import ConvergenceWarning

from onlineltl.certify import random_instance
from onlineltl.erm import exact_meta_gradient, fista_batch, fista_solve, meta_objective_value
from onlineltl.task_data import TaskDataset, dual_objective, regularized_empirical_risk


def test_one_dimensional_example():
    # min |w - 2| + 0.5 (w - 0)^2 is attained at w = 1 with value 1.5
    data = TaskDataset([[1.0]], [2.0], "absolute")
    sol = fista_solve(data, 1.0, [0.0], gap_tolerance=1e-10)
    assert sol.converged
    assert sol.w[0] == pytest.approx(1.0, abs=1e-6)
    assert regularized_empirical_risk(data, 1.0, [0.0], sol.w) == pytest.approx(1.5, abs=1e-6)


def test_gap_is_certificate():
    rng = np.random.default_rng(0)
    for _ in range(20):
        data, lam, h = random_instance(rng, lam_range=(1e-2, 1e2))
        sol = fista_solve(data, lam, h)
        assert sol.converged and -1e-12 <= sol.gap < 1e-6
        assert sol.iters <= 2000
        # the dual value at the returned point lower-bounds the optimum
        dual_value = -dual_objective(data, lam, h, sol.u)
        if np.isfinite(dual_value):
            assert regularized_empirical_risk(data, lam, h, sol.w) - dual_value < 1e-6 + 1e-9


def test_batch_members_independent():
    rng = np.random.default_rng(1)
    insts = [random_instance(rng, kind="hinge", n_max=6, d_max=3) for _ in range(3)]
    n = min(d.n for d, _, _ in insts)
    X = np.array([np.pad(d.X[:n], ((0, 0), (0, 3 - d.d))) for d, _, _ in insts])
    Y = np.array([d.y[:n] for d, _, _ in insts])
    lams = np.array([lam for _, lam, _ in insts]).clip(1e-2, None)
    H = rng.normal(size=(3, 3))
    W, U, gap, iters, conv = fista_batch(X, Y, "hinge", lams, H)
    for b in range(3):
        Wb, Ub, *_ = fista_batch(X[b:b + 1], Y[b:b + 1], "hinge", lams[b:b + 1], H[b:b + 1])
        np.testing.assert_array_equal(W[b], Wb[0])
        np.testing.assert_array_equal(U[b], Ub[0])


def test_zero_inputs():
    data = TaskDataset(np.zeros((3, 2)), [1.0, -1.0, 1.0], "hinge")
    sol = fista_solve(data, 1.0, [0.5, -0.5])
    assert sol.converged
    np.testing.assert_allclose(sol.w, [0.5, -0.5])


def test_non_convergence_warns():
    rng = np.random.default_rng(2)
    data, _, h = random_instance(rng, n_max=20)
    with pytest.warns(ConvergenceWarning):
        exact_meta_gradient(data, 1e-3, h, max_iters=2, gap_tolerance=1e-14)


def test_meta_gradient_finite_differences():
    rng = np.random.default_rng(3)
    with warnings.catch_warnings():
        warnings.simplefilter("error", ConvergenceWarning)
        for _ in range(5):
            data, lam, h = random_instance(rng, n_max=8, d_max=4, lam_range=(1e-1, 1e1))
            kw = dict(gap_tolerance=1e-8, max_iters=50000)
            g = exact_meta_gradient(data, lam, h, **kw)
            for i in range(h.size):
                e = np.zeros_like(h)
                e[i] = 1e-4
                fd = (meta_objective_value(data, lam, h + e, **kw) - meta_objective_value(data, lam, h - e, **kw)) / 2e-4
                assert fd == pytest.approx(g[i], abs=1e-4)
