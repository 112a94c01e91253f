import math

import numpy as np
import pytest

from onlineltl.certify import random_instance
from onlineltl.erm import fista_solve
from onlineltl.losses import LossKind
from onlineltl.task_data import TaskDataset
from onlineltl.within_task import (
    approx_meta_gradient,
    dual_coordinate_inner,
    epsilon_certificate,
    inner_regret_gap,
    regret_bound,
    sgd_batch,
    sgd_inner,
)


def test_single_step_by_hand():
    # one example, absolute loss: w2 = h - x u / lam
    data = TaskDataset([[1.0, 0.0]], [2.0], "absolute")
    run = sgd_inner(data, 0.5, [0.0, 0.0], keep_iterates=True)
    # prediction 0 < 2 so u = -1
    np.testing.assert_allclose(run.iterates, [[0, 0], [2, 0]])
    np.testing.assert_allclose(run.averaged, [0, 0])
    assert run.dual_iterate.tolist() == [-1.0]


def test_prefer_zero_at_kink():
    data = TaskDataset([[1.0]], [0.0], "absolute")
    run = sgd_inner(data, 1.0, [0.0])
    assert run.last[0] == 0.0


def test_average_of_first_n_iterates():
    rng = np.random.default_rng(0)
    data, lam, h = random_instance(rng)
    run = sgd_inner(data, lam, h, keep_iterates=True)
    assert run.iterates.shape == (data.n + 1, data.d)
    np.testing.assert_allclose(run.averaged, run.iterates[:-1].mean(axis=0))
    np.testing.assert_allclose(run.first, h)
    np.testing.assert_allclose(run.last, run.iterates[-1])


def test_primal_and_dual_versions_agree():
    rng = np.random.default_rng(1)
    for _ in range(50):
        data, lam, h = random_instance(rng)
        a = sgd_inner(data, lam, h, keep_iterates=True)
        b = dual_coordinate_inner(data, lam, h, keep_iterates=True)
        np.testing.assert_allclose(a.iterates, b.iterates, rtol=1e-10, atol=1e-10 * np.abs(a.iterates).max())
        np.testing.assert_array_equal(a.dual_iterate, b.dual_iterate)


def test_last_iterate_is_kkt_of_dual():
    rng = np.random.default_rng(2)
    data, lam, h = random_instance(rng)
    run = sgd_inner(data, lam, h)
    np.testing.assert_allclose(run.last, h - data.X.T @ run.dual_iterate / (data.n * lam), atol=1e-12)
    np.testing.assert_allclose(approx_meta_gradient(run, lam, h), data.X.T @ run.dual_iterate / data.n, atol=1e-12)


def test_batch_matches_scalar_runs():
    rng = np.random.default_rng(3)
    for kind in LossKind:
        X = rng.normal(size=(4, 7, 3)) / 3
        Y = rng.choice([-1.0, 1.0], size=(4, 7))
        lams = np.array([0.01, 0.1, 1.0, 10.0])
        H = rng.normal(size=(4, 3))
        avg, last = sgd_batch(X, Y, kind, lams, H)
        for b in range(4):
            run = sgd_inner(TaskDataset(X[b], Y[b], kind), lams[b], H[b])
            np.testing.assert_allclose(avg[b], run.averaged, rtol=1e-12, atol=1e-12)
            np.testing.assert_allclose(last[b], run.last, rtol=1e-12, atol=1e-12)


def test_regret_bound_formula():
    data = TaskDataset(np.eye(4) * 0.5, np.zeros(4), "absolute")
    assert regret_bound(data, 2.0) == pytest.approx(2 * 0.25 * (math.log(4) + 1) / 8)


def test_certificates_hold_on_random_instances():
    rng = np.random.default_rng(4)
    for _ in range(30):
        data, lam, h = random_instance(rng, lam_range=(1e-2, 1e2))
        run = sgd_inner(data, lam, h)
        erm = fista_solve(data, lam, h)
        assert epsilon_certificate(run, data, lam, h, erm) >= -1e-6
        assert inner_regret_gap(run, data, lam, h, erm) <= regret_bound(data, lam) + 1e-6


def test_certificate_rejects_mismatched_solution():
    rng = np.random.default_rng(5)
    data, lam, h = random_instance(rng)
    other, _, _ = random_instance(rng, n_max=30)
    run = sgd_inner(data, lam, h)
    erm = fista_solve(data, lam, h)
    if other.n != data.n:
        with pytest.raises(ValueError):
            epsilon_certificate(sgd_inner(other, lam, np.zeros(other.d)), data, lam, h, erm)
    assert math.isfinite(epsilon_certificate(run, data, lam, h, erm))
