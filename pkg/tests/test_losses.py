import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import minimize_scalar

from onlineltl.losses import (
    LabelDomainError,
    LossKind,
    SubgradientInterval,
    conjugate_prox,
    loss_conjugate,
    loss_prox,
    loss_subgradient,
    loss_value,
    pick_subgradient,
    select_subgradient,
)

A, H = LossKind.ABSOLUTE, LossKind.HINGE

finite = st.floats(-50, 50, allow_nan=False)
etas = st.floats(1e-3, 1e3)
signs = st.sampled_from([-1.0, 1.0])


@st.composite
def kind_and_label(draw):
    kind = draw(st.sampled_from([A, H]))
    y = draw(signs) if kind is H else draw(finite)
    return kind, y


# -- examples -------------------------------------------------------------


def test_loss_value_examples():
    assert loss_value(A, 3, 3) == 0
    assert loss_value(H, 1, 1) == 0
    assert loss_value(A, 2.5, 1) == pytest.approx(1.5)


def test_hinge_rejects_bad_labels():
    with pytest.raises(LabelDomainError):
        loss_value(H, 0.3, 0.5)
    with pytest.raises(LabelDomainError):
        loss_subgradient(H, 0.3, 2.0)


def test_subgradient_examples():
    assert loss_subgradient(H, 0, 1) == SubgradientInterval(-1, -1)
    assert loss_subgradient(A, 2, 2) == SubgradientInterval(-1, 1)
    assert loss_subgradient(A, 5, 1) == SubgradientInterval(1, 1)
    assert loss_subgradient(H, 3, 1) == SubgradientInterval(0, 0)
    # hinge kink: segment between 0 and -y
    assert loss_subgradient(H, 1, 1) == SubgradientInterval(-1, 0)
    assert loss_subgradient(H, -1, -1) == SubgradientInterval(0, 1)


def test_pick_subgradient_examples():
    assert pick_subgradient(SubgradientInterval(-1, 1)) == 0
    assert pick_subgradient(SubgradientInterval(-1, -1)) == -1
    assert pick_subgradient(SubgradientInterval(-1, 0)) == 0
    assert pick_subgradient(SubgradientInterval(0.5, 2)) == 0.5


def test_empty_interval_rejected():
    with pytest.raises(ValueError):
        SubgradientInterval(1, -1)


def test_conjugate_examples():
    assert loss_conjugate(A, 0, 7) == 0
    assert loss_conjugate(H, -1, 1) == -1
    assert loss_conjugate(A, 2, 0) == math.inf
    assert loss_conjugate(H, 0.5, 1) == math.inf
    assert loss_conjugate(H, 0.5, -1) == -0.5


def test_prox_examples():
    assert loss_prox(A, 0.7, 4.0, 4.0) == 4.0
    assert loss_prox(A, 1, 3, 0) == pytest.approx(2)
    assert loss_prox(H, 1, 2, 1) == 2


def test_prox_rejects_nonpositive_eta():
    with pytest.raises(ValueError):
        loss_prox(A, 0, 1, 1)
    with pytest.raises(ValueError):
        conjugate_prox(H, -1, 1, 1)


def test_conjugate_prox_examples():
    assert conjugate_prox(A, 1, 0, 0) == 0
    # frozen from a grid search over the conjugate's domain
    assert conjugate_prox(A, 1, 5, 0) == pytest.approx(1)
    assert conjugate_prox(H, 1, -3, 1) == pytest.approx(-1)


def test_vectorised_matches_scalar():
    rng = np.random.default_rng(3)
    yhat = rng.normal(size=200)
    y = rng.choice([-1.0, 1.0], size=200)
    yhat[:10] = y[:10]  # kinks for the absolute loss
    yhat[10:20] = y[10:20]  # margin exactly 1 for the hinge loss
    for kind in (A, H):
        vec = select_subgradient(kind, yhat, y)
        ref = [pick_subgradient(loss_subgradient(kind, a, b)) for a, b in zip(yhat, y)]
        np.testing.assert_array_equal(vec, ref)
        np.testing.assert_allclose(loss_value(kind, yhat, y), [loss_value(kind, a, b) for a, b in zip(yhat, y)])


# -- properties -----------------------------------------------------------


@settings(max_examples=1000, deadline=None)
@given(kind_and_label(), finite, st.floats(-1, 1))
def test_fenchel_young(ky, yhat, s):
    kind, y = ky
    u = s if kind is A else -y * abs(s)
    slack = loss_value(kind, yhat, y) + loss_conjugate(kind, u, y) - u * yhat
    assert slack >= -1e-10
    if u in loss_subgradient(kind, yhat, y):
        assert abs(slack) <= 1e-10


@settings(max_examples=1000, deadline=None)
@given(kind_and_label(), finite)
def test_fenchel_young_equality_at_subgradient(ky, yhat):
    kind, y = ky
    u = pick_subgradient(loss_subgradient(kind, yhat, y))
    slack = loss_value(kind, yhat, y) + loss_conjugate(kind, u, y) - u * yhat
    assert abs(slack) <= 1e-10


@settings(max_examples=1000, deadline=None)
@given(kind_and_label(), etas, finite)
def test_prox_optimality(ky, eta, a):
    kind, y = ky
    p = loss_prox(kind, eta, a, y)
    # a - p must lie in (1/eta) * subdifferential at p
    assert loss_subgradient(kind, p, y).distance(eta * (a - p)) / eta <= 1e-9


@settings(max_examples=1000, deadline=None)
@given(kind_and_label(), etas, finite)
def test_moreau_identity(ky, eta, a):
    kind, y = ky
    lhs = conjugate_prox(kind, eta, a, y) + eta * loss_prox(kind, eta, a / eta, y)
    assert abs(lhs - a) <= 1e-10 * max(1.0, abs(a))


@settings(max_examples=1000, deadline=None)
@given(kind_and_label(), etas, finite)
def test_conjugate_prox_in_domain(ky, eta, a):
    kind, y = ky
    q = conjugate_prox(kind, eta, a, y)
    assert math.isfinite(loss_conjugate(kind, q, y))


@settings(max_examples=1000, deadline=None)
@given(kind_and_label(), finite, finite)
def test_one_lipschitz(ky, y1, y2):
    kind, y = ky
    assert abs(loss_value(kind, y1, y) - loss_value(kind, y2, y)) <= abs(y1 - y2) * (1 + 1e-12) + 1e-12


def _brute_prox(kind, eta, a, y):
    f = lambda p: loss_value(kind, p, y) / eta + 0.5 * (p - a) ** 2
    lo, hi = min(a, y) - 2.0 / eta - 1.0, max(a, y) + 2.0 / eta + 1.0
    grid = np.linspace(lo, hi, 4001)
    vals = np.array([f(p) for p in grid])
    i = int(vals.argmin())
    step = grid[1] - grid[0]
    res = minimize_scalar(f, bounds=(grid[i] - step, grid[i] + step), method="bounded",
                          options={"xatol": 1e-12})
    return res.x


@settings(max_examples=300, deadline=None)
@given(kind_and_label(), st.floats(1e-2, 1e2), st.floats(-10, 10))
def test_prox_matches_brute_force(ky, eta, a):
    kind, y = ky
    assert loss_prox(kind, eta, a, y) == pytest.approx(_brute_prox(kind, eta, a, y), abs=1e-6)


def _brute_conjugate_prox(kind, eta, a, y):
    lo, hi = (-1.0, 1.0) if kind is A else sorted((0.0, -y))
    f = lambda p: eta * loss_conjugate(kind, p, y) + 0.5 * (p - a) ** 2
    return minimize_scalar(f, bounds=(lo, hi), method="bounded", options={"xatol": 1e-12}).x


@settings(max_examples=300, deadline=None)
@given(kind_and_label(), st.floats(1e-2, 1e2), st.floats(-10, 10))
def test_conjugate_prox_matches_brute_force(ky, eta, a):
    kind, y = ky
    if kind is A:
        y = max(-10.0, min(10.0, y))
    assert conjugate_prox(kind, eta, a, y) == pytest.approx(_brute_conjugate_prox(kind, eta, a, y), abs=1e-6)
