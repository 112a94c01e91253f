"""Absolute and hinge losses: values, subdifferentials, conjugates and proximity operators.

All scalar functions also accept numpy arrays and broadcast elementwise, except
:func:`loss_subgradient`, which returns a :class:`SubgradientInterval` for one
query point.

Conventions
-----------
``loss_prox(kind, eta, a, y)`` is the proximity operator of ``(1/eta) * l_y``::

    argmin_p  (1/eta) * l_y(p) + 0.5 * (p - a) ** 2

``conjugate_prox(kind, eta, a, y)`` is the proximity operator of ``eta * l_y^*``,
obtained from the former through the Moreau identity.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

__all__ = [
    "LossKind",
    "SubgradientInterval",
    "LabelDomainError",
    "loss_value",
    "loss_subgradient",
    "pick_subgradient",
    "select_subgradient",
    "loss_conjugate",
    "loss_prox",
    "conjugate_prox",
]


class LabelDomainError(ValueError):
    """A label is not admissible for the requested loss."""


class LossKind(str, enum.Enum):
    ABSOLUTE = "absolute"
    HINGE = "hinge"

    @property
    def lipschitz(self) -> float:
        # both losses are 1-Lipschitz in the prediction
        return 1.0

    def check_labels(self, y) -> None:
        y = np.asarray(y, dtype=float)
        if not np.all(np.isfinite(y)):
            raise LabelDomainError("labels must be finite")
        if self is LossKind.HINGE and not np.all(np.abs(y) == 1.0):
            bad = np.asarray(y).ravel()[np.abs(np.asarray(y).ravel()) != 1.0]
            raise LabelDomainError(
                f"hinge loss requires labels in {{-1, +1}}, got {bad[:5].tolist()}"
            )

    @classmethod
    def coerce(cls, kind) -> "LossKind":
        if isinstance(kind, cls):
            return kind
        return cls(str(kind).lower())


@dataclass(frozen=True)
class SubgradientInterval:
    """Closed interval ``[lo, hi]`` holding the full subdifferential at a point."""

    lo: float
    hi: float

    def __post_init__(self):
        if not self.lo <= self.hi:
            raise ValueError(f"empty interval [{self.lo}, {self.hi}]")

    def __contains__(self, value) -> bool:
        return self.lo <= value <= self.hi

    def distance(self, value: float) -> float:
        """Distance from ``value`` to the interval."""
        return max(self.lo - value, value - self.hi, 0.0)


def _check_eta(eta) -> None:
    if np.any(np.asarray(eta) <= 0):
        raise ValueError(f"eta must be positive, got {eta}")


def loss_value(kind, yhat, y):
    kind = LossKind.coerce(kind)
    yhat = np.asarray(yhat, dtype=float)
    y = np.asarray(y, dtype=float)
    if kind is LossKind.ABSOLUTE:
        out = np.abs(yhat - y)
    else:
        kind.check_labels(y)
        out = np.maximum(0.0, 1.0 - y * yhat)
    return out if out.ndim else float(out)


def loss_subgradient(kind, yhat: float, y: float) -> SubgradientInterval:
    """Full subdifferential of ``l_y`` at ``yhat``."""
    kind = LossKind.coerce(kind)
    yhat = float(yhat)
    y = float(y)
    if kind is LossKind.ABSOLUTE:
        r = yhat - y
        if r > 0:
            return SubgradientInterval(1.0, 1.0)
        if r < 0:
            return SubgradientInterval(-1.0, -1.0)
        return SubgradientInterval(-1.0, 1.0)
    kind.check_labels(y)
    margin = 1.0 - y * yhat
    if margin > 0:
        return SubgradientInterval(-y, -y)
    if margin < 0:
        return SubgradientInterval(0.0, 0.0)
    # kink: the segment between -y and 0
    return SubgradientInterval(min(-y, 0.0), max(-y, 0.0))


def pick_subgradient(interval: SubgradientInterval) -> float:
    """Deterministic member of ``interval``: 0 when admissible, else the endpoint nearest 0."""
    if interval.lo <= 0.0 <= interval.hi:
        return 0.0
    return interval.lo if abs(interval.lo) < abs(interval.hi) else interval.hi


def select_subgradient(kind, yhat, y):
    """Vectorised :func:`pick_subgradient` composed with :func:`loss_subgradient`.

    Labels are assumed valid (they are checked when datasets are built).
    """
    kind = LossKind.coerce(kind)
    yhat = np.asarray(yhat, dtype=float)
    y = np.asarray(y, dtype=float)
    if kind is LossKind.ABSOLUTE:
        return np.sign(yhat - y)
    return np.where(1.0 - y * yhat > 0.0, -y, 0.0)


def loss_conjugate(kind, u, y):
    """Fenchel conjugate ``l_y^*(u)``; ``np.inf`` outside its domain."""
    kind = LossKind.coerce(kind)
    u = np.asarray(u, dtype=float)
    y = np.asarray(y, dtype=float)
    if kind is LossKind.ABSOLUTE:
        inside = np.abs(u) <= 1.0
        out = np.where(inside, u * y, np.inf)
    else:
        kind.check_labels(y)
        s = u * y  # u / y for y = +-1
        inside = (s >= -1.0) & (s <= 0.0)
        out = np.where(inside, s, np.inf)
    return out if out.ndim else float(out)


def loss_prox(kind, eta, a, y):
    """Proximity operator of ``(1/eta) * l_y`` evaluated at ``a``."""
    _check_eta(eta)
    kind = LossKind.coerce(kind)
    eta = np.asarray(eta, dtype=float)
    a = np.asarray(a, dtype=float)
    y = np.asarray(y, dtype=float)
    step = 1.0 / eta
    if kind is LossKind.ABSOLUTE:
        r = a - y
        out = np.where(r > step, a - step, np.where(r < -step, a + step, y))
    else:
        ya = y * a
        out = np.where(ya > 1.0, a, np.where(ya < 1.0 - step, a + y * step, y))
    return out if out.ndim else float(out)


def conjugate_prox(kind, eta, a, y):
    """Proximity operator of ``eta * l_y^*`` at ``a`` via the Moreau identity."""
    _check_eta(eta)
    eta = np.asarray(eta, dtype=float)
    a = np.asarray(a, dtype=float)
    out = a - eta * np.asarray(loss_prox(kind, eta, a / eta, y))
    # the identity is exact in real arithmetic; pin rounding to the conjugate's domain
    kind = LossKind.coerce(kind)
    y = np.asarray(y, dtype=float)
    if kind is LossKind.ABSOLUTE:
        out = np.clip(out, -1.0, 1.0)
    else:
        out = y * np.clip(y * out, -1.0, 0.0)
    return out if out.ndim else float(out)
