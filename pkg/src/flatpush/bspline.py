"""Clamped uniform planar B-splines.

Knot construction, Cox-de Boor basis evaluation with the 0/0 convention,
analytic derivatives through control-point differencing, and collocation
sampling of the flat output.  Curves are immutable; all evaluation is pure.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .flat_map import FlatSample

__all__ = [
    "SplineDomainError",
    "UnderdeterminedSplineError",
    "KnotVector",
    "BSplineCurve",
    "clamped_uniform_knots",
    "basis",
    "basis_row",
    "derivative_operator",
    "collocation_matrix",
    "greville_abscissae",
    "sample_flat",
]


class SplineDomainError(ValueError):
    """Raised when a parameter lies outside the knot span [0, T]."""


class UnderdeterminedSplineError(ValueError):
    """Raised when there are fewer control points than degree + 1."""


@dataclass(frozen=True, eq=False)
class KnotVector:
    """Non-decreasing breakpoint sequence on [0, T]."""

    knots: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.knots, dtype=float)
        if arr.ndim != 1 or arr.size < 2:
            raise ValueError("knot vector must be a 1-d sequence of length >= 2")
        if np.any(np.diff(arr) < 0):
            raise ValueError("knot vector must be non-decreasing")
        object.__setattr__(self, "knots", arr)

    def __len__(self):
        return self.knots.size

    def __getitem__(self, i):
        return self.knots[i]

    @property
    def start(self) -> float:
        return float(self.knots[0])

    @property
    def end(self) -> float:
        return float(self.knots[-1])


def clamped_uniform_knots(n_ctrl: int, degree: int, horizon: float) -> KnotVector:
    """Clamped knot vector: ends repeated degree+1 times, uniform interior."""
    if n_ctrl < degree + 1:
        raise UnderdeterminedSplineError(
            f"need at least degree+1={degree + 1} control points, got {n_ctrl}"
        )
    if not (horizon > 0):
        raise ValueError(f"horizon must be positive, got {horizon}")
    interior = np.linspace(0.0, horizon, n_ctrl - degree + 1)[1:-1]
    knots = np.concatenate(
        [np.zeros(degree + 1), interior, np.full(degree + 1, horizon)]
    )
    return KnotVector(knots)


def basis(i: int, j: int, tau: float, kv: KnotVector) -> float:
    """Cox-de Boor basis function N_{i,j} at ``tau``.

    Terms with zero denominator contribute zero, and the right endpoint is
    assigned to the last non-empty span so the clamped evaluation is total
    on [0, T].
    """
    t = kv.knots
    if tau < t[0] or tau > t[-1]:
        raise SplineDomainError(f"tau={tau} outside knot span [{t[0]}, {t[-1]}]")
    if j == 0:
        if t[i] <= tau < t[i + 1]:
            return 1.0
        if tau == t[-1] and t[i] < t[i + 1] == t[-1]:
            return 1.0
        return 0.0
    out = 0.0
    left_den = t[i + j] - t[i]
    if left_den > 0.0:
        out += (tau - t[i]) / left_den * basis(i, j - 1, tau, kv)
    right_den = t[i + j + 1] - t[i + 1]
    if right_den > 0.0:
        out += (t[i + j + 1] - tau) / right_den * basis(i + 1, j - 1, tau, kv)
    return out


def basis_row(kv: KnotVector, degree: int, tau: float) -> np.ndarray:
    """All basis values of the given degree at ``tau``."""
    n = len(kv) - degree - 1
    return np.array([basis(i, degree, tau, kv) for i in range(n)])


@dataclass(frozen=True, eq=False)
class BSplineCurve:
    """Planar clamped B-spline with immutable control points."""

    degree: int
    ctrl: np.ndarray
    knots: KnotVector
    horizon: float

    def __post_init__(self):
        ctrl = np.atleast_2d(np.asarray(self.ctrl, dtype=float))
        if ctrl.shape[1] != 2:
            raise ValueError("control points must be planar (n, 2)")
        object.__setattr__(self, "ctrl", ctrl)
        t = self.knots.knots
        if len(self.knots) != ctrl.shape[0] + self.degree + 1:
            raise ValueError(
                f"knot count {len(self.knots)} != n_ctrl + degree + 1 = "
                f"{ctrl.shape[0] + self.degree + 1}"
            )
        k = self.degree + 1
        if not (np.all(t[:k] == t[0]) and np.all(t[-k:] == t[-1])):
            raise ValueError("end knots must be repeated degree+1 times (clamped form)")
        if abs(t[-1] - self.horizon) > 1e-12 * max(1.0, abs(self.horizon)):
            raise ValueError("horizon must equal the last knot")

    @property
    def n_ctrl(self) -> int:
        return self.ctrl.shape[0]

    def evaluate(self, tau: float, deriv_order: int = 0) -> np.ndarray:
        """Point or analytic derivative of the curve at ``tau``.

        Orders above the degree return an exact zero vector (polynomial
        annihilation).
        """
        tau = float(tau)
        if tau < self.knots.start or tau > self.knots.end:
            raise SplineDomainError(
                f"tau={tau} outside [{self.knots.start}, {self.knots.end}]"
            )
        if deriv_order > self.degree:
            return np.zeros(2)
        ctrl, kv, deg = self.ctrl, self.knots, self.degree
        for _ in range(deriv_order):
            ctrl, kv, deg = _differentiate(ctrl, kv, deg)
        return basis_row(kv, deg, tau) @ ctrl


def _differentiate(ctrl: np.ndarray, kv: KnotVector, degree: int):
    """One differencing pass: control points and knots of the derivative spline."""
    t = kv.knots
    n = ctrl.shape[0]
    dens = t[degree + 1 : degree + n] - t[1:n]
    if np.any(dens <= 0):
        raise ValueError("degenerate knot spacing in derivative construction")
    q = degree * (ctrl[1:] - ctrl[:-1]) / dens[:, None]
    return q, KnotVector(t[1:-1]), degree - 1


def derivative_operator(kv: KnotVector, degree: int, n_ctrl: int, order: int):
    """Linear map from control points to the order-th derivative's points.

    Returns ``(matrix, trimmed_knots, reduced_degree)`` with matrix shape
    ``(n_ctrl - order, n_ctrl)``.
    """
    op = np.eye(n_ctrl)
    t = kv.knots
    deg = degree
    n = n_ctrl
    for _ in range(order):
        dens = t[deg + 1 : deg + n] - t[1:n]
        step = np.zeros((n - 1, n))
        step[np.arange(n - 1), np.arange(n - 1)] = -deg / dens
        step[np.arange(n - 1), np.arange(1, n)] = deg / dens
        op = step @ op
        t = t[1:-1]
        deg -= 1
        n -= 1
    return op, KnotVector(t), deg


def collocation_matrix(kv: KnotVector, degree: int, n_ctrl: int, ts, order: int = 0) -> np.ndarray:
    """Matrix mapping control points to curve derivatives at sample times.

    Row ``k`` dotted with the control points gives the order-th derivative of
    the spline at ``ts[k]``; derivatives beyond the degree map to zero.
    """
    ts = np.asarray(ts, dtype=float)
    if order > degree:
        return np.zeros((ts.size, n_ctrl))
    op, kv_d, deg_d = derivative_operator(kv, degree, n_ctrl, order)
    rows = np.stack([basis_row(kv_d, deg_d, float(t)) for t in ts])
    return rows @ op


def greville_abscissae(kv: KnotVector, degree: int) -> np.ndarray:
    """Node parameters at which a clamped B-spline reproduces linear data.

    Placing control points at these parameter fractions along a segment
    yields the uniformly parameterized (constant-speed) line.
    """
    t = kv.knots
    n = len(kv) - degree - 1
    return np.array([t[i + 1 : i + 1 + degree].mean() for i in range(n)])


def sample_flat(curve: BSplineCurve, ts) -> list[FlatSample]:
    """Flat samples (derivative orders 0..3) of the curve at the given times."""
    if curve.degree < 5:
        raise ValueError(
            f"flat sampling needs continuous third derivatives (degree >= 5), "
            f"got degree {curve.degree}"
        )
    mats = [
        collocation_matrix(curve.knots, curve.degree, curve.n_ctrl, ts, order)
        for order in range(4)
    ]
    values = [m @ curve.ctrl for m in mats]
    return [
        FlatSample(values[0][k], values[1][k], values[2][k], values[3][k])
        for k in range(len(np.atleast_1d(ts)))
    ]
