"""Forward-mode automatic differentiation with array-valued dual numbers.

A :class:`Dual` carries a value array of shape ``s`` and a derivative array
of shape ``s + (n,)`` holding the forward sensitivities with respect to ``n``
seed directions.  Model code written against the dispatching math helpers in
this module (``sin``, ``cos``, ``atan2``, ...) evaluates unchanged on plain
floats, numpy arrays, or duals, so values and machine-accurate derivatives
share one code path.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "Dual",
    "NonFiniteEvaluation",
    "seed",
    "value",
    "jacobian",
    "sin",
    "cos",
    "sqrt",
    "atan2",
    "hypot",
    "wrap_angle",
    "stack",
    "concat",
    "ravel",
    "bsum",
    "matvec",
    "dot",
]


class NonFiniteEvaluation(ArithmeticError):
    """Raised when a differentiated evaluation produces non-finite values."""


def _lift(v):
    # scalar values broadcast against gradient arrays directly; array values
    # need a trailing axis for the seed dimension
    return v if np.ndim(v) == 0 else np.asarray(v)[..., None]


class Dual:
    """Value plus forward sensitivities with respect to the seed directions."""

    __slots__ = ("val", "grad")

    # defer all numpy binary ops to the reflected Dual methods
    __array_ufunc__ = None

    def __init__(self, val, grad):
        self.val = val
        self.grad = grad

    # -- arithmetic ---------------------------------------------------------

    def __add__(self, other):
        if isinstance(other, Dual):
            return Dual(self.val + other.val, self.grad + other.grad)
        return Dual(self.val + other, _keep(self.grad, np.shape(self.val + other)))

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, Dual):
            return Dual(self.val - other.val, self.grad - other.grad)
        return Dual(self.val - other, _keep(self.grad, np.shape(self.val - other)))

    def __rsub__(self, other):
        return Dual(other - self.val, _keep(-self.grad, np.shape(other - self.val)))

    def __mul__(self, other):
        if isinstance(other, Dual):
            return Dual(
                self.val * other.val,
                _lift(self.val) * other.grad + _lift(other.val) * self.grad,
            )
        return Dual(self.val * other, _lift(other) * self.grad)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Dual):
            inv = 1.0 / other.val
            val = self.val * inv
            return Dual(val, _lift(inv) * self.grad - _lift(val * inv) * other.grad)
        inv = 1.0 / np.asarray(other) if np.ndim(other) else 1.0 / other
        return Dual(self.val * inv, _lift(inv) * self.grad)

    def __rtruediv__(self, other):
        inv = 1.0 / self.val
        val = other * inv
        return Dual(val, -_lift(val * inv) * self.grad)

    def __pow__(self, p):
        if p == 2:
            return Dual(self.val * self.val, 2.0 * _lift(self.val) * self.grad)
        return Dual(self.val**p, _lift(p * self.val ** (p - 1)) * self.grad)

    def __neg__(self):
        return Dual(-self.val, -self.grad)

    def __getitem__(self, idx):
        return Dual(self.val[idx], self.grad[idx])

    # comparisons act on values only (used for branch guards, never inside
    # differentiated expressions)
    def __lt__(self, other):
        return self.val < _peel(other)

    def __le__(self, other):
        return self.val <= _peel(other)

    def __gt__(self, other):
        return self.val > _peel(other)

    def __ge__(self, other):
        return self.val >= _peel(other)

    def __repr__(self):
        return f"Dual(val={self.val!r})"

    @property
    def shape(self):
        return np.shape(self.val)


def _peel(x):
    return x.val if isinstance(x, Dual) else x


def _keep(grad, shape):
    # adding a constant may broadcast the value; the gradient must follow
    if np.shape(grad)[:-1] == shape:
        return grad
    n = np.shape(grad)[-1]
    return np.broadcast_to(grad, shape + (n,))


# -- dispatching math helpers -------------------------------------------------


def sin(x):
    if isinstance(x, Dual):
        return Dual(np.sin(x.val), _lift(np.cos(x.val)) * x.grad)
    return np.sin(x)


def cos(x):
    if isinstance(x, Dual):
        return Dual(np.cos(x.val), _lift(-np.sin(x.val)) * x.grad)
    return np.cos(x)


def sqrt(x):
    if isinstance(x, Dual):
        r = np.sqrt(x.val)
        return Dual(r, _lift(0.5 / r) * x.grad)
    return np.sqrt(x)


def atan2(y, x):
    if not isinstance(y, Dual) and not isinstance(x, Dual):
        return np.arctan2(y, x)
    yv, xv = _peel(y), _peel(x)
    val = np.arctan2(yv, xv)
    inv = 1.0 / (xv * xv + yv * yv)
    n = (y if isinstance(y, Dual) else x).grad.shape[-1]
    zeros = np.zeros(np.shape(val) + (n,))
    gy = y.grad if isinstance(y, Dual) else zeros
    gx = x.grad if isinstance(x, Dual) else zeros
    return Dual(val, _lift(xv * inv) * gy - _lift(yv * inv) * gx)


def hypot(x, y):
    return sqrt(x * x + y * y)


def wrap_angle(d):
    """Wrap an angle difference to (-pi, pi]; derivative is 1 a.e."""
    if isinstance(d, Dual):
        return Dual(wrap_angle(d.val), d.grad)
    return np.pi - (np.pi - d) % (2.0 * np.pi)


# -- structural helpers --------------------------------------------------------


def seed(x: np.ndarray) -> Dual:
    """Lift a variable vector into a dual with identity seed directions."""
    x = np.asarray(x, dtype=float)
    return Dual(x.copy(), np.eye(x.size))


def value(x):
    """Plain value of a dual or pass-through for ordinary numerics."""
    return x.val if isinstance(x, Dual) else x


def _as_dual(x, n):
    if isinstance(x, Dual):
        return x
    v = np.asarray(x, dtype=float)
    return Dual(v, np.zeros(v.shape + (n,)))


def stack(parts):
    """Stack scalar-valued duals/constants into a vector; dual-aware."""
    n = next((p.grad.shape[-1] for p in parts if isinstance(p, Dual)), None)
    if n is None:
        return np.stack([np.asarray(p, dtype=float) for p in parts])
    parts = [_as_dual(p, n) for p in parts]
    return Dual(
        np.stack([p.val for p in parts]),
        np.stack([p.grad for p in parts]),
    )


def concat(parts):
    """Concatenate vector-valued duals/constants along the leading axis."""
    n = next((p.grad.shape[-1] for p in parts if isinstance(p, Dual)), None)
    if n is None:
        return np.concatenate([np.atleast_1d(np.asarray(p, dtype=float)) for p in parts])
    parts = [p if isinstance(p, Dual) else _as_dual(np.atleast_1d(p), n) for p in parts]
    return Dual(
        np.concatenate([np.atleast_1d(p.val) for p in parts]),
        np.concatenate([p.grad.reshape((-1, n)) for p in parts]),
    )


def ravel(x: Dual) -> Dual:
    n = x.grad.shape[-1]
    return Dual(np.ravel(x.val), x.grad.reshape((-1, n)))


def bsum(x):
    """Sum a dual over all of its batch axes, leaving a scalar dual."""
    if isinstance(x, Dual):
        n = x.grad.shape[-1]
        return Dual(np.sum(x.val), x.grad.reshape((-1, n)).sum(axis=0))
    return np.sum(x)


def matvec(m: np.ndarray, x):
    """Constant matrix times (dual) vector."""
    if isinstance(x, Dual):
        g = x.grad
        if g.ndim == 2:
            return Dual(m @ x.val, m @ g)
        return Dual(m @ x.val, np.tensordot(m, g, axes=([1], [0])))
    return m @ x


def dot(w: np.ndarray, x):
    """Constant vector dotted with a (dual) vector."""
    if isinstance(x, Dual):
        return Dual(w @ x.val, np.tensordot(w, x.grad, axes=([0], [0])))
    return w @ x


def jacobian(fn, x: np.ndarray):
    """Evaluate ``fn`` at ``x`` and return ``(value, derivative)``.

    The derivative is the gradient for scalar-valued ``fn`` and the Jacobian
    for vector-valued ``fn``, computed in a single forward pass.  Raises
    :class:`NonFiniteEvaluation` if the result is not finite.
    """
    x = np.asarray(x, dtype=float)
    out = fn(seed(x))
    if not isinstance(out, Dual):
        val = np.asarray(out, dtype=float)
        return val, np.zeros(val.shape + (x.size,))
    val = np.asarray(out.val, dtype=float)
    grad = np.asarray(out.grad, dtype=float)
    if not (np.all(np.isfinite(val)) and np.all(np.isfinite(grad))):
        raise NonFiniteEvaluation("non-finite value or derivative encountered")
    return val, grad
