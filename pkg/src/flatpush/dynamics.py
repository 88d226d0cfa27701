"""Quasi-static kinematic pusher-slider model.

State is ``(x, y, c, phi)``: planar slider position, relative pusher contact
position along the pushed face, and slider orientation.  Control is
``(v_t, v_n)``: pusher speed tangent and normal to the pushed face.  The
model is purely kinematic; with zero input the slider does not move.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import ad

__all__ = [
    "GeometryError",
    "SliderGeometry",
    "State",
    "Control",
    "beta_squared",
    "dynamics_rhs",
    "rk4_step",
    "simulate",
]


class GeometryError(ValueError):
    """Raised for physically invalid slider geometry."""


def beta_squared(a: float, b: float) -> float:
    """Geometry factor (a^2 + b^2) / 12 of a rectangular slider."""
    if not (math.isfinite(a) and math.isfinite(b)) or a <= 0 or b <= 0:
        raise GeometryError(f"side lengths must be positive and finite, got a={a}, b={b}")
    return (a * a + b * b) / 12.0


@dataclass(frozen=True)
class SliderGeometry:
    """Rectangular slider with side lengths ``a``, ``b`` and pusher radius ``r``."""

    a: float = 1.0
    b: float = 1.0
    r: float = 0.05
    beta_sq: float = field(init=False)

    def __post_init__(self):
        if self.r < 0 or not math.isfinite(self.r):
            raise GeometryError(f"pusher radius must be non-negative, got r={self.r}")
        object.__setattr__(self, "beta_sq", beta_squared(self.a, self.b))

    @property
    def contact_offset(self) -> float:
        """Distance from slider center to the pusher center, b/2 + r."""
        return 0.5 * self.b + self.r


@dataclass(frozen=True)
class State:
    x: float
    y: float
    c: float
    phi: float

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.c, self.phi], dtype=float)

    @staticmethod
    def from_array(v) -> "State":
        return State(float(v[0]), float(v[1]), float(v[2]), float(v[3]))

    @property
    def position(self) -> np.ndarray:
        return np.array([self.x, self.y], dtype=float)


@dataclass(frozen=True)
class Control:
    v_t: float
    v_n: float

    def as_array(self) -> np.ndarray:
        return np.array([self.v_t, self.v_n], dtype=float)

    @staticmethod
    def from_array(v) -> "Control":
        return Control(float(v[0]), float(v[1]))


def rhs_terms(x, y, c, phi, v_t, v_n, g: SliderGeometry):
    """Continuous-time rates (xdot, ydot, cdot, phidot), generic over scalars.

    Accepts floats, numpy arrays, or :class:`~flatpush.ad.Dual` values, so the
    same expression serves simulation and derivative propagation.
    """
    w = v_n / (g.beta_sq + c * c)
    xdot = -g.beta_sq * w * ad.sin(phi)
    ydot = g.beta_sq * w * ad.cos(phi)
    cdot = v_t - g.contact_offset * c * w
    phidot = c * w
    return xdot, ydot, cdot, phidot


def _check_finite(name, arr):
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be finite, got {arr}")


def dynamics_rhs(s: State, u: Control, g: SliderGeometry) -> np.ndarray:
    """State derivative of the quasi-static pusher-slider."""
    _check_finite("state", s.as_array())
    _check_finite("control", u.as_array())
    return np.array(rhs_terms(s.x, s.y, s.c, s.phi, u.v_t, u.v_n, g), dtype=float)


def rk4_terms(state, control, dt: float, g: SliderGeometry):
    """One classical RK4 step with zero-order-hold control, generic over scalars.

    ``state`` is a 4-tuple and ``control`` a 2-tuple of floats, arrays, or duals.
    """
    v_t, v_n = control

    def f(st):
        return rhs_terms(st[0], st[1], st[2], st[3], v_t, v_n, g)

    h = dt
    k1 = f(state)
    k2 = f(tuple(state[i] + 0.5 * h * k1[i] for i in range(4)))
    k3 = f(tuple(state[i] + 0.5 * h * k2[i] for i in range(4)))
    k4 = f(tuple(state[i] + h * k3[i] for i in range(4)))
    return tuple(
        state[i] + (h / 6.0) * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
        for i in range(4)
    )


def rk4_step(s: State, u: Control, dt: float, g: SliderGeometry) -> State:
    """Integrate one step of duration ``dt`` holding ``u`` constant."""
    if not (dt > 0):
        raise ValueError(f"dt must be positive, got {dt}")
    nxt = rk4_terms((s.x, s.y, s.c, s.phi), (u.v_t, u.v_n), dt, g)
    return State(*(float(v) for v in nxt))


def simulate(s0: State, controls, dt: float, g: SliderGeometry) -> list[State]:
    """Roll the discrete dynamics forward; returns ``len(controls) + 1`` states."""
    states = [s0]
    for u in controls:
        states.append(rk4_step(states[-1], u, dt, g))
    return states
