"""Differential-flatness correspondence for the pusher-slider.

The slider's Cartesian position is a flat output: the full state and control
are algebraic functions of the position and its time derivatives up to order
three.  Orientation comes from the velocity direction, the contact position
from the signed curvature scaled by the geometry factor, and the normal speed
from the velocity magnitude.  The map is singular at zero speed, where the
velocity direction is undefined; callers must keep the speed above
``EPS_SPEED``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

from . import ad
from .dynamics import Control, SliderGeometry, State, dynamics_rhs

if TYPE_CHECKING:
    from .bspline import BSplineCurve

__all__ = [
    "FlatSingularityError",
    "FlatSample",
    "EPS_SPEED",
    "FD_STEP",
    "flat_to_state",
    "flat_to_control",
    "dynamics_residual",
]

# Speed floor below which the flat map divides by a near-zero cube.
EPS_SPEED = 1e-3
# Central-difference step for the residual oracle; balances truncation and
# round-off for order-1 values in double precision.
FD_STEP = 1e-5


class FlatSingularityError(ValueError):
    """Raised when the flat map is evaluated at (near-)zero speed."""


@dataclass(frozen=True)
class FlatSample:
    """Flat output and its first three time derivatives at one instant."""

    p: np.ndarray
    dp: np.ndarray
    ddp: np.ndarray
    dddp: np.ndarray

    def speed(self) -> float:
        return float(np.hypot(self.dp[0], self.dp[1]))


def state_terms(dx, dy, ddx, ddy, g: SliderGeometry):
    """Contact position and orientation from flat derivatives; AD-generic."""
    sp2 = dx * dx + dy * dy
    sp = ad.sqrt(sp2)
    cross = dx * ddy - ddx * dy
    c = g.beta_sq * cross / (sp2 * sp)
    phi = ad.atan2(-dx, dy)
    return c, phi


def control_terms(dx, dy, ddx, ddy, dddx, dddy, g: SliderGeometry, swap_outputs: bool = False):
    """Control inputs from flat derivatives; AD-generic.

    The tangential speed is the contact-position rate plus the contact-offset
    correction; the normal speed is the path speed scaled by the geometry
    factor.  ``swap_outputs`` exchanges the two returned channels; it exists
    only as a probe for the residual oracle and is never used by the
    transcriptions.
    """
    sp2 = dx * dx + dy * dy
    sp = ad.sqrt(sp2)
    sp3 = sp2 * sp
    cross = dx * ddy - ddx * dy
    c = g.beta_sq * cross / sp3
    v_n = (g.beta_sq + c * c) / g.beta_sq * sp
    cdot = (
        g.beta_sq * (dx * dddy - dddx * dy) / sp3
        + 3.0 * g.beta_sq * (ddx * dy - dx * ddy) * (dx * ddx + dy * ddy) / (sp2 * sp3)
    )
    v_t = cdot + g.contact_offset * cross / sp2
    if swap_outputs:
        return v_n, v_t
    return v_t, v_n


def _require_speed(f: FlatSample, eps_speed: float):
    if not np.all(np.isfinite(np.concatenate([f.p, f.dp, f.ddp, f.dddp]))):
        raise ValueError("flat sample components must be finite")
    if f.speed() < eps_speed:
        raise FlatSingularityError(
            f"flat map undefined below speed {eps_speed}, got {f.speed():.3e}"
        )


def flat_to_state(f: FlatSample, g: SliderGeometry, eps_speed: float = EPS_SPEED) -> State:
    """Recover the full state from a flat sample."""
    _require_speed(f, eps_speed)
    c, phi = state_terms(f.dp[0], f.dp[1], f.ddp[0], f.ddp[1], g)
    return State(float(f.p[0]), float(f.p[1]), float(c), float(phi))


def flat_to_control(
    f: FlatSample,
    g: SliderGeometry,
    eps_speed: float = EPS_SPEED,
    swap_outputs: bool = False,
) -> Control:
    """Recover the control input from a flat sample."""
    _require_speed(f, eps_speed)
    v_t, v_n = control_terms(
        f.dp[0], f.dp[1], f.ddp[0], f.ddp[1], f.dddp[0], f.dddp[1], g,
        swap_outputs=swap_outputs,
    )
    return Control(float(v_t), float(v_n))


def _state_at(curve: "BSplineCurve", t: float, g: SliderGeometry, eps_speed: float) -> np.ndarray:
    sample = FlatSample(
        curve.evaluate(t, 0), curve.evaluate(t, 1), curve.evaluate(t, 2), curve.evaluate(t, 3)
    )
    return flat_to_state(sample, g, eps_speed).as_array()


def dynamics_residual(
    curve: "BSplineCurve",
    g: SliderGeometry,
    ts,
    h_fd: float = FD_STEP,
    eps_speed: float = EPS_SPEED,
    swap_outputs: bool = False,
) -> float:
    """Max-norm defect between the flat-mapped trajectory and the kinematics.

    For each time the analytic curve derivatives are mapped to a state and a
    control; the time derivative of the mapped state (central differences
    with step ``h_fd``, angle difference wrapped) is compared against the
    model rates at that state and control.  An exact flat parameterization
    drives this to the finite-difference error floor, which makes the
    function an independent oracle for the flat expressions.
    """
    if curve.degree < 5:
        raise ValueError("residual oracle needs degree >= 5 for continuous third derivatives")
    worst = 0.0
    for t in ts:
        t = float(t)
        sample = FlatSample(
            curve.evaluate(t, 0), curve.evaluate(t, 1),
            curve.evaluate(t, 2), curve.evaluate(t, 3),
        )
        s = flat_to_state(sample, g, eps_speed)
        u = flat_to_control(sample, g, eps_speed, swap_outputs=swap_outputs)
        sp = _state_at(curve, t + h_fd, g, eps_speed)
        sm = _state_at(curve, t - h_fd, g, eps_speed)
        diff = sp - sm
        diff[3] = ad.wrap_angle(diff[3])
        fd_rate = diff / (2.0 * h_fd)
        model_rate = dynamics_rhs(s, u, g)
        worst = max(worst, float(np.max(np.abs(fd_rate - model_rate))))
    return worst
