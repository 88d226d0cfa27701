"""Flatness-based B-spline transcription of the OCP.

The decision variables are the planar control points of a clamped B-spline
carrying the flat output; states and controls are derived quantities at the
collocation points through the flat map.  Continuity needs no constraints:
every smooth flat path is dynamically feasible by construction, which is why
this transcription gets away with a fraction of the variables the shooting
transcription needs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import ad
from .bspline import (
    BSplineCurve,
    KnotVector,
    clamped_uniform_knots,
    collocation_matrix,
    greville_abscissae,
)
from .dynamics import SliderGeometry
from .flat_map import EPS_SPEED, FlatSingularityError, control_terms, state_terms
from .nlp import NlpProblem, NlpSolution
from .ocp import OcpSpec, Trajectory

__all__ = ["FlatLayout", "build_flat", "decode_flat", "rescale_horizon"]


@dataclass(frozen=True, eq=False)
class FlatLayout:
    """Variable layout: interleaved (x, y) coordinates of the control points."""

    n_ctrl: int
    degree: int
    T: float
    collocation_times: np.ndarray
    knots: KnotVector
    spec: OcpSpec
    sample_mats: tuple = field(repr=False, default=())

    @property
    def n_vars(self) -> int:
        return 2 * self.n_ctrl

    def points_from(self, z: np.ndarray) -> np.ndarray:
        return np.asarray(z, float).reshape(self.n_ctrl, 2)

    def vector_from(self, points: np.ndarray) -> np.ndarray:
        return np.asarray(points, float).reshape(-1)

    def n_eq(self) -> int:
        init = 4 if self.spec.initial_condition == "full" else 2
        return init + (4 if self.spec.terminal_equality else 0)


def build_flat(
    spec: OcpSpec,
    g: SliderGeometry,
    guess: BSplineCurve | None = None,
    n_ctrl: int = 7,
    degree: int = 5,
) -> tuple[NlpProblem, FlatLayout]:
    """Transcribe the OCP onto B-spline control points.

    Equalities pin the initial state through the flat map at time zero (and
    the terminal state in shrinking-horizon mode); contact-position and
    control bounds become inequalities at the collocation points, plus a
    squared-speed floor that keeps iterates away from the flat singularity.
    The objective adds ``w_reg`` times the sum of squared control-point gaps.
    """
    if degree < 5:
        raise ValueError("flat transcription needs degree >= 5 for third derivatives")
    kv = clamped_uniform_knots(n_ctrl, degree, spec.T)
    ts = np.linspace(0.0, spec.T, spec.N + 1)
    mats = tuple(collocation_matrix(kv, degree, n_ctrl, ts, k) for k in range(4))
    layout = FlatLayout(n_ctrl, degree, spec.T, ts, kv, spec, mats)

    start = spec.x_start.as_array()
    goal = spec.x_goal.as_array()
    q_vec, r_vec, p_vec = spec.Q.as_vector(), spec.R.as_vector(), spec.P.as_vector()
    scale = spec.stage_scale
    n = spec.N
    c_lo, c_hi = spec.c_bounds
    u_lo, u_hi = spec.u_bounds.lower(), spec.u_bounds.upper()

    def sampled(z):
        px, py = z[0::2], z[1::2]
        out = []
        for m in mats:
            out.append(ad.matvec(m, px))
            out.append(ad.matvec(m, py))
        return out  # X, Y, DX, DY, DDX, DDY, DDDX, DDDY

    def _objective_from(z, samples, c, phi, v_t, v_n):
        X, Y = samples[0], samples[1]
        ex, ey = X - goal[0], Y - goal[1]
        ec = c - goal[2]
        ephi = ad.wrap_angle(phi - goal[3])
        total = scale * (
            q_vec[0] * ad.bsum(ex[:n] ** 2)
            + q_vec[1] * ad.bsum(ey[:n] ** 2)
            + q_vec[2] * ad.bsum(ec[:n] ** 2)
            + q_vec[3] * ad.bsum(ephi[:n] ** 2)
            + r_vec[0] * ad.bsum(v_t[:n] ** 2)
            + r_vec[1] * ad.bsum(v_n[:n] ** 2)
        )
        if not spec.terminal_equality:
            total = total + (
                p_vec[0] * ex[n] ** 2
                + p_vec[1] * ey[n] ** 2
                + p_vec[2] * ec[n] ** 2
                + p_vec[3] * ephi[n] ** 2
            )
        if spec.w_reg:
            px, py = z[0::2], z[1::2]
            gx = px[1:] - px[:-1]
            gy = py[1:] - py[:-1]
            total = total + spec.w_reg * ad.bsum(gx * gx + gy * gy)
        return total

    def _eq_from(samples, c, phi):
        X, Y = samples[0], samples[1]
        rows = [X[0] - start[0], Y[0] - start[1]]
        if spec.initial_condition == "full":
            rows += [c[0] - start[2], ad.wrap_angle(phi[0] - start[3])]
        if spec.terminal_equality:
            rows += [
                X[n] - goal[0],
                Y[n] - goal[1],
                c[n] - goal[2],
                ad.wrap_angle(phi[n] - goal[3]),
            ]
        return ad.stack(rows)

    def _ineq_from(samples, c, v_t, v_n):
        DX, DY = samples[2], samples[3]
        rows = [
            c - c_hi,
            c_lo - c,
            v_t - u_hi[0],
            u_lo[0] - v_t,
            v_n - u_hi[1],
            u_lo[1] - v_n,
        ]
        if spec.speed_floor is not None:
            rows.append(spec.speed_floor**2 - (DX * DX + DY * DY))
        return ad.concat(rows)

    def _parts(z):
        samples = sampled(z)
        X, Y, DX, DY, DDX, DDY, DDDX, DDDY = samples
        c, phi = state_terms(DX, DY, DDX, DDY, g)
        v_t, v_n = control_terms(DX, DY, DDX, DDY, DDDX, DDDY, g)
        return samples, c, phi, v_t, v_n

    def objective(z):
        samples, c, phi, v_t, v_n = _parts(z)
        return _objective_from(z, samples, c, phi, v_t, v_n)

    def eq_constraints(z):
        samples, c, phi, _, _ = _parts(z)
        return _eq_from(samples, c, phi)

    def ineq_constraints(z):
        samples, c, _, v_t, v_n = _parts(z)
        return _ineq_from(samples, c, v_t, v_n)

    def combined(z):
        samples, c, phi, v_t, v_n = _parts(z)
        return (
            _objective_from(z, samples, c, phi, v_t, v_n),
            _eq_from(samples, c, phi),
            _ineq_from(samples, c, v_t, v_n),
        )

    if guess is not None:
        if guess.n_ctrl != n_ctrl or guess.degree != degree:
            raise ValueError("warm-start curve shape does not match the layout")
        points = guess.ctrl
    else:
        frac = greville_abscissae(kv, degree)[:, None]
        points = (1.0 - frac) * start[:2] + frac * goal[:2]

    problem = NlpProblem(
        n_vars=layout.n_vars,
        objective=objective,
        eq_constraints=eq_constraints,
        ineq_constraints=ineq_constraints,
        initial_guess=layout.vector_from(points),
        combined=combined,
    )
    return problem, layout


def rescale_horizon(curve: BSplineCurve, t_new: float) -> BSplineCurve:
    """Reparameterize the curve onto [0, t_new]; the geometric image is unchanged.

    Derivative magnitudes scale by (T_old / T_new) per order.
    """
    if not (t_new > 0):
        raise ValueError(f"new horizon must be positive, got {t_new}")
    factor = t_new / curve.horizon
    return BSplineCurve(
        curve.degree, curve.ctrl.copy(), KnotVector(curve.knots.knots * factor), t_new
    )


def decode_flat(
    sol: NlpSolution, layout: FlatLayout, g: SliderGeometry
) -> tuple[BSplineCurve, Trajectory]:
    """Rebuild the solved curve and sample it into a trajectory.

    States and controls are recovered through the flat map at the collocation
    times; the orientation sequence is unwrapped and aligned to the start
    orientation of the transcribed problem.  Raises
    :class:`~flatpush.flat_map.FlatSingularityError` when the solved curve
    dips below the speed floor, which signals a failed solve.
    """
    z = np.asarray(sol.x_star, float)
    if z.shape != (layout.n_vars,):
        raise ValueError(f"solution has {z.shape} variables, layout expects {layout.n_vars}")
    points = layout.points_from(z)
    curve = BSplineCurve(layout.degree, points, layout.knots, layout.T)

    mats = layout.sample_mats
    X, Y = mats[0] @ points[:, 0], mats[0] @ points[:, 1]
    DX, DY = mats[1] @ points[:, 0], mats[1] @ points[:, 1]
    DDX, DDY = mats[2] @ points[:, 0], mats[2] @ points[:, 1]
    DDDX, DDDY = mats[3] @ points[:, 0], mats[3] @ points[:, 1]

    speed = np.hypot(DX, DY)
    if np.any(speed < EPS_SPEED):
        raise FlatSingularityError(
            f"decoded curve speed {speed.min():.3e} below {EPS_SPEED}; solve failed"
        )
    c, phi = state_terms(DX, DY, DDX, DDY, g)
    v_t, v_n = control_terms(DX, DY, DDX, DDY, DDDX, DDDY, g)

    phi = np.unwrap(np.asarray(phi))
    phi += 2.0 * np.pi * np.round((layout.spec.x_start.phi - phi[0]) / (2.0 * np.pi))

    states = np.column_stack([X, Y, np.asarray(c), phi])
    controls = np.column_stack([np.asarray(v_t)[:-1], np.asarray(v_n)[:-1]])
    return curve, Trajectory(layout.collocation_times, states, controls)
