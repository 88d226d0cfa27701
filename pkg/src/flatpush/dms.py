"""Direct multiple shooting transcription of an OCP into an NLP.

States and controls at every node are decision variables, tied together by
one integration-defect equality per interval.  Variables interleave as
``[x_0, u_0, x_1, u_1, ..., x_N]``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import ad
from .dynamics import SliderGeometry, rk4_terms
from .nlp import NlpProblem, NlpSolution
from .ocp import OcpSpec, Trajectory

__all__ = ["DmsLayout", "build_dms", "decode_dms", "encode_trajectory"]

N_X = 4
N_U = 2


@dataclass(frozen=True)
class DmsLayout:
    """Index map between trajectory nodes and the flat variable vector."""

    N: int
    n_x: int = N_X
    n_u: int = N_U
    state_idx: np.ndarray = field(init=False)
    control_idx: np.ndarray = field(init=False)

    def __post_init__(self):
        stride = self.n_x + self.n_u
        s = np.arange(self.N + 1)[:, None] * stride + np.arange(self.n_x)
        u = np.arange(self.N)[:, None] * stride + self.n_x + np.arange(self.n_u)
        object.__setattr__(self, "state_idx", s)
        object.__setattr__(self, "control_idx", u)

    @property
    def n_vars(self) -> int:
        return self.N * (self.n_x + self.n_u) + self.n_x

    def n_eq(self, terminal_equality: bool) -> int:
        return self.n_x * (self.N + 1) + (self.n_x if terminal_equality else 0)


def _gather(z, idx):
    return z[idx]


def defect_rows(z, layout: DmsLayout, dt: float, g: SliderGeometry):
    """Integration defects x_{i+1} - step(x_i, u_i) for all intervals, stacked."""
    xs = _gather(z, layout.state_idx)
    us = _gather(z, layout.control_idx)
    cur = tuple(xs[:-1, j] for j in range(N_X))
    ctl = tuple(us[:, j] for j in range(N_U))
    nxt = rk4_terms(cur, ctl, dt, g)
    return ad.concat([xs[1:, j] - nxt[j] for j in range(N_X)])


def build_dms(
    spec: OcpSpec, g: SliderGeometry, guess: Trajectory | None = None
) -> tuple[NlpProblem, DmsLayout]:
    """Transcribe the OCP by multiple shooting.

    Equalities pin the initial state and enforce continuity across intervals
    (plus the terminal state in shrinking-horizon mode); the contact-position
    and control bounds become variable box bounds.
    """
    layout = DmsLayout(spec.N)
    dt = spec.dt
    start = spec.x_start.as_array()
    goal = spec.x_goal.as_array()
    q_vec, r_vec, p_vec = spec.Q.as_vector(), spec.R.as_vector(), spec.P.as_vector()
    scale = spec.stage_scale

    lower = np.full(layout.n_vars, -np.inf)
    upper = np.full(layout.n_vars, np.inf)
    lower[layout.state_idx[:, 2]] = spec.c_bounds[0]
    upper[layout.state_idx[:, 2]] = spec.c_bounds[1]
    lower[layout.control_idx.ravel()] = np.tile(spec.u_bounds.lower(), spec.N)
    upper[layout.control_idx.ravel()] = np.tile(spec.u_bounds.upper(), spec.N)

    def _eq_from(z, xs):
        rows = [xs[0, :] - start, defect_rows(z, layout, dt, g)]
        if spec.terminal_equality:
            rows.append(
                ad.stack(
                    [
                        xs[layout.N, 0] - goal[0],
                        xs[layout.N, 1] - goal[1],
                        xs[layout.N, 2] - goal[2],
                        ad.wrap_angle(xs[layout.N, 3] - goal[3]),
                    ]
                )
            )
        return ad.concat(rows)

    def _objective_from(xs, us):
        ex = xs[:, 0] - goal[0]
        ey = xs[:, 1] - goal[1]
        ec = xs[:, 2] - goal[2]
        ephi = ad.wrap_angle(xs[:, 3] - goal[3])
        total = scale * (
            q_vec[0] * ad.bsum(ex[: spec.N] ** 2)
            + q_vec[1] * ad.bsum(ey[: spec.N] ** 2)
            + q_vec[2] * ad.bsum(ec[: spec.N] ** 2)
            + q_vec[3] * ad.bsum(ephi[: spec.N] ** 2)
            + r_vec[0] * ad.bsum(us[:, 0] ** 2)
            + r_vec[1] * ad.bsum(us[:, 1] ** 2)
        )
        if not spec.terminal_equality:
            total = total + (
                p_vec[0] * ex[spec.N] ** 2
                + p_vec[1] * ey[spec.N] ** 2
                + p_vec[2] * ec[spec.N] ** 2
                + p_vec[3] * ephi[spec.N] ** 2
            )
        return total

    def eq_constraints(z):
        return _eq_from(z, _gather(z, layout.state_idx))

    def objective(z):
        return _objective_from(_gather(z, layout.state_idx), _gather(z, layout.control_idx))

    def combined(z):
        xs = _gather(z, layout.state_idx)
        us = _gather(z, layout.control_idx)
        return _objective_from(xs, us), _eq_from(z, xs), None

    if guess is None:
        guess = _linear_guess(spec)
    z0 = encode_trajectory(guess, layout)

    problem = NlpProblem(
        n_vars=layout.n_vars,
        objective=objective,
        eq_constraints=eq_constraints,
        lower=lower,
        upper=upper,
        initial_guess=np.clip(z0, lower, upper),
        combined=combined,
    )
    return problem, layout


def _linear_guess(spec: OcpSpec) -> Trajectory:
    # straight-line state interpolation with zero controls
    alphas = np.linspace(0.0, 1.0, spec.N + 1)[:, None]
    start, goal = spec.x_start.as_array(), spec.x_goal.as_array()
    states = (1.0 - alphas) * start + alphas * goal
    times = np.arange(spec.N + 1) * spec.dt
    return Trajectory(times, states, np.zeros((spec.N, N_U)))


def encode_trajectory(traj: Trajectory, layout: DmsLayout) -> np.ndarray:
    """Pack a trajectory into the flat variable vector; inverse of decoding."""
    if traj.states.shape[0] != layout.N + 1:
        raise ValueError(
            f"trajectory has {traj.states.shape[0]} nodes, layout expects {layout.N + 1}"
        )
    z = np.empty(layout.n_vars)
    z[layout.state_idx] = traj.states
    z[layout.control_idx] = traj.controls
    return z


def decode_dms(sol: NlpSolution, layout: DmsLayout, spec: OcpSpec) -> Trajectory:
    """Unpack a solution into a trajectory; exact inverse of encoding."""
    z = np.asarray(sol.x_star, float)
    if z.shape != (layout.n_vars,):
        raise ValueError(f"solution has {z.shape} variables, layout expects {layout.n_vars}")
    times = np.arange(layout.N + 1) * spec.dt
    return Trajectory(times, z[layout.state_idx], z[layout.control_idx])
