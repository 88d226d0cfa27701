"""Shared optimal-control-problem data model and cost machinery.

Both transcriptions consume an :class:`OcpSpec` and produce a
:class:`Trajectory`.  Weights are stored keyed by field name so that diagonal
orderings in configuration files are unambiguous.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import ad
from .dynamics import Control, State

__all__ = [
    "StateWeights",
    "ControlWeights",
    "ControlBounds",
    "OcpSpec",
    "Trajectory",
    "stage_cost",
    "terminal_cost",
    "wrap_angle",
]

wrap_angle = ad.wrap_angle


@dataclass(frozen=True)
class StateWeights:
    """Diagonal state weights keyed by state field."""

    x: float = 0.0
    y: float = 0.0
    c: float = 0.0
    phi: float = 0.0

    def as_vector(self) -> np.ndarray:
        # state component order (x, y, c, phi)
        return np.array([self.x, self.y, self.c, self.phi], dtype=float)


@dataclass(frozen=True)
class ControlWeights:
    """Diagonal control weights keyed by control field."""

    v_t: float = 0.0
    v_n: float = 0.0

    def as_vector(self) -> np.ndarray:
        return np.array([self.v_t, self.v_n], dtype=float)


@dataclass(frozen=True)
class ControlBounds:
    """Per-component control intervals; v_n >= 0 encodes unilateral pushing."""

    v_t: tuple[float, float] = (-3.0, 3.0)
    v_n: tuple[float, float] = (0.0, 3.0)

    def lower(self) -> np.ndarray:
        return np.array([self.v_t[0], self.v_n[0]], dtype=float)

    def upper(self) -> np.ndarray:
        return np.array([self.v_t[1], self.v_n[1]], dtype=float)


def _check(cond: bool, msg: str):
    if not cond:
        raise ValueError(msg)


@dataclass(frozen=True)
class OcpSpec:
    """Goal-reaching OCP over horizon ``T`` with ``N`` control intervals.

    ``terminal_equality`` switches to the shrinking-horizon formulation: the
    Mayer term is dropped and the final state is pinned to the goal by
    equality constraints.  ``lagrange_scaling`` selects whether the running
    cost is summed bare ("unit") or weighted by the time step ("dt", the
    Riemann approximation of the continuous objective); ``dt_rule`` selects
    the time-step convention.  ``speed_floor`` is the minimum flat-output
    speed enforced by the flat transcription (None disables the floor and
    exposes the flat map's rest singularity).
    """

    T: float = 1.0
    N: int = 20
    x_start: State = field(default_factory=lambda: State(0.0, 0.0, 0.0, 0.0))
    x_goal: State = field(default_factory=lambda: State(0.0, 5.0, 0.0, 0.0))
    Q: StateWeights = field(default_factory=StateWeights)
    R: ControlWeights = field(default_factory=ControlWeights)
    P: StateWeights = field(default_factory=StateWeights)
    c_bounds: tuple[float, float] = (-0.4, 0.4)
    u_bounds: ControlBounds = field(default_factory=ControlBounds)
    terminal_equality: bool = False
    w_reg: float = 0.0
    dt_rule: str = "n"  # "n": dt = T/N; "n_plus_1": dt = T/(N+1)
    lagrange_scaling: str = "dt"  # "dt" or "unit"
    speed_floor: float | None = 1e-3
    initial_condition: str = "full"  # "full" or "position"

    def __post_init__(self):
        _check(math.isfinite(self.T) and self.T > 0, f"ocp.T must be positive, got {self.T}")
        _check(self.N >= 1, f"ocp.N must be >= 1, got {self.N}")
        for name, w in (("Q", self.Q), ("P", self.P)):
            _check(np.all(w.as_vector() >= 0), f"weights.{name} must be non-negative")
        _check(np.all(self.R.as_vector() >= 0), "weights.R must be non-negative")
        _check(self.c_bounds[0] < self.c_bounds[1], "ocp.c_bounds must be a non-empty interval")
        _check(
            self.u_bounds.v_t[0] < self.u_bounds.v_t[1]
            and self.u_bounds.v_n[0] < self.u_bounds.v_n[1],
            "ocp.u_bounds must be non-empty intervals",
        )
        _check(self.dt_rule in ("n", "n_plus_1"), f"ocp.dt_rule must be 'n' or 'n_plus_1'")
        _check(
            self.lagrange_scaling in ("dt", "unit"),
            "ocp.lagrange_scaling must be 'dt' or 'unit'",
        )
        _check(
            self.initial_condition in ("full", "position"),
            "ocp.initial_condition must be 'full' or 'position'",
        )
        if self.speed_floor is not None:
            _check(self.speed_floor > 0, "ocp.speed_floor must be positive or None")

    @property
    def dt(self) -> float:
        return self.T / self.N if self.dt_rule == "n" else self.T / (self.N + 1)

    @property
    def stage_scale(self) -> float:
        """Factor applied to each running-cost term in the objective."""
        return self.dt if self.lagrange_scaling == "dt" else 1.0

    def with_start(self, s: State) -> "OcpSpec":
        return replace(self, x_start=s)


def goal_error(s: State, spec: OcpSpec) -> np.ndarray:
    """Componentwise error to the goal with the angle wrapped to (-pi, pi]."""
    e = s.as_array() - spec.x_goal.as_array()
    e[3] = wrap_angle(e[3])
    return e


def stage_cost(s: State, u: Control, spec: OcpSpec) -> float:
    """Running cost u'Ru + e'Qe at one node (unscaled by the time step)."""
    e = goal_error(s, spec)
    uv = u.as_array()
    return float(e @ (spec.Q.as_vector() * e) + uv @ (spec.R.as_vector() * uv))


def terminal_cost(s: State, spec: OcpSpec) -> float:
    """Terminal cost e'Pe with wrapped angle error."""
    e = goal_error(s, spec)
    return float(e @ (spec.P.as_vector() * e))


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Uniformly sampled state/control trajectory: N+1 states, N controls."""

    times: np.ndarray
    states: np.ndarray
    controls: np.ndarray

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        states = np.asarray(self.states, dtype=float)
        controls = np.asarray(self.controls, dtype=float).reshape((-1, 2))
        if states.shape != (times.size, 4):
            raise ValueError(f"states must be ({times.size}, 4), got {states.shape}")
        if controls.shape[0] != times.size - 1:
            raise ValueError(
                f"need {times.size - 1} controls for {times.size} states, got {controls.shape[0]}"
            )
        dts = np.diff(times)
        if times.size > 1:
            if np.any(dts <= 0):
                raise ValueError("times must be strictly increasing")
            if np.max(np.abs(dts - dts[0])) > 1e-9 * max(1.0, abs(times[-1])):
                raise ValueError("times must be uniformly spaced")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "controls", controls)

    def __len__(self):
        return self.times.size

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0])

    def state(self, i: int) -> State:
        return State.from_array(self.states[i])

    def control(self, i: int) -> Control:
        return Control.from_array(self.controls[i])

    def cost(self, spec: OcpSpec) -> float:
        """Objective value of this trajectory under the given OCP."""
        total = 0.0
        for i in range(self.controls.shape[0]):
            total += spec.stage_scale * stage_cost(self.state(i), self.control(i), spec)
        if not spec.terminal_equality:
            total += terminal_cost(self.state(len(self) - 1), spec)
        return total
