"""Generic smooth constrained optimization with a KKT-residual contract.

Problems are posed as callbacks over the variable vector; the same callbacks
are evaluated with plain arrays for values and with dual numbers for
machine-accurate derivatives (see :mod:`flatpush.ad`), so there is exactly one
code path for both.  The solver runs an augmented-Lagrangian outer loop
(Powell-Hestenes-Rockafellar multiplier updates with a quadratic penalty)
around a bound-constrained quasi-Newton inner solver.  Every returned
solution carries multipliers and a KKT residual that
:func:`kkt_residual` can re-audit independently.
"""

from __future__ import annotations

import enum
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from . import ad
from .ad import NonFiniteEvaluation

__all__ = [
    "NlpProblem",
    "NlpSolution",
    "SolverConfig",
    "SolverStatus",
    "WarmStart",
    "gradient",
    "kkt_residual",
    "solve",
]


class SolverStatus(str, enum.Enum):
    CONVERGED = "converged"
    MAX_ITERATIONS = "max_iterations"
    NUMERICAL_FAILURE = "numerical_failure"


@dataclass
class NlpProblem:
    """Smooth constrained program: min f(x) s.t. c_eq(x)=0, c_in(x)<=0, l<=x<=u.

    Callbacks must accept either a numpy vector or an :class:`~flatpush.ad.Dual`
    and be built from the generic math helpers so derivatives propagate.
    ``combined``, when given, returns ``(objective, eq, ineq)`` from one pass
    over shared intermediates; it must agree with the individual callbacks.
    """

    n_vars: int
    objective: object
    eq_constraints: object = None
    ineq_constraints: object = None
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None
    initial_guess: np.ndarray | None = None
    combined: object = None

    def __post_init__(self):
        n = self.n_vars
        self.lower = np.full(n, -np.inf) if self.lower is None else np.asarray(self.lower, float)
        self.upper = np.full(n, np.inf) if self.upper is None else np.asarray(self.upper, float)
        if self.lower.shape != (n,) or self.upper.shape != (n,):
            raise ValueError("bounds must have shape (n_vars,)")
        if np.any(self.lower > self.upper):
            raise ValueError("lower bounds must not exceed upper bounds")
        if self.initial_guess is None:
            self.initial_guess = np.clip(np.zeros(n), self.lower, self.upper)
        else:
            self.initial_guess = np.asarray(self.initial_guess, float)
            if self.initial_guess.shape != (n,):
                raise ValueError("initial guess must have shape (n_vars,)")

    def eval_objective(self, x) -> float:
        return float(ad.value(self.objective(np.asarray(x, float))))

    def eval_eq(self, x) -> np.ndarray:
        if self.eq_constraints is None:
            return np.zeros(0)
        return np.atleast_1d(np.asarray(ad.value(self.eq_constraints(np.asarray(x, float))), float))

    def eval_ineq(self, x) -> np.ndarray:
        if self.ineq_constraints is None:
            return np.zeros(0)
        return np.atleast_1d(np.asarray(ad.value(self.ineq_constraints(np.asarray(x, float))), float))

    def evaluate(self, x):
        """Objective, equality, and inequality parts in one pass.

        ``x`` may be a plain vector or a seeded dual; parts are returned in
        whatever representation the callbacks produce.
        """
        if self.combined is not None:
            return self.combined(x)
        f = self.objective(x)
        ceq = self.eq_constraints(x) if self.eq_constraints is not None else None
        cin = self.ineq_constraints(x) if self.ineq_constraints is not None else None
        return f, ceq, cin


@dataclass(frozen=True)
class SolverConfig:
    tol_kkt: float = 1e-6
    tol_feas: float = 1e-8
    max_iterations: int = 200
    penalty_initial: float = 10.0
    penalty_growth: float = 10.0
    penalty_cap: float = 1e8
    violation_shrink: float = 4.0
    inner_max_iterations: int = 800
    inner_memory: int = 30

    def __post_init__(self):
        if self.tol_kkt <= 0 or self.tol_feas <= 0:
            raise ValueError("solver tolerances must be positive")


@dataclass(frozen=True)
class WarmStart:
    """Multiplier and penalty carry-over between consecutive solves."""

    eq_multipliers: np.ndarray | None = None
    ineq_multipliers: np.ndarray | None = None
    penalty: float | None = None


@dataclass
class NlpSolution:
    x_star: np.ndarray
    objective: float
    eq_multipliers: np.ndarray
    ineq_multipliers: np.ndarray
    bound_multipliers: np.ndarray
    status: SolverStatus
    iterations: int
    inner_iterations: int
    kkt_residual: float
    max_violation: float
    solve_time: float


def gradient(fn, x: np.ndarray) -> np.ndarray:
    """Derivative of a callback at ``x``: gradient if scalar, Jacobian if vector.

    Computed by forward-propagated dual arithmetic through the same code path
    used for values, never by numeric differencing.  Raises
    :class:`~flatpush.ad.NonFiniteEvaluation` when the propagation produces
    non-finite values.
    """
    _, jac = ad.jacobian(fn, x)
    return jac


def _forward_data(p: NlpProblem, x):
    """Values and Jacobians of all problem parts from one seeded pass."""
    n = p.n_vars

    def _vec(c):
        if c is None:
            return np.zeros(0), np.zeros((0, n))
        if isinstance(c, ad.Dual):
            vals = np.atleast_1d(np.asarray(c.val, float))
            return vals, np.asarray(c.grad, float).reshape(vals.size, n)
        vals = np.atleast_1d(np.asarray(c, float))
        return vals, np.zeros((vals.size, n))

    with np.errstate(all="ignore"):
        f, ceq, cin = p.evaluate(ad.seed(np.asarray(x, float)))
    fv = float(ad.value(f))
    gf = np.asarray(f.grad, float) if isinstance(f, ad.Dual) else np.zeros(n)
    cev, jeq = _vec(ceq)
    civ, jin = _vec(cin)
    return fv, gf, cev, jeq, civ, jin


def _grad_lagrangian(gf, jeq, jin, lam, mu):
    g = gf.copy()
    if lam.size:
        g += lam @ jeq
    if mu.size:
        g += mu @ jin
    return g


def _bound_multipliers(p: NlpProblem, x, g_lag):
    scale = np.maximum(1.0, np.abs(x))
    at_lower = (x - p.lower) <= 1e-12 * scale
    at_upper = (p.upper - x) <= 1e-12 * scale
    z = np.zeros_like(x)
    z[at_lower] = np.maximum(g_lag[at_lower], 0.0)
    z[at_upper] = z[at_upper] - np.maximum(-g_lag[at_upper], 0.0)
    return z


def _kkt_terms(p: NlpProblem, x, lam, mu, z, data=None):
    if data is None:
        data = _forward_data(p, x)
    _, gf, ceq, jeq, cin, jin = data
    g_lag = _grad_lagrangian(gf, jeq, jin, lam, mu)
    stationarity = float(np.max(np.abs(g_lag - z), initial=0.0))

    feas = 0.0
    if ceq.size:
        feas = max(feas, float(np.max(np.abs(ceq))))
    if cin.size:
        feas = max(feas, float(np.max(np.maximum(cin, 0.0))))
    feas = max(feas, float(np.max(np.maximum(p.lower - x, 0.0), initial=0.0)))
    feas = max(feas, float(np.max(np.maximum(x - p.upper, 0.0), initial=0.0)))

    dual = float(np.max(np.maximum(-mu, 0.0), initial=0.0))
    comp = 0.0
    if cin.size:
        comp = float(np.max(np.abs(mu * cin), initial=0.0))
    zp, zm = np.maximum(z, 0.0), np.maximum(-z, 0.0)
    gap_l = np.zeros_like(x)
    gap_u = np.zeros_like(x)
    ml, mu_mask = zp > 0.0, zm > 0.0
    gap_l[ml] = zp[ml] * (x[ml] - p.lower[ml])
    gap_u[mu_mask] = zm[mu_mask] * (p.upper[mu_mask] - x[mu_mask])
    comp = max(comp, float(np.max(np.abs(gap_l), initial=0.0)))
    comp = max(comp, float(np.max(np.abs(gap_u), initial=0.0)))

    return max(stationarity, feas, dual, comp), feas


def kkt_residual(p: NlpProblem, sol: NlpSolution) -> float:
    """Max-norm KKT residual of a solution; pure function, usable as an audit."""
    residual, _ = _kkt_terms(
        p, np.asarray(sol.x_star, float),
        np.asarray(sol.eq_multipliers, float),
        np.asarray(sol.ineq_multipliers, float),
        np.asarray(sol.bound_multipliers, float),
    )
    return residual


def _augmented_lagrangian(p: NlpProblem, lam, mu, rho):
    """Value-and-gradient callback for the inner bound-constrained solver."""

    def fun(xf):
        with np.errstate(all="ignore"):
            total, c, h = p.evaluate(ad.seed(xf))
            if not isinstance(total, ad.Dual):
                total = ad.Dual(float(total), np.zeros(xf.size))
            if c is not None and lam.size:
                total = total + ad.dot(lam, c) + (0.5 * rho) * ad.bsum(c * c)
            if h is not None and mu.size:
                t = mu + rho * h
                active = (np.atleast_1d(ad.value(t)) > 0.0).astype(float)
                total = total + (0.5 / rho) * (ad.bsum((t * t) * active) - float(mu @ mu))
            val = float(ad.value(total))
            grad = total.grad if isinstance(total, ad.Dual) else np.zeros(xf.size)
        if not (np.isfinite(val) and np.all(np.isfinite(grad))):
            raise NonFiniteEvaluation("non-finite augmented Lagrangian evaluation")
        return val, np.asarray(grad, float)

    return fun


def solve(p: NlpProblem, cfg: SolverConfig = SolverConfig(), warm: WarmStart | None = None) -> NlpSolution:
    """Solve the program to the configured KKT and feasibility tolerances.

    Deterministic given identical inputs and configuration.  A callback that
    produces non-finite values yields status ``numerical_failure`` with the
    best iterate found, never a crash.
    """
    t_start = time.perf_counter()
    x = np.clip(np.asarray(p.initial_guess, float), p.lower, p.upper)
    m_eq = p.eval_eq(x).size
    m_in = p.eval_ineq(x).size

    lam = np.zeros(m_eq)
    mu = np.zeros(m_in)
    rho = cfg.penalty_initial
    if warm is not None:
        if warm.eq_multipliers is not None:
            lam = np.asarray(warm.eq_multipliers, float).copy()
            if lam.shape != (m_eq,):
                raise ValueError("warm eq_multipliers shape mismatch")
        if warm.ineq_multipliers is not None:
            mu = np.maximum(np.asarray(warm.ineq_multipliers, float), 0.0)
            if mu.shape != (m_in,):
                raise ValueError("warm ineq_multipliers shape mismatch")
        if warm.penalty is not None:
            rho = min(max(warm.penalty, cfg.penalty_initial), cfg.penalty_cap)

    bounds = list(zip(p.lower, p.upper))
    omega_final = 0.3 * cfg.tol_kkt
    # with carried-over multipliers the first subproblem is already near the
    # optimum, so skip the loose early inner tolerances
    warm_duals = warm is not None and (
        warm.eq_multipliers is not None or warm.ineq_multipliers is not None
    )
    omega = omega_final if warm_duals else max(1e-3, cfg.tol_kkt)
    prev_viol = np.inf
    status = SolverStatus.MAX_ITERATIONS
    iterations = 0
    inner_total = 0
    kkt = np.inf
    viol = np.inf
    z = np.zeros(p.n_vars)

    for outer in range(cfg.max_iterations):
        iterations = outer + 1
        fun = _augmented_lagrangian(p, lam, mu, rho)
        try:
            res = minimize(
                fun,
                x,
                jac=True,
                method="L-BFGS-B",
                bounds=bounds,
                options={
                    "maxiter": cfg.inner_max_iterations,
                    "maxfun": 20 * cfg.inner_max_iterations,
                    "ftol": 0.0,
                    "gtol": omega,
                    "maxcor": cfg.inner_memory,
                },
            )
            x = np.clip(np.asarray(res.x, float), p.lower, p.upper)
            inner_total += int(res.nit)
            with np.errstate(all="ignore"):
                data = _forward_data(p, x)
                _, gf, ceq, jeq, cin, jin = data
                if not (np.all(np.isfinite(ceq)) and np.all(np.isfinite(cin))):
                    raise NonFiniteEvaluation("non-finite constraint evaluation")
                raw_viol = 0.0
                if ceq.size:
                    raw_viol = max(raw_viol, float(np.max(np.abs(ceq))))
                if cin.size:
                    raw_viol = max(raw_viol, float(np.max(np.maximum(cin, 0.0))))
                grow = raw_viol > cfg.tol_feas and raw_viol > prev_viol / cfg.violation_shrink
                if not grow:
                    # safeguarded dual update: only when the violation shrinks
                    lam = lam + rho * ceq
                    mu = np.maximum(mu + rho * cin, 0.0) if m_in else mu
                g_lag = _grad_lagrangian(gf, jeq, jin, lam, mu)
                z = _bound_multipliers(p, x, g_lag)
                kkt, viol = _kkt_terms(p, x, lam, mu, z, data=data)
        except (NonFiniteEvaluation, FloatingPointError):
            status = SolverStatus.NUMERICAL_FAILURE
            break

        if kkt <= cfg.tol_kkt and viol <= cfg.tol_feas:
            status = SolverStatus.CONVERGED
            break

        if grow:
            rho = min(rho * cfg.penalty_growth, cfg.penalty_cap)
        elif raw_viol <= cfg.tol_feas and rho > cfg.penalty_initial:
            # feasibility is carried by the multipliers; relax the penalty so
            # the inner solver's stationarity floor (which scales with the
            # penalty-induced curvature) drops below the KKT tolerance
            rho = max(rho / cfg.penalty_growth, cfg.penalty_initial)
        prev_viol = raw_viol
        omega = max(0.1 * omega, omega_final)

    try:
        obj = p.eval_objective(x)
    except Exception:
        obj = float("nan")

    return NlpSolution(
        x_star=x,
        objective=obj,
        eq_multipliers=lam,
        ineq_multipliers=mu,
        bound_multipliers=z,
        status=status,
        iterations=iterations,
        inner_iterations=inner_total,
        kkt_residual=float(kkt),
        max_violation=float(viol),
        solve_time=time.perf_counter() - t_start,
    )
