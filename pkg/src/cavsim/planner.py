"""Closed-form minimum-energy trajectories through a control zone.

With a double integrator and no active constraints, minimizing
``0.5 * integral(u**2)`` between fixed boundary states gives a control that
is linear in time, hence a quadratic speed and a cubic position::

    u(t) = a*t + b
    v(t) = a*t**2/2 + b*t + c
    p(t) = a*t**3/6 + b*t**2/2 + c*t + d

Coefficients are in absolute time. Evaluation is done in the shifted
variable ``t - t0`` so long-running clocks do not lose precision.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .dynamics import VehicleParams, safe_distance
from .exceptions import DegenerateHorizonError, NumericError, OutOfRangeError

MIN_HORIZON = 1e-6
_WINDOW_TOL = 1e-9


@dataclass(frozen=True)
class Boundary:
    p0: float
    v0: float
    pf: float
    vf: float


@dataclass(frozen=True)
class TrajectoryPlan:
    a: float
    b: float
    c: float
    d: float
    t0: float
    tm: float
    boundary: Boundary
    # shifted-time coefficients: u = A*tau + B, v0 and p0 at tau = 0
    _B: float = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "_B", self.a * self.t0 + self.b)

    @classmethod
    def from_coefficients(cls, a, b, c, d, t0, tm):
        """Build a plan from absolute-time coefficients; boundary is derived."""
        def pv(t):
            return (a * t**3 / 6 + b * t**2 / 2 + c * t + d, a * t**2 / 2 + b * t + c)
        p0, v0 = pv(t0)
        pf, vf = pv(tm)
        return cls(a, b, c, d, t0, tm, Boundary(p0, v0, pf, vf))

    @property
    def horizon(self) -> float:
        return self.tm - self.t0

    def __call__(self, t):
        return eval_plan(self, t)


def solve_boundary(t0: float, tm: float, p0: float, pf: float, v0: float, vf: float) -> TrajectoryPlan:
    """Minimum-effort plan meeting position and speed at both ends of [t0, tm]."""
    values = (t0, tm, p0, pf, v0, vf)
    if not all(math.isfinite(x) for x in values):
        raise NumericError(f"non-finite boundary data {values}")
    T = tm - t0
    if T < MIN_HORIZON:
        raise DegenerateHorizonError(f"horizon {T!r} s below {MIN_HORIZON} s")

    # Shifted time tau = t - t0: p = A tau^3/6 + B tau^2/2 + v0 tau + p0.
    dv = vf - v0
    dp = pf - p0 - v0 * T
    A = (6.0 * dv * T - 12.0 * dp) / T**3
    B = dv / T - A * T / 2.0
    if not (math.isfinite(A) and math.isfinite(B)):
        raise NumericError("boundary system is singular")

    a = A
    b = B - A * t0
    c = A * t0**2 / 2.0 - B * t0 + v0
    d = p0 - v0 * t0 + B * t0**2 / 2.0 - A * t0**3 / 6.0
    return TrajectoryPlan(a, b, c, d, t0, tm, Boundary(p0, v0, pf, vf))


def eval_plan(plan: TrajectoryPlan, t):
    """Position, speed and control of ``plan`` at time ``t`` (scalar or array)."""
    arr = np.asarray(t, dtype=float)
    if np.any(arr < plan.t0 - _WINDOW_TOL) or np.any(arr > plan.tm + _WINDOW_TOL):
        raise OutOfRangeError(f"t={t} outside plan window [{plan.t0}, {plan.tm}]")
    tau = arr - plan.t0
    A, B = plan.a, plan._B
    v0, p0 = plan.boundary.v0, plan.boundary.p0
    p = ((A * tau / 6.0 + B / 2.0) * tau + v0) * tau + p0
    v = (A * tau / 2.0 + B) * tau + v0
    u = A * tau + B
    if arr.ndim == 0:
        return float(p), float(v), float(u)
    return p, v, u


def control_effort(plan: TrajectoryPlan) -> float:
    """Exact ``0.5 * integral(u**2)`` over the plan window."""
    T = plan.horizon
    A, B = plan.a, plan._B
    return 0.5 * (A * A * T**3 / 3.0 + A * B * T**2 + B * B * T)


@dataclass(frozen=True)
class BoundViolation:
    quantity: str   # "v" or "u"
    bound: str      # "v_min", "v_max", "u_min", "u_max"
    limit: float
    value: float
    t: float

    @property
    def magnitude(self) -> float:
        return abs(self.value - self.limit)

    def describe(self) -> str:
        return (f"{self.quantity}={self.value:.6g} at t={self.t:.6g} s violates "
                f"{self.bound}={self.limit:.6g}")


@dataclass(frozen=True)
class Feasibility:
    feasible: bool
    violations: tuple[BoundViolation, ...]
    v_range: tuple[float, float]
    u_range: tuple[float, float]
    t_v_min: float
    t_v_max: float

    def __bool__(self):
        return self.feasible


def check_feasibility(plan: TrajectoryPlan, params: VehicleParams, tol: float = 1e-9) -> Feasibility:
    """Locate speed and control extrema analytically and compare with bounds."""
    T = plan.horizon
    A, B = plan.a, plan._B
    v0 = plan.boundary.v0
    candidates = [0.0, T]
    if A != 0.0:
        tau_star = -B / A
        if 0.0 < tau_star < T:
            candidates.append(tau_star)
    speeds = [((A * tau / 2.0 + B) * tau + v0, tau) for tau in candidates]
    v_lo, tau_lo = min(speeds)
    v_hi, tau_hi = max(speeds)
    u_start, u_end = B, A * T + B
    u_lo, tau_ulo = (u_start, 0.0) if u_start <= u_end else (u_end, T)
    u_hi, tau_uhi = (u_end, T) if u_start <= u_end else (u_start, 0.0)

    t0 = plan.t0
    out = []
    if v_lo < params.v_min - tol:
        out.append(BoundViolation("v", "v_min", params.v_min, v_lo, t0 + tau_lo))
    if v_hi > params.v_max + tol:
        out.append(BoundViolation("v", "v_max", params.v_max, v_hi, t0 + tau_hi))
    if u_lo < params.u_min - tol:
        out.append(BoundViolation("u", "u_min", params.u_min, u_lo, t0 + tau_ulo))
    if u_hi > params.u_max + tol:
        out.append(BoundViolation("u", "u_max", params.u_max, u_hi, t0 + tau_uhi))
    return Feasibility(not out, tuple(out), (v_lo, v_hi), (u_lo, u_hi), t0 + tau_lo, t0 + tau_hi)


def verify_rear_end(plan_i: TrajectoryPlan, plan_k: TrajectoryPlan, params: VehicleParams,
                    dt: float = 0.02) -> list[tuple[float, float]]:
    """Sample follower ``plan_i`` against predecessor ``plan_k`` on one lane.

    Returns ``(t, margin)`` for every sample where the gap is below the
    follower's safe distance. Both plans must use the same position origin.
    """
    lo = max(plan_i.t0, plan_k.t0)
    hi = min(plan_i.tm, plan_k.tm)
    if hi < lo:
        return []
    n = max(int(math.ceil((hi - lo) / dt - 1e-9)), 0)
    ts = np.minimum(lo + dt * np.arange(n + 1), hi)
    if ts[-1] < hi:
        ts = np.append(ts, hi)
    p_i, v_i, _ = eval_plan(plan_i, ts)
    p_k, _, _ = eval_plan(plan_k, ts)
    margin = (p_k - p_i) - safe_distance(v_i, params)
    bad = margin < 0.0
    return [(float(t), float(m)) for t, m in zip(ts[bad], margin[bad])]


def min_rear_end_margin(plan_i, plan_k, params, dt=0.02):
    lo = max(plan_i.t0, plan_k.t0)
    hi = min(plan_i.tm, plan_k.tm)
    ts = np.append(np.arange(lo, hi, dt), hi)
    p_i, v_i, _ = eval_plan(plan_i, ts)
    p_k, _, _ = eval_plan(plan_k, ts)
    margin = (p_k - p_i) - safe_distance(v_i, params)
    k = int(np.argmin(margin))
    return float(ts[k]), float(margin[k])
