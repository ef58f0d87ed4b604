"""Lax-Friedrichs solver for the regularised toy problems on a periodic interval.

The second-order equation u_tt = a_eps(t) u_xx is marched as the first-order
system in (v, w) = (u_t, u_x),

    v_t = a_eps(t) w_x,      w_t = v_x,

with the classical Lax-Friedrichs update and u recovered alongside by
trapezoidal integration of v in time.  The coefficient is one of the two toy
models (a Heaviside jump or a point mass at t = 1) regularised at width eps,
and the step size follows the two-branch policy: dt = eps/10 while the
coefficient is numerically zero, otherwise dt = min(eps/10, dx / sqrt(a)) so
the Courant number sqrt(a) dt / dx sits at 1 on the plateau.

Sign-changing mollifiers can push the regularised coefficient slightly
negative in the ramp; the flux uses the value as-is and the step control
treats the propagation speed as sqrt(max(a, 0)).
"""

import csv
import math
from dataclasses import dataclass, replace
from typing import Callable, NamedTuple, Optional, Sequence

import numpy as np

from .coeffs import (
    Jump,
    Mollifier,
    Point,
    ScaleNet,
    TimeDistribution,
    regularise,
)

ZERO_COEFF = 1e-14
CFL_SLACK = 1e-12
MAX_SOBOLEV_ORDER = 5


@dataclass(frozen=True)
class Grid1D:
    """Uniform periodic grid on [x_lo, x_hi) with nx cells.

    Nodes are x_lo + j dx for j = 0 .. nx-1; the right endpoint is the wrap
    image of the left one and is not stored.
    """

    x_lo: float
    x_hi: float
    nx: int

    def __post_init__(self):
        if self.nx != int(self.nx) or self.nx < 8:
            raise ValueError("nx must be an integer of at least 8")
        if not self.x_hi > self.x_lo:
            raise ValueError("need x_hi > x_lo")

    @property
    def dx(self) -> float:
        return (self.x_hi - self.x_lo) / self.nx

    @property
    def length(self) -> float:
        return self.x_hi - self.x_lo

    @property
    def periodic(self) -> bool:
        return True

    def nodes(self) -> np.ndarray:
        return self.x_lo + self.dx * np.arange(self.nx)


@dataclass(frozen=True, eq=False)
class SolutionField:
    """System state (u, v, w) = (u, u_t, u_x) sampled on a grid at time t."""

    grid: Grid1D
    t: float
    u: np.ndarray
    v: np.ndarray
    w: np.ndarray

    def __post_init__(self):
        for name in ("u", "v", "w"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.shape != (self.grid.nx,):
                raise ValueError(f"{name} must have shape ({self.grid.nx},)")
            object.__setattr__(self, name, arr)


def init(grid: Grid1D, g0: Callable, g1: Callable,
         g0_prime: Optional[Callable] = None) -> SolutionField:
    """Sample initial data onto the grid at t = 0.

    w is the analytic derivative when g0_prime is supplied, otherwise the
    centred difference of the u samples (second-order accurate).
    """
    x = grid.nodes()
    u = np.broadcast_to(np.asarray(g0(x), dtype=float), x.shape).copy()
    v = np.broadcast_to(np.asarray(g1(x), dtype=float), x.shape).copy()
    if g0_prime is not None:
        w = np.broadcast_to(np.asarray(g0_prime(x), dtype=float), x.shape).copy()
    else:
        w = (np.roll(u, -1) - np.roll(u, 1)) / (2.0 * grid.dx)
    return SolutionField(grid=grid, t=0.0, u=u, v=v, w=w)


def lf_step(state: SolutionField, a_val: float, dt: float) -> SolutionField:
    """One Lax-Friedrichs update of (v, w) plus trapezoidal u accumulation.

    The hyperbolic restriction is sqrt(max(a, 0)) dt / dx <= 1; a = 0 leaves
    the update a pure neighbour average, stable for any dt.
    """
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    dx = state.grid.dx
    speed = math.sqrt(max(a_val, 0.0))
    if dt * speed / dx > 1.0 + CFL_SLACK:
        raise ValueError(
            f"Courant number {dt * speed / dx:g} exceeds 1 (a = {a_val:g}, dt = {dt:g})"
        )
    lam = dt / (2.0 * dx)
    vp, vm = np.roll(state.v, -1), np.roll(state.v, 1)
    wp, wm = np.roll(state.w, -1), np.roll(state.w, 1)
    v_new = 0.5 * (vp + vm) + lam * a_val * (wp - wm)
    w_new = 0.5 * (wp + wm) + lam * (vp - vm)
    u_new = state.u + 0.5 * dt * (state.v + v_new)
    return SolutionField(grid=state.grid, t=state.t + dt, u=u_new, v=v_new, w=w_new)


def toy_coefficient(model: str, horizon: float = 2.0) -> TimeDistribution:
    """The two coefficient models: a unit jump or a unit point mass at t = 1."""
    if model == "heaviside":
        terms = (Jump(at=1.0, left=0.0, right=1.0),)
    elif model == "delta":
        terms = (Point(at=1.0),)
    else:
        raise ValueError(f"unknown model {model!r}; choose 'heaviside' or 'delta'")
    return TimeDistribution(terms, horizon=horizon, nonnegative=True)


class StepRecord(NamedTuple):
    t: float
    dt: float
    a_val: float


class SolveResult(NamedTuple):
    final: SolutionField
    snapshots: tuple
    steps: tuple


def default_g0(x):
    return np.sin(2.0 * np.pi * x)


def default_g1(x):
    return np.cos(2.0 * np.pi * x)


def _default_g0_prime(x):
    return 2.0 * np.pi * np.cos(2.0 * np.pi * x)


def _default_g1_prime(x):
    return -2.0 * np.pi * np.sin(2.0 * np.pi * x)


def solve(grid: Grid1D, model, moll: Mollifier, eps: float,
          t0: float = 0.8, t1: float = 2.0,
          g0: Optional[Callable] = None, g1: Optional[Callable] = None,
          g0_prime: Optional[Callable] = None, g1_prime: Optional[Callable] = None,
          snapshot_times: Sequence[float] = ()) -> SolveResult:
    """March the regularised coefficient model from t0 to t1.

    model is one of the toy names ('heaviside', 'delta') or a
    TimeDistribution to regularise instead.  The data are posed at t = 0 and
    assumed to drift freely on [0, t0] (true for the toy models on the study
    range, and for any start at t0 = 0), so the state at t0 is u = g0 + t0 g1,
    v = g1, w = g0' + t0 g1'.  The coefficient is regularised at width eps
    (the identity scale net).  Steps land exactly on each requested snapshot
    time and on t1; the returned record of (t, dt, a) per step documents the
    Courant policy.
    """
    if not t1 > t0:
        raise ValueError("need t1 > t0")
    if g0 is None and g0_prime is None:
        g0, g0_prime = default_g0, _default_g0_prime
    if g1 is None and g1_prime is None:
        g1, g1_prime = default_g1, _default_g1_prime
    if g0 is None or g1 is None:
        raise ValueError("custom derivatives need the matching data callables")

    if isinstance(model, TimeDistribution):
        dist = model
    else:
        dist = toy_coefficient(model, horizon=max(t1, 2.0))
    a_eps = regularise(dist, moll, eps, ScaleNet.identity())

    x = grid.nodes()
    u0 = np.asarray(g0(x), dtype=float) + t0 * np.asarray(g1(x), dtype=float)
    v0 = np.broadcast_to(np.asarray(g1(x), dtype=float), x.shape).copy()
    if g0_prime is not None and g1_prime is not None:
        w0 = np.asarray(g0_prime(x), dtype=float) + t0 * np.asarray(g1_prime(x), dtype=float)
    else:
        w0 = (np.roll(u0, -1) - np.roll(u0, 1)) / (2.0 * grid.dx)
    state = SolutionField(grid=grid, t=float(t0), u=u0, v=v0, w=w0)

    requested = []
    for s in snapshot_times:
        s = float(s)
        if not t0 < s <= t1 + 1e-12:
            raise ValueError(f"snapshot time {s} outside ({t0}, {t1}]")
        requested.append(min(s, float(t1)))
    requested = sorted(set(requested))
    stops = sorted(set(requested) | {float(t1)})

    dx = grid.dx
    reached = {}
    steps = []
    for stop in stops:
        while stop - state.t > 1e-12:
            a_now = float(a_eps.eval(state.t))
            if a_now < ZERO_COEFF:
                dt_policy = eps / 10.0
            else:
                dt_policy = min(eps / 10.0, dx / math.sqrt(a_now))
            dt = min(dt_policy, stop - state.t)
            steps.append(StepRecord(t=state.t, dt=dt, a_val=a_now))
            state = lf_step(state, a_now, dt)
        state = replace(state, t=stop)
        reached[stop] = state
    return SolveResult(
        final=reached[float(t1)],
        snapshots=tuple(reached[s] for s in requested),
        steps=tuple(steps),
    )


def l2_norm(target, dx: Optional[float] = None) -> float:
    """Discrete L^2 norm by the rectangle rule.

    Accepts a SolutionField (norm of its u on its own grid) or a bare sample
    array with an explicit dx.
    """
    if isinstance(target, SolutionField):
        if dx is not None:
            raise ValueError("dx is taken from the field's grid")
        values, dx = target.u, target.grid.dx
    else:
        if dx is None:
            raise ValueError("bare samples need an explicit dx")
        values = np.asarray(target, dtype=float)
    return float(math.sqrt(dx * np.sum(values * values)))


def sobolev_norm(target, s: int, grid: Optional[Grid1D] = None) -> float:
    """Discrete H^s norm of periodic samples via the Fourier symbol (1+xi^2)^(s/2).

    Accepts a SolutionField, or a callable / sample array together with the
    grid to sample on.  s must be an integer between 0 and 5.
    """
    if s != int(s) or not 0 <= int(s) <= MAX_SOBOLEV_ORDER:
        raise ValueError(f"Sobolev order s must be an integer in 0..{MAX_SOBOLEV_ORDER}")
    s = int(s)
    if isinstance(target, SolutionField):
        if grid is not None:
            raise ValueError("grid is taken from the field")
        values, grid = target.u, target.grid
    else:
        if grid is None:
            raise ValueError("bare samples or callables need a grid")
        if callable(target):
            values = np.asarray(target(grid.nodes()), dtype=float)
        else:
            values = np.asarray(target, dtype=float)
        if values.shape != (grid.nx,):
            raise ValueError(f"samples must have shape ({grid.nx},)")
    coeff = np.fft.fft(values) / grid.nx
    xi = 2.0 * np.pi * np.fft.fftfreq(grid.nx, d=grid.dx)
    total = grid.length * np.sum((1.0 + xi**2) ** s * np.abs(coeff) ** 2)
    return float(math.sqrt(total))


def write_field_csv(field_state: SolutionField, path) -> None:
    """Write the field as CSV columns x, u, v, w (full float precision)."""
    x = field_state.grid.nodes()
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["x", "u", "v", "w"])
        for j in range(field_state.grid.nx):
            writer.writerow(["%.17g" % val for val in
                             (x[j], field_state.u[j], field_state.v[j], field_state.w[j])])
