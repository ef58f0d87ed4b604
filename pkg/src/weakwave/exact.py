"""Closed-form reference solutions.

Two oracles anchor the numerical tolerances elsewhere: the piecewise solution
of the wave equation whose speed switches on at t = 1 (free drift before,
unit-speed d'Alembert after), and the constant-coefficient d'Alembert formula.
Antiderivatives are supplied analytically by the caller so no quadrature
error enters.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np


@dataclass(frozen=True)
class PiecewiseSolution:
    """Data (g0, g1) posed at t = 0, with G1 an antiderivative of g1.

    The coefficient is 0 before jump_time and 1 after, so the solution drifts
    linearly, then propagates at unit speed from the state reached at the jump.
    """

    g0: Callable
    g1: Callable
    G1: Callable
    jump_time: float = 1.0


def sine_data() -> PiecewiseSolution:
    """The single-mode data g0 = sin(2 pi x), g1 = cos(2 pi x) on [0, 2]."""
    return PiecewiseSolution(
        g0=lambda x: np.sin(2.0 * np.pi * np.asarray(x, dtype=float)),
        g1=lambda x: np.cos(2.0 * np.pi * np.asarray(x, dtype=float)),
        G1=lambda x: np.sin(2.0 * np.pi * np.asarray(x, dtype=float)) / (2.0 * np.pi),
    )


def before_jump(sol: PiecewiseSolution, t: float, x):
    """Free drift g0 + t g1 (valid for t <= jump_time)."""
    return sol.g0(x) + t * sol.g1(x)


def after_jump(sol: PiecewiseSolution, t: float, x):
    """Unit-speed d'Alembert evolution of the state reached at the jump."""
    tau = t - sol.jump_time
    xp = np.asarray(x, dtype=float) + tau
    xm = np.asarray(x, dtype=float) - tau
    travelling = 0.5 * (sol.g0(xp) + sol.g0(xm) + sol.jump_time * (sol.g1(xp) + sol.g1(xm)))
    return travelling + 0.5 * (sol.G1(xp) - sol.G1(xm))


def eval_exact(sol: PiecewiseSolution, t: float, x):
    """Piecewise solution value at time t (scalar) and positions x."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    if t <= sol.jump_time:
        return before_jump(sol, t, x)
    return after_jump(sol, t, x)


def dalembert_const(a: float, g0: Callable, g1: Callable, G1: Callable, t: float, x):
    """d'Alembert solution with speed sqrt(a); a = 0 degenerates to the drift."""
    if a < 0:
        raise ValueError("a must be nonnegative")
    if a == 0.0:
        return g0(x) + t * g1(x)
    c = math.sqrt(a)
    xp = np.asarray(x, dtype=float) + c * t
    xm = np.asarray(x, dtype=float) - c * t
    return 0.5 * (g0(xp) + g0(xm)) + (G1(xp) - G1(xm)) / (2.0 * c)
