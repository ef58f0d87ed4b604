"""Per-frequency dynamics and energy estimates for the regularised system.

The second-order problem u_tt - sum a_i(t) u_xixi + lower order = f turns,
after regularisation and a Fourier transform in x, into a 2x2 ODE per
frequency: d_t V = i(A1 + B)V + i Fhat, with A1 carrying the principal part
and B the lower-order terms.  This module assembles that system from
time-distribution coefficients, integrates it, evaluates the symmetriser
energy along the trajectory, and checks the estimates that make the energy
method work: the Levi conditions on B, the lower-order commutator bound,
and the Gronwall chain for the energy derivative.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from functools import cached_property
from typing import Callable, NamedTuple, Optional, Sequence

import numpy as np

from .coeffs import (
    Mollifier,
    ScaleNet,
    TimeDistribution,
    regularise,
    reject_unknown_keys,
)
from .qsym import build_Q

_SUP_SAMPLES = 4097
_MAX_REPORTED_FAILURES = 100


def bracket(xi) -> float:
    """The weight (1 + |xi|^2)^(1/2) for a scalar or vector frequency."""
    vec = np.asarray(xi, dtype=float).ravel()
    return math.sqrt(1.0 + float(vec @ vec))


# ---------------------------------------------------------------------------
# Problem description


@dataclass(frozen=True)
class EquationSpec:
    """Coefficients and data of the second-order problem on [0, T].

    a holds the principal coefficients (one per spatial direction, each
    flagged nonnegative), c/d/e the lower-order ones.  f_hat is the Fourier
    transform of the right-hand side as a function of (t, xi); g0_hat and
    g1_hat give the data spectra.  All coefficient supports must sit inside
    [0, T].
    """

    n: int
    a: tuple
    c: tuple
    d: TimeDistribution
    e: TimeDistribution
    g0_hat: Callable
    g1_hat: Callable
    T: float
    f_hat: Optional[Callable] = None

    def __post_init__(self):
        if self.n != int(self.n) or self.n < 1:
            raise ValueError("spatial dimension n must be a positive integer")
        object.__setattr__(self, "a", tuple(self.a))
        object.__setattr__(self, "c", tuple(self.c))
        if len(self.a) != self.n or len(self.c) != self.n:
            raise ValueError(f"need exactly n = {self.n} entries in both a and c")
        if not self.T > 0:
            raise ValueError("time horizon T must be positive")
        for i, dist in enumerate(self.a):
            if not dist.nonnegative:
                raise ValueError(f"principal coefficient a[{i}] must be flagged nonnegative")
        for name, dist in self._all_coefficients():
            lo, hi = dist.support
            if lo < -1e-12 or hi > self.T + 1e-12:
                raise ValueError(
                    f"support {dist.support} of {name} is not contained in [0, {self.T}]"
                )

    def _all_coefficients(self):
        for i, dist in enumerate(self.a):
            yield f"a[{i}]", dist
        for i, dist in enumerate(self.c):
            yield f"c[{i}]", dist
        yield "d", self.d
        yield "e", self.e


def _component(bundle, key: str, what: str):
    """Resolve a bundle argument: a bare object, or {'a': ..., 'lower': ...}."""
    if isinstance(bundle, dict):
        reject_unknown_keys(bundle, ("a", "lower"), what)
        if key not in bundle:
            raise ValueError(f"{what} bundle needs both 'a' and 'lower' entries")
        return bundle[key]
    return bundle


# ---------------------------------------------------------------------------
# Frequency system


@dataclass(frozen=True, eq=False)
class FrequencySystem:
    """The 2x2 system for one frequency xi: d_t V = i(A1 + B)V + i Fhat.

    A1, B and Fhat are vectorised callables: a 1-d time array of length k
    maps to arrays of shape (k, 2, 2), (k, 2, 2) and (k, 2).
    """

    xi: tuple
    bracket: float
    T: float
    epsilon: float
    A1: Callable
    B: Callable
    Fhat: Callable
    V0: np.ndarray

    @cached_property
    def _grid_samples(self):
        grid = np.linspace(0.0, self.T, _SUP_SAMPLES)
        return self.A1(grid), self.B(grid)

    @cached_property
    def sup_a(self) -> float:
        """sup over [0, T] of sum a_i,eps xi_i^2 <xi>^-2 (the (2,1) symbol entry)."""
        a1, _ = self._grid_samples
        return float(np.max(a1[:, 1, 0]) / self.bracket)

    @cached_property
    def sup_B(self) -> float:
        _, b = self._grid_samples
        return float(np.max(np.sqrt(np.abs(b[:, 1, 0]) ** 2 + np.abs(b[:, 1, 1]) ** 2)))

    @property
    def stability_limit(self) -> float:
        return 0.5 / (self.bracket * (1.0 + math.sqrt(max(self.sup_a, 0.0))) + self.sup_B)

    @property
    def default_dt(self) -> float:
        # A 5x margin below the stability limit for moderate coefficients.
        return min(0.1 / (self.bracket + self.sup_B + 1.0), self.stability_limit)


def assemble(spec: EquationSpec, eps: float, moll, nets, xi) -> FrequencySystem:
    """Build the frequency system at xi from regularised coefficients.

    moll and nets may each be a single Mollifier / ScaleNet applied to every
    coefficient, or a {'a': ..., 'lower': ...} pair splitting the principal
    part from the lower-order terms.
    """
    xi_vec = np.asarray(xi, dtype=float).ravel()
    if xi_vec.size != spec.n:
        raise ValueError(f"xi has {xi_vec.size} components, expected n = {spec.n}")
    if not np.all(np.isfinite(xi_vec)):
        raise ValueError("xi must be finite")
    br = bracket(xi_vec)

    moll_a = _component(moll, "a", "mollifier")
    moll_low = _component(moll, "lower", "mollifier")
    net_a = _component(nets, "a", "scale net")
    net_low = _component(nets, "lower", "scale net")

    a_eps = tuple(regularise(d, moll_a, eps, net_a) for d in spec.a)
    c_eps = tuple(regularise(d, moll_low, eps, net_low) for d in spec.c)
    d_eps = regularise(spec.d, moll_low, eps, net_low)
    e_eps = regularise(spec.e, moll_low, eps, net_low)

    xi2 = xi_vec**2

    def A1(t):
        t = np.asarray(t, dtype=float)
        principal = np.zeros(t.shape)
        for coeff, weight in zip(a_eps, xi2):
            if weight != 0.0:
                principal = principal + weight * coeff.eval(t)
        out = np.zeros(t.shape + (2, 2))
        out[..., 0, 1] = br
        out[..., 1, 0] = principal / br
        return out

    def B(t):
        t = np.asarray(t, dtype=float)
        entry = np.zeros(t.shape, dtype=complex)
        for coeff, weight in zip(c_eps, xi_vec):
            if weight != 0.0:
                entry = entry + 1j * weight * coeff.eval(t)
        entry = entry + e_eps.eval(t)
        out = np.zeros(t.shape + (2, 2), dtype=complex)
        out[..., 1, 0] = entry / br
        out[..., 1, 1] = 1j * d_eps.eval(t)
        return out

    f = spec.f_hat

    def Fhat(t):
        t = np.asarray(t, dtype=float)
        out = np.zeros(t.shape + (2,), dtype=complex)
        if f is not None:
            vals = np.array([f(float(s), xi_vec) for s in np.atleast_1d(t)], dtype=complex)
            out[..., 1] = -vals.reshape(t.shape)
        return out

    V0 = np.array(
        [br * complex(spec.g0_hat(xi_vec)), -1j * complex(spec.g1_hat(xi_vec))],
        dtype=complex,
    )
    return FrequencySystem(
        xi=tuple(float(x) for x in xi_vec),
        bracket=br,
        T=spec.T,
        epsilon=float(eps),
        A1=A1,
        B=B,
        Fhat=Fhat,
        V0=V0,
    )


# ---------------------------------------------------------------------------
# Time integration and the energy


@dataclass(frozen=True, eq=False)
class EnergyTrace:
    """Trajectory of one frequency together with its symmetriser energy.

    q11 is the first diagonal entry of the symmetriser along the run, so
    E = q11 |V1|^2 + 2 |V2|^2.  Fgrid samples the forcing on the same grid.
    """

    times: np.ndarray
    V: np.ndarray
    E: np.ndarray
    q11: np.ndarray
    Fgrid: np.ndarray
    delta: float
    epsilon: float
    xi_bracket: float
    sup_a: float


def integrate(sys: FrequencySystem, dt: Optional[float] = None,
              delta: Optional[float] = None) -> EnergyTrace:
    """Integrate the frequency system with the classical 4th-order one-step method.

    delta defaults to the balance choice <xi>^(-1/2); dt defaults to
    0.1/(<xi> + ||B|| + 1), and any explicit dt beyond the stability limit
    0.5/(<xi>(1 + ||a||^(1/2)) + ||B||) is rejected.
    """
    if delta is None:
        delta = sys.bracket**-0.5
    if not 0.0 < delta <= 1.0:
        raise ValueError("delta must lie in (0, 1]")
    limit = sys.stability_limit
    if dt is None:
        dt = sys.default_dt
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    if dt > limit * (1.0 + 1e-12):
        raise ValueError(f"dt = {dt:g} exceeds the stability limit {limit:g}")

    nsteps = max(1, math.ceil(sys.T / dt - 1e-12))
    dt = sys.T / nsteps
    half = np.linspace(0.0, sys.T, 2 * nsteps + 1)
    a1 = sys.A1(half)
    M = 1j * (a1 + sys.B(half))
    forcing = sys.Fhat(half)
    G = 1j * forcing

    V = np.empty((nsteps + 1, 2), dtype=complex)
    V[0] = sys.V0
    v = V[0]
    for j in range(nsteps):
        lo, mid, hi = 2 * j, 2 * j + 1, 2 * j + 2
        k1 = M[lo] @ v + G[lo]
        k2 = M[mid] @ (v + 0.5 * dt * k1) + G[mid]
        k3 = M[mid] @ (v + 0.5 * dt * k2) + G[mid]
        k4 = M[hi] @ (v + dt * k3) + G[hi]
        v = v + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        V[j + 1] = v

    times = half[::2]
    q11 = 2.0 * a1[::2, 1, 0] / sys.bracket + 2.0 * delta**2
    E = q11 * np.abs(V[:, 0]) ** 2 + 2.0 * np.abs(V[:, 1]) ** 2
    return EnergyTrace(
        times=times,
        V=V,
        E=E,
        q11=q11,
        Fgrid=forcing[::2],
        delta=float(delta),
        epsilon=sys.epsilon,
        xi_bracket=sys.bracket,
        sup_a=sys.sup_a,
    )


def const_coeff_solution(br: float, principal: float, V0, times) -> np.ndarray:
    """Closed-form trajectory for frozen principal part and no lower order.

    With S = sum a_i xi_i^2 constant, A1 squares to S times the identity, so
    exp(i A1 t) = cos(sqrt(S) t) I + i sin(sqrt(S) t) A1 / sqrt(S); S = 0
    degenerates to I + i A1 t.
    """
    times = np.asarray(times, dtype=float)
    V0 = np.asarray(V0, dtype=complex)
    A = np.array([[0.0, br], [principal / br, 0.0]])
    drift = (A @ V0)[None, :]
    if principal == 0.0:
        return V0[None, :] + 1j * times[:, None] * drift
    w = math.sqrt(principal)
    return (
        np.cos(w * times)[:, None] * V0[None, :]
        + 1j * (np.sin(w * times)[:, None] / w) * drift
    )


# ---------------------------------------------------------------------------
# Levi conditions


class LeviSample(NamedTuple):
    epsilon: float
    C1: float
    C2: float
    ratio1: float
    ratio2: float
    Ceps: float


class LeviFailure(NamedTuple):
    epsilon: float
    t: float
    xi: tuple


@dataclass(frozen=True)
class LeviReport:
    passed: bool
    samples: tuple
    failures: tuple
    n_failures: int
    c1: float
    c2: float
    gamma: float


def levi_check(spec: EquationSpec, eps, moll, nets, c1: float, c2: float,
               s_grid, gamma: float = 8.0, R: float = 1.0) -> LeviReport:
    """Measure the Levi constants of the lower-order terms on a (t, xi) grid.

    For each tested eps the report records C1 = max |i c_eps xi + e_eps|^2 /
    (2 sum a_i,eps xi_i^2) and C2 = max |d_eps|^2 over the grid, their
    normalised versions divided by (ln 1/eps)^2, and the derived constant
    C_eps = 4 (C1 + gamma C2)^(1/2).  The check passes when both normalised
    ratios stay below c1 and c2 for every eps and no grid point divides a
    positive numerator by a vanishing principal part; such points are not an
    exception but reported as failures with their (eps, t, xi) location.
    """
    if R <= 0:
        raise ValueError("R must be positive")
    if c1 <= 0 or c2 <= 0:
        raise ValueError("thresholds c1, c2 must be positive")
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    eps_list = [float(e) for e in (np.atleast_1d(np.asarray(eps, dtype=float)))]
    t_grid, xi_grid = s_grid
    t_grid = np.asarray(t_grid, dtype=float).ravel()
    if t_grid.size == 0:
        raise ValueError("empty time grid")
    if t_grid.min() < -1e-12 or t_grid.max() > spec.T + 1e-12:
        raise ValueError(f"time grid must stay inside [0, {spec.T}]")
    xi_rows = np.asarray(xi_grid, dtype=float)
    if xi_rows.size == 0:
        raise ValueError("empty frequency grid")
    if xi_rows.ndim == 1:
        xi_rows = xi_rows.reshape(-1, 1)
    if xi_rows.ndim != 2 or xi_rows.shape[1] != spec.n:
        raise ValueError(f"frequency grid rows must have n = {spec.n} components")
    lengths = np.sqrt(np.sum(xi_rows**2, axis=1))
    if np.any(lengths < R):
        raise ValueError(f"all grid frequencies must satisfy |xi| >= R = {R}")

    moll_a = _component(moll, "a", "mollifier")
    moll_low = _component(moll, "lower", "mollifier")
    net_a = _component(nets, "a", "scale net")
    net_low = _component(nets, "lower", "scale net")

    samples = []
    failures = []
    n_failures = 0
    passed = True
    for e in eps_list:
        a_vals = np.array([regularise(d, moll_a, e, net_a).eval(t_grid) for d in spec.a])
        c_vals = np.array([regularise(d, moll_low, e, net_low).eval(t_grid) for d in spec.c])
        d_vals = regularise(spec.d, moll_low, e, net_low).eval(t_grid)
        e_vals = regularise(spec.e, moll_low, e, net_low).eval(t_grid)

        cxi = xi_rows @ c_vals
        num = cxi**2 + e_vals[None, :] ** 2
        den = 2.0 * ((xi_rows**2) @ a_vals)

        bad = (den == 0.0) & (num > 0.0)
        for i, j in np.argwhere(bad):
            n_failures += 1
            if len(failures) < _MAX_REPORTED_FAILURES:
                location = tuple(float(x) for x in xi_rows[i])
                failures.append(LeviFailure(e, float(t_grid[j]), location))
        ratio = np.where(den > 0.0, num / np.where(den > 0.0, den, 1.0), 0.0)

        C1_full = float(ratio.max())
        C2_full = float(np.max(d_vals**2))
        log = math.log(1.0 / e)
        if log > 0.0:
            ratio1 = C1_full / log**2
            ratio2 = C2_full / log**2
        else:
            ratio1 = 0.0 if C1_full == 0.0 else math.inf
            ratio2 = 0.0 if C2_full == 0.0 else math.inf
        ceps = 4.0 * math.sqrt(C1_full + gamma * C2_full)
        samples.append(LeviSample(e, C1_full, C2_full, ratio1, ratio2, ceps))
        slack1 = 1e-9 * max(1.0, c1)
        slack2 = 1e-9 * max(1.0, c2)
        if np.any(bad) or ratio1 > c1 + slack1 or ratio2 > c2 + slack2:
            passed = False

    return LeviReport(
        passed=passed,
        samples=tuple(samples),
        failures=tuple(failures),
        n_failures=n_failures,
        c1=float(c1),
        c2=float(c2),
        gamma=float(gamma),
    )


def lot_bound_check(lam, delta: float, B, trials: int = 100000,
                    rng: Optional[np.random.Generator] = None) -> float:
    """Brute-force the lower-order commutator ratio over random states.

    Returns the maximum over the drawn V of |((Q B - B* Q)V, V)| / (QV, V)
    with Q the symmetriser at (delta, lam).  Under the Levi conditions the
    result stays below C_eps = 4 (C1 + gamma C2)^(1/2).
    """
    if trials < 1:
        raise ValueError("need at least one trial")
    B = np.asarray(B, dtype=complex)
    if B.shape != (2, 2):
        raise ValueError("B must be a 2x2 matrix")
    Q = build_Q(delta, lam).Q
    comm = Q @ B - B.conj().T @ Q
    if rng is None:
        rng = np.random.default_rng(42)
    V = rng.standard_normal((trials, 2)) + 1j * rng.standard_normal((trials, 2))
    num = np.abs(np.einsum("ti,ij,tj->t", V.conj(), comm, V))
    den = np.einsum("ti,ij,tj->t", V.conj(), Q, V).real
    return float(np.max(num / den))


# ---------------------------------------------------------------------------
# Gronwall verification


@dataclass(frozen=True)
class GronwallReport:
    """Largest relative violations of the energy estimates along a trace.

    pointwise: finite-difference check of d_t E <= (K + C2 delta <xi> + Ceps
    + 1) E + 2 sup|Fhat|^2, scaled by the largest magnitude either side
    reaches.  integrated: E(t) against the exponential bound, relative to the
    bound.  forcing: |(Q Fhat, V) - (QV, Fhat)| <= 2|Fhat|^2 + E at grid
    times.  K_fd_integral reports int K dt measured from the grid, with
    K = |d_t q11| / q11.
    """

    passed: bool
    pointwise: float
    integrated: float
    forcing: float
    K_fd_integral: float
    scale: float
    tol: float


def gronwall_verify(trace: EnergyTrace, Keps_int: float, C2: float,
                    Ceps: float, tol: float = 1e-6) -> GronwallReport:
    times, E, q11 = trace.times, trace.E, trace.q11
    if times.size < 3:
        raise ValueError("trace too short to difference")
    dt = times[1] - times[0]
    F2 = np.sum(np.abs(trace.Fgrid) ** 2, axis=1)
    Fsup2 = float(np.max(F2))
    drive = C2 * trace.delta * trace.xi_bracket + Ceps + 1.0

    dE = (E[2:] - E[:-2]) / (2.0 * dt)
    dq = np.abs(q11[2:] - q11[:-2]) / (2.0 * dt)
    K = dq / q11[1:-1]
    rhs = (K + drive) * E[1:-1] + 2.0 * Fsup2
    scale = float(np.max(np.abs(dE) + rhs))
    if scale > 0.0:
        pointwise = float(np.max(dE - rhs)) / scale
    else:
        pointwise = 0.0

    K_ends = np.empty(times.size)
    K_ends[1:-1] = K
    K_ends[0] = abs(q11[1] - q11[0]) / (dt * q11[0])
    K_ends[-1] = abs(q11[-1] - q11[-2]) / (dt * q11[-1])
    K_fd_integral = float(np.trapezoid(K_ends, dx=dt))

    T = times[-1]
    base = float(E[0] + 2.0 * T * Fsup2)
    exponent = Keps_int + C2 * trace.delta * trace.xi_bracket * T + (Ceps + 1.0) * T
    if base == 0.0:
        integrated = 0.0 if np.all(E <= 0.0) else math.inf
    else:
        log_gap = float(np.max(np.log(np.maximum(E, 1e-300)))) - (math.log(base) + exponent)
        integrated = math.expm1(log_gap) if log_gap < 50.0 else math.inf

    qf = np.empty_like(trace.Fgrid)
    qf[:, 0] = q11 * trace.Fgrid[:, 0]
    qf[:, 1] = 2.0 * trace.Fgrid[:, 1]
    lhs = 2.0 * np.abs(np.imag(np.sum(np.conj(trace.V) * qf, axis=1)))
    frhs = 2.0 * F2 + E
    fscale = float(np.max(lhs + frhs))
    forcing = float(np.max(lhs - frhs)) / fscale if fscale > 0.0 else 0.0

    passed = pointwise <= tol and integrated <= tol and forcing <= tol
    return GronwallReport(
        passed=passed,
        pointwise=pointwise,
        integrated=integrated,
        forcing=forcing,
        K_fd_integral=K_fd_integral,
        scale=scale,
        tol=tol,
    )


# ---------------------------------------------------------------------------
# Moderateness sweeps


class SweepSample(NamedTuple):
    epsilon: float
    xi: tuple
    delta: float
    sup_V: float
    E0: float
    ET: float


def moderateness_sweep(spec: EquationSpec, eps_list, xi_list, s: float, moll, nets,
                       delta_rule: str = "balance", k: float = 2.0,
                       dt: Optional[float] = None, data_for_eps: Optional[Callable] = None,
                       jobs: int = 1):
    """Integrate over an (eps, xi) grid and collect sup_t |V| per run.

    delta follows the balance rule delta = <xi>^(-k/(k+2)).  data_for_eps,
    when given, maps eps to a (g0_hat, g1_hat) pair so the data can be
    regularised along with the coefficients.  Each run is independent; jobs
    > 1 spreads them over a thread pool with order-independent results.
    """
    if delta_rule != "balance":
        raise ValueError(f"unknown delta rule {delta_rule!r}")
    if s <= 1:
        raise ValueError("decay exponent s must exceed 1")
    if k < 2:
        raise ValueError("coefficient smoothness k must be at least 2")
    pairs = [
        (float(e), tuple(float(x) for x in np.atleast_1d(np.asarray(x_, dtype=float))))
        for e in eps_list
        for x_ in xi_list
    ]
    if not pairs:
        raise ValueError("empty sweep grid")

    def run(pair):
        e, x = pair
        sp = spec
        if data_for_eps is not None:
            g0, g1 = data_for_eps(e)
            sp = replace(spec, g0_hat=g0, g1_hat=g1)
        sys = assemble(sp, e, moll, nets, x)
        delta = sys.bracket ** (-k / (k + 2.0))
        tr = integrate(sys, dt=dt, delta=delta)
        sup_V = float(np.max(np.sqrt(np.sum(np.abs(tr.V) ** 2, axis=1))))
        return SweepSample(e, x, delta, sup_V, float(tr.E[0]), float(tr.E[-1]))

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=int(jobs)) as pool:
            return list(pool.map(run, pairs))
    return [run(p) for p in pairs]


def write_sweep_csv(samples, path) -> None:
    """Write sweep samples as CSV with a fixed 17-digit float format."""
    rows = list(samples)
    if not rows:
        raise ValueError("no samples to write")
    n = len(rows[0].xi)
    header = ["eps"] + [f"xi_{i + 1}" for i in range(n)] + ["delta", "sup_V", "E0", "ET"]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for smp in rows:
            if len(smp.xi) != n:
                raise ValueError("inconsistent frequency dimensions across samples")
            writer.writerow(
                [f"{smp.epsilon:.17g}"]
                + [f"{x:.17g}" for x in smp.xi]
                + [f"{smp.delta:.17g}", f"{smp.sup_V:.17g}", f"{smp.E0:.17g}", f"{smp.ET:.17g}"]
            )


# ---------------------------------------------------------------------------
# Data spectra


def gevrey_profile(amplitude: float, nu: float, s: float) -> Callable:
    """Spectrum amplitude * exp(-nu <xi>^(1/s)) of Gevrey-s data."""
    if nu <= 0:
        raise ValueError("nu must be positive")
    if s < 1:
        raise ValueError("Gevrey order s must be at least 1")

    def profile(xi):
        return amplitude * math.exp(-nu * bracket(xi) ** (1.0 / s))

    return profile


def delta_data_profile(eps: float, s: float) -> Callable:
    """Spectral envelope exp(-(eps <xi>)^(1/s)) of a regularised point mass.

    This is the decay a compactly supported distribution acquires after
    convolution with an order-s cutoff mollifier at parameter eps, taken
    here with unit constants.
    """
    if not 0.0 < eps <= 1.0:
        raise ValueError("eps must lie in (0, 1]")
    if s <= 1:
        raise ValueError("cutoff order s must exceed 1")

    def profile(xi):
        return math.exp(-((eps * bracket(xi)) ** (1.0 / s)))

    return profile
