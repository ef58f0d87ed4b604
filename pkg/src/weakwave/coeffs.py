"""Distributional time coefficients and their mollifier regularisations.

A coefficient like H(t - 1) or 1 + delta at t = 1 is stored symbolically as a
sum of smooth, jump and point terms.  Convolving it with a scaled mollifier
psi_h, h = omega(eps), produces the evaluable net a_eps used by the energy
integrator, the Levi checks and the finite-difference solver.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from difflib import get_close_matches
from typing import Callable, NamedTuple, Sequence

import numpy as np
from numpy.polynomial import polynomial as npoly

# Mass of the unnormalised bump exp(1/(t^2 - 1)) on (-1, 1).  The commonly
# quoted 0.443994 is only accurate to ~4e-7 relative, which is not enough for
# the 1e-10 mass checks, so the constant is frozen at full float64 precision.
BUMP_MASS = 0.4439938161680794

# Quadrature window for the rapidly decaying vanishing-moments profile: the
# Gaussian tail beyond |t| = 10 is below 1e-40.
_MOMENTS_RADIUS = 10.0

# Default number of composite-Simpson subintervals per convolution.  The
# oscillating Gevrey-type profile needs a denser rule to reach the same
# 1e-10 accuracy, hence the separate count.
_SIMPSON_INTERVALS = 2048
_SIMPSON_INTERVALS_OSC = 16384

_EVAL_CHUNK = 256


def _simpson_weights(n: int) -> np.ndarray:
    if n % 2 or n < 2:
        raise ValueError("composite Simpson needs an even number of subintervals")
    w = np.ones(n + 1)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    return w / 3.0


_WEIGHT_CACHE: dict[int, np.ndarray] = {}


def _weights(n: int) -> np.ndarray:
    if n not in _WEIGHT_CACHE:
        _WEIGHT_CACHE[n] = _simpson_weights(n)
    return _WEIGHT_CACHE[n]


def simpson(values: np.ndarray, dx: float) -> float:
    """Composite Simpson rule for samples on a uniform grid of spacing dx."""
    values = np.asarray(values, dtype=float)
    return float(np.dot(_weights(values.shape[-1] - 1), values)) * dx


# ---------------------------------------------------------------------------
# mollifiers

# Derivatives of the exponent g(u) = 1/(u^2 - 1) of the Friedrichs bump.
def _bump_exponent_derivatives(u):
    w = u * u - 1.0
    g1 = -2.0 * u / w**2
    g2 = (6.0 * u * u + 2.0) / w**3
    g3 = -24.0 * u * (u * u + 1.0) / w**4
    g4 = 24.0 * (5.0 * u**4 + 10.0 * u * u + 1.0) / w**5
    return g1, g2, g3, g4


# Faa di Bruno combinations turning exponent derivatives into derivatives of
# exp(g(u)); the exponential factor itself is applied by the caller.
_FAA_DI_BRUNO = {
    1: lambda g1, g2, g3, g4: g1,
    2: lambda g1, g2, g3, g4: g2 + g1**2,
    3: lambda g1, g2, g3, g4: g3 + 3.0 * g1 * g2 + g1**3,
    4: lambda g1, g2, g3, g4: g4 + 4.0 * g1 * g3 + 3.0 * g2**2 + 6.0 * g1**2 * g2 + g1**4,
}

# Inside this margin of the support edge exp(1/(u^2-1)) is below 1e-266 and
# the rational prefactors can overflow, so the derivative is truncated to 0.
_BUMP_EDGE = 1.5e-3

# P0 * exp(-t^2) / sqrt(pi) has unit mass and vanishing moments 1..5.
_MOMENTS_P0 = np.array([15.0 / 8.0, 0.0, -5.0 / 2.0, 0.0, 0.5])
_moments_polys = [_MOMENTS_P0]


def _moments_poly(n: int) -> np.ndarray:
    # d/dt [P e^{-t^2}] = (P' - 2 t P) e^{-t^2}
    while len(_moments_polys) <= n:
        p = _moments_polys[-1]
        _moments_polys.append(npoly.polysub(npoly.polyder(p), 2.0 * npoly.polymulx(p)))
    return _moments_polys[n]


@dataclass(frozen=True)
class Mollifier:
    """Unit-mass mollifier profile of one of three kinds.

    "friedrichs": the nonnegative bump exp(1/((t/radius)^2 - 1)), supported on
    (-radius, radius).  "moments": a Schwartz profile whose moments 1..5
    vanish.  "gevrey": a compactly supported oscillating profile (sinc damped
    by a Gaussian, cut off by a bump of order sigma) with sub-exponential
    Fourier decay; its analytic derivatives are not provided.
    """

    kind: str
    radius: float
    order: float = 0.0
    normalisation: float = 1.0

    @staticmethod
    def friedrichs(radius: float = 1.0) -> "Mollifier":
        if not radius > 0:
            raise ValueError("radius must be positive")
        return Mollifier("friedrichs", float(radius), 0.0, float(radius) * BUMP_MASS)

    @staticmethod
    def vanishing_moments() -> "Mollifier":
        return Mollifier("moments", math.inf, 0.0, math.sqrt(math.pi))

    @staticmethod
    def gevrey(order: float = 2.0, radius: float = 25.0) -> "Mollifier":
        if not order > 1:
            raise ValueError("gevrey order must exceed 1")
        if not radius > 0:
            raise ValueError("radius must be positive")
        raw = Mollifier("gevrey", float(radius), float(order), 1.0)
        n = _SIMPSON_INTERVALS_OSC * 2
        t = np.linspace(-radius, radius, n + 1)
        mass = simpson(raw.profile(t), 2.0 * radius / n)
        return Mollifier("gevrey", float(radius), float(order), mass)

    # quadrature parameters used whenever this profile is integrated
    @property
    def quad_radius(self) -> float:
        return _MOMENTS_RADIUS if math.isinf(self.radius) else self.radius

    @property
    def quad_intervals(self) -> int:
        return _SIMPSON_INTERVALS_OSC if self.kind == "gevrey" else _SIMPSON_INTERVALS

    def profile(self, t):
        """Profile value at t (scalar or array); zero outside the support."""
        tt = np.asarray(t, dtype=float)
        scalar = tt.ndim == 0
        tt = np.atleast_1d(tt)

        if self.kind == "friedrichs":
            u = tt / self.radius
            inside = np.abs(u) < 1.0
            den = np.where(inside, u * u - 1.0, -1.0)
            out = np.where(inside, np.exp(1.0 / den), 0.0) / self.normalisation
        elif self.kind == "moments":
            out = npoly.polyval(tt, _MOMENTS_P0) * np.exp(-tt * tt) / self.normalisation
        elif self.kind == "gevrey":
            u = tt / self.radius
            inside = np.abs(u) < 1.0
            den = np.where(inside, u * u - 1.0, -1.0)
            cutoff = np.where(inside, np.exp(1.0 + 1.0 / den), 0.0)
            out = np.sinc(tt) * np.exp(-tt * tt / 50.0) * cutoff / self.normalisation
        else:
            raise ValueError(f"unknown mollifier kind '{self.kind}'")
        return float(out[0]) if scalar else out

    def profile_derivative(self, t, order: int):
        """Analytic derivative of the profile, up to order 4."""
        if order == 0:
            return self.profile(t)
        if not 1 <= order <= 4:
            raise ValueError("profile derivatives are provided up to order 4")
        tt = np.asarray(t, dtype=float)
        scalar = tt.ndim == 0
        tt = np.atleast_1d(tt)

        if self.kind == "friedrichs":
            u = tt / self.radius
            inside = 1.0 - u * u > _BUMP_EDGE
            us = np.where(inside, u, 0.0)
            g = _bump_exponent_derivatives(us)
            val = np.exp(1.0 / (us * us - 1.0)) * _FAA_DI_BRUNO[order](*g)
            out = np.where(inside, val, 0.0) / (self.normalisation * self.radius**order)
        elif self.kind == "moments":
            out = npoly.polyval(tt, _moments_poly(order)) * np.exp(-tt * tt) / self.normalisation
        else:
            raise NotImplementedError(
                "analytic derivatives of the gevrey profile are not provided; "
                "use the friedrichs or moments kind where derivatives matter"
            )
        return float(out[0]) if scalar else out


def eval_mollifier(m: Mollifier, t) -> float:
    """Value of the mollifier profile at t; zero outside compact supports."""
    return m.profile(t)


def scaled_mollifier(m: Mollifier, h: float, t):
    """The mass-preserving rescaling psi_h(t) = psi(t/h) / h."""
    if not h > 0:
        raise ValueError("scale h must be positive")
    return m.profile(np.asarray(t, dtype=float) / h) / h


# ---------------------------------------------------------------------------
# scale nets


@dataclass(frozen=True)
class ScaleNet:
    """The net eps -> omega(eps) controlling the mollification scale.

    Kinds: "logpower" with omega(eps)^-1 = c (ln 1/eps)^r, "powerlaw" with
    omega(eps) = c eps^p, and "identity" with omega(eps) = eps.
    """

    kind: str = "logpower"
    c: float = 1.0
    exponent: float = 1.0

    @staticmethod
    def log_power(c: float = 1.0, r: float = 1.0) -> "ScaleNet":
        if not (c > 0 and r > 0):
            raise ValueError("logpower net needs c > 0 and r > 0")
        return ScaleNet("logpower", float(c), float(r))

    @staticmethod
    def power_law(c: float = 1.0, p: float = 1.0) -> "ScaleNet":
        if not (c > 0 and p > 0):
            raise ValueError("powerlaw net needs c > 0 and p > 0")
        return ScaleNet("powerlaw", float(c), float(p))

    @staticmethod
    def identity() -> "ScaleNet":
        return ScaleNet("identity", 1.0, 1.0)

    def omega(self, eps: float) -> float:
        if not 0.0 < eps <= 1.0:
            raise ValueError("eps must lie in (0, 1]")
        if self.kind == "logpower":
            if eps == 1.0:
                raise ValueError("the logarithmic net degenerates at eps = 1")
            return 1.0 / (self.c * math.log(1.0 / eps) ** self.exponent)
        if self.kind == "powerlaw":
            return self.c * eps**self.exponent
        if self.kind == "identity":
            return eps
        raise ValueError(f"unknown scale net kind '{self.kind}'")


# ---------------------------------------------------------------------------
# symbolic distributions


@dataclass(frozen=True)
class Smooth:
    """A smooth term given by a vectorised callable with a known sup bound.

    The callable is evaluated on a small neighbourhood of [0, T] (the
    convolution looks h * radius past the endpoints), so closures like
    lambda t: 1 + t**2 are the expected shape.
    """

    f: Callable
    sup_bound: float


@dataclass(frozen=True)
class Jump:
    """left + (right - left) * H(t - at): a Heaviside jump at t = at."""

    at: float
    left: float
    right: float


@dataclass(frozen=True)
class Point:
    """weight * (k-th derivative of delta) placed at t = at."""

    at: float
    order: int = 0
    weight: float = 1.0


Term = object  # Smooth | Jump | Point


@dataclass(frozen=True)
class TimeDistribution:
    """A compactly supported distribution on [0, horizon], stored as terms.

    The `nonnegative` flag is a contract used by downstream positivity
    checks: it is rejected outright when a term structurally violates it
    (negative jump values, point masses with k > 0 or negative weight);
    smooth terms are trusted to be nonnegative on [0, horizon].
    """

    terms: tuple
    horizon: float = 2.0
    nonnegative: bool = False

    def __post_init__(self):
        object.__setattr__(self, "terms", tuple(self.terms))
        if not self.horizon > 0:
            raise ValueError("time horizon must be positive")
        for term in self.terms:
            if isinstance(term, (Jump, Point)):
                if not 0.0 <= term.at <= self.horizon:
                    raise ValueError(
                        f"term at t = {term.at} lies outside the horizon [0, {self.horizon}]"
                    )
            if isinstance(term, Point):
                if term.order < 0 or term.order != int(term.order):
                    raise ValueError("point term order must be a nonnegative integer")
            if not isinstance(term, (Smooth, Jump, Point)):
                raise TypeError(f"unsupported term {term!r}")
        if self.nonnegative:
            for term in self.terms:
                if isinstance(term, Jump) and (term.left < 0 or term.right < 0):
                    raise ValueError("nonnegative distribution with a negative jump value")
                if isinstance(term, Point) and (term.order != 0 or term.weight < 0):
                    raise ValueError(
                        "nonnegative distribution allows point terms only with "
                        "k = 0 and weight >= 0"
                    )

    @property
    def support(self) -> tuple[float, float]:
        if not self.terms:
            return (0.0, 0.0)
        lo, hi = [], []
        for term in self.terms:
            if isinstance(term, Smooth):
                lo.append(0.0)
                hi.append(self.horizon)
            elif isinstance(term, Jump):
                lo.append(term.at)
                hi.append(self.horizon)
            else:
                lo.append(term.at)
                hi.append(term.at)
        return (min(lo), max(hi))


# ---------------------------------------------------------------------------
# regularisation


@dataclass(frozen=True)
class RegularisedCoefficient:
    """The convolution source * psi_h with h = scale.omega(epsilon).

    eval / eval_derivative reduce each term analytically: smooth terms by
    quadrature against the mollifier, jumps through the mollifier's
    cumulative mass, point terms through closed-form profile derivatives.
    Derivatives always land on the mollifier, never on the distribution.
    """

    source: TimeDistribution
    mollifier: Mollifier
    epsilon: float
    scale: ScaleNet
    h: float

    def __call__(self, t):
        return self.eval(t)

    def eval(self, t):
        return self.eval_derivative(t, 0)

    def eval_derivative(self, t, order: int):
        if order not in (0, 1, 2):
            raise ValueError("derivative order must be 0, 1 or 2")
        tt = np.asarray(t, dtype=float)
        scalar = tt.ndim == 0
        tt = np.atleast_1d(tt).astype(float)
        out = np.zeros(tt.shape)
        for term in self.source.terms:
            out += self._term_value(term, tt, order)
        return float(out[0]) if scalar else out

    def _term_value(self, term, t: np.ndarray, order: int) -> np.ndarray:
        m, h = self.mollifier, self.h
        if isinstance(term, Point):
            k = term.order + order
            return term.weight * m.profile_derivative((t - term.at) / h, k) / h ** (k + 1)

        if isinstance(term, Jump):
            size = term.right - term.left
            if order == 0:
                return term.left + size * self._profile_mass_below((t - term.at) / h)
            return size * m.profile_derivative((t - term.at) / h, order - 1) / h**order

        # smooth term: integral of f(t - h s) psi^(order)(s) ds over the support
        n = m.quad_intervals
        radius = m.quad_radius
        s = np.linspace(-radius, radius, n + 1)
        psi = m.profile(s) if order == 0 else m.profile_derivative(s, order)
        core = _weights(n) * psi * (2.0 * radius / n)
        pieces = []
        for i0 in range(0, t.size, _EVAL_CHUNK):
            tc = t[i0 : i0 + _EVAL_CHUNK]
            vals = np.asarray(term.f(tc[:, None] - h * s[None, :]), dtype=float)
            if vals.shape != (tc.size, s.size):
                vals = np.broadcast_to(vals, (tc.size, s.size))
            pieces.append(vals @ core)
        return np.concatenate(pieces) / h**order

    def _profile_mass_below(self, s: np.ndarray) -> np.ndarray:
        """Mass of the profile on (-inf, s], in profile units."""
        m = self.mollifier
        radius, n = m.quad_radius, m.quad_intervals
        out = np.empty_like(s)
        out[s <= -radius] = 0.0
        out[s >= radius] = 1.0
        mid = np.flatnonzero((s > -radius) & (s < radius))
        if mid.size:
            unit = np.linspace(0.0, 1.0, n + 1)
            w = _weights(n)
            for i0 in range(0, mid.size, _EVAL_CHUNK):
                idx = mid[i0 : i0 + _EVAL_CHUNK]
                length = s[idx] + radius
                nodes = -radius + length[:, None] * unit[None, :]
                out[idx] = (m.profile(nodes) @ w) * (length / n)
        return out


def regularise(
    d: TimeDistribution, m: Mollifier, eps: float, net: ScaleNet
) -> RegularisedCoefficient:
    """Convolve the distribution with the net-scaled mollifier at eps."""
    if not 0.0 < eps <= 1.0:
        raise ValueError("eps must lie in (0, 1]")
    h = net.omega(eps)
    return RegularisedCoefficient(d, m, float(eps), net, h)


# ---------------------------------------------------------------------------
# Fourier decay fits


class DecayFit(NamedTuple):
    N: float
    c: float
    c_prime: float
    residual: float


def fourier_decay_fit(samples: Sequence, s: float) -> DecayFit:
    """Fit |V| <= c' eps^-N exp(-c (eps <xi>)^(1/s)) over (eps, xi, |V|) rows.

    A least-squares fit of the logarithmic model is lifted to the upper
    envelope of the data, so the returned residual is the largest remaining
    positive violation (about zero when the bound holds on the samples).
    """
    if s <= 1:
        raise ValueError("decay exponent s must exceed 1")
    rows = list(samples)
    if not rows:
        raise ValueError("empty sample set")
    eps = np.array([float(r[0]) for r in rows])
    absxi = np.array([float(np.linalg.norm(np.atleast_1d(r[1]))) for r in rows])
    vals = np.array([float(r[2]) for r in rows])
    if np.any(vals <= 0):
        raise ValueError("|V| samples must be positive")
    if np.any((eps <= 0) | (eps > 1)):
        raise ValueError("eps samples must lie in (0, 1]")
    bracket = np.sqrt(1.0 + absxi**2)
    if np.unique(eps).size < 2 or np.unique(bracket).size < 2:
        raise ValueError("need at least two distinct eps and two distinct xi to fit")

    decay = (eps * bracket) ** (1.0 / s)
    design = np.column_stack([np.ones_like(eps), np.log(1.0 / eps), -decay])
    target = np.log(vals)
    coef, *_ = np.linalg.lstsq(design, target, rcond=None)
    log_cp, n_fit, c_fit = coef
    log_cp += max(float(np.max(target - design @ coef)), 0.0)
    residual = float(np.max(target - (log_cp + n_fit * np.log(1.0 / eps) - c_fit * decay)))
    return DecayFit(float(n_fit), float(c_fit), math.exp(log_cp), residual)


# ---------------------------------------------------------------------------
# config loading


def reject_unknown_keys(mapping: dict, allowed: Sequence[str], where: str) -> None:
    """Raise on any unknown key, suggesting the nearest valid one."""
    for key in mapping:
        if key not in allowed:
            hint = get_close_matches(key, list(allowed), n=1)
            msg = f"unknown key '{key}' in {where}"
            if hint:
                msg += f"; did you mean '{hint[0]}'?"
            raise ValueError(msg)


def mollifier_from_config(cfg: dict) -> Mollifier:
    reject_unknown_keys(cfg, ("kind", "radius", "order"), "mollifier")
    kind = cfg.get("kind", "friedrichs")
    if kind == "friedrichs":
        return Mollifier.friedrichs(cfg.get("radius", 1.0))
    if kind == "moments":
        return Mollifier.vanishing_moments()
    if kind == "gevrey":
        return Mollifier.gevrey(cfg.get("order", 2.0), cfg.get("radius", 25.0))
    hint = get_close_matches(kind, ["friedrichs", "moments", "gevrey"], n=1)
    msg = f"unknown mollifier kind '{kind}'"
    if hint:
        msg += f"; did you mean '{hint[0]}'?"
    raise ValueError(msg)


def scale_from_config(cfg: dict) -> ScaleNet:
    reject_unknown_keys(cfg, ("kind", "c", "r", "p"), "scale")
    kind = cfg.get("kind", "logpower")
    if kind == "logpower":
        return ScaleNet.log_power(cfg.get("c", 1.0), cfg.get("r", 1.0))
    if kind == "powerlaw":
        return ScaleNet.power_law(cfg.get("c", 1.0), cfg.get("p", 1.0))
    if kind == "identity":
        return ScaleNet.identity()
    hint = get_close_matches(kind, ["logpower", "powerlaw", "identity"], n=1)
    msg = f"unknown scale net kind '{kind}'"
    if hint:
        msg += f"; did you mean '{hint[0]}'?"
    raise ValueError(msg)


def _smooth_from_config(cfg: dict, horizon: float) -> Smooth:
    reject_unknown_keys(cfg, ("const", "poly"), "smooth term")
    if "const" in cfg:
        value = float(cfg["const"])
        return Smooth(lambda t, v=value: np.full_like(np.asarray(t, dtype=float), v), abs(value))
    if "poly" in cfg:
        coeffs = np.asarray(cfg["poly"], dtype=float)
        grid = np.linspace(-1.0, horizon + 1.0, 512)
        bound = float(np.max(np.abs(npoly.polyval(grid, coeffs))))
        return Smooth(lambda t, c=coeffs: npoly.polyval(np.asarray(t, dtype=float), c), bound)
    raise ValueError("smooth term needs 'const' or 'poly'")


def distribution_from_config(cfg: dict, horizon: float = 2.0) -> TimeDistribution:
    """Build a TimeDistribution from a config table.

    Recognised keys: smooth = {const = v} or {poly = [c0, c1, ...]},
    jump = {at, left, right}, point = {at, order, weight}, nonnegative.
    Each term key also accepts a list of tables.
    """
    reject_unknown_keys(cfg, ("smooth", "jump", "point", "nonnegative"), "coefficient")

    def as_list(value):
        return value if isinstance(value, list) else [value]

    terms: list = []
    for sub in as_list(cfg.get("smooth", [])):
        terms.append(_smooth_from_config(sub, horizon))
    for sub in as_list(cfg.get("jump", [])):
        reject_unknown_keys(sub, ("at", "left", "right"), "jump term")
        terms.append(Jump(float(sub["at"]), float(sub.get("left", 0.0)), float(sub["right"])))
    for sub in as_list(cfg.get("point", [])):
        reject_unknown_keys(sub, ("at", "order", "weight"), "point term")
        terms.append(Point(float(sub["at"]), int(sub.get("order", 0)), float(sub.get("weight", 1.0))))
    return TimeDistribution(tuple(terms), horizon, bool(cfg.get("nonnegative", False)))
