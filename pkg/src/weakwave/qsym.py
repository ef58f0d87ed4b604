"""Quasi-symmetrisers for companion (Sylvester) matrices of any size m <= 8.

Q_delta(lam) = sum over permutations rho of P(lam_rho)^T H_delta^2 P(lam_rho),
where P is the triangular matrix of signed elementary symmetric polynomials
and H_delta = diag(delta^(m-1), ..., delta, 1).  The module exposes the
algebraic identities the energy estimates rest on: the delta-expansion into
PSD layers, the recursion in m, the factorisation of the delta-free layer
through W, its determinant, and the near-diagonality constants.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from itertools import permutations
from typing import Callable, Sequence

import numpy as np

from .coeffs import _weights

MAX_SIZE = 8


def _as_lam(lam) -> np.ndarray:
    arr = np.asarray(lam, dtype=float).ravel()
    if arr.size == 0:
        raise ValueError("need at least one eigenvalue")
    if not np.all(np.isfinite(arr)):
        raise ValueError("eigenvalues must be finite")
    return arr


def _char_coeffs(lam: np.ndarray, dtype=float) -> np.ndarray:
    """Coefficients (sigma_0 .. sigma_m) of prod (x - lam_i), descending in x.

    sigma_h is the signed elementary symmetric polynomial (-1)^h e_h(lam),
    i.e. exactly the h-th characteristic polynomial coefficient.
    """
    coeffs = np.zeros(lam.size + 1, dtype=dtype)
    coeffs[0] = 1.0
    for k, root in enumerate(lam.astype(dtype)):
        coeffs[1 : k + 2] -= root * coeffs[: k + 1].copy()
    return coeffs


def elementary_symmetric(h: int, lam) -> float:
    """sigma_h(lam) = (-1)^h e_h(lam)."""
    arr = _as_lam(lam)
    if not 1 <= h <= arr.size:
        raise ValueError(f"order h = {h} outside 1..{arr.size}")
    return float(_char_coeffs(arr)[h])


@dataclass(frozen=True)
class SylvesterMatrix:
    m: int
    entries: np.ndarray


def sylvester(lam) -> SylvesterMatrix:
    """Companion matrix with characteristic roots lam."""
    arr = _as_lam(lam)
    m = arr.size
    sig = _char_coeffs(arr)
    a = np.zeros((m, m))
    for i in range(m - 1):
        a[i, i + 1] = 1.0
    a[m - 1, :] = -sig[:0:-1]  # (-sigma_m, ..., -sigma_1)
    return SylvesterMatrix(m, a)


def build_P(lam, dtype=float) -> np.ndarray:
    """Lower-triangular P: row i holds sigma_{i-j} of the first i eigenvalues.

    Only the first m-1 eigenvalues are ever read.
    """
    arr = _as_lam(lam)
    m = arr.size
    p = np.zeros((m, m), dtype=dtype)
    for i in range(m):
        sig = _char_coeffs(arr[:i], dtype=dtype)
        p[i, : i + 1] = sig[::-1]
    return p


@lru_cache(maxsize=None)
def _perms(m: int):
    return tuple(permutations(range(m)))


@dataclass(frozen=True)
class QuasiSymmetriser:
    m: int
    delta: float
    Q: np.ndarray
    layers: tuple  # layers[i] is the coefficient of delta^(2i)
    W: np.ndarray


def build_Q(delta: float, lam) -> QuasiSymmetriser:
    """Assemble Q_delta(lam) with its delta-expansion layers and W.

    delta = 0 is accepted (it collapses Q to the delta-free layer Q_0, which
    one of the determinant checks evaluates directly); the positive
    definiteness guarantees hold for delta > 0 only.
    """
    arr = _as_lam(lam)
    m = arr.size
    if m > MAX_SIZE:
        raise ValueError(
            f"m = {m} exceeds the supported size {MAX_SIZE} "
            "(the permutation sum grows as m!)"
        )
    if not 0.0 <= delta <= 1.0:
        raise ValueError("delta must lie in [0, 1]")

    layers = [np.zeros((m, m)) for _ in range(m)]
    for rho in _perms(m):
        p = build_P(arr[list(rho)])
        # H^2 weights row r of P by delta^(2(m-1-r)): row r feeds layer m-1-r
        for r in range(m):
            layers[m - 1 - r] += np.outer(p[r], p[r])
    # Q_0 sums (m-1)! identical outer products per choice of the omitted
    # eigenvalue; W stacks one representative row for each choice.
    rows_w = []
    for i in range(m):
        rest = np.delete(arr, i)
        sig = _char_coeffs(rest)
        rows_w.append(sig[::-1])
    w = np.array(rows_w)

    q = np.zeros((m, m))
    for i, layer in enumerate(layers):
        q += delta ** (2 * i) * layer
    return QuasiSymmetriser(m, float(delta), q, tuple(layers), w)


def recursion_gap(delta: float, lam) -> float:
    """Gap in Q_delta(lam) = Q_0 + delta^2 sum_i (Q_delta(pi_i lam))#.

    The sharp (#) embedding pads the smaller matrix into the top-left corner.
    Reported relative to the largest entry of Q (floored at 1): entries grow
    like |lam|^(2m-2), so an absolute gap would just measure matrix scale.
    """
    arr = _as_lam(lam)
    m = arr.size
    if m < 2:
        raise ValueError("recursion needs m >= 2")
    full = build_Q(delta, arr)
    acc = np.array(full.layers[0])
    for i in range(m):
        sub = build_Q(delta, np.delete(arr, i)).Q
        acc[: m - 1, : m - 1] += delta**2 * sub
    return float(np.max(np.abs(full.Q - acc)) / max(1.0, np.max(np.abs(full.Q))))


def _det_lu(a: np.ndarray):
    """Determinant by partially pivoted LU, preserving the input dtype."""
    a = np.array(a, copy=True)
    n = a.shape[0]
    det = a.dtype.type(1.0)
    for j in range(n):
        p = j + int(np.argmax(np.abs(a[j:, j])))
        if a[p, j] == 0.0:
            return a.dtype.type(0.0)
        if p != j:
            a[[j, p]] = a[[p, j]]
            det = -det
        det = det * a[j, j]
        a[j + 1 :, j:] -= np.outer(a[j + 1 :, j] / a[j, j], a[j, j:])
    return det


def determinant_identity_gap(lam, via: str = "direct") -> float:
    """Relative gap in det Q_0 = ((m-1)!)^m prod_{i<j} (lam_i - lam_j)^2.

    Both sides are evaluated in extended precision.  "direct" runs LU on Q_0
    itself; near-coincident eigenvalues square the conditioning there (the
    gram matrix loses twice the digits of W), so the adversarial clustered
    checks use via="factored", which evaluates det Q_0 through
    ((m-1)! det W)^2 and still exercises the Vandermonde-style cancellation.
    """
    arr = _as_lam(lam)
    m = arr.size
    if m > MAX_SIZE:
        raise ValueError(f"m = {m} exceeds the supported size {MAX_SIZE}")
    if via not in ("direct", "factored"):
        raise ValueError("via must be 'direct' or 'factored'")
    ld = np.longdouble
    rows = []
    for i in range(m):
        sig = _char_coeffs(np.delete(arr, i), dtype=ld)
        rows.append(sig[::-1])
    w = np.array(rows, dtype=ld)
    fact = ld(math.factorial(m - 1))
    if via == "direct":
        lhs = _det_lu(fact * (w.T @ w))
    else:
        lhs = fact**m * _det_lu(w) ** 2
    rhs = ld(1.0)
    for i in range(m):
        for j in range(i + 1, m):
            rhs = rhs * ld(arr[i] - arr[j]) ** 2
    rhs = rhs * fact**m
    denom = max(abs(float(rhs)), 1e-300)
    return abs(float(lhs - rhs)) / denom


def commutator_ratio(delta: float, lam, trials: int, rng=None) -> float:
    """Max over random unit vectors V of |((QA - A^T Q)V, V)| / (delta (QV, V)).

    Deterministic by default; pass a numpy Generator to vary the draws.
    """
    if trials < 1:
        raise ValueError("trials must be at least 1")
    if not 0.0 < delta <= 1.0:
        raise ValueError("delta must lie in (0, 1]")
    arr = _as_lam(lam)
    if rng is None:
        rng = np.random.default_rng(42)
    q = build_Q(delta, arr).Q
    a = sylvester(arr).entries
    comm = q @ a - a.T @ q
    best = 0.0
    for _ in range(trials):
        v = rng.standard_normal(arr.size) + 1j * rng.standard_normal(arr.size)
        v /= np.linalg.norm(v)
        num = abs(np.vdot(v, comm @ v))
        den = delta * np.vdot(v, q @ v).real
        best = max(best, num / den)
    return best


def check_separation(lams: Sequence, M: float) -> None:
    """Raise unless every tuple satisfies lam_i^2 + lam_j^2 <= M (lam_i - lam_j)^2."""
    for arr in map(_as_lam, lams):
        m = arr.size
        for i in range(m):
            for j in range(i + 1, m):
                lhs = arr[i] ** 2 + arr[j] ** 2
                rhs = M * (arr[i] - arr[j]) ** 2
                if lhs > rhs + 1e-12 * max(lhs, 1.0):
                    raise ValueError(
                        f"eigenvalue pair (lam_{i + 1}, lam_{j + 1}) = "
                        f"({arr[i]}, {arr[j]}) violates the separation condition "
                        f"with M = {M}: {lhs} > {rhs}"
                    )


def nearly_diagonal_constant(lams: Sequence, deltas: Sequence, M: float = 1.0) -> float:
    """Largest c0 with Q >= c0 diag(Q) over the family {Q_delta(lam)}.

    Every lam must satisfy the separation condition for the declared M;
    indices with vanishing diagonal entries are excluded from the Rayleigh
    quotient (PSD forces the whole row to vanish there).
    """
    check_separation(lams, M)
    c0 = math.inf
    for lam in lams:
        for delta in deltas:
            q = build_Q(delta, lam).Q
            d = np.diag(q)
            keep = d > 1e-300
            if not np.any(keep):
                continue
            sub = q[np.ix_(keep, keep)]
            scale = 1.0 / np.sqrt(d[keep])
            sym = sub * np.outer(scale, scale)
            c0 = min(c0, float(np.linalg.eigvalsh(sym)[0]))
    if not math.isfinite(c0):
        raise ValueError("empty family")
    return c0


def lemma_integral_check(
    Qpath: Callable[[float], QuasiSymmetriser],
    Vpath: Callable[[float], np.ndarray],
    k: int,
    T: float,
    nodes: int = 2048,
) -> float:
    """Integral of |(dQ/dt V, V)| / ((QV,V)^(1-1/k) |V|^(2/k)) over [0, T].

    The integrand is scale-free in V.  dQ/dt is taken by central differences;
    the Q path is expected to come from differentiable coefficient paths.
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    if not T > 0:
        raise ValueError("T must be positive")
    ts = np.linspace(0.0, T, nodes + 1)
    step = 1e-6 * max(T, 1.0)
    vals = np.empty(nodes + 1)
    for idx, t in enumerate(ts):
        q = Qpath(t).Q
        dq = (Qpath(t + step).Q - Qpath(t - step).Q) / (2.0 * step)
        v = np.asarray(Vpath(t))
        num = abs(np.vdot(v, dq @ v))
        e = np.vdot(v, q @ v).real
        den = e ** (1.0 - 1.0 / k) * float(np.vdot(v, v).real) ** (1.0 / k)
        vals[idx] = num / den
    return float(np.dot(_weights(nodes), vals)) * (T / nodes)
