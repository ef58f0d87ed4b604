"""End-to-end acceptance checks, one per headline criterion.

Each test prints a single PASS/FAIL line (visible with -s or in the
captured output) so the suite doubles as a checklist.  The criteria pin
property and trend behaviour rather than figure digitisation: symmetriser
identities, the lower-order constant chain, the energy inequalities, the
integrator's order, solver convergence trends for both mollifier widths,
the concentration-ratio contrast, consistency on smooth coefficients,
moderateness fits, and byte-level determinism of emitted artifacts.
"""

import math
import time

import numpy as np
import pytest

from weakwave.coeffs import (
    Jump,
    Mollifier,
    Point,
    ScaleNet,
    Smooth,
    TimeDistribution,
    eval_mollifier,
    fourier_decay_fit,
    regularise,
)
from weakwave.experiments import (
    ExperimentConfig,
    consistency_study,
    convergence_study,
    delta_ratio_study,
    emit,
)
from weakwave.freq import (
    EquationSpec,
    assemble,
    bracket,
    const_coeff_solution,
    delta_data_profile,
    gevrey_profile,
    gronwall_verify,
    integrate,
    levi_check,
    lot_bound_check,
    moderateness_sweep,
)
from weakwave.qsym import (
    build_Q,
    determinant_identity_gap,
    nearly_diagonal_constant,
    recursion_gap,
)

T = 2.0
EPS_LIST = (0.1, 0.05, 0.025, 0.0125)
XI_TRIO = (2.0 * math.pi, 4.0 * math.pi, 8.0 * math.pi)


def _values(study, metric: str) -> tuple:
    return tuple(value for _, value in study.series(metric))


def _report(label: str, ok: bool, detail: str = "") -> bool:
    line = f"[{label}] {'PASS' if ok else 'FAIL'}"
    if detail:
        line += f"  ({detail})"
    print(line)
    return ok


def zero_dist(horizon=T):
    return TimeDistribution((), horizon=horizon, nonnegative=False)


def heaviside_dist(horizon=T):
    return TimeDistribution((Jump(at=1.0, left=0.0, right=1.0),),
                            horizon=horizon, nonnegative=True)


def const_dist(value, horizon=T):
    return TimeDistribution(
        (Smooth(lambda t: value * np.ones_like(np.asarray(t, dtype=float)),
                abs(value)),),
        horizon=horizon,
        nonnegative=value >= 0,
    )


def point_dist(horizon=T):
    return TimeDistribution((Point(at=1.0),), horizon=horizon,
                            nonnegative=True)


def wave_spec(a, horizon=T, g0_hat=None, g1_hat=None, d=None):
    return EquationSpec(
        n=1,
        a=(a,),
        c=(zero_dist(horizon),),
        d=d if d is not None else zero_dist(horizon),
        e=zero_dist(horizon),
        g0_hat=g0_hat if g0_hat is not None else (lambda xi: 1.0),
        g1_hat=g1_hat if g1_hat is not None else (lambda xi: 0.0),
        T=horizon,
    )


def _timed(fn):
    start = time.perf_counter()
    value = fn()
    return value, time.perf_counter() - start


@pytest.fixture(scope="module")
def narrow_study():
    return _timed(lambda: convergence_study(ExperimentConfig(model="heaviside")))


@pytest.fixture(scope="module")
def wide_study():
    return _timed(lambda: convergence_study(
        ExperimentConfig(model="heaviside", mollifier="friedrichs-wide")))


@pytest.fixture(scope="module")
def delta_study():
    return _timed(lambda: delta_ratio_study(ExperimentConfig(model="delta")))


def test_criterion_1_symmetriser_property_suite():
    start = time.perf_counter()
    rng = np.random.default_rng(42)
    deltas = (1.0, 0.3, 0.01)
    worst_det = worst_fact = worst_rec = 0.0
    c0 = math.inf
    for m in (2, 3, 4):
        lams = rng.uniform(-10.0, 10.0, size=(1000, m))
        for lam in lams:
            # the factored evaluation stays well conditioned when a draw
            # happens to contain a near-coincident pair; the direct LU
            # route is stress-checked separately in the unit tests
            worst_det = max(worst_det,
                            determinant_identity_gap(lam, via="factored"))
            qs = build_Q(deltas[0], lam)
            target = math.factorial(m - 1) * (qs.W.T @ qs.W)
            scale = max(1.0, float(np.max(np.abs(target))))
            worst_fact = max(
                worst_fact,
                float(np.max(np.abs(qs.layers[0] - target))) / scale)
            for d in deltas:
                worst_rec = max(worst_rec, recursion_gap(d, lam))
        if m == 2:
            # the lower bound on Q >= c0 diag Q needs separated eigenvalues,
            # so fold each draw onto the symmetric pair (|l|, -|l|)
            pairs = [(abs(l), -abs(l)) for l in lams[:, 0]]
            c0 = nearly_diagonal_constant(pairs, deltas, M=1.0)
    elapsed = time.perf_counter() - start
    ok = (worst_det <= 1e-8 and worst_fact <= 1e-10 and worst_rec <= 1e-10
          and c0 >= 0.125 and elapsed <= 30.0)
    assert _report(
        "criterion 1: symmetriser property suite", ok,
        f"det {worst_det:.2e}, factorisation {worst_fact:.2e}, "
        f"recursion {worst_rec:.2e}, c0 {c0:.3f}, {elapsed:.1f}s")


def test_criterion_2_lower_order_constant_chain():
    start = time.perf_counter()
    spec = wave_spec(heaviside_dist(), d=point_dist())
    moll = Mollifier.friedrichs()
    nets = {"a": ScaleNet.identity(), "lower": ScaleNet.log_power(1.0, 1.0)}
    c2 = eval_mollifier(moll, 0.0) ** 2
    xi0 = 2.0 * math.pi
    report = levi_check(spec, EPS_LIST, moll, nets, c1=1.0, c2=c2,
                        s_grid=(np.linspace(0.0, T, 401), [[xi0]]), gamma=8.0)
    rng = np.random.default_rng(42)
    violations = 0
    worst_ratio = 0.0
    for sample in report.samples:
        a_end = regularise(spec.a[0], moll, sample.epsilon,
                           ScaleNet.identity()).eval(T)
        lam = math.sqrt(a_end) * xi0 / bracket(xi0)
        B = np.array([[0.0, 0.0], [0.0, 1j * math.sqrt(sample.C2)]])
        ratio = lot_bound_check((lam, -lam), bracket(xi0) ** -0.5, B,
                                trials=100000, rng=rng)
        worst_ratio = max(worst_ratio, ratio / sample.Ceps)
        if ratio > sample.Ceps:
            violations += 1
    elapsed = time.perf_counter() - start
    ok = report.passed and violations == 0 and elapsed <= 60.0
    assert _report(
        "criterion 2: lower-order constant chain", ok,
        f"levi {'PASS' if report.passed else 'FAIL'}, "
        f"commutator/budget {worst_ratio:.3f}, "
        f"{violations} violations, {elapsed:.1f}s")


def test_criterion_3_energy_inequalities():
    start = time.perf_counter()
    spec = wave_spec(heaviside_dist())
    moll = Mollifier.friedrichs()
    worst = -math.inf
    all_ok = True
    for xi0 in XI_TRIO:
        trace = integrate(assemble(spec, 0.1, moll, ScaleNet.identity(),
                                   (xi0,)))
        measured = gronwall_verify(trace, 0.0, 0.0, 0.0)
        report = gronwall_verify(trace, measured.K_fd_integral, 0.0, 0.0,
                                 tol=1e-6)
        all_ok &= report.passed
        worst = max(worst, report.pointwise, report.integrated, report.forcing)
    elapsed = time.perf_counter() - start
    ok = all_ok and elapsed <= 60.0
    assert _report(
        "criterion 3: energy inequalities", ok,
        f"largest relative violation {worst:.2e}, {elapsed:.1f}s")


def test_criterion_4_integrator_order():
    spec = wave_spec(const_dist(1.0, horizon=1.0), horizon=1.0)
    moll = Mollifier.friedrichs()
    net = ScaleNet.log_power()
    sys = assemble(spec, 0.5, moll, net, (1.0,))
    trace = integrate(sys, dt=1e-4)
    exact = const_coeff_solution(sys.bracket, 1.0, sys.V0, trace.times)
    oracle_err = float(np.max(np.abs(trace.V - exact)))

    errs = []
    for dt in (2e-2, 1e-2):
        tr = integrate(sys, dt=dt)
        ex = const_coeff_solution(sys.bracket, 1.0, sys.V0, tr.times)
        errs.append(float(np.max(np.abs(tr.V - ex))))
    ratio = errs[0] / errs[1]
    ok = oracle_err <= 1e-6 and 12.8 <= ratio <= 19.2
    assert _report(
        "criterion 4: integrator order", ok,
        f"oracle error {oracle_err:.2e}, halving ratio {ratio:.2f}")


def test_criterion_5_solver_convergence_both_widths(narrow_study, wide_study):
    (narrow, t1), (wide, t2) = narrow_study, wide_study
    e1 = _values(narrow, "l2_error")
    e2 = _values(wide, "l2_error")
    dec1 = all(b < a for a, b in zip(e1, e1[1:]))
    dec2 = all(b < a for a, b in zip(e2, e2[1:]))
    gap = abs(e1[-1] - e2[-1])
    agree = gap <= 0.5 * max(e1[-1], e2[-1])
    elapsed = t1 + t2
    ok = dec1 and dec2 and agree and elapsed <= 600.0
    assert _report(
        "criterion 5: solver convergence for both mollifier widths", ok,
        f"decreasing {dec1}/{dec2}, smallest-eps errors "
        f"{e1[-1]:.3e} vs {e2[-1]:.3e} differ by "
        f"{100.0 * gap / max(e1[-1], e2[-1]):.0f}% of the larger, "
        f"{elapsed:.1f}s")


def test_criterion_6_concentration_ratio_contrast(narrow_study, delta_study):
    (narrow, _), (delta, _) = narrow_study, delta_study
    bounded = _values(narrow, "oleinik_ratio")
    growing = _values(delta, "oleinik_ratio")
    variation = max(bounded) / min(bounded)
    growth = growing[-1] / growing[0]
    ok = variation <= 1.5 and growth >= 2.0
    assert _report(
        "criterion 6: concentration ratio contrast", ok,
        f"jump-model variation {variation:.2f}x, "
        f"point-model growth {growth:.2f}x")


def test_criterion_7_smooth_coefficient_consistency():
    quad = consistency_study(ExperimentConfig(
        model="smooth-consistency", consistency_a="quadratic"))
    gaps = _values(quad, "mollifier_gap")
    within_10 = max(gaps) <= 0.10

    const = consistency_study(ExperimentConfig(
        model="smooth-consistency", consistency_a="constant"))
    errs = _values(const, "l2_error")
    eps_free = max(errs) <= 1.02 * min(errs)
    ok = within_10 and eps_free
    assert _report(
        "criterion 7: smooth-coefficient consistency", ok,
        f"largest mollifier deviation {100.0 * max(gaps):.2f}%, "
        f"constant-coefficient error spread "
        f"{100.0 * (max(errs) / min(errs) - 1.0):.2f}%")


def test_criterion_8_moderateness_fits():
    moll = Mollifier.friedrichs()
    net = ScaleNet.log_power()
    smooth_data = wave_spec(heaviside_dist(),
                            g0_hat=gevrey_profile(1.0, 1.0, 2.0))
    samples = moderateness_sweep(smooth_data, [0.1, 0.05], XI_TRIO, 2.0,
                                 moll, net)
    fit1 = fourier_decay_fit([(s.epsilon, s.xi, s.sup_V) for s in samples],
                             2.0)

    def data_rule(eps):
        return delta_data_profile(eps, 2.0), (lambda xi: 0.0)

    rough = moderateness_sweep(wave_spec(heaviside_dist()),
                               [0.1, 0.05, 0.025], XI_TRIO, 2.0, moll, net,
                               data_for_eps=data_rule)
    fit2 = fourier_decay_fit([(s.epsilon, s.xi, s.sup_V) for s in rough], 2.0)
    ok = (fit1.residual <= 1e-6
          and math.isfinite(fit2.N) and fit2.N >= 0.0
          and fit2.residual <= 1e-6)
    assert _report(
        "criterion 8: moderateness fits", ok,
        f"regular-data residual {fit1.residual:.2e}, "
        f"concentrated-data N {fit2.N:.3f}, residual {fit2.residual:.2e}")


def test_criterion_9_deterministic_artifacts(tmp_path, delta_study):
    first, _ = delta_study
    second = delta_ratio_study(ExperimentConfig(model="delta"))
    path1 = emit(first, "csv", out_dir=str(tmp_path), stem="run1")[0]
    path2 = emit(second, "csv", out_dir=str(tmp_path), stem="run2")[0]
    with open(path1, "rb") as h1, open(path2, "rb") as h2:
        same_csv = h1.read() == h2.read()

    B = np.array([[0.0, 0.0], [0.0, 2.0j]])
    r1 = lot_bound_check((3.0, -3.0), 0.5, B, trials=20000,
                         rng=np.random.default_rng(42))
    r2 = lot_bound_check((3.0, -3.0), 0.5, B, trials=20000,
                         rng=np.random.default_rng(42))
    ok = same_csv and r1 == r2
    assert _report(
        "criterion 9: deterministic artifacts", ok,
        f"csv bytes identical {same_csv}, seeded sampling repeatable {r1 == r2}")
