"""Command line front end over the library.

Seven subcommands: `regularise` samples a mollified coefficient onto CSV,
`qsym-check` runs the symmetriser property suite, `levi` measures the
lower-order constants and brute-forces the commutator bound, `energy`
integrates the frequency system and verifies the energy estimates, `solve`
runs the finite-difference solver, `exact` samples the piecewise reference
solution, and `study` drives the convergence/ratio/consistency experiments.

Exit codes: 0 on success or PASS, 1 when an asserted property or trend
fails, 2 on usage or configuration errors.
"""

import argparse
import csv
import math
import os
import sys

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from .coeffs import (
    Jump,
    Mollifier,
    Point,
    ScaleNet,
    TimeDistribution,
    distribution_from_config,
    eval_mollifier,
    mollifier_from_config,
    regularise,
    reject_unknown_keys,
    scale_from_config,
)
from .exact import eval_exact, sine_data
from .experiments import (
    ExperimentConfig,
    consistency_study,
    convergence_study,
    delta_ratio_study,
    emit,
)
from .fdsolve import Grid1D, solve, write_field_csv
from .freq import (
    EquationSpec,
    assemble,
    bracket,
    gronwall_verify,
    integrate,
    levi_check,
    lot_bound_check,
)
from .qsym import (
    build_Q,
    determinant_identity_gap,
    nearly_diagonal_constant,
    recursion_gap,
)

PROG = "weakwave"

SCHEMA = """\
config file (TOML) tables and keys:
  [coefficient]  the distribution to regularise / the principal part:
                 smooth = {const = v} or {poly = [c0, c1, ...]},
                 jump = {at, left, right}, point = {at, order, weight},
                 nonnegative = true/false
  [lower]        same keys as [coefficient]; the zeroth-order coefficient
                 used by `levi`
  [mollifier]    kind = friedrichs | moments | gevrey, radius, order
  [scale]        kind = logpower | powerlaw | identity, c, r, p
  [study]        model, mollifier, eps, nx, x_lo, x_hi, t0, t1, s,
                 coefficient, jobs
Overrides: --set table.key=value (repeatable) edits the loaded config."""

CONFIG_TABLES = ("coefficient", "lower", "mollifier", "scale", "study")
STUDY_KEYS = ("model", "mollifier", "eps", "nx", "x_lo", "x_hi", "t0", "t1",
              "s", "coefficient", "jobs")


def _parse_override_value(text: str):
    try:
        return tomllib.loads(f"v = {text}")["v"]
    except tomllib.TOMLDecodeError:
        return text


def load_config(path, overrides):
    """Load a TOML config and apply dotted key=value overrides."""
    if path is None:
        cfg = {}
    else:
        with open(path, "rb") as handle:
            cfg = tomllib.load(handle)
    for item in overrides or ():
        key, sep, value = item.partition("=")
        if not sep or not key:
            raise ValueError(f"override {item!r} is not of the form key=value")
        node = cfg
        parts = key.split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ValueError(f"override {item!r} descends into a non-table")
        node[parts[-1]] = _parse_override_value(value)
    reject_unknown_keys(cfg, CONFIG_TABLES, "config")
    return cfg


def resolve_out_dir(args) -> str:
    if getattr(args, "out", None):
        return args.out
    return os.environ.get("WEAKWAVE_OUT", ".")


def _write_csv(path, header, rows):
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(header)
        for row in rows:
            writer.writerow(["%.17g" % v for v in row])
    return path


def _mollifier(cfg) -> Mollifier:
    return mollifier_from_config(cfg.get("mollifier", {}))


def _lower_net(cfg) -> ScaleNet:
    if "scale" in cfg:
        return scale_from_config(cfg["scale"])
    return ScaleNet.log_power(1.0, 1.0)


def _mollifier_peak(moll: Mollifier) -> float:
    grid = np.linspace(-moll.quad_radius, moll.quad_radius, 2001)
    return float(np.max(eval_mollifier(moll, grid)))


def _principal(cfg, horizon: float) -> TimeDistribution:
    if "coefficient" in cfg:
        return distribution_from_config(cfg["coefficient"], horizon=horizon)
    return TimeDistribution((Jump(at=1.0, left=0.0, right=1.0),),
                            horizon=horizon, nonnegative=True)


def _lower(cfg, horizon: float) -> TimeDistribution:
    if "lower" in cfg:
        return distribution_from_config(cfg["lower"], horizon=horizon)
    return TimeDistribution((Point(at=1.0),), horizon=horizon,
                            nonnegative=True)


def _zero(horizon: float) -> TimeDistribution:
    return TimeDistribution((), horizon=horizon, nonnegative=False)


# ---------------------------------------------------------------------------
# Subcommand handlers


def cmd_regularise(args) -> int:
    cfg = load_config(args.config, args.overrides)
    if args.config is None or "coefficient" not in cfg:
        print("regularise needs --config with a [coefficient] table\n" + SCHEMA,
              file=sys.stderr)
        return 2
    dist = distribution_from_config(cfg["coefficient"], horizon=args.horizon)
    moll = _mollifier(cfg)
    net = scale_from_config(cfg["scale"]) if "scale" in cfg else ScaleNet.identity()
    coeff = regularise(dist, moll, args.eps, net)
    t1 = args.t1 if args.t1 is not None else args.horizon
    t = np.linspace(args.t0, t1, args.n)
    values = coeff.eval(t)
    path = _write_csv(os.path.join(resolve_out_dir(args), "regularised.csv"),
                      ["t", "a"], zip(t, values))
    print(f"wrote {path}")
    if args.verbose:
        print(f"sup |a_eps| = {np.max(np.abs(values)):.6g} over [{args.t0:g}, {t1:g}]")
    return 0


def cmd_qsym_check(args) -> int:
    rng = np.random.default_rng(args.seed)
    lams = rng.uniform(-10.0, 10.0, size=(args.trials, args.m))
    det_gap = max(determinant_identity_gap(lam) for lam in lams)
    rec_gap = max(recursion_gap(d, lam) for lam in lams for d in args.delta)
    fact_gap = 0.0
    factor = math.factorial(args.m - 1)
    for lam in lams:
        qs = build_Q(args.delta[0], lam)
        target = factor * (qs.W.T @ qs.W)
        scale = max(1.0, float(np.max(np.abs(target))))
        fact_gap = max(fact_gap, float(np.max(np.abs(qs.layers[0] - target))) / scale)

    checks = [
        ("determinant identity", det_gap, 1e-8, det_gap <= 1e-8),
        ("factorisation through W", fact_gap, 1e-10, fact_gap <= 1e-10),
        ("recursion identity", rec_gap, 1e-10, rec_gap <= 1e-10),
    ]
    if args.m == 2:
        pairs = [(abs(l), -abs(l)) for l in lams[:, 0]]
        c0 = nearly_diagonal_constant(pairs, args.delta, M=1.0)
        checks.append(("near-diagonal constant", c0, 1.0 / 8.0, c0 >= 1.0 / 8.0))

    all_ok = True
    for name, value, bound, ok in checks:
        all_ok &= ok
        print(f"{name:<26} {value:12.4e}  bound {bound:.3e}  "
              f"{'PASS' if ok else 'FAIL'}")
    print(f"qsym-check: {'PASS' if all_ok else 'FAIL'} "
          f"(m = {args.m}, {args.trials} draws, deltas {args.delta})")
    return 0 if all_ok else 1


def cmd_levi(args) -> int:
    cfg = load_config(args.config, args.overrides)
    horizon = args.horizon
    spec = EquationSpec(
        n=1,
        a=(_principal(cfg, horizon),),
        c=(_zero(horizon),),
        d=_lower(cfg, horizon),
        e=_zero(horizon),
        g0_hat=lambda xi: 1.0,
        g1_hat=lambda xi: 0.0,
        T=horizon,
    )
    moll = _mollifier(cfg)
    nets = {"a": ScaleNet.identity(), "lower": _lower_net(cfg)}
    c2 = args.c2 if args.c2 is not None else _mollifier_peak(moll) ** 2
    t_grid = np.linspace(0.0, horizon, args.t_samples)
    xi_grid = np.array([[x] for x in args.xi])
    report = levi_check(spec, args.eps, moll, nets, c1=args.c1, c2=c2,
                        s_grid=(t_grid, xi_grid), gamma=args.gamma)

    all_ok = report.passed
    rng = np.random.default_rng(args.seed)
    xi0 = args.xi[0]
    br = bracket(xi0)
    for sample in report.samples:
        a_end = regularise(spec.a[0], moll, sample.epsilon,
                           ScaleNet.identity()).eval(horizon)
        lam = math.sqrt(max(a_end, 0.0)) * xi0 / br
        B = np.array([[0.0, 0.0], [0.0, 1j * math.sqrt(sample.C2)]])
        ratio = lot_bound_check((lam, -lam), br**-0.5, B, trials=args.trials,
                                rng=rng)
        budget = sample.Ceps
        ok = ratio <= budget + 1e-12 * max(1.0, budget)
        all_ok &= ok
        print(f"eps={sample.epsilon:<8g} C1={sample.C1:10.4e} "
              f"C2={sample.C2:10.4e} Ceps={sample.Ceps:10.4e} "
              f"lot={ratio:10.4e}  {'PASS' if ok else 'FAIL'}")
    if report.n_failures:
        print(f"{report.n_failures} grid points divide by a vanishing "
              f"principal part; first: {report.failures[0]}")
    print(f"levi: {'PASS' if all_ok else 'FAIL'} "
          f"(c1 = {report.c1:g}, c2 = {report.c2:g}, gamma = {report.gamma:g})")
    return 0 if all_ok else 1


def cmd_energy(args) -> int:
    cfg = load_config(args.config, args.overrides)
    horizon = args.horizon
    spec = EquationSpec(
        n=1,
        a=(_principal(cfg, horizon),),
        c=(_zero(horizon),),
        d=_zero(horizon),
        e=_zero(horizon),
        g0_hat=lambda xi: 1.0,
        g1_hat=lambda xi: 0.0,
        T=horizon,
    )
    moll = _mollifier(cfg)
    nets = ScaleNet.identity()
    all_ok = True
    for xi0 in args.xi:
        sys_ = assemble(spec, args.eps, moll, nets, (xi0,))
        trace = integrate(sys_, dt=args.dt)
        measured = gronwall_verify(trace, 0.0, 0.0, 0.0)
        report = gronwall_verify(trace, measured.K_fd_integral, 0.0, 0.0,
                                 tol=args.tol)
        all_ok &= report.passed
        print(f"xi={xi0:<10g} pointwise={report.pointwise:10.3e} "
              f"integrated={report.integrated:10.3e} "
              f"forcing={report.forcing:10.3e}  "
              f"{'PASS' if report.passed else 'FAIL'}")
        if args.verbose:
            print(f"  E(0) = {trace.E[0]:.6g}, E(T) = {trace.E[-1]:.6g}, "
                  f"int K dt = {measured.K_fd_integral:.6g}")
        if args.trace_csv:
            path = _write_csv(
                os.path.join(resolve_out_dir(args), f"energy_xi{xi0:g}.csv"),
                ["t", "E"], zip(trace.times, trace.E))
            print(f"wrote {path}")
    print(f"energy: {'PASS' if all_ok else 'FAIL'} (eps = {args.eps:g})")
    return 0 if all_ok else 1


def cmd_solve(args) -> int:
    cfg = load_config(args.config, args.overrides)
    grid = Grid1D(args.x_lo, args.x_hi, args.nx)
    moll = _mollifier(cfg)
    if "coefficient" in cfg:
        model = distribution_from_config(cfg["coefficient"],
                                         horizon=max(args.t1, 2.0))
    else:
        model = args.model
    result = solve(grid, model, moll, args.eps, t0=args.t0, t1=args.t1,
                   snapshot_times=tuple(args.snapshot))
    out_dir = resolve_out_dir(args)
    path = os.path.join(out_dir, "field.csv")
    os.makedirs(out_dir, exist_ok=True)
    write_field_csv(result.final, path)
    max_courant = max((math.sqrt(max(s.a_val, 0.0)) * s.dt / grid.dx
                       for s in result.steps), default=0.0)
    print(f"wrote {path} ({len(result.steps)} steps, "
          f"max Courant {max_courant:.6f})")
    for snap in result.snapshots:
        spath = os.path.join(out_dir, f"field_t{snap.t:g}.csv")
        write_field_csv(snap, spath)
        print(f"wrote {spath}")
    if args.verbose and args.model == "heaviside" and "coefficient" not in cfg:
        x = grid.nodes()
        err = float(np.sqrt(grid.dx * np.sum(
            (result.final.u - eval_exact(sine_data(), result.final.t, x)) ** 2)))
        print(f"L2 error against the piecewise solution: {err:.6e}")
    return 0


def cmd_exact(args) -> int:
    grid = Grid1D(args.x_lo, args.x_hi, args.nx)
    x = grid.nodes()
    u = eval_exact(sine_data(), args.t, x)
    path = _write_csv(os.path.join(resolve_out_dir(args), "exact.csv"),
                      ["x", "u"], zip(x, u))
    print(f"wrote {path}")
    return 0


def _study_config(args) -> ExperimentConfig:
    cfg = load_config(args.config, args.overrides)
    table = dict(cfg.get("study", {}))
    reject_unknown_keys(table, STUDY_KEYS, "study")
    if args.model is not None:
        table["model"] = args.model
    if args.mollifier is not None:
        table["mollifier"] = args.mollifier
    if args.eps:
        table["eps"] = args.eps
    for name in ("nx", "t0", "t1"):
        value = getattr(args, name)
        if value is not None:
            table[name] = value
    if args.coefficient is not None:
        table["coefficient"] = args.coefficient
    if args.jobs is not None:
        table["jobs"] = args.jobs
    if "jobs" not in table:
        table["jobs"] = os.cpu_count() or 1
    if "model" not in table:
        raise ValueError("study needs --model or a [study] table with a model")
    kwargs = dict(model=table["model"])
    if "mollifier" in table:
        kwargs["mollifier"] = table["mollifier"]
    if "eps" in table:
        kwargs["eps_list"] = tuple(table["eps"])
    for src, dst in (("nx", "nx"), ("x_lo", "x_lo"), ("x_hi", "x_hi"),
                     ("t0", "t0"), ("t1", "t1"), ("s", "s"),
                     ("coefficient", "consistency_a"), ("jobs", "jobs")):
        if src in table:
            kwargs[dst] = table[src]
    return ExperimentConfig(out_dir=resolve_out_dir(args), **kwargs)


def cmd_study(args) -> int:
    cfg = _study_config(args)
    runner = {
        "heaviside": convergence_study,
        "delta": delta_ratio_study,
        "smooth-consistency": consistency_study,
    }[cfg.model]
    result = runner(cfg)
    formats = ("csv", "svg-plot") if args.format == "both" else (args.format,)
    for fmt in formats:
        for path in emit(result, fmt, out_dir=cfg.out_dir, stem=args.stem):
            print(f"wrote {path}")
    for eps, metric, value in result.rows:
        if args.verbose:
            print(f"  eps={eps:g} {metric}={value:.9e}")
    all_ok = True
    for description, ok in result.trends:
        all_ok &= ok
        print(f"trend: {description}: {'PASS' if ok else 'FAIL'}")
    print(f"study: {'PASS' if all_ok else 'FAIL'} ({cfg.model}, {cfg.mollifier})")
    return 0 if all_ok else 1


# ---------------------------------------------------------------------------
# Parser assembly


def _add_common(parser, config=True):
    parser.add_argument("--out", help="output directory (overrides the "
                        "WEAKWAVE_OUT environment variable; default '.')")
    parser.add_argument("-v", "--verbose", action="store_true",
                        help="print extra detail")
    if config:
        parser.add_argument("--config", help="TOML config file; see the "
                            "schema below")
        parser.add_argument("--set", dest="overrides", action="append",
                            metavar="KEY=VALUE", default=[],
                            help="override a config entry, e.g. "
                            "--set mollifier.kind=gevrey")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog=PROG,
        description="Regularised wave equations with distributional "
                    "time coefficients: solvers, estimates, and studies.")
    sub = parser.add_subparsers(dest="command", metavar="subcommand")

    p = sub.add_parser(
        "regularise", help="sample a mollified coefficient onto CSV",
        epilog=SCHEMA, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--eps", type=float, required=True,
                   help="regularisation parameter in (0, 1]")
    p.add_argument("--t0", type=float, default=0.0, help="first sample time")
    p.add_argument("--t1", type=float, default=None,
                   help="last sample time (default: the horizon)")
    p.add_argument("--n", type=int, default=200, help="number of samples")
    p.add_argument("--horizon", type=float, default=2.0,
                   help="distribution horizon")
    _add_common(p)
    p.set_defaults(handler=cmd_regularise)

    p = sub.add_parser("qsym-check",
                       help="run the quasi-symmetriser property suite")
    p.add_argument("--m", type=int, default=3, help="system size")
    p.add_argument("--trials", type=int, default=1000,
                   help="random eigenvalue draws with |lambda| <= 10")
    p.add_argument("--delta", type=float, action="append", default=None,
                   help="delta values (repeatable; default 1, 0.3, 0.01)")
    p.add_argument("--seed", type=int, default=42, help="RNG seed")
    _add_common(p, config=False)
    p.set_defaults(handler=cmd_qsym_check)

    p = sub.add_parser(
        "levi", help="measure Levi constants and the commutator bound",
        epilog=SCHEMA, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--eps", type=float, action="append", default=None,
                   help="regularisation parameters (repeatable; default "
                   "0.1 0.05 0.025 0.0125)")
    p.add_argument("--xi", type=float, action="append", default=None,
                   help="frequencies (repeatable; default 2 pi)")
    p.add_argument("--c1", type=float, default=1.0,
                   help="threshold for the first Levi ratio")
    p.add_argument("--c2", type=float, default=None,
                   help="threshold for the second Levi ratio "
                   "(default: squared mollifier peak)")
    p.add_argument("--gamma", type=float, default=8.0,
                   help="weight of C2 inside C_eps")
    p.add_argument("--trials", type=int, default=100000,
                   help="random states for the commutator ratio")
    p.add_argument("--t-samples", type=int, default=401,
                   help="time grid resolution")
    p.add_argument("--horizon", type=float, default=2.0, help="time horizon")
    p.add_argument("--seed", type=int, default=42, help="RNG seed")
    _add_common(p)
    p.set_defaults(handler=cmd_levi)

    p = sub.add_parser(
        "energy", help="integrate the frequency system and verify the "
        "energy estimates",
        epilog=SCHEMA, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--eps", type=float, default=0.1,
                   help="regularisation parameter")
    p.add_argument("--xi", type=float, action="append", default=None,
                   help="frequencies (repeatable; default 2pi 4pi 8pi)")
    p.add_argument("--dt", type=float, default=None,
                   help="time step (default: stability-based)")
    p.add_argument("--tol", type=float, default=1e-6,
                   help="relative violation tolerance")
    p.add_argument("--horizon", type=float, default=2.0, help="time horizon")
    p.add_argument("--trace-csv", action="store_true",
                   help="write one (t, E) CSV per frequency")
    _add_common(p)
    p.set_defaults(handler=cmd_energy)

    p = sub.add_parser(
        "solve", help="run the finite-difference solver",
        epilog=SCHEMA, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--model", choices=("heaviside", "delta"),
                   default="heaviside", help="toy coefficient (ignored when "
                   "the config provides [coefficient])")
    p.add_argument("--eps", type=float, default=0.1,
                   help="regularisation parameter")
    p.add_argument("--nx", type=int, default=2858, help="grid cells")
    p.add_argument("--x-lo", type=float, default=0.0, help="left edge")
    p.add_argument("--x-hi", type=float, default=2.0, help="right edge")
    p.add_argument("--t0", type=float, default=0.8, help="start time")
    p.add_argument("--t1", type=float, default=2.0, help="end time")
    p.add_argument("--snapshot", type=float, action="append", default=[],
                   help="also write the field at this time (repeatable)")
    _add_common(p)
    p.set_defaults(handler=cmd_solve)

    p = sub.add_parser("exact",
                       help="sample the piecewise reference solution")
    p.add_argument("--t", type=float, default=2.0, help="evaluation time")
    p.add_argument("--nx", type=int, default=2858, help="grid cells")
    p.add_argument("--x-lo", type=float, default=0.0, help="left edge")
    p.add_argument("--x-hi", type=float, default=2.0, help="right edge")
    _add_common(p, config=False)
    p.set_defaults(handler=cmd_exact)

    p = sub.add_parser(
        "study", help="run a convergence/ratio/consistency study",
        epilog=SCHEMA, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--model",
                   choices=("heaviside", "delta", "smooth-consistency"),
                   default=None, help="which study to run")
    p.add_argument("--mollifier", default=None,
                   help="study mollifier id (friedrichs, friedrichs-wide, "
                   "moments, gevrey)")
    p.add_argument("--eps", type=float, action="append", default=None,
                   help="eps values, strictly decreasing (repeatable)")
    p.add_argument("--nx", type=int, default=None, help="grid cells")
    p.add_argument("--t0", type=float, default=None, help="window start")
    p.add_argument("--t1", type=float, default=None, help="window end")
    p.add_argument("--coefficient", choices=("constant", "quadratic"),
                   default=None, help="consistency-study coefficient")
    p.add_argument("--format", choices=("csv", "svg-plot", "both"),
                   default="csv", help="artifact format")
    p.add_argument("--stem", default="study", help="output file stem")
    p.add_argument("--jobs", type=int, default=None,
                   help="parallel solves (default: one per logical core)")
    _add_common(p)
    p.set_defaults(handler=cmd_study)

    return parser


def run(argv=None) -> int:
    """Dispatch a command line; returns the process exit code."""
    if argv is None:
        argv = sys.argv[1:]
    parser = build_parser()
    if not argv:
        parser.print_usage(sys.stderr)
        return 2
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if getattr(args, "command", None) is None:
        parser.print_usage(sys.stderr)
        return 2
    if getattr(args, "delta", "x") is None:
        args.delta = [1.0, 0.3, 0.01]
    if getattr(args, "eps", "x") is None and args.command == "levi":
        args.eps = [0.1, 0.05, 0.025, 0.0125]
    if getattr(args, "xi", "x") is None:
        args.xi = ([2 * math.pi] if args.command == "levi"
                   else [2 * math.pi, 4 * math.pi, 8 * math.pi])
    try:
        return args.handler(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
