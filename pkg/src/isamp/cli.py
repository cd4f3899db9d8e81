"""Command-line interface.

Verbs: kl, bound, samplesize, run, diagnose, gibbs, paths, rare,
enumerate.  Reports are CSV (17 significant digits) with a rendered
PNG figure next to them unless --no-plot is given; console summaries
use 6 significant digits.  Exit codes: 0 success, 1 usage error,
2 numeric/domain failure, 3 I/O failure.
"""

import argparse
import math
import os
import sys
import time

import numpy as np

from . import __version__
from .errors import IsampError, UsageError
from . import bounds, estimators, experiments, gibbs, model, paths, rare_event

GLOBAL_KEYS = ("seed", "out", "replicates", "threads", "qn_threshold", "grid",
               "experiment")


class Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"error: {message}\n")
        raise SystemExit(1)


def f6(x):
    if isinstance(x, str) or x is None:
        return str(x)
    return format(float(x), ".6g")


def _load_config(path):
    cfg = {}
    with open(path) as fh:
        for raw in fh:
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"bad config line (expected key = value): {raw.strip()!r}")
            key, val = line.split("=", 1)
            cfg[key.strip().replace("-", "_")] = val.strip()
    return cfg


def _pick(args, cfg, key, cast, default=None):
    """CLI flag > config file > default."""
    v = getattr(args, key, None)
    if v is not None:
        return v
    if cfg and key in cfg:
        return cast(cfg[key])
    return default


def _parse_grid(text):
    return [int(float(v)) for v in str(text).split(",") if v.strip()]


def _add_pair_flags(p):
    p.add_argument("--pair", required=True, choices=sorted(model.BUILTIN_PAIRS))
    p.add_argument("--N", type=int)
    p.add_argument("--p0", type=float)
    p.add_argument("--p1", type=float)
    p.add_argument("--size", type=int)


def _pair_from_args(args):
    return model.make_pair(args.pair, N=args.N, p0=args.p0, p1=args.p1,
                           size=args.size)


def _add_common(p):
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.add_argument("--config")
    p.add_argument("--threads", type=int)
    p.add_argument("--replicates", type=int)
    p.add_argument("--qn-threshold", dest="qn_threshold", type=float)
    p.add_argument("--no-plot", action="store_true")


def _emit(pairs):
    for k, v in pairs:
        print(f"{k}={f6(v)}")


def _write_with_plot(report, out, no_plot):
    experiments.write_report(report, out)
    wrote = [out]
    if not no_plot:
        from .plotting import render_report
        png = os.path.splitext(out)[0] + ".png"
        render_report(report, png)
        wrote.append(png)
    return wrote


# ---------------------------------------------------------------------------
# verbs
# ---------------------------------------------------------------------------

def _cmd_kl(args, cfg):
    pair = _pair_from_args(args)
    method = args.method
    if method == "mc":
        seed = _pick(args, cfg, "seed", int, 42)
        value, se = bounds.kl_divergence_mc(pair, n=args.mc_n, seed=seed)
        _emit([("pair", pair.name), ("method", "mc"), ("L", value), ("se", se)])
    else:
        value = bounds.kl_divergence(pair, method=method)
        _emit([("pair", pair.name), ("method", method), ("L", value)])
    return 0


def _cmd_bound(args, cfg):
    pair = _pair_from_args(args)
    L = bounds.kl_divergence(pair)
    tail = bounds.TailModel.for_pair(pair)
    if args.n is not None:
        log_n = math.log(args.n)
    elif args.log_n is not None:
        log_n = args.log_n
    else:
        raise UsageError("give a sample size with --n or --log-n")
    query = bounds.BoundQuery.for_log_n(
        L, log_n, side=args.side,
        f_norm=pair.f_l2_norm(args.f), delta=args.delta)
    out = [("pair", pair.name), ("L", L), ("t", query.t), ("side", args.side)]
    if args.thm == 1:
        out.append(("bound", bounds.thm1_bound(query, tail)))
    else:
        b2 = bounds.thm2_bound(query, tail)
        out += [("epsilon", b2.epsilon), ("threshold", b2.threshold),
                ("probability", b2.probability)]
    _emit(out)
    return 0


def _cmd_samplesize(args, cfg):
    pair = _pair_from_args(args)
    L = bounds.kl_divergence(pair)
    tail = bounds.TailModel.for_pair(pair)
    res = bounds.required_sample_size(L, pair.f_l2_norm(args.f), tail, args.target)
    _emit([("pair", pair.name), ("L", L), ("target", args.target), ("t", res.t),
           ("log_n", res.log_n), ("n", res.n if res.n is not None else "overflow")])
    return 0


def _cmd_run(args, cfg):
    experiment = _pick(args, cfg, "experiment", str)
    if not experiment:
        raise UsageError("choose an experiment with --experiment or a config file")
    grid = _pick(args, cfg, "grid", _parse_grid)
    if isinstance(grid, str):
        grid = _parse_grid(grid)
    overrides = {}
    if cfg:
        overrides.update({k: v for k, v in cfg.items() if k not in GLOBAL_KEYS})
    for item in args.set or []:
        if "=" not in item:
            raise UsageError(f"--set expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        overrides[k.strip()] = v.strip()
    config = experiments.ExperimentConfig(
        experiment=experiment,
        seed=_pick(args, cfg, "seed", int, 42),
        n_grid=grid,
        replicates=_pick(args, cfg, "replicates", int),
        threads=_pick(args, cfg, "threads", int, 1) or 1,
        overrides=overrides,
    )
    out = _pick(args, cfg, "out", str, f"{experiment}.csv")
    started = time.perf_counter()
    report = experiments.run_experiment(config)
    elapsed = time.perf_counter() - started
    wrote = _write_with_plot(report, out, args.no_plot)
    print(f"wrote {' and '.join(wrote)} ({len(report.rows)} rows, "
          f"seed {config.seed}, {elapsed:.1f}s)", file=sys.stderr)
    return 0


def _cmd_diagnose(args, cfg):
    seed = _pick(args, cfg, "seed", int, 42)
    grid = _pick(args, cfg, "grid", _parse_grid) or [10**k for k in range(1, 5)]
    if isinstance(grid, str):
        grid = _parse_grid(grid)
    replicates = _pick(args, cfg, "replicates", int, estimators.DEFAULT_QN_REPLICATES)
    threshold = _pick(args, cfg, "qn_threshold", float, 0.01)
    report = experiments.diagnose(
        args.pair, dict(N=args.N, p0=args.p0, p1=args.p1, size=args.size),
        grid, replicates=replicates, seed=seed, qn_threshold=threshold, f=args.f)
    for note in report.footer:
        if note.startswith("warning"):
            print(note, file=sys.stderr)
    out = _pick(args, cfg, "out", str)
    if out:
        wrote = _write_with_plot(report, out, args.no_plot)
        print(f"wrote {' and '.join(wrote)}", file=sys.stderr)
    else:
        for row in report.rows:
            n, q_mean, q_se, verdict = row[0], row[6], row[7], row[9]
            print(f"n={n} q_n={f6(q_mean)} (se {f6(q_se)}) verdict={verdict}")
    return 0


def _cmd_gibbs(args, cfg):
    seed = _pick(args, cfg, "seed", int, 42)
    replicates = _pick(args, cfg, "replicates", int, 1)
    if args.model == "spins":
        m = gibbs.IndependentSpins(args.N)
        thermo = gibbs.spins_thermo()
    else:
        m = gibbs.IsingChain(args.N, args.J, args.h)
        thermo = gibbs.ising_thermo(args.J, args.h)
    plan = gibbs.gibbs_L_sigma(m, args.beta0, args.beta)
    q_beta = gibbs.thermo_q(thermo, args.beta0, args.beta)
    log_n = math.log(args.n)
    b = log_n / thermo.L_N(args.N)
    verdict = gibbs.classify_regime(b, q_beta).verdict
    if replicates > 1:
        ratios, qs = gibbs.zhat_replicates(m, args.beta0, args.beta, args.n,
                                           replicates, seed=seed)
        ratio, qnn = float(np.median(ratios)), float(np.mean(qs))
    else:
        res = gibbs.zhat_estimate(m, args.beta0, args.beta, args.n, seed=seed)
        ratio, qnn = res.ratio, res.Q_n
    row = (args.N, args.beta0, args.beta, plan.L, plan.sigma, log_n, b, q_beta,
           verdict, ratio, qnn)
    header = ["N", "beta0", "beta", "L", "sigma", "log_n", "b", "q_beta",
              "verdict", "ratio", "qnN"]
    _emit(zip(header, row))
    out = _pick(args, cfg, "out", str)
    if out:
        report = experiments.CsvReport(header, [row],
                                       footer=[f"seed: {seed}", f"version: {__version__}"],
                                       meta={"experiment": "gibbs"})
        experiments.write_report(report, out)
        print(f"wrote {out}", file=sys.stderr)
    return 0


def _cmd_paths_monotone(args, cfg):
    seed = _pick(args, cfg, "seed", int, 42)
    exact, asym = paths.monotone_L(args.n)
    rows = []
    from ._rng import stream
    T = paths.sample_monotone_T(args.n, args.samples, stream(seed, 0))
    log_rho = paths.monotone_log_rho(args.n, T)
    _emit([("n", args.n), ("samples", args.samples), ("L_exact", exact),
           ("L_asymptotic", asym), ("mean_T", float(T.mean())),
           ("target_mean_T", (2 - 2 / (args.n + 1)) * args.n)])
    out = _pick(args, cfg, "out", str)
    if out:
        for i in range(T.size):
            rows.append((i, int(T[i]), float(log_rho[i]), 1, ""))
        report = experiments.CsvReport(
            ["draw", "T_or_length", "log_weight", "reached", "through_center"],
            rows, footer=[f"seed: {seed}", f"model: monotone n={args.n}"],
            meta={"experiment": "paths"})
        experiments.write_report(report, out)
        print(f"wrote {out}", file=sys.stderr)
    return 0


def _cmd_paths_saw(args, cfg):
    seed = _pick(args, cfg, "seed", int, 42)
    est = paths.saw_estimate(args.grid_size, args.samples, seed=seed,
                             prune_traps=args.prune_traps)
    _emit([("grid", args.grid_size), ("samples", args.samples),
           ("count_estimate", est.count_estimate),
           ("log10_count", est.log_count_estimate / math.log(10.0)),
           ("mean_length", est.mean_length),
           ("center_fraction", est.center_fraction),
           ("q_n", est.q_n), ("reached", est.reached)])
    out = _pick(args, cfg, "out", str)
    if out:
        from ._rng import stream
        walker = paths._saw_batch_pruned if args.prune_traps else paths._saw_batch
        log_w, lengths, reached, through = walker(
            args.grid_size, args.samples, stream(seed, 0))
        rows = [(i, int(lengths[i]), float(log_w[i]), int(reached[i]), int(through[i]))
                for i in range(args.samples)]
        report = experiments.CsvReport(
            ["draw", "T_or_length", "log_weight", "reached", "through_center"],
            rows, footer=[f"seed: {seed}", f"model: saw grid={args.grid_size}"],
            meta={"experiment": "paths"})
        experiments.write_report(report, out)
        print(f"wrote {out}", file=sys.stderr)
    return 0


def _cmd_rare(args, cfg):
    seed = _pick(args, cfg, "seed", int, 42)
    spec = rare_event.RareBinomialSpec(args.N, args.p, args.theta)
    tail = rare_event.binom_tail(args.N, spec.k)
    run = rare_event.rare_is_run(spec, args.n, seed=seed)
    theta_star = rare_event.optimal_tilt(args.N, args.p) if args.optimize_theta else ""
    row = (args.N, args.p, args.theta, tail.log_value / math.log(10.0),
           rare_event.rare_LA(args.N, args.p, args.theta, "exact_direct"),
           rare_event.rare_LA(args.N, args.p, args.theta, "asymptotic"),
           theta_star, run.estimate, run.ratio_to_exact)
    header = ["N", "p", "theta", "b_exact_log10", "LA_exact", "LA_asymptotic",
              "theta_star", "estimate", "ratio"]
    _emit(zip(header, row))
    out = _pick(args, cfg, "out", str)
    if out:
        report = experiments.CsvReport(header, [row],
                                       footer=[f"seed: {seed}", f"n: {args.n}"],
                                       meta={"experiment": "rare"})
        experiments.write_report(report, out)
        print(f"wrote {out}", file=sys.stderr)
    return 0


def _cmd_enumerate(args, cfg):
    pair = _pair_from_args(args)
    enum = model.enumerate_pair(pair)
    out = _pick(args, cfg, "out", str)
    rows = [(p, mu, nu, lr) for p, mu, nu, lr in enum.rows()]
    report = experiments.CsvReport(
        ["point", "mu_mass", "nu_mass", "log_rho"], rows,
        footer=[f"pair: {pair.name}", f"sum_mu: {enum.mu_total!r}",
                f"sum_nu: {enum.nu_total!r}", f"sum_rho_mu: {enum.rho_mu_total!r}"],
        meta={"experiment": "enumerate"})
    if out:
        experiments.write_report(report, out)
        print(f"wrote {out} ({len(rows)} rows)", file=sys.stderr)
    else:
        sys.stdout.write(report.to_csv())
    return 0


# ---------------------------------------------------------------------------
# parser assembly
# ---------------------------------------------------------------------------

def build_parser():
    parser = Parser(prog="isamp",
                    description="Importance-sampling sample-size theory and diagnostics")
    parser.add_argument("--version", action="version", version=f"isamp {__version__}")
    sub = parser.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("kl", help="Kullback-Leibler divergence of a pair")
    _add_pair_flags(p)
    p.add_argument("--method", default="auto",
                   choices=["auto", "closed_form", "enumerate", "mc"])
    p.add_argument("--mc-n", dest="mc_n", type=int, default=10**5)
    _add_common(p)
    p.set_defaults(fn=_cmd_kl)

    p = sub.add_parser("bound", help="error bounds at a given sample size")
    _add_pair_flags(p)
    p.add_argument("--thm", type=int, default=1, choices=[1, 2])
    p.add_argument("--f", default="one", choices=sorted(model.INTEGRANDS))
    p.add_argument("--n", type=float)
    p.add_argument("--log-n", dest="log_n", type=float)
    p.add_argument("--side", default="upper", choices=["upper", "lower"])
    p.add_argument("--delta", type=float, default=0.5)
    _add_common(p)
    p.set_defaults(fn=_cmd_bound)

    p = sub.add_parser("samplesize", help="smallest n meeting a target error")
    _add_pair_flags(p)
    p.add_argument("--f", default="one", choices=sorted(model.INTEGRANDS))
    p.add_argument("--target", type=float, required=True)
    _add_common(p)
    p.set_defaults(fn=_cmd_samplesize)

    p = sub.add_parser("run", help="run a named figure-reproduction experiment")
    p.add_argument("--experiment", choices=experiments.EXPERIMENTS)
    p.add_argument("--grid", help="comma-separated n grid override")
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="experiment-specific override (repeatable)")
    _add_common(p)
    p.set_defaults(fn=_cmd_run)

    p = sub.add_parser("diagnose", help="q_n / variance diagnostics for a pair")
    _add_pair_flags(p)
    p.add_argument("--f", default="one", choices=sorted(model.INTEGRANDS))
    p.add_argument("--grid", help="comma-separated n grid")
    _add_common(p)
    p.set_defaults(fn=_cmd_diagnose)

    p = sub.add_parser("gibbs", help="free-energy estimation for spin models")
    p.add_argument("--model", default="spins", choices=["spins", "ising"])
    p.add_argument("--N", type=int, required=True)
    p.add_argument("--J", type=float, default=1.0)
    p.add_argument("--h", type=float, default=0.0)
    p.add_argument("--beta0", type=float, default=0.0)
    p.add_argument("--beta", type=float, default=1.0)
    p.add_argument("--n", type=int, required=True)
    _add_common(p)
    p.set_defaults(fn=_cmd_gibbs)

    p = sub.add_parser("paths", help="sequential importance sampling for paths")
    psub = p.add_subparsers(dest="path_model", required=True)
    pm = psub.add_parser("monotone", help="monotone paths in the n x n box")
    pm.add_argument("--n", type=int, required=True)
    pm.add_argument("--samples", type=int, default=10**4)
    _add_common(pm)
    pm.set_defaults(fn=_cmd_paths_monotone)
    ps = psub.add_parser("saw", help="self-avoiding walks across a grid")
    ps.add_argument("--grid", dest="grid_size", type=int, required=True)
    ps.add_argument("--samples", type=int, default=10**4)
    ps.add_argument("--prune-traps", dest="prune_traps", action="store_true",
                    help="refuse moves that disconnect the walker from the target")
    _add_common(ps)
    ps.set_defaults(fn=_cmd_paths_saw)

    p = sub.add_parser("rare", help="binomial rare-event estimation")
    p.add_argument("--N", type=int, required=True)
    p.add_argument("--p", type=float, required=True)
    p.add_argument("--theta", type=float, required=True)
    p.add_argument("--n", type=int, default=10**4)
    p.add_argument("--optimize-theta", action="store_true")
    _add_common(p)
    p.set_defaults(fn=_cmd_rare)

    p = sub.add_parser("enumerate", help="dump a finite pair's support as CSV")
    _add_pair_flags(p)
    _add_common(p)
    p.set_defaults(fn=_cmd_enumerate)

    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        cfg = _load_config(args.config) if getattr(args, "config", None) else {}
        return args.fn(args, cfg)
    except SystemExit as exc:  # argparse usage errors, --help, --version
        code = exc.code
        return code if isinstance(code, int) else 1
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except IsampError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, FloatingPointError, ZeroDivisionError, OverflowError) as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
