"""Command-line front end: saddlekit {gen,run,bench,certify,rates}.

Everything is reproducible from flags alone: problem generation, initial
iterates, and trial seeds all derive from explicit integer seeds, and every
artifact (problem JSON, trace CSV + metadata, benchmark summary/rates CSV,
SVG figure, certificate JSON) is byte-deterministic for a fixed invocation.

Exit codes: 0 success (including "divergent-or-unknown" certificates --
a certificate of non-certification is still an answer), 1 runtime failure
(generation failure, unreadable/invalid files), 2 usage errors (bad flags
or parameter ranges), 3 a run whose verdict is Diverged (so scripted
divergence checks can assert on it).
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import certify, numerics, problems, solvers

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_USAGE = 2
EXIT_DIVERGED = 3

KINDS = (problems.KIND_BILINEAR, problems.KIND_SCSC)


class UsageError(ValueError):
    """Flag/parameter problem: reported on stderr, exit code 2."""


def _emit(args, payload: dict, human_lines) -> None:
    if getattr(args, "json", False):
        print(json.dumps(payload, sort_keys=True))
    else:
        for line in human_lines:
            print(line)


def _generate(kind: str, n: int, m: int, kappa: float, seed: int,
              shift_mode: str = "zero") -> problems.ProblemInstance:
    gen = problems.gen_bilinear if kind == problems.KIND_BILINEAR else problems.gen_scsc
    try:
        return gen(n, m, kappa, seed, shift_mode)
    except problems.GenerationError:
        raise
    except ValueError as e:  # parameter-range violations are usage errors
        raise UsageError(str(e)) from e


def _initial_iterate(seed: int, dim: int) -> np.ndarray:
    # component-wise uniform on (0,1), from the iterate stream so the same
    # user-facing seed never reuses problem-generation draws
    return numerics.SeededRng(seed, stream=1).uniform(0.0, 1.0, dim)


# ---------------------------------------------------------------------------
# gen
# ---------------------------------------------------------------------------

def cmd_gen(args) -> int:
    if args.out is None:
        raise UsageError("gen requires --out/-o <path>")
    p = _generate(args.kind, args.n, args.m, args.kappa, args.seed, args.shift)
    problems.save_problem(p, args.out)
    digest = problems.problem_digest(p)
    payload = {
        "out": str(args.out),
        "digest": digest,
        "kind": p.kind,
        "kappa_actual": p.kappa,
    }
    lines = [f"wrote {args.out}", f"digest {digest}", f"kappa_actual {p.kappa!r}"]
    if p.kind == problems.KIND_BILINEAR:
        payload.update(sigma_min=p.payload.sigma_min, sigma_max=p.payload.sigma_max)
        lines.append(f"sigma_min {p.payload.sigma_min!r} sigma_max {p.payload.sigma_max!r}")
    else:
        payload.update(mu=p.payload.mu, L=p.payload.L)
        lines.append(f"mu {p.payload.mu!r} L {p.payload.L!r}")
    _emit(args, payload, lines)
    return EXIT_OK


# ---------------------------------------------------------------------------
# run
# ---------------------------------------------------------------------------

def _run_config(args, p: problems.ProblemInstance) -> solvers.SolverConfig:
    cfg = solvers.default_config(args.method, p)
    if args.eta != "auto":
        try:
            cfg.eta = float(args.eta)
        except ValueError:
            raise UsageError(f"--eta must be 'auto' or a number, got {args.eta!r}") from None
    if args.rho is not None:
        cfg.rho = args.rho
    if args.iters is not None:
        cfg.max_iters = args.iters
    if args.stop is not None:
        cfg.stop_dist_sq = args.stop
    if args.stride < 1:
        raise UsageError(f"--stride must be >= 1, got {args.stride}")
    try:
        cfg.validate()
    except solvers.ConfigError as e:
        raise UsageError(str(e)) from e
    return cfg


def cmd_run(args) -> int:
    if args.out is None:
        raise UsageError("run requires --out/-o <trace.csv>")
    p = problems.load_problem(args.problem)
    cfg = _run_config(args, p)
    z0 = _initial_iterate(args.seed, p.n + p.m)
    trace = solvers.run(p, cfg, z0, record_stride=args.stride, seed=args.seed)
    solvers.write_trace_csv(trace, args.out)
    final = trace.records[-1]
    payload = {
        "out": str(args.out),
        "verdict": trace.verdict,
        "iters": final.k,
        "grad_evals": final.grad_evals,
        "final_dist_sq": final.dist_sq,
        "eta": cfg.eta,
        "rho": cfg.rho if cfg.method == solvers.DGDA else None,
    }
    _emit(args, payload, [
        f"wrote {args.out}",
        f"verdict {trace.verdict}",
        f"iters {final.k} grad_evals {final.grad_evals}",
        f"final_dist_sq {final.dist_sq!r}",
    ])
    return EXIT_DIVERGED if trace.verdict == solvers.DIVERGED else EXIT_OK


# ---------------------------------------------------------------------------
# bench
# ---------------------------------------------------------------------------

def _parse_methods(spec: str) -> list[str]:
    methods = [tok.strip() for tok in spec.split(",") if tok.strip()]
    if not methods:
        raise UsageError("--methods must name at least one solver")
    for method in methods:
        if method not in solvers.METHODS:
            raise UsageError(
                f"unknown method {method!r} in --methods (valid: {','.join(solvers.METHODS)})"
            )
    return methods


def _bench_theoretical(method: str, p: problems.ProblemInstance,
                       cfg: solvers.SolverConfig):
    """Per-iteration factor each method is held to, or a tag, or None."""
    if p.kind == problems.KIND_BILINEAR:
        if method == solvers.DGDA:
            return certify.bilinear_rate_bound(
                p.payload.sigma_min, p.payload.sigma_max, cfg.rho, cfg.eta
            )
        if method == solvers.GDA:
            return "Divergent"
        return None  # eg/ogda: no factor claimed on this family
    kappa = p.kappa
    if method == solvers.DGDA:
        return certify.scsc_alpha_sq(p.payload.L, p.payload.mu)
    if method == solvers.GDA:
        return 1.0 - 1.0 / kappa**2
    return 1.0 - 1.0 / (4.0 * kappa)


def _csv_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, str):
        return value
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


def _write_csv(path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([_csv_cell(v) for v in row])


def _downsample(length: int, target: int = 800) -> np.ndarray:
    step = max(1, length // target)
    idx = np.arange(0, length, step)
    if idx[-1] != length - 1:
        idx = np.append(idx, length - 1)
    return idx


def _render_bench_plot(path, title: str, x_label: str, series: dict,
                       omitted: list[str]) -> None:
    import matplotlib
    from matplotlib.figure import Figure

    colors = {"gda": "tab:red", "eg": "tab:green", "ogda": "tab:orange", "dgda": "tab:blue"}
    fig = Figure(figsize=(7.0, 4.5))
    ax = fig.add_subplot(111)
    for method, (xs, mean_log10, std_log10) in series.items():
        idx = _downsample(len(xs))
        x, mid, half = xs[idx], mean_log10[idx], std_log10[idx]
        color = colors.get(method, "tab:gray")
        ax.plot(x, mid, label=method, color=color, linewidth=1.5)
        ax.fill_between(x, mid - half, mid + half, color=color, alpha=0.2, linewidth=0)
    ax.set_xlabel(x_label)
    ax.set_ylabel("log10 dist_sq to saddle")
    ax.set_title(title)
    ax.grid(True, linewidth=0.3, alpha=0.5)
    if series:
        ax.legend(loc="upper right")
    if omitted:
        ax.text(
            0.02, 0.02, "omitted (diverged in all trials): " + ", ".join(omitted),
            transform=ax.transAxes, fontsize=8, color="dimgray",
        )
    fig.tight_layout()
    with matplotlib.rc_context({"svg.hashsalt": "saddlekit"}):
        fig.savefig(path, format="svg", metadata={"Date": None})


def cmd_bench(args) -> int:
    methods = _parse_methods(args.methods)
    if args.trials < 1:
        raise UsageError(f"--trials must be >= 1, got {args.trials}")
    if args.iters is not None and args.iters < 1:
        raise UsageError(f"--iters must be >= 1, got {args.iters}")
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    per_method: dict[str, list[solvers.Trace]] = {m: [] for m in methods}
    configs: dict[str, solvers.SolverConfig] = {}
    first_instance = None
    for i in range(args.trials):
        seed = args.base_seed + i
        p = _generate(args.kind, args.n, args.m, args.kappa, seed)
        if first_instance is None:
            first_instance = p
        problems.save_problem(p, out_dir / f"problem_trial{i:03d}.json")
        z0 = _initial_iterate(seed, p.n + p.m)
        for method in methods:
            cfg = solvers.default_config(method, p)
            if args.iters is not None:
                cfg.max_iters = args.iters
            configs.setdefault(method, cfg)
            trace = solvers.run(p, cfg, z0, seed=seed)
            solvers.write_trace_csv(trace, out_dir / f"trace_{method}_trial{i:03d}.csv")
            per_method[method].append(trace)

    # aggregate in log10 space over the common iteration window of the
    # non-divergent trials; divergent trials are excluded from means but
    # counted in the verdict columns
    summary_rows = []
    rates_rows = []
    series = {}
    omitted = []
    use_evals = args.x_axis == "evals"
    for method in methods:
        traces = per_method[method]
        kept = [t for t in traces if t.verdict != solvers.DIVERGED]
        verdicts = [t.verdict for t in traces]
        cfg = configs[method]
        if kept:
            last_common = min(t.records[-1].k for t in kept)
            block = np.array(
                [[r.dist_sq for r in t.records[: last_common + 1]] for t in kept]
            )
            logs = np.log10(np.maximum(block, 1e-300))
            mean = logs.mean(axis=0)
            std = logs.std(axis=0)
            evals = np.array([r.grad_evals for r in kept[0].records[: last_common + 1]])
            ks = np.arange(last_common + 1)
            for j in range(last_common + 1):
                summary_rows.append(
                    (method, int(ks[j]), int(evals[j]), mean[j], std[j], len(kept))
                )
            series[method] = (evals if use_evals else ks, mean, std)
        else:
            omitted.append(method)
        factors = []
        for t in kept:
            try:
                factors.append(certify.fit_empirical_rate(t))
            except certify.InsufficientDataError:
                pass
        emp_mean = float(np.mean(factors)) if factors else None
        emp_std = float(np.std(factors)) if factors else None
        rates_rows.append(
            (
                method,
                cfg.eta,
                cfg.rho if method == solvers.DGDA else None,
                _bench_theoretical(method, first_instance, cfg),
                emp_mean,
                emp_std,
                sum(v == solvers.CONVERGED for v in verdicts),
                sum(v == solvers.MAX_ITERS for v in verdicts),
                sum(v == solvers.DIVERGED for v in verdicts),
            )
        )

    _write_csv(
        out_dir / "summary.csv",
        ["method", "k", "grad_evals", "mean_log10_dist_sq", "std_log10_dist_sq", "n_trials"],
        summary_rows,
    )
    _write_csv(
        out_dir / "rates.csv",
        ["method", "eta", "rho", "theoretical_factor", "empirical_factor_mean",
         "empirical_factor_std", "converged", "max_iters", "diverged"],
        rates_rows,
    )
    title = (
        f"{args.kind} n={args.n} m={args.m} kappa={args.kappa:g} "
        f"({args.trials} trials)"
    )
    x_label = "gradient evaluations" if use_evals else "iterations"
    _render_bench_plot(out_dir / "bench.svg", title, x_label, series, omitted)

    payload = {
        "out_dir": str(out_dir),
        "trials": args.trials,
        "methods": methods,
        "verdicts": {
            m: {
                "converged": sum(t.verdict == solvers.CONVERGED for t in per_method[m]),
                "max_iters": sum(t.verdict == solvers.MAX_ITERS for t in per_method[m]),
                "diverged": sum(t.verdict == solvers.DIVERGED for t in per_method[m]),
            }
            for m in methods
        },
    }
    lines = [f"wrote {out_dir}/summary.csv, rates.csv, bench.svg"]
    for m in methods:
        v = payload["verdicts"][m]
        lines.append(
            f"{m}: converged {v['converged']}/{args.trials}, "
            f"max_iters {v['max_iters']}, diverged {v['diverged']}"
        )
    _emit(args, payload, lines)
    return EXIT_OK


# ---------------------------------------------------------------------------
# certify
# ---------------------------------------------------------------------------

def cmd_certify(args) -> int:
    p = problems.load_problem(args.problem)
    trace = solvers.read_trace_csv(args.trace) if args.trace else None
    cert = certify.certify_instance(p, rho=args.rho, eta=args.eta, trace=trace)
    blob = json.dumps(cert.to_dict(), sort_keys=True, indent=2) + "\n"
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(blob)
        if args.json:
            print(blob, end="")
        else:
            print(f"wrote {args.out}")
            print(f"regime {cert.regime} theoretical_factor {cert.theoretical_factor!r}")
    else:
        print(blob, end="")
    return EXIT_OK


# ---------------------------------------------------------------------------
# rates
# ---------------------------------------------------------------------------

RATES_HEADER = ["kappa", "dgda_bilinear", "dgda_scsc", "eg_ogda_baseline",
                "gda_scsc_baseline", "corollary_gap"]


def cmd_rates(args) -> int:
    if args.kappa_min < 1.0:
        raise UsageError(f"--kappa-min must be >= 1, got {args.kappa_min}")
    if args.kappa_max < args.kappa_min:
        raise UsageError("--kappa-max must be >= --kappa-min")
    if args.points < 1:
        raise UsageError(f"--points must be >= 1, got {args.points}")
    grid = np.logspace(np.log10(args.kappa_min), np.log10(args.kappa_max), args.points)
    grid[0] = args.kappa_min  # exact endpoints (logspace round-trips with drift)
    grid[-1] = args.kappa_max
    rows = []
    flagged = 0
    for kappa in grid:
        kappa = float(kappa)
        comparison = 1.0 - 1.0 / (4.0 * kappa)
        gap = certify.corollary_gap(kappa)
        if kappa >= 2.0 and gap < -1e-12:
            print(
                f"error: corollary gap {gap!r} < -1e-12 at kappa={kappa!r}",
                file=sys.stderr,
            )
            return EXIT_ERROR
        if kappa < 2.0:
            flagged += 1
        rows.append(
            (
                kappa,
                comparison,
                certify.scsc_alpha_sq(kappa, 1.0),
                comparison,
                1.0 - 1.0 / kappa**2,
                gap,
            )
        )
    if flagged:
        print(
            f"note: {flagged} grid point(s) below kappa=2; the gap column can be "
            "negative there and is reported, not asserted",
            file=sys.stderr,
        )
    if args.out:
        _write_csv(args.out, RATES_HEADER, rows)
        print(f"wrote {args.out} ({len(rows)} rows)")
    else:
        w = csv.writer(sys.stdout)
        w.writerow(RATES_HEADER)
        for row in rows:
            w.writerow([_csv_cell(v) for v in row])
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser / entry point
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="saddlekit",
        description="generate saddle-point test problems, run first-order "
        "solvers, benchmark them, and certify convergence rates",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    def common(sp, seed_flag=True):
        if seed_flag:
            sp.add_argument("--seed", type=int, default=0, help="base RNG seed")
        sp.add_argument("--out", "-o", default=None, help="output path")
        sp.add_argument("--json", action="store_true", help="machine-readable stdout")

    g = sub.add_parser("gen", help="generate a problem instance JSON")
    g.add_argument("--kind", required=True, choices=KINDS)
    g.add_argument("--n", required=True, type=int)
    g.add_argument("--m", required=True, type=int)
    g.add_argument("--kappa", required=True, type=float)
    g.add_argument("--shift", choices=("zero", "random"), default="zero",
                   help="saddle location: origin or uniform(0,1) coordinates")
    common(g)
    g.set_defaults(func=cmd_gen)

    r = sub.add_parser("run", help="run one solver on a problem file")
    r.add_argument("--problem", "-p", required=True)
    r.add_argument("--method", required=True, choices=solvers.METHODS)
    r.add_argument("--eta", default="auto", help="step size, or 'auto'")
    r.add_argument("--rho", type=float, default=None, help="dgda damping")
    r.add_argument("--iters", type=int, default=None)
    r.add_argument("--stride", type=int, default=1, help="record every k-th iteration")
    r.add_argument("--stop", type=float, default=None, help="stop when dist_sq <= this")
    common(r)
    r.set_defaults(func=cmd_run)

    b = sub.add_parser("bench", help="multi-trial benchmark with summary CSV and SVG")
    b.add_argument("--kind", required=True, choices=KINDS)
    b.add_argument("--n", required=True, type=int)
    b.add_argument("--m", required=True, type=int)
    b.add_argument("--kappa", required=True, type=float)
    b.add_argument("--trials", type=int, default=20)
    b.add_argument("--iters", type=int, default=None)
    b.add_argument("--methods", default="gda,eg,ogda,dgda",
                   help="comma-separated solver list")
    b.add_argument("--base-seed", type=int, default=0,
                   help="trial i uses seed base_seed + i")
    b.add_argument("--out-dir", required=True)
    b.add_argument("--x-axis", choices=("evals", "iters"), default="evals",
                   help="plot abscissa: gradient evaluations or iterations")
    b.add_argument("--json", action="store_true", help="machine-readable stdout")
    b.set_defaults(func=cmd_bench)

    c = sub.add_parser("certify", help="emit a rate certificate for dgda")
    c.add_argument("--problem", required=True)
    c.add_argument("--trace", default=None, help="trace CSV to fit an empirical factor")
    c.add_argument("--rho", type=float, default=None)
    c.add_argument("--eta", type=float, default=None)
    common(c, seed_flag=False)
    c.set_defaults(func=cmd_certify)

    t = sub.add_parser("rates", help="tabulate theoretical factors over a kappa grid")
    t.add_argument("--kappa-min", type=float, default=2.0)
    t.add_argument("--kappa-max", type=float, default=1e4)
    t.add_argument("--points", type=int, default=200)
    common(t, seed_flag=False)
    t.set_defaults(func=cmd_rates)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except problems.GenerationError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_ERROR
    except (problems.ProblemFormatError, problems.ProblemValidationError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_ERROR
    except certify.InsufficientDataError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_ERROR
    except FileNotFoundError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_ERROR
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_ERROR
    except ValueError as e:  # malformed inputs surfaced by lower layers
        print(f"error: {e}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
