"""Command-line entry point.

Exit codes: 0 success, 1 numerical failure (non-convergence or a failed
check), 2 configuration error.
"""
import argparse
import datetime
import math
import os
import sys

import numpy as np

from . import io
from .constants import (critical_exponent, hardy_constant, lambda_alpha,
                        normalization_constant)
from .errors import (ConvergenceError, DegenerateConfigError, DiagnosticError, DomainError,
                     ParameterError, ValidationError)
from .geometry import (Example1Params, FarField, build_grid, full_dirichlet,
                       label_ball_config, label_example1, neumann_only, read_label_file)


class _Ctx:
    def __init__(self, command, run, out):
        self.command = command
        self.run = run
        self.out = out
        self.params = io.frac_params(run)
        os.makedirs(out, exist_ok=True)

    def path(self, suffix):
        return os.path.join(self.out, f"{self.command}{suffix}")

    def emit(self, result, table=None):
        payload = io.envelope(self.command, self.run, result)
        io.write_json(self.path(".json"), payload)
        if table is not None:
            io.write_csv(self.path(".csv"), *table)
        stamp = datetime.datetime.now(datetime.timezone.utc).isoformat()
        with open(self.path(".log"), "a") as fh:
            fh.write(f"{stamp} {self.command} config_hash={payload['config_hash']}\n")
        return payload


# ------------------------------------------------------------ geometry from config

def make_config(run, params, n=None):
    g = run["geometry"]
    n = int(n or g["n"])
    far = FarField(g["far_field"])
    kind = g["kind"]
    if kind == "example1":
        grid = build_grid(params.d, g["L"], n, FarField.DIRICHLET)
        p = Example1Params(g["eps"], g["eta"], g["A_len"], g["m"], g["beta"])
        return label_example1(grid, p)
    grid = build_grid(params.d, g["L"], n, far)
    if kind == "ball":
        if g["diagnostic"] and far == FarField.NEUMANN_TRUNCATED and g["r1"] >= g["r2"]:
            return neumann_only(grid, g["r_omega"])
        if g["r1"] <= g["r_omega"]:
            return full_dirichlet(grid, g["r_omega"])
        return label_ball_config(grid, g["r_omega"], (g["r1"], g["r2"]),
                                 diagnostic=g["diagnostic"])
    if kind == "custom_labels":
        if not g["labels_file"]:
            raise ValidationError("custom_labels needs geometry.labels_file")
        cfg = read_label_file(grid, g["labels_file"])
        return cfg.with_labels(cfg.labels, diagnostic=g["diagnostic"])
    raise ValidationError(f"unknown geometry kind {kind!r}")


def _levels(run):
    lv = [int(v) for v in io.float_list(run["experiment"]["levels"])]
    return lv or [int(run["geometry"]["n"])]


# ------------------------------------------------------------ subcommands

def cmd_constants(args):
    d, s = args.d, args.s
    lam = hardy_constant(d, s)
    a = normalization_constant(d, s)
    crit = critical_exponent(d, s)
    amax = (d - 2 * s) / 2
    alphas = np.linspace(0.0, amax, args.rows, endpoint=False)
    table = [(float(al), lambda_alpha(d, s, float(al))) for al in alphas]
    print(f"a_ds       {a:.12g}")
    print(f"Lambda     {lam:.12g}")
    print(f"2*_s       {crit:.12g}")
    print(f"alpha_max  {amax:.12g}")
    print("alpha              Lambda_0(alpha)")
    for al, val in table:
        print(f"{al:<18.12g} {val:.12g}")
    if args.out:
        run = {"params": {"d": d, "s": s}, "rows": args.rows}
        ctx_out = args.out
        os.makedirs(ctx_out, exist_ok=True)
        payload = io.envelope("constants", run, {
            "a_ds": a, "lambda_star": lam, "two_star_s": crit, "alpha_max": amax,
            "table": [{"alpha": al, "lambda0": v} for al, v in table]})
        io.write_json(os.path.join(ctx_out, "constants.json"), payload)
    return 0


def cmd_hardy(ctx):
    from .assembly import assemble
    from .spectral import smallest_hardy_eigen, spectral_gap

    params, run = ctx.params, ctx.run
    lam_star = hardy_constant(params.d, params.s)
    rows, last = [], None
    degenerate = False
    for n in _levels(run):
        cfg = make_config(run, params, n)
        forms = assemble(cfg, params)
        try:
            res = smallest_hardy_eigen(forms, run["solver"]["tol"], run["solver"]["max_iter"])
        except DegenerateConfigError as exc:
            res = exc.result
            degenerate = True
        rows.append((n, cfg.h, res.lambda_h, abs(res.lambda_h - lam_star) / lam_star,
                     res.residual, res.iterations))
        last = (cfg, forms, res)
    cfg, forms, res = last
    gap = None
    if not degenerate and forms.size <= 4096:
        l1, l2 = spectral_gap(forms)
        gap = l2 - l1
    result = {
        "lambda": res.lambda_h, "lambda_star": lam_star, "residual": res.residual,
        "iterations": res.iterations, "degenerate": degenerate, "gap": gap,
        "far_field": cfg.far_field.value,
        "approximate_far_field": cfg.far_field == FarField.NEUMANN_TRUNCATED,
        "eigvec": forms.full(res.eigvec),
        "refinement": [dict(zip(("n", "h", "lambda", "rel_gap", "residual", "iterations"), r))
                       for r in rows],
    }
    ctx.emit(result, (["n", "h", "lambda", "rel_gap", "residual", "iterations"], rows))
    print(f"lambda_h = {res.lambda_h:.12g}  (Lambda = {lam_star:.12g})"
          + ("  [degenerate]" if degenerate else ""))
    return 0


def cmd_shrink(ctx):
    from .geometry import shrinking_family
    from .spectral import shrinking_dirichlet_experiment

    params, run = ctx.params, ctx.run
    base = make_config(run, params)
    grid = build_grid(base.d, base.L, base.n, base.far_field)
    steps = shrinking_dirichlet_experiment(grid, base, run["experiment"]["k_max"], params,
                                           run["solver"]["tol"], run["solver"]["max_iter"])
    rows = [(st.k, st.lambda_h, st.residual, st.iterations) for st in steps]
    lam = [st.lambda_h for st in steps]
    result = {"steps": steps, "monotone": bool(np.all(np.diff(lam) <= 1e-12)),
              "ratio": lam[-1] / lam[0],
              "approximate_far_field": base.far_field == FarField.NEUMANN_TRUNCATED}
    ctx.emit(result, (["k", "lambda", "residual", "iterations"], rows))
    print(f"lambda_k/lambda_0 = {result['ratio']:.6g} (k_max={len(steps) - 1})")
    return 0


def cmd_attain(ctx, args):
    from .attainability import attainability_verdict, eps_sweep, neumann_sign_test

    params, run = ctx.params, ctx.run
    exp = run["experiment"]
    sweep_text = args.eps_sweep or exp["eps_sweep"]
    result, table = {}, None
    if sweep_text:
        if run["geometry"]["kind"] != "example1":
            raise ValidationError("--eps-sweep needs geometry kind example1")
        g = run["geometry"]
        eps_vals = io.parse_range(sweep_text)
        base = Example1Params(min(eps_vals), g["eta"], g["A_len"], g["m"], g["beta"])
        rows = eps_sweep(eps_vals, base, params, L=g["L"], n=g["n"],
                         sample_stride=exp["sample_stride"])
        result["sweep"] = rows
        table = (["eps", "min_Nsw", "budget", "verdict", "J1", "J2", "J3", "direct"],
                 [(r.eps, r.min_Nsw, r.budget, r.verdict, r.J1, r.J2, r.J3, r.direct)
                  for r in rows])
    cfg = make_config(run, params)
    rep = neumann_sign_test(cfg, params, exp["sample_stride"],
                            with_j=run["geometry"]["kind"] == "example1" and params.d == 2)
    result.update({"min_Nsw": rep.min_Nsw, "budget": rep.budget, "verdict": rep.verdict,
                   "points": [{"x": list(p.x), "value": p.value, "error": p.error,
                               "J1": p.J1, "J2": p.J2, "J3": p.J3} for p in rep.points],
                   "trend": []})
    levels = _levels(run)
    if len(levels) >= 3:
        tr = attainability_verdict(levels, lambda n: make_config(run, params, n), params,
                                   run["solver"]["tol"])
        result["trend"] = [{"h": h, "lambda": lam, "alpha_hat": a} for h, lam, a in tr.trend]
        result["trend_verdict"] = tr.verdict
    ctx.emit(result, table)
    print(f"min N_s w = {rep.min_Nsw:.6g}  budget = {rep.budget:.3g}  {rep.verdict}")
    return 0


def _window(run, params):
    from .assembly import assemble
    from .spectral import smallest_hardy_eigen

    cfg = make_config(run, params)
    forms = assemble(cfg, params)
    lam_n = smallest_hardy_eigen(forms, tol=1e-12).lambda_h
    dgrid = build_grid(cfg.d, cfg.L, cfg.n)
    r_om = run["geometry"]["r_omega"]
    if run["geometry"]["kind"] == "ball":
        dforms = assemble(full_dirichlet(dgrid, r_om), params)
    else:
        labels = np.where(cfg.labels == 0, 0, 1)
        dforms = assemble(cfg.with_labels(labels, far_field=FarField.DIRICHLET), params)
    lam_d = smallest_hardy_eigen(dforms, tol=1e-12).lambda_h
    return forms, lam_n, lam_d


def cmd_semilinear(ctx):
    from .semilinear import SemilinearSpec, subcritical_minimize

    params, run = ctx.params, ctx.run
    exp = run["experiment"]
    forms, lam_n, lam_d = _window(run, params)
    lam = float(exp["lambda"]) if str(exp["lambda"]).strip() else 0.5 * (lam_n + lam_d)
    reg = [float(v) for v in str(exp["reg_n"]).split(",")]
    runs = []
    for n in reg:
        spec = SemilinearSpec(lam, exp["p"], n)
        r = subcritical_minimize(forms, spec, tol=exp["el_tol"], window=(lam_n, lam_d))
        runs.append({"reg_n": None if math.isinf(n) else n, "value": r.value,
                     "el_residual": r.el_residual, "iterations": len(r.history) - 1,
                     "history": r.history})
    vals = [r["value"] for r in runs]
    result = {"lambda": lam, "window": [lam_n, lam_d], "p": exp["p"], "runs": runs,
              "non_increasing": bool(np.all(np.diff(vals) <= 0)),
              "minimizer": forms.full(r.minimizer)}
    rows = [(i, float(v)) for i, v in enumerate(runs[-1]["history"])]
    ctx.emit(result, (["iteration", "value"], rows))
    print(f"I = {runs[-1]['value']:.10g}  residual = {runs[-1]['el_residual']:.3g}")
    return 0


def cmd_critical(ctx):
    from .semilinear import (critical_constants, existence_condition_check,
                             lambda_bar_search, s_lambda_estimate, sobolev_constant)

    params, run = ctx.params, ctx.run
    exp = run["experiment"]
    seed = run["run"]["seed"]
    forms, lam_n, lam_d = _window(run, params)
    grid = io.float_list(exp["lambda_grid"]) or [lam_n * f for f in (0.0, 0.2, 0.4, 0.6, 0.8, 0.95)]
    sob = sobolev_constant(forms, exp["restarts"], seed)
    boxes = io.float_list(exp["box_sizes"])
    rows, per = [], []
    s_min = math.inf
    for lam in grid:
        sl_est = s_lambda_estimate(params, lam, forms.h, boxes, restarts=min(exp["restarts"], 4),
                                   seed=seed)
        c = critical_constants(forms, sl_est, lam, exp["restarts"], seed, lambda_N=lam_n,
                               sobolev=sob)
        chk = existence_condition_check(c)
        holds = bool(c.T >= c.lower_bound - 1e-10 * abs(c.S_N))
        per.append({"lambda": lam, "S_N": c.S_N, "S_lambda": c.S_lambda, "T": c.T,
                    "lower_bound": c.lower_bound, "lower_bound_holds": holds,
                    "condition_holds": chk.condition_holds, "gap": chk.gap,
                    "uncertainty": chk.uncertainty, "S_lambda_boxes": sl_est.per_box})
        rows.append((lam, c.S_N, c.S_lambda, c.T, c.lower_bound, chk.condition_holds))
        s_min = min(s_min, c.S_N)
    s_lam_at_top = per[-1]["S_lambda"]
    bar = lambda_bar_search(forms, grid, s_lam_at_top, s_min, lambda_N=lam_n, lambda_dir=lam_d)
    result = {"lambda_N": lam_n, "lambda_dir": lam_d, "seed": seed, "restarts": exp["restarts"],
              "upper_estimates": True, "rows": per, "lambda_bar": bar.lambda_bar,
              "window_nonempty": bool(any(r[3] for r in bar.rows)),
              "bound_rows": [{"lambda": r[0], "upper_bound": r[1], "threshold": r[2],
                              "below": r[3]} for r in bar.rows]}
    ctx.emit(result, (["lambda", "S_N", "S_lambda", "T", "lower_bound", "condition_holds"], rows))
    print(f"lambda_bar = {bar.lambda_bar:.6g}")
    return 0


def cmd_verify(ctx, args):
    from .assembly import assemble
    from .inequalities import fuzz_suite

    params, run = ctx.params, ctx.run
    trials = args.trials if args.trials is not None else run["experiment"]["trials"]
    seed = args.seed if args.seed is not None else run["run"]["seed"]
    forms = assemble(make_config(run, params), params)
    reports = fuzz_suite(forms, seed, trials)
    failed = [r.name for r in reports if r.failures]
    result = {"seed": seed, "trials": trials, "reports": reports, "passed": not failed}
    ctx.emit(result, (["name", "trials", "worst_margin", "failures"],
                      [(r.name, r.trials, r.worst_margin, len(r.failures)) for r in reports]))
    for r in reports:
        status = "FAIL" if r.failures else "ok"
        print(f"{r.name:<18} {status:<5} trials={r.trials} worst_margin={r.worst_margin:.3e}")
    return 1 if failed else 0


# ------------------------------------------------------------ parser

def build_parser():
    ap = argparse.ArgumentParser(prog="nlhardy", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    c = sub.add_parser("constants", help="closed-form constants and the Lambda_0 table")
    c.add_argument("--d", type=int, required=True)
    c.add_argument("--s", type=float, required=True)
    c.add_argument("--rows", type=int, default=10)
    c.add_argument("--out", default=None, help="also write constants.json here")

    for name, helptext in (("hardy", "smallest Hardy eigenvalue with refinement table"),
                           ("shrink", "shrinking-Dirichlet collapse experiment"),
                           ("attain", "sign test of N_s w and refinement verdict"),
                           ("semilinear", "subcritical minimization"),
                           ("critical", "critical constants and lambda-bar window"),
                           ("verify", "property-check harness")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("config", nargs="?", default=None, help="INI run configuration")
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--d", type=int, default=None)
        p.add_argument("--s", type=float, default=None)
        p.add_argument("--n", type=int, default=None)
        p.add_argument("--geometry", default=None, choices=("ball", "example1", "custom_labels"))
        p.add_argument("--levels", default=None, help="comma-separated grid sizes")
        if name == "attain":
            p.add_argument("--eps-sweep", default=None, help="start:stop:count")
        if name == "verify":
            p.add_argument("--trials", type=int, default=None)
        if name in ("semilinear", "critical"):
            p.add_argument("--lambda-grid", default=None)
            p.add_argument("--restarts", type=int, default=None)
        if name == "shrink":
            p.add_argument("--k-max", type=int, default=None)
    return ap


def _apply_threads():
    val = os.environ.get("NLHARDY_THREADS")
    if not val:
        return
    try:
        import numba

        numba.set_num_threads(max(1, min(int(val), numba.config.NUMBA_NUM_THREADS)))
    except (ImportError, ValueError):
        pass


def main(argv=None):
    args = build_parser().parse_args(argv)
    _apply_threads()
    try:
        if args.command == "constants":
            return cmd_constants(args)
        over = {("run", "seed"): args.seed, ("params", "d"): args.d, ("params", "s"): args.s,
                ("geometry", "n"): args.n, ("geometry", "kind"): args.geometry,
                ("experiment", "levels"): args.levels}
        if getattr(args, "lambda_grid", None) is not None:
            over[("experiment", "lambda_grid")] = args.lambda_grid
        if getattr(args, "restarts", None) is not None:
            over[("experiment", "restarts")] = args.restarts
        if getattr(args, "k_max", None) is not None:
            over[("experiment", "k_max")] = args.k_max
        if args.geometry == "example1" and args.config is None:
            over.update({("params", "d"): args.d or 2, ("geometry", "L"): 3.0,
                         ("geometry", "n"): args.n or 48,
                         ("geometry", "far_field"): "dirichlet"})
        run = io.load_run_config(args.config, over)
        ctx = _Ctx(args.command, run, args.out)
        if args.command == "hardy":
            return cmd_hardy(ctx)
        if args.command == "shrink":
            return cmd_shrink(ctx)
        if args.command == "attain":
            return cmd_attain(ctx, args)
        if args.command == "semilinear":
            return cmd_semilinear(ctx)
        if args.command == "critical":
            return cmd_critical(ctx)
        return cmd_verify(ctx, args)
    except (ParameterError, ValidationError, DomainError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ConvergenceError, DiagnosticError, DegenerateConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
