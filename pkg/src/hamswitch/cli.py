"""Command line interface: ``hamswitch {simulate, validate, zvonkin, report}``.

Exit codes: 0 success, 1 a statistical or assumption check failed, 2 usage or
configuration error.  Tables are written as CSV and summaries as JSON, with
every float printed to 17 significant digits so repeated runs are byte-stable.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import testfns
from .config import ConfigError, RunConfig, bundled, bundled_names, dump_config, load_config
from .model import validate_assumptions
from .montecarlo import ensemble_values, estimate, resolve_workers
from .sde import SimulationError, integrate_batch, simulate_hybrid
from .validation import SUITES, SuiteSettings, run_suite
from .zvonkin import DEFAULT_LAMBDAS, GridSpec, ZvonkinError, lambda_scan

__all__ = ["build_parser", "dispatch", "format_float", "main"]


def format_float(v) -> str:
    v = float(v)
    if math.isnan(v):
        return "NaN"
    if math.isinf(v):
        return "Infinity" if v > 0 else "-Infinity"
    return format(v, ".17g")


def dumps_json(obj, indent: int = 0) -> str:
    """JSON with fixed 17-digit floats and sorted keys."""
    pad, inner = "  " * indent, "  " * (indent + 1)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{inner}{json.dumps(str(k))}: {dumps_json(v, indent + 1)}"
                 for k, v in sorted(obj.items(), key=lambda kv: str(kv[0]))]
        return "{\n" + ",\n".join(items) + "\n" + pad + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(not isinstance(v, (dict, list, tuple)) for v in obj):
            return "[" + ", ".join(dumps_json(v) for v in obj) + "]"
        return "[\n" + ",\n".join(inner + dumps_json(v, indent + 1) for v in obj) + "\n" + pad + "]"
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if obj is None:
        return "null"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return format_float(obj)
    if isinstance(obj, np.ndarray):
        return dumps_json(obj.tolist(), indent)
    return json.dumps(str(obj))


def _csv(rows, header) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([format_float(v) if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue()


def _write(out: Path | None, name: str, text: str) -> None:
    if out is None:
        return
    out.mkdir(parents=True, exist_ok=True)
    (out / name).write_text(text)


def _load(args) -> RunConfig:
    if args.config is None:
        raise ConfigError(["--config is required"])
    if args.config.startswith("bundled:"):
        return bundled(args.config.split(":", 1)[1])
    return load_config(args.config)


def _apply_overrides(cfg: RunConfig, args) -> RunConfig:
    kw = {}
    if getattr(args, "paths", None) is not None:
        kw["paths"] = args.paths
    if getattr(args, "seed", None) is not None:
        kw["seed"] = args.seed
    if getattr(args, "threads", None) is not None:
        kw["threads"] = args.threads
    return cfg.replace_simulation(**kw) if kw else cfg


# ---------------------------------------------------------------- simulate
def cmd_simulate(args) -> int:
    cfg = _apply_overrides(_load(args), args)
    sim, model = cfg.simulation, cfg.model
    fns = testfns.builtin(model.n_regimes)
    d = model.d
    mode = sim.mode
    weighted = mode == "markovian"

    def task(sd, idx):
        res = integrate_batch(model, cfg.initial, cfg.k0, sim.T, sim.h, sd, idx, mode=mode,
                              include_b2=sim.include_b2)
        fin = res.final
        cols = [fin.x, fin.y, fin.n_jumps[:, None].astype(float)]
        fv = np.column_stack([f.value(fin.x, fin.y, fin.regime) for f in fns])
        cols.append(fv)
        if weighted:
            M = res.switch_weight[:, None]
            cols += [M, fv * M]
        return np.concatenate(cols, axis=1)

    names = [f"X{i}" for i in range(d)] + [f"Y{i}" for i in range(d)] + ["n_jumps"]
    names += [f"f_{f.name}" for f in fns]
    if weighted:
        names += ["M"] + [f"f_{f.name}_times_M" for f in fns]
    workers = resolve_workers(sim.threads)
    vals = ensemble_values(task, sim.paths, sim.seed, workers)
    reports = [estimate(vals[:, j], sim.seed) for j in range(vals.shape[1])]
    rows = [(n, r.mean, r.stderr, r.ci[0], r.ci[1], r.min, r.max, r.n) for n, r in zip(names, reports)]
    table = _csv(rows, ["quantity", "mean", "stderr", "ci_low", "ci_high", "min", "max", "n"])
    summary = {"config": cfg.source, "T": sim.T, "h": sim.h, "paths": sim.paths, "seed": sim.seed,
               "mode": mode, "include_b2": sim.include_b2, "H": model.H,
               "estimates": {n: {k: v for k, v in r.to_dict().items() if k != "wall_time"}
                             for n, r in zip(names, reports)}}
    out = Path(args.out) if args.out else None
    _write(out, "estimates.csv", table)
    _write(out, "summary.json", dumps_json(summary) + "\n")
    _write(out, "config.toml", dump_config(cfg))
    n_trace = args.trace if args.trace is not None else cfg.output.trace_paths
    if n_trace and out is not None:
        for i in range(n_trace):
            path = simulate_hybrid(model, cfg.initial, cfg.k0, sim.T, sim.h, seed=sim.seed, index=i,
                                   mode=mode, include_b2=sim.include_b2)
            trows = [(rec["t"], *rec["X"], *rec["Y"], rec["regime"]) for rec in path.trace_records()]
            _write(out, f"trace_{i:04d}.csv",
                   _csv(trows, ["t"] + names[:2 * d] + ["regime"]))
    sys.stdout.write(table)
    return 0


# ---------------------------------------------------------------- validate
def cmd_validate(args) -> int:
    if args.suite != "all" and args.suite not in SUITES:
        raise ConfigError([f"unknown suite {args.suite!r}; choose from all, {', '.join(SUITES)}"])
    st = SuiteSettings()
    if args.seed is not None:
        st = SuiteSettings(seed=args.seed, scale=st.scale, h=st.h)
    if args.scale is not None:
        st = SuiteSettings(seed=st.seed, scale=args.scale, h=st.h)
    model = phi0 = k0 = None
    if args.config is not None:
        cfg = _load(args)
        model, phi0, k0 = cfg.model, cfg.initial, cfg.k0
    reports = run_suite(args.suite, st, resolve_workers(args.threads), model, phi0, k0)
    rows = []
    for rep in reports:
        for c in rep.checks:
            rows.append((rep.name, c.criterion if c.criterion is not None else "", c.name,
                         "pass" if c.passed else "FAIL", _num(c.estimate), _num(c.stderr),
                         _num(c.threshold), _num(c.margin), c.detail))
            print(f"[{'pass' if c.passed else 'FAIL'}] {rep.name}: {c.name}  ({c.detail})")
    total = sum(r.wall_time for r in reports)
    ok = all(r.passed for r in reports)
    print(f"{'PASSED' if ok else 'FAILED'}: {sum(len(r.checks) for r in reports)} checks "
          f"in {len(reports)} tests, {total:.1f} s")
    out = Path(args.out) if args.out else None
    _write(out, "checks.csv", _csv(rows, ["test", "criterion", "check", "status", "estimate",
                                          "stderr", "threshold", "margin", "detail"]))
    _write(out, "validation.json", dumps_json({"passed": ok, "suite": args.suite,
                                               "reports": [r.to_dict() for r in reports]}) + "\n")
    return 0 if ok else 1


def _num(v):
    return "" if v is None else float(v)


# ---------------------------------------------------------------- zvonkin
def cmd_zvonkin(args) -> int:
    cfg = _load(args) if args.config else bundled("reference")
    lams = args.lambdas if args.lambdas else DEFAULT_LAMBDAS
    grid = GridSpec(ny=args.ny) if args.ny else GridSpec()
    rows, lam_star = lambda_scan(cfg.model, args.regime, lams, grid)
    table = _csv([(r["lambda"], r["residual"], r["gradient_bound"], r["sup_abs_f"], r["b2_sup"])
                  for r in rows], ["lambda", "residual", "gradient_bound", "sup_abs_f", "b2_sup"])
    sys.stdout.write(table)
    print(f"lambda* = {lam_star}")
    out = Path(args.out) if args.out else None
    _write(out, "lambda_scan.csv", table)
    _write(out, "zvonkin.json", dumps_json({"regime": args.regime, "lambda_star": lam_star,
                                            "rows": rows}) + "\n")
    return 0 if lam_star is not None else 1


# ---------------------------------------------------------------- report
def cmd_report(args) -> int:
    cfg = _load(args)
    rep = validate_assumptions(cfg.model, sample_budget=args.samples or 1000)
    for name, (ok, detail) in rep.entries.items():
        print(f"[{'ok' if ok else 'VIOLATED'}] {name}: {detail}")
    m = cfg.model
    info = {"d": m.d, "n_regimes": m.n_regimes, "decay_rate": m.decay_rate, "H": m.H,
            "K": m.rates.declared_lipschitz, "q_hat": m.rates.q_hat,
            "assumptions": {k: {"ok": v[0], "detail": v[1]} for k, v in rep.entries.items()},
            "passed": rep.passed}
    print(f"H = {m.H:.6g}, K = {m.rates.declared_lipschitz:.6g}")
    _write(Path(args.out) if args.out else None, "assumptions.json", dumps_json(info) + "\n")
    return 0 if rep.passed else 1


# ---------------------------------------------------------------- dispatch
def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hamswitch", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", metavar="{simulate,validate,zvonkin,report}")
    cfg_help = f"TOML file or bundled:NAME ({', '.join(bundled_names())})"

    s = sub.add_parser("simulate", help="Monte Carlo estimates for one configuration")
    s.add_argument("--config", required=True, help=cfg_help)
    s.add_argument("--paths", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("--threads", type=int)
    s.add_argument("--out")
    s.add_argument("--trace", type=int, help="write the first N paths as CSV traces")
    s.set_defaults(func=cmd_simulate)

    v = sub.add_parser("validate", help="run the statistical test battery")
    v.add_argument("--suite", default="all", help=f"all or one of: {', '.join(SUITES)}")
    v.add_argument("--config", help=cfg_help + "; defaults to the bundled reference model")
    v.add_argument("--seed", type=int)
    v.add_argument("--threads", type=int)
    v.add_argument("--scale", type=float, help="multiply every path count")
    v.add_argument("--out")
    v.set_defaults(func=cmd_validate)

    z = sub.add_parser("zvonkin", help="lambda scan of the elliptic problem")
    z.add_argument("--config", help=cfg_help)
    z.add_argument("--regime", type=int, default=0)
    z.add_argument("--lambdas", type=float, nargs="+")
    z.add_argument("--ny", type=int)
    z.add_argument("--out")
    z.set_defaults(func=cmd_zvonkin)

    r = sub.add_parser("report", help="check the model assumptions and print constants")
    r.add_argument("--config", required=True, help=cfg_help)
    r.add_argument("--samples", type=int)
    r.add_argument("--out")
    r.set_defaults(func=cmd_report)
    return p


def dispatch(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 2
    if args.command is None:
        parser.print_usage(sys.stderr)
        return 2
    try:
        return args.func(args)
    except ConfigError as exc:
        print(str(exc), file=sys.stderr)
        return 2
    except (SimulationError, ZvonkinError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main(argv=None) -> None:
    sys.exit(dispatch(argv))
