"""
Command-line experiment runner.

    oscdecay sweep --phase cubic1d --lambda 1e2:1e6:25 --out runs/x3
    oscdecay geom-check --phase random-cubic-n3 --trials 10000
    oscdecay rank-scan --n 18 --cubics 20 --points 100
    oscdecay bound-check --preset saddle --budget 4e9
    oscdecay nondegen --phase cubic-saddle

A run is described by one flat JSON config (``--config``, ``--preset`` or
flags; flags win).  Every run writes ``manifest.json`` echoing the resolved
config, so ``--config <out>/manifest.json`` reproduces it.

Exit status: 0 all assertions pass, 1 an assertion failed, 2 invalid config,
3 numeric budget exceeded.
"""
from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import experiments as ex
from . import reporting as rp
from .quadrature import BudgetExceeded, sweep

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_BUDGET = 0, 1, 2, 3
SUBCOMMANDS = ("sweep", "geom-check", "nondegen", "rank-scan", "bound-check")


def _lambda_flag(text):
    try:
        lo, hi, pts = text.split(":")
        return {"min": float(lo), "max": float(hi), "points": int(pts)}
    except ValueError:
        raise argparse.ArgumentTypeError("expected MIN:MAX:POINTS") from None


def _budget_flag(text):
    return None if text.lower() in ("none", "null", "inf") else float(text)


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file (or an emitted manifest.json)")
    common.add_argument("--preset", help=f"named preset: {', '.join(sorted(ex.PRESETS))}")
    common.add_argument("--out", help="output directory")
    common.add_argument("--seed", type=int)
    common.add_argument("--plot", action="store_true", default=None, help="also write SVG figures")
    common.add_argument("--phase", help="catalog name, random-cubic-n<N>[-s<S>] or model-n<N>-k<K>")
    common.add_argument("--lambda", dest="lambda_", type=_lambda_flag, metavar="MIN:MAX:POINTS")
    common.add_argument("--method", choices=("direct", "factored", "radial"))
    common.add_argument("--budget", type=_budget_flag, default=argparse.SUPPRESS, help="quadrature node budget ('none' = unlimited)")
    common.add_argument("--trials", type=int)
    common.add_argument("--n", type=int)
    common.add_argument("--cubics", type=int)
    common.add_argument("--points", type=int)
    common.add_argument("--N", dest="N", type=int, help="bound exponent N")
    p = argparse.ArgumentParser(prog="oscdecay", description=__doc__.split("\n\n")[0].strip())
    sub = p.add_subparsers(dest="subcommand", required=True)
    for name in SUBCOMMANDS:
        sub.add_parser(name, parents=[common])
    return p


_FLAG_KEYS = {"out": "out", "seed": "seed", "plot": "plot", "phase": "phase",
              "lambda_": "lambda", "method": "method", "trials": "trials", "n": "n",
              "cubics": "cubics", "points": "points", "N": "N"}


def config_from_args(args):
    """Merge config file, preset and flags (in that order) into a raw config."""
    cfg = {}
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            cfg = json.load(fh)
        if isinstance(cfg, dict) and cfg.get("tool") == "oscdecay" and "config" in cfg:
            cfg = cfg["config"]
        if not isinstance(cfg, dict):
            raise ex.ConfigError("config must be a JSON object")
    if args.preset:
        cfg = {**cfg, **ex.preset(args.preset)}
    if cfg.get("subcommand", args.subcommand) != args.subcommand:
        raise ex.ConfigError(f"config is for {cfg['subcommand']!r}, not {args.subcommand!r}")
    cfg["subcommand"] = args.subcommand
    for attr, key in _FLAG_KEYS.items():
        val = getattr(args, attr)
        if val is not None:
            cfg[key] = val
    if hasattr(args, "budget"):
        cfg["budget"] = args.budget
    return cfg


# -- subcommand bodies: each returns (passed, emitted file names) ---------------------------

def _run_sweep(cfg, out):
    spec, lam, xi = ex.spec_of(cfg)
    s = sweep(spec, lam, xi, budget=cfg["budget"], validate=cfg["validate"],
              xi_refine=cfg["xi_refine"], window=cfg["fit_window"])
    ok, msg = ex.check_expect(cfg["expect"], s.fitted_exponent)
    header = ["lambda"] + [f"xi{i + 1}" for i in range(len(xi))] + ["re", "im", "abs"]
    rp.write_csv(os.path.join(out, "sweep.csv"), header, s.rows())
    summary = {**s.summary(), "expectation": msg, "passed": ok}
    rp.write_json(os.path.join(out, "summary.json"), summary)
    files = ["sweep.csv", "summary.json"]
    if cfg["plot"]:
        from .plotting import plot_sweep
        plot_sweep(s, os.path.join(out, "sweep.svg"), title=str(cfg["phase"] or "radial"))
        files.append("sweep.svg")
    print(f"fitted exponent {s.fitted_exponent:.5f} +- {s.stderr:.2g} ({msg})")
    return ok, files


def _run_bound(cfg, out):
    spec, lam, xi = ex.spec_of(cfg)
    if spec.method == "radial":
        raise ex.ConfigError("bound-check needs a direct or factored method")
    bc = ex.bound_check(spec, lam, xi, N=cfg["N"], k=cfg["k"], M=cfg["M"],
                        extend=cfg["extend"], tol=cfg["stability_tol"],
                        budget=cfg["budget"], theta=cfg["theta"], R_max=cfg["R_max"])
    rp.write_csv(os.path.join(out, "bound.csv"), ["lambda", "rhs", "sup_abs_I", "ratio"],
                 bc.rows())
    rp.write_json(os.path.join(out, "summary.json"), bc.summary())
    files = ["bound.csv", "summary.json"]
    if cfg["plot"]:
        from .plotting import plot_bound
        plot_bound(bc.lambda_grid, bc.rhs, bc.sup, os.path.join(out, "bound.svg"),
                   title=str(cfg["phase"]))
        files.append("bound.svg")
    print(f"max ratio {bc.max_ratio_base:.4g} -> {bc.max_ratio_extended:.4g} "
          f"(change {bc.change:.3%}, tol {bc.tol:.0%})")
    return bc.passed, files


def _run_geom(cfg, out):
    results = ex.geom_check(cfg)
    rows = [r.to_json() for r in results]
    rp.write_json(os.path.join(out, "properties.json"), rows)
    rp.write_csv(os.path.join(out, "properties.csv"),
                 ["property", "trials", "violations", "worst_slack", "asserted"],
                 ([r.property, r.trials, r.violations, r.worst_slack, r.asserted] for r in results))
    for r in results:
        flag = "ok" if r.passed else "FAIL"
        print(f"{r.property:28s} trials {r.trials:6d} violations {r.violations:6d} {flag}")
    return all(r.passed for r in results), ["properties.json", "properties.csv"]


def _run_nondegen(cfg, out):
    rep = ex.nondegen(cfg)
    ok = rep.margin > cfg["min_margin"]
    rp.write_json(os.path.join(out, "nondegen.json"), {**rep.to_json(), "passed": ok})
    print(f"margin {rep.margin:.6g}, k_inf {rep.k_inf}, satisfied {rep.satisfied}")
    return ok, ["nondegen.json"]


def _run_rank(cfg, out):
    rep = ex.rank(cfg)
    rp.write_json(os.path.join(out, "rank_report.json"), rep.to_json())
    rp.write_csv(os.path.join(out, "rank_histogram.csv"), ["rank", "count"],
                 sorted(rep.histogram.items()))
    files = ["rank_report.json", "rank_histogram.csv"]
    if cfg["plot"]:
        from .plotting import plot_histogram
        plot_histogram(rep.histogram, rep.bound, os.path.join(out, "rank_histogram.svg"),
                       title=f"n = {rep.n}")
        files.append("rank_histogram.svg")
    print(f"n {rep.n}: min rank {rep.min_rank}, bound {rep.bound}, failures {len(rep.failures)}")
    return rep.passed, files


RUNNERS = {"sweep": _run_sweep, "bound-check": _run_bound, "geom-check": _run_geom,
           "nondegen": _run_nondegen, "rank-scan": _run_rank}


def run(config):
    """Validate ``config``, run it and write artifacts; returns the exit status."""
    try:
        cfg = ex.resolve(config)
    except ex.ConfigError as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = cfg["out"]
    os.makedirs(out, exist_ok=True)
    files = []
    try:
        with np.errstate(all="ignore"):
            ok, files = RUNNERS[cfg["subcommand"]](cfg, out)
        status = EXIT_OK if ok else EXIT_FAIL
    except ex.ConfigError as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        status = EXIT_CONFIG
    except BudgetExceeded as exc:
        print(f"budget exceeded: {exc}", file=sys.stderr)
        status = EXIT_BUDGET
    rp.write_json(os.path.join(out, "manifest.json"),
                  rp.manifest(cfg, files + ["manifest.json"], status))
    return status


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = config_from_args(args)
    except (ex.ConfigError, OSError, json.JSONDecodeError) as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
