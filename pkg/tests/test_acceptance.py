"""Acceptance criteria 1-12, one test each.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the PASS/FAIL lines.
"""
import math
import time

import numpy as np
import pytest

from oscdecay.decay_bound import dyadic_slope, model_spectrum_phase
from oscdecay.experiments import bound_check, check_expect, predicted_exponent
from oscdecay.generic_cubic import rank_scan
from oscdecay.nondegeneracy import check_condition
from oscdecay.phase_model import Box, get_phase, model_phase
from oscdecay.properties import check_doubling, check_gap_persistence, run_suite


def report(tag, ok, detail, seconds, limit):
    ok = bool(ok) and seconds < limit
    print(f"\n{'PASS' if ok else 'FAIL'} criterion {tag}: {detail} "
          f"[{seconds:.1f} s, limit {limit:.0f} s]")
    return ok


def sweep_criterion(sweeps, tag, name, limit):
    cfg, _, _, _, s, dt = sweeps.get(name)
    ok, msg = check_expect(cfg["expect"], s.fitted_exponent)
    detail = (f"{name} exponent {s.fitted_exponent:.4f} +- {s.stderr:.2g}, {msg}, "
              f"{len(s.flagged)} flagged rows, {s.nodes:.3g} nodes")
    return report(tag, ok, detail, dt, limit)


def test_c01_quadratic_baseline(sweeps):
    assert sweep_criterion(sweeps, "1", "x2", 30)


def test_c02_cubic_degenerate(sweeps):
    assert sweep_criterion(sweeps, "2", "x3", 60)


def test_c03_mixed_factored(sweeps):
    assert sweep_criterion(sweeps, "3", "mixed", 120)


def test_c04_saddle_direct(sweeps):
    assert sweep_criterion(sweeps, "4", "saddle", 600)


def test_c05_non_semicontinuity(sweeps):
    a = sweep_criterion(sweeps, "5a", "radial-xi0", 600)
    b = sweep_criterion(sweeps, "5b", "radial-eps0.1", 600)
    total = sweeps.get("radial-xi0")[-1] + sweeps.get("radial-eps0.1")[-1]
    assert report("5", a and b, "xi=0 and eps=0.1 combined", total, 600)


def test_c06_geometry_suite():
    t0 = time.perf_counter()
    results = run_suite(get_phase("random-cubic-n3"), trials=10_000, seed=0)
    dt = time.perf_counter() - t0
    bad = [r.property for r in results if not r.passed]
    names = ", ".join(f"{r.property}:{r.violations}/{r.trials}" for r in results)
    assert all(r.trials >= 1000 for r in results)
    assert report("6", not bad, f"violations {names}", dt, 120)


def test_c07_doubling():
    t0 = time.perf_counter()
    results = [check_doubling(n, 1000, seed=n) for n in range(2, 7)]
    dt = time.perf_counter() - t0
    detail = ", ".join(f"n={n} worst slack {r.worst_slack:.3g}"
                       for n, r in zip(range(2, 7), results))
    assert report("7", all(r.violations == 0 for r in results), detail, dt, 10)


def test_c08_gap_persistence():
    t0 = time.perf_counter()
    results = check_gap_persistence(get_phase("random-cubic-n3"), trials=1000, seed=0)
    dt = time.perf_counter() - t0
    detail = ", ".join(f"{r.property}:{r.violations}/{r.trials}" for r in results)
    assert report("8", all(r.violations == 0 for r in results), detail, dt, 60)


def test_c09_rank_bound():
    t0 = time.perf_counter()
    reps = [rank_scan(n, cubics=50, points=200, seed=0) for n in (6, 10, 14, 18)]
    dt = time.perf_counter() - t0
    detail = ", ".join(f"n={r.n} min {r.min_rank} >= {r.bound}" for r in reps)
    ok = all(r.passed and not r.failures for r in reps)
    assert report("9", ok, detail, dt, 120)


# the 2D direct extension to 4x lam_max needs ~2e9 quadrature nodes with validation
C10_BUDGETS = {"x2": 1e8, "x3": 1e8, "mixed": 1e8, "saddle": 4e9}


def test_c10_bound_dominance(sweeps):
    total, ok, parts = 0.0, True, []
    for name, budget in C10_BUDGETS.items():
        _, spec, lam, xi, base, dt = sweeps.get(name)
        t0 = time.perf_counter()
        bc = bound_check(spec, lam, xi, budget=budget, base=base)
        total += dt + time.perf_counter() - t0
        expect_N = math.ceil(predicted_exponent(spec.phase.n, bc.k)) + 1
        good = (bc.passed and bc.N == expect_N and np.isfinite(bc.max_ratio_extended))
        ok &= good
        parts.append(f"{name} N={bc.N} k={bc.k} ratio {bc.max_ratio_base:.4g}->"
                     f"{bc.max_ratio_extended:.4g} ({bc.change:.2%})")
    assert report("10", ok, "; ".join(parts), total, 600)


def test_c11_nondegeneracy():
    t0 = time.perf_counter()
    cases = [("x1^3+x2^2", get_phase("mixed2d")), ("x1^3+x2^2+x3^2", model_phase(3, 1)),
             ("x^3-3xy^2", get_phase("cubic-saddle"))]
    margins = {name: check_condition(ph, Box.cube(ph.n, 0.1), M=1.0).margin
               for name, ph in cases}
    counter = check_condition(get_phase("counterexample4d"), Box.cube(4, 0.1), M=1.0).margin
    dt = time.perf_counter() - t0
    ok = all(m >= 5.5 for m in margins.values()) and counter <= 0
    detail = ", ".join(f"{k} {v:.4f}" for k, v in margins.items())
    assert report("11", ok, f"{detail}, counterexample {counter:.4g}", dt, 60)


def test_c12_dyadic_sum():
    t0 = time.perf_counter()
    lams = np.geomspace(1e4, 1e8, 9)
    parts, ok = [], True
    for n, k in ((2, 1), (3, 3), (4, 1)):
        p = predicted_exponent(n, k)
        N = math.ceil(p) + 1
        slope = dyadic_slope(model_spectrum_phase(n, k, M=1e3), np.zeros((1, n)), lams, N, k)
        ok &= abs(slope + p) <= 0.02
        parts.append(f"(n,k)=({n},{k}) slope {slope:.4f} target {-p:.4f}")
    dt = time.perf_counter() - t0
    assert report("12", ok, "; ".join(parts), dt, 10)
