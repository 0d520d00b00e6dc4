import numpy as np
import pytest

from oscdecay.generic_cubic import sample_cubic
from oscdecay.phase_model import PolynomialPhase, get_phase
from oscdecay.properties import (SUITE, Sampler, check_doubling, check_gap_persistence,
                                 run_suite, _result)
from oscdecay.spectral_geometry import norm_Nstar


def test_result_counts_violations_with_slack():
    res = _result("x", [1.0, 2.0, 3.0 + 1e-12], [1.0, 1.0, 3.0])
    assert res.violations == 1
    assert res.worst_slack == pytest.approx(1.0)
    assert not res.passed


@pytest.mark.parametrize("name", sorted(SUITE))
def test_each_property_holds_on_random_cubic(name):
    s = Sampler(sample_cubic(3, 0), 2000, seed=1)
    for res in SUITE[name](s):
        if res.asserted:
            assert res.violations == 0, res


def test_suite_on_catalog_phases():
    for ph in (get_phase("mixed2d"), get_phase("counterexample4d"), get_phase("sum-squares3d")):
        bad = [r for r in run_suite(ph, trials=1000) if not r.passed]
        assert not bad, bad


def test_dual_scaling_exponents_zero_hessian():
    # N*[v, theta r] = theta^{-2/3} N*[v, r] when H = 0, so the dual upper
    # exponent cannot be 1/2
    ph = PolynomialPhase.from_terms(2, {})
    v, r, theta = np.array([1.0, 0.0]), 1.0, 0.01
    ratio = norm_Nstar(ph, [0, 0], v, theta * r, K=1.0) / norm_Nstar(ph, [0, 0], v, r, K=1.0)
    assert ratio == pytest.approx(theta ** (-2 / 3))
    assert ratio > theta ** (-1 / 2)


def test_unasserted_primal_exponent_version_is_reported():
    s = Sampler(sample_cubic(3, 0), 500, seed=2)
    res = {r.property: r for r in SUITE["scaling"](s)}
    flagged = res["scaling_Nstar_upper_with_primal_exponent"]
    assert not flagged.asserted and flagged.violations > 0 and flagged.passed


def test_doubling_all_dimensions():
    for n in range(2, 7):
        assert check_doubling(n, 1000, seed=n).violations == 0


def test_gap_persistence_random_cubics():
    for seed in range(3):
        for res in check_gap_persistence(sample_cubic(3, seed), trials=200, seed=seed):
            assert res.violations == 0
