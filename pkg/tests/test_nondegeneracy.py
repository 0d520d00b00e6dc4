import math

import numpy as np
import pytest

from oscdecay.nondegeneracy import (_best_w, check_condition, infimum_k, sphere_directions,
                                    v_space)
from oscdecay.phase_model import Box, PolynomialPhase, get_phase, model_phase


def test_v_space_examples():
    assert v_space(get_phase("sum-squares3d"), [0.1, 0.2, 0.3], 1.0).shape == (3, 0)
    V = v_space(get_phase("mixed2d"), [0.0, 0.0], 1.0)
    assert V.shape == (2, 1) and abs(abs(V[0, 0]) - 1) < 1e-12
    assert v_space(get_phase("cubic-saddle"), [0.0, 0.0], 1.0).shape == (2, 2)
    with pytest.raises(ValueError):
        v_space(get_phase("mixed2d"), [0.0, 0.0], -1.0)


def test_sphere_directions_unit():
    for d in (1, 2, 3, 5):
        D = sphere_directions(d)
        np.testing.assert_allclose(np.linalg.norm(D, axis=1), 1.0)
        assert len(D) >= 2


@pytest.mark.parametrize("n,k", [(2, 1), (3, 1), (3, 2), (3, 3)])
def test_model_margin_analytic(n, k):
    # min over unit v in span(e_1..e_k) of |6 (v_i^2)_i| is 6 / sqrt(k)
    rep = check_condition(model_phase(n, k), Box.cube(n, 0.1), M=1.0, R=1.0, grid=3)
    assert rep.margin == pytest.approx(6 / math.sqrt(k), rel=0.05)
    assert rep.margin <= min(w["value"] for w in rep.witnesses)


def test_saddle_margin_six_over_directions():
    c = np.cos(np.linspace(0, 2 * np.pi, 360))
    s = np.sin(np.linspace(0, 2 * np.pi, 360))
    np.testing.assert_allclose(np.hypot(c * c - s * s, -2 * c * s), 1.0)
    rep = check_condition(get_phase("cubic-saddle"), Box.cube(2, 0.1), M=1.0)
    assert rep.margin == pytest.approx(6.0, rel=1e-9)


def test_counterexample_fails():
    rep = check_condition(get_phase("counterexample4d"), Box.cube(4, 0.1), M=1.0, grid=3)
    assert rep.margin <= 0 and not rep.satisfied
    assert rep.k_inf == 4


def test_zero_third_derivative_fails():
    rep = check_condition(PolynomialPhase.from_terms(2, {(1, 0): 1.0}), Box.cube(2, 0.1), 1.0)
    assert rep.margin == 0.0 and not rep.satisfied


def test_vacuous_when_no_small_eigenvalues():
    rep = check_condition(get_phase("sum-squares3d"), Box.cube(3, 0.1), M=1.0)
    assert rep.margin == math.inf and rep.satisfied


def test_margin_monotone_in_domain_for_quartic():
    ph = PolynomialPhase.from_terms(1, {(3,): 1.0, (4,): 1.0})
    small = check_condition(ph, Box.cube(1, 0.05), M=0.1, grid=5)
    big = check_condition(ph, Box.cube(1, 0.2), M=0.1, grid=5, y_grid=Box.cube(1, 0.2).grid(9))
    assert big.margin <= small.margin


def test_best_w_single_row_exact_and_lower_bound():
    rng = np.random.default_rng(0)
    W = np.linalg.qr(rng.standard_normal((4, 2)))[0]
    g = rng.standard_normal((1, 4))
    val, w = _best_w(g, W, rng, 8)
    assert val == pytest.approx(np.linalg.norm(g @ W))
    G = rng.standard_normal((5, 4))
    val, w = _best_w(G, W, rng, 16)
    assert np.min(G @ w) == pytest.approx(val)


def test_infimum_k_examples_and_monotonicity():
    assert infimum_k(model_phase(3, 2), Box.cube(3, 0.05), 1.0) == 2
    assert infimum_k(get_phase("sum-squares3d"), Box.cube(3, 0.5), 1.0) == 0
    assert infimum_k(get_phase("cubic-saddle"), Box.cube(2, 0.1), 1.0) == 2
    ph = get_phase("cubic-saddle")
    ks = [infimum_k(ph, Box.cube(2, h), 1.0) for h in (0.05, 0.2, 0.5)]
    assert ks == sorted(ks, reverse=True)
    ks = [infimum_k(ph, Box.cube(2, 0.5), M) for M in (0.5, 1.0, 4.0, 10.0)]
    assert ks == sorted(ks)
