import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oscdecay.generic_cubic import sample_cubic
from oscdecay.phase_model import PolynomialPhase, get_phase
from oscdecay.spectral_geometry import (SpectralDecomposition, ball, decompose, distance,
                                        dual_extremal, gap_persistence_check, gap_scan,
                                        has_gap, loc_rank, norm_N, norm_Nstar, rank_s,
                                        seminorm_N, seminorm_Nstar,
                                        spectrum_perturbation_check, unit_ball_points)

ZERO2 = PolynomialPhase.from_terms(2, {})
ZERO3 = PolynomialPhase.from_terms(3, {})


def quadratic(H):
    """Phase ``x.Hx / 2`` with constant Hessian ``H``."""
    n = len(H)
    acc = {}
    for i in range(n):
        for j in range(n):
            e = [0] * n
            e[i] += 1
            e[j] += 1
            acc[tuple(e)] = acc.get(tuple(e), 0.0) + 0.5 * H[i][j]
    return PolynomialPhase.from_terms(n, acc)


def test_decomposition_reconstructs_and_is_orthonormal():
    rng = np.random.default_rng(0)
    A = rng.standard_normal((50, 5, 5))
    H = A + np.swapaxes(A, 1, 2)
    dec = SpectralDecomposition.from_matrix(H)
    norm = np.linalg.norm(H, ord=2, axis=(1, 2))
    err = np.linalg.norm(dec.reconstruct() - H, ord=2, axis=(1, 2))
    assert np.all(err <= 1e-10 * (1 + norm))
    VtV = np.einsum("mji,mjk->mik", dec.eigenvectors, dec.eigenvectors)
    np.testing.assert_allclose(VtV, np.broadcast_to(np.eye(5), VtV.shape), atol=1e-10)
    assert np.all(np.diff(dec.eigenvalues, axis=1) <= 0)


def test_clusters_merge_near_degenerate_eigenvalues():
    dec = SpectralDecomposition.from_matrix(np.diag([2.0, 2.0 + 1e-12, -1.0]))
    assert len(dec.clusters()) == 2
    assert sorted(dec.cluster_values()) == pytest.approx([-1.0, 2.0 + 1e-12])


def test_norms_zero_hessian_unit_vector():
    assert norm_N(ZERO2, [0, 0], [1.0, 0.0], 1.0, K=1.0) == pytest.approx(1.0)
    assert norm_Nstar(ZERO2, [0, 0], [1.0, 0.0], 1.0, K=1.0) == pytest.approx(1.0)


def test_norm_N_mixed_example():
    val = norm_N(get_phase("mixed2d"), [1.0, 0.0], [0.0, 1.0], 1.0, K=6.0)
    assert val == pytest.approx(math.sqrt(2) + 6 ** (1 / 3), rel=1e-12)


def test_norms_zero_iff_zero_vector_and_r_must_be_positive():
    ph = get_phase("cubic-saddle")
    assert norm_N(ph, [0.3, 0.1], [0.0, 0.0], 0.5) == 0.0
    assert norm_N(ph, [0.3, 0.1], [1e-9, 0.0], 0.5) > 0.0
    with pytest.raises(ValueError):
        norm_N(ph, [0.3, 0.1], [1.0, 0.0], 0.0)


@pytest.mark.parametrize("K", [0.5, 1.0, 6.0])
def test_seminorm_zero_hessian_closed_form(K):
    v = np.array([0.3, -0.4])
    assert seminorm_N(ZERO2, [0, 0], v, K=K) == pytest.approx(K * 0.5 ** 3, rel=1e-10)
    # dual: |v| / (K r^2)^{1/3} = 1
    assert seminorm_Nstar(ZERO2, [0, 0], v, K=K) == pytest.approx((0.5 ** 3 / K) ** 0.5, rel=1e-10)


def test_seminorm_root_property():
    ph = sample_cubic(3, 2)
    rng = np.random.default_rng(3)
    for _ in range(20):
        x, v = rng.uniform(-1, 1, (2, 3))
        r = seminorm_N(ph, x, v)
        assert norm_N(ph, x, v, r) == pytest.approx(1.0, abs=1e-10)
        rs = seminorm_Nstar(ph, x, v)
        assert norm_Nstar(ph, x, v, rs) == pytest.approx(1.0, abs=1e-10)


def test_seminorm_sum_squares_limit():
    # with mu = 2 and a tiny K the root of (2r)^{1/2} / r = 1 is r = 2
    ph = get_phase("sum-squares3d")
    r = seminorm_N(ph, [0.1, 0.2, 0.3], [1.0, 0.0, 0.0], K=1e-14)
    assert r == pytest.approx(2.0, rel=1e-3)
    assert seminorm_N(ph, [0.1, 0.2, 0.3], [0.0, 0.0, 0.0]) == 0.0


def test_distance_examples():
    assert distance(get_phase("cubic1d"), [0.0], [0.0]) == 0.0
    assert distance(get_phase("cubic1d"), [0.0], [0.5], K=6.0) == pytest.approx(0.75, rel=1e-10)
    assert distance(ZERO3, [0, 0, 0], [0.1, 0.2, -0.2], K=2.0) == pytest.approx(2.0 * 0.3 ** 3)


def test_ball_examples():
    b = ball(ZERO2, [0, 0], 1.0, K=1.0)
    np.testing.assert_allclose(b.semi_axes, [1.0, 1.0])
    assert b.volume == pytest.approx(math.pi)
    b = ball(quadratic([[1.0, 0.0], [0.0, 0.0]]), [0, 0], 1.0, K=1.0)
    np.testing.assert_allclose(sorted(b.semi_axes), [0.5, 1.0])
    assert b.volume == pytest.approx(math.pi / 2)


def test_ball_membership_matches_norm():
    ph = sample_cubic(3, 4)
    y = np.array([0.2, -0.3, 0.5])
    b = ball(ph, y, 0.05)
    X = y + 0.3 * np.random.default_rng(5).standard_normal((500, 3))
    inside = b.contains(X)
    norms = np.array([norm_N(ph, y, x - y, 0.05) for x in X])
    np.testing.assert_array_equal(inside, norms < 1)
    assert np.all(b.semi_axes <= b.K ** (-1 / 3) * 0.05 ** (1 / 3) * (1 + 1e-12))


def test_ball_doubling_random_cubics():
    for seed in range(20):
        ph = sample_cubic(3, seed)
        x = np.random.default_rng(seed).uniform(-1, 1, 3)
        r = 10.0 ** np.random.default_rng(seed + 1).uniform(-4, 1)
        assert ball(ph, x, r).volume <= 2 ** 1.5 * ball(ph, x, r / 2).volume * (1 + 1e-12)


def test_dual_extremal_examples():
    w = dual_extremal(ZERO2, [0, 0], [1.0, 0.0], 1.0, K=1.0)
    assert abs(w[1]) < 1e-15 and w[0] > 0
    ph = get_phase("mixed2d")
    x, r = np.array([0.5, 0.0]), 0.3
    v = np.array([0.0, 1.0])                       # eigenvector with mu = 2
    a = math.sqrt(2 * r) + (6.0 * r * r) ** (1 / 3)
    np.testing.assert_allclose(dual_extremal(ph, x, v, r, K=6.0), a * a * v, rtol=1e-12)


def test_dual_extremal_equality_random():
    rng = np.random.default_rng(6)
    for _ in range(1000):
        H = rng.standard_normal((3, 3))
        ph = quadratic(H + H.T)
        v, r = rng.standard_normal(3), 10.0 ** rng.uniform(-3, 2)
        w = dual_extremal(ph, [0, 0, 0], v, r, K=1.0)
        lhs = abs(v @ w)
        rhs = r * norm_N(ph, [0, 0, 0], v, r, K=1.0) * norm_Nstar(ph, [0, 0, 0], w, r, K=1.0)
        assert lhs == pytest.approx(rhs, rel=1e-8)


def test_loc_rank_examples():
    assert loc_rank(get_phase("sum-squares3d"), [0.1, 0, 0], 1e-6, 1.0) == 3
    assert loc_rank(get_phase("cubic1d"), [0.0], 0.7, 2.0) == 0
    assert loc_rank(get_phase("mixed2d"), [0.5, 0.0], 1e-3, 1.0, K=6.0) == 2


def test_rank_s_never_exceeds_center_rank():
    ph = sample_cubic(3, 8)
    x = np.array([0.4, 0.1, -0.2])
    for r in (1e-4, 1e-2, 1.0):
        b = ball(ph, x, r)
        assert rank_s(ph, b, 1.0) <= loc_rank(ph, x, r, 1.0)


def test_gap_examples():
    assert has_gap(get_phase("cubic1d"), [0.0], 1.0, 1.0, 2.0)
    rep = gap_scan(get_phase("cubic1d"), [0.0], 1.0, 1.0, 2.0)
    assert rep.exceptional_scales == []
    with pytest.raises(ValueError):
        has_gap(get_phase("cubic1d"), [0.0], 1.0, 2.0, 1.0)


def band_count(eigs, K, r, a, b, depth=40):
    """Scales 2^-j r at which some |mu| falls in (a, b] * (K^2 r_j)^{1/3}."""
    out = []
    for j in range(depth + 1):
        t = np.cbrt(K * K * r * 2.0 ** -j)
        if np.any((np.abs(eigs) > a * t) & (np.abs(eigs) <= b * t)):
            out.append(j)
    return out


def test_gap_scan_matches_band_oracle_and_bound():
    # each nonzero eigenvalue sits in the band for exactly log2((b/a)^3) = 3 scales
    for seed in range(30):
        ph = sample_cubic(2, seed)
        z = np.random.default_rng(seed).uniform(-1, 1, 2) * 1e-3
        rep = gap_scan(ph, z, 1.0, 1.0, 2.0)
        eigs = np.linalg.eigvalsh(ph.hessian(z))
        assert rep.exceptional_scales == band_count(eigs, ph.K_eff, 1.0, 1.0, 2.0)
        assert len(rep.exceptional_scales) <= 3 * ph.n


def test_spectrum_perturbation_examples():
    ph = sample_cubic(3, 9)
    x = np.array([0.3, 0.2, -0.6])
    vals = decompose(ph, x).cluster_values()
    lhs, _ = spectrum_perturbation_check(ph, x, x, vals[0], vals[-1])
    assert lhs < 1e-12
    rng = np.random.default_rng(10)
    for _ in range(200):
        y = x + rng.uniform(-0.05, 0.05, 3)
        vy = decompose(ph, y).cluster_values()
        lhs, rhs = spectrum_perturbation_check(ph, x, y, vals[0], vy[-1])
        assert lhs <= rhs * (1 + 1e-9)


def test_gap_persistence_examples():
    assert gap_persistence_check(get_phase("sum-squares3d"), [0.1, 0.2, 0.3], 1e-3, 1.0, 0.5)
    assert gap_persistence_check(ZERO2, [0.0, 0.0], 1.0, 1.0, 0.5, K=1.0)
    with pytest.raises(ValueError):
        gap_persistence_check(ZERO2, [0.0, 0.0], 1.0, 1.0, 2.0, K=1.0)


def test_unit_ball_points_inside():
    U = unit_ball_points(4, 300, seed=1)
    assert U.shape == (300, 4)
    assert np.all(np.linalg.norm(U, axis=1) < 1)


@settings(max_examples=100, deadline=None)
@given(st.floats(1e-4, 10.0), st.floats(0.01, 1.0))
def test_norm_monotone_and_scaling(r, theta):
    ph = get_phase("cubic-saddle")
    x, v = np.array([0.3, -0.2]), np.array([0.5, 0.7])
    a, b = norm_N(ph, x, v, r), norm_N(ph, x, v, theta * r)
    assert b >= a * (1 - 1e-12)
    assert theta ** (-1 / 3) * a <= b * (1 + 1e-9)
    assert b <= theta ** (-1 / 2) * a * (1 + 1e-9)
