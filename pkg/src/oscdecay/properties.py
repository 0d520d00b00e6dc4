"""
Randomized, batched checks of the constant-free inequalities of the geometry.

Each check draws ``trials`` random configurations, evaluates both sides of an
inequality ``lhs <= rhs`` and counts violations of ``lhs <= rhs (1 + slack)``.
``worst_slack`` is the largest relative excess ``(lhs - rhs) / |rhs|`` seen;
negative values mean every trial held with room to spare.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .spectral_geometry import (SpectralDecomposition, N_dec, Nstar_dec, _pert_rhs,
                                bracket, decompose, loc_rank_dec, seminorm_dec, semi_axes_dec,
                                unit_ball_points, unit_ball_volume)

SLACK = 1e-9


@dataclass
class PropertyResult:
    property: str
    trials: int
    violations: int
    worst_slack: float
    asserted: bool = True

    @property
    def passed(self):
        return self.violations == 0 or not self.asserted

    def to_json(self):
        return {"property": self.property, "trials": self.trials,
                "violations": self.violations, "worst_slack": self.worst_slack,
                "asserted": self.asserted}


def _result(name, lhs, rhs, slack=SLACK, asserted=True):
    lhs, rhs = np.asarray(lhs, dtype=float).ravel(), np.asarray(rhs, dtype=float).ravel()
    with np.errstate(divide="ignore", invalid="ignore"):
        rel = np.where(rhs != 0, (lhs - rhs) / np.abs(rhs), np.where(lhs > 0, np.inf, 0.0))
    viol = int(np.sum(lhs > rhs * (1 + slack)))
    return PropertyResult(name, int(lhs.size), viol, float(np.max(rel)), asserted)


class Sampler:
    """Random configurations drawn from a phase on a box."""

    def __init__(self, phase, trials, seed=0, half_width=1.0, K=None):
        self.phase = phase
        self.trials = trials
        self.rng = np.random.default_rng(seed)
        self.half_width = half_width
        self.K = phase.K_eff if K is None else K
        self.n = phase.n

    def points(self):
        return self.rng.uniform(-self.half_width, self.half_width, (self.trials, self.n))

    def vectors(self):
        V = self.rng.standard_normal((self.trials, self.n))
        return V * 10.0 ** self.rng.uniform(-3, 1, (self.trials, 1))

    def scales(self, lo=-6, hi=2):
        return 10.0 ** self.rng.uniform(lo, hi, self.trials)

    def decomposition(self):
        self.last_points = self.points()
        return decompose(self.phase, self.last_points)


def check_monotonicity(s):
    dec = s.decomposition()
    v = s.vectors()
    r = s.scales()
    r2 = r * 10.0 ** s.rng.uniform(0, 3, s.trials)
    out = [_result("monotonicity_N", N_dec(dec, v, r2, s.K), N_dec(dec, v, r, s.K)),
           _result("monotonicity_Nstar", Nstar_dec(dec, v, r2, s.K), Nstar_dec(dec, v, r, s.K))]
    return out


def check_scaling(s):
    """Sandwich bounds for ``N[v, theta r]`` and ``N*[v, theta r]``.

    Primal: ``theta^{-1/3} N <= N(theta r) <= theta^{-1/2} N``.
    Dual:   ``theta^{-1/2} N* <= N*(theta r) <= theta^{-2/3} N*``; these are
    the exponents that follow from the definition.  The dual sandwich with
    the primal exponents is also evaluated and reported unasserted, since
    its upper half fails whenever a null eigendirection carries weight.
    """
    dec = s.decomposition()
    v = s.vectors()
    r = s.scales()
    th = s.rng.uniform(1e-3, 1.0, s.trials)
    N, Nt = N_dec(dec, v, r, s.K), N_dec(dec, v, th * r, s.K)
    D, Dt = Nstar_dec(dec, v, r, s.K), Nstar_dec(dec, v, th * r, s.K)
    primal_lo = _result("scaling_N_lower", th ** (-1 / 3) * N, Nt)
    primal_hi = _result("scaling_N_upper", Nt, th ** (-1 / 2) * N)
    dual_lo = _result("scaling_Nstar_lower", th ** (-1 / 2) * D, Dt)
    dual_hi = _result("scaling_Nstar_upper", Dt, th ** (-2 / 3) * D)
    printed = _result("scaling_Nstar_upper_with_primal_exponent",
                      Dt, th ** (-1 / 2) * D, asserted=False)
    return [primal_lo, primal_hi, dual_lo, dual_hi, printed]


def check_triangle(s):
    dec = s.decomposition()
    v, w = s.vectors(), s.vectors()
    Nv, Nw, Nvw = (seminorm_dec(dec, u, s.K) for u in (v, w, v + w))
    Dv, Dw, Dvw = (seminorm_dec(dec, u, s.K, dual=True) for u in (v, w, v + w))
    return [_result("triangle_N", np.cbrt(Nvw), np.cbrt(Nv) + np.cbrt(Nw)),
            _result("triangle_Nstar", np.sqrt(Dvw), np.sqrt(Dv) + np.sqrt(Dw))]


def check_duality(s):
    dec = s.decomposition()
    v, w = s.vectors(), s.vectors()
    r = s.scales()
    lhs1 = np.abs(np.sum(v * w, axis=1))
    rhs1 = r * N_dec(dec, v, r, s.K) * Nstar_dec(dec, w, r, s.K)
    Hw = np.einsum("mij,mj->mi", s.phase.hessian(s.last_points), w)
    lhs2 = np.abs(np.sum(v * Hw, axis=1))
    rhs2 = r * N_dec(dec, v, r, s.K) * N_dec(dec, w, r, s.K)
    return [_result("csineq", lhs1, rhs1), _result("csineq2", lhs2, rhs2)]


def check_dual_extremal(s):
    dec = s.decomposition()
    v = s.vectors()
    r = s.scales()
    a = bracket(dec.magnitudes, r[:, None], s.K)
    w = dec.from_coords(a * a * dec.coords(v))
    lhs = np.abs(np.sum(v * w, axis=1))
    rhs = r * N_dec(dec, v, r, s.K) * Nstar_dec(dec, w, r, s.K)
    rel = np.abs(lhs - rhs) / rhs
    res = PropertyResult("dual_extremal_equality", int(s.trials),
                         int(np.sum(rel > 1e-8)), float(np.max(rel)))
    return [res]


def check_containment(s):
    """Ball points lie in the Euclidean ball of radius ``K^{-1/3} r^{1/3}``."""
    dec = s.decomposition()
    r = s.scales()
    U = unit_ball_points(s.n, s.trials, seed=int(s.rng.integers(2 ** 31)))
    # push samples towards the boundary, where the bound is tight
    U = U / np.linalg.norm(U, axis=1, keepdims=True) * (1 - 1e-12)
    rho = semi_axes_dec(dec, r, s.K)
    disp = np.einsum("mij,mj->mi", dec.eigenvectors, U * rho)
    bound = s.K ** (-1 / 3) * np.cbrt(r)
    return [_result("euclidean_containment", np.linalg.norm(disp, axis=1), bound),
            _result("semi_axis_bound", rho.max(axis=1), bound)]


def check_nesting(s):
    dec = s.decomposition()
    r = s.scales()
    r2 = r * 10.0 ** s.rng.uniform(0, 2, s.trials)
    U = unit_ball_points(s.n, s.trials, seed=int(s.rng.integers(2 ** 31)))
    rho, rho2 = semi_axes_dec(dec, r, s.K), semi_axes_dec(dec, r2, s.K)
    gauge2 = np.sqrt(np.sum((U * rho / rho2) ** 2, axis=1))
    return [_result("ball_nesting_points", gauge2, np.ones(s.trials)),
            _result("ball_nesting_axes", (rho / rho2).max(axis=1), np.ones(s.trials))]


def check_spectrum_perturbation(s, max_dist=0.1):
    """``||E^{mu1}_x E^{mu2}_y|| <= (min|mu| + K|x - y|) / max|mu|`` for all cluster pairs."""
    X = s.points()
    step = s.rng.standard_normal(X.shape)
    step *= (max_dist * s.rng.uniform(0, 1, (s.trials, 1)) ** (1 / s.n)
             / np.linalg.norm(step, axis=1, keepdims=True))
    Y = X + step
    dx, dy = decompose(s.phase, X), decompose(s.phase, Y)
    shift = s.K * np.linalg.norm(step, axis=1)
    singleton = np.all(np.diff(dx.labels, axis=1) > 0, axis=1) & \
        np.all(np.diff(dy.labels, axis=1) > 0, axis=1)
    lhs_all, rhs_all = [], []
    # fast path: all clusters one-dimensional, ||E E|| = |v_i . u_j|
    idx = np.flatnonzero(singleton)
    if idx.size:
        C = np.abs(np.einsum("mki,mkj->mij", dx.eigenvectors[idx], dy.eigenvectors[idx]))
        a = np.abs(dx.eigenvalues[idx])[:, :, None]
        b = np.abs(dy.eigenvalues[idx])[:, None, :]
        big = np.maximum(a, b)
        with np.errstate(divide="ignore"):
            rhs = np.where(big > 0, (np.minimum(a, b) + shift[idx, None, None]) / big, np.inf)
        lhs_all.append(C.reshape(-1))
        rhs_all.append(rhs.reshape(-1))
    for m in np.flatnonzero(~singleton):
        for c1 in np.unique(dx.labels[m]):
            i1 = np.flatnonzero(dx.labels[m] == c1)
            for c2 in np.unique(dy.labels[m]):
                i2 = np.flatnonzero(dy.labels[m] == c2)
                V1, V2 = dx.eigenvectors[m][:, i1], dy.eigenvectors[m][:, i2]
                lhs_all.append([np.linalg.svd(V1.T @ V2, compute_uv=False)[0]])
                e1 = np.abs(dx.eigenvalues[m][i1])
                e2 = np.abs(dy.eigenvalues[m][i2])
                rhs_all.append([_pert_rhs((e1.min(), e1.max()), (e2.min(), e2.max()),
                                          shift[m])])
    lhs = np.concatenate([np.ravel(a) for a in lhs_all])
    rhs = np.concatenate([np.ravel(a) for a in rhs_all])
    finite = np.isfinite(rhs)
    res = _result("spectrumpert", lhs[finite], rhs[finite])
    res.trials = int(s.trials)
    return [res]


def check_doubling(n, trials, seed=0):
    """``|B(x, r)| <= 2^{n/2} |B(x, r/2)|`` for random symmetric Hessians."""
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((trials, n, n))
    H = (A + np.swapaxes(A, 1, 2)) * 10.0 ** rng.uniform(-3, 3, (trials, 1, 1))
    # make some spectra exactly degenerate
    H[: trials // 10] *= 0.0
    dec = SpectralDecomposition.from_matrix(H)
    K = 10.0 ** rng.uniform(-3, 3, trials)[:, None]
    r = 10.0 ** rng.uniform(-6, 3, trials)
    rho = r[:, None] / bracket(dec.magnitudes, r[:, None], K)
    rho_half = (r / 2)[:, None] / bracket(dec.magnitudes, (r / 2)[:, None], K)
    w = unit_ball_volume(n)
    return _result(f"doubling_n{n}", w * np.prod(rho, axis=1),
                   2 ** (n / 2) * w * np.prod(rho_half, axis=1))


def check_gap_persistence(phase, trials=1000, per_trial=16, seed=0, K=None):
    """Rank persistence under moving the center, batched over random trials.

    For ``k = loc_rank(x, r, s)`` and ``y`` in ``B(x, delta r)`` checks
    ``loc_rank(y, (1 - delta^{1/3}/s)^3 r, s) >= k``; for ``y`` in
    ``B(x, (s/(s+1))^3 r)`` checks ``loc_rank(y, (s/(s+1))^3 r, s) >= k``.
    Scales are drawn so that thresholds land near the eigenvalues at ``x``,
    where rank changes actually happen.  Returns the violation count of each
    statement.
    """
    rng = np.random.default_rng(seed)
    K = phase.K_eff if K is None else K
    n = phase.n
    X = rng.uniform(-1, 1, (trials, n))
    dec = decompose(phase, X)
    s_ = 10.0 ** rng.uniform(-0.5, 1.0, trials)
    delta = s_ ** 3 * rng.uniform(0.001, 0.999, trials) ** 3
    pick = np.abs(dec.eigenvalues[np.arange(trials), rng.integers(0, n, trials)])
    r = (np.maximum(pick, 1e-3) / s_) ** 3 / K ** 2 * 10.0 ** rng.uniform(-0.5, 0.5, trials)
    k = loc_rank_dec(dec, r, s_, K)
    U = unit_ball_points(n, per_trial, seed=seed)
    counts = []
    for rad, r_new in ((delta * r, (1 - np.cbrt(delta) / s_) ** 3 * r),
                       ((s_ / (s_ + 1)) ** 3 * r, (s_ / (s_ + 1)) ** 3 * r)):
        rho = semi_axes_dec(dec, rad, K)
        Y = X[:, None, :] + np.einsum("mij,mpj->mpi", dec.eigenvectors, U[None] * rho[:, None, :])
        dy = decompose(phase, Y.reshape(-1, n))
        ky = loc_rank_dec(dy, np.repeat(r_new, per_trial), np.repeat(s_, per_trial), K)
        counts.append(int(np.sum(ky.reshape(trials, per_trial) < k[:, None])))
    return [PropertyResult("gap_persistence_move", trials * per_trial, counts[0], float("nan")),
            PropertyResult("gap_persistence_rank_s", trials * per_trial, counts[1], float("nan"))]


SUITE = {
    "monotonicity": check_monotonicity,
    "scaling": check_scaling,
    "triangle": check_triangle,
    "duality": check_duality,
    "dual_extremal": check_dual_extremal,
    "containment": check_containment,
    "nesting": check_nesting,
    "spectrumpert": check_spectrum_perturbation,
}


def run_suite(phase, trials=10_000, seed=0, names=None, half_width=1.0):
    """Run the geometry property suite; returns a list of :class:`PropertyResult`."""
    results = []
    for i, name in enumerate(names or SUITE):
        s = Sampler(phase, trials, seed=seed + 1000 * i, half_width=half_width)
        results.extend(SUITE[name](s))
    for n in range(2, 7):
        results.append(check_doubling(n, max(trials // 10, 1), seed=seed + n))
    return results
