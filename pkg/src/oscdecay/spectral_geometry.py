"""
Hessian spectral geometry: projections, the norms N and N*, balls and ranks.

For a symmetric matrix H with spectral projections E^mu and a constant K > 0,

    a(mu, r)   = (|mu| r)^{1/2} + (K r^2)^{1/3}
    N[v, r]    = r^{-1} (sum_mu |E^mu v|^2 a(mu, r)^2)^{1/2}
    N*[v, r]   = (sum_mu (|E^mu v| / a(mu, r))^2)^{1/2}

The seminorms N[v] and N*[v] are the unique roots in r of N[v, r] = 1 and
N*[v, r] = 1.  The ball B(y, r) is the open ellipsoid N_y[x - y, r] < 1 whose
semi-axis along an eigenvector with eigenvalue mu is r / a(mu, r).

All low-level helpers broadcast over leading batch dimensions so that the
randomized property checks can run ten thousand trials in one pass.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.special import gamma
from scipy.stats import norm as _normal
from scipy.stats import qmc

CLUSTER_TOL = 1e-8
BISECT_LO, BISECT_HI = 1e-16, 1e16
BISECT_STEPS = 200
SCAN_DEPTH = 40


class SeminormError(RuntimeError):
    """Bisection for a seminorm failed to bracket or converge."""


# -- spectral decomposition ----------------------------------------------------

@dataclass(frozen=True)
class SpectralDecomposition:
    """Eigen-decomposition of one symmetric matrix or of a batch of them.

    Attributes
    ----------
    eigenvalues : ndarray, shape (..., n)
        Sorted in decreasing order of value.
    eigenvectors : ndarray, shape (..., n, n)
        Orthonormal columns matching ``eigenvalues``.
    labels : ndarray of int, shape (..., n)
        Cluster label per eigenvalue.  Consecutive eigenvalues closer than
        ``cluster_tol * (1 + ||H||)`` share a label.
    magnitudes : ndarray, shape (..., n)
        For each eigenvalue, the largest ``|mu|`` of its cluster.  This is
        the representative used in every norm formula.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    labels: np.ndarray
    magnitudes: np.ndarray
    tol: np.ndarray = field(repr=False)

    @classmethod
    def from_matrix(cls, H, cluster_tol=CLUSTER_TOL):
        H = np.asarray(H, dtype=float)
        H = 0.5 * (H + np.swapaxes(H, -1, -2))
        w, V = np.linalg.eigh(H)
        w, V = w[..., ::-1], V[..., ::-1]
        scale = 1.0 + np.linalg.norm(H, ord=2, axis=(-2, -1)) if H.ndim > 2 \
            else 1.0 + np.linalg.norm(H, ord=2)
        tol = cluster_tol * np.asarray(scale)
        gaps = w[..., :-1] - w[..., 1:]
        breaks = gaps > tol[..., None]
        labels = np.concatenate(
            [np.zeros(w.shape[:-1] + (1,), dtype=int), np.cumsum(breaks, axis=-1)], axis=-1)
        absw = np.abs(w)
        mags = np.empty_like(absw)
        n = w.shape[-1]
        for i in range(n):
            same = labels == labels[..., i:i + 1]
            mags[..., i] = np.max(np.where(same, absw, -np.inf), axis=-1)
        return cls(w, V, labels, mags, tol)

    @property
    def n(self):
        return self.eigenvalues.shape[-1]

    @property
    def batched(self):
        return self.eigenvalues.ndim > 1

    def clusters(self):
        """Index arrays of each cluster (single decomposition only)."""
        self._require_single()
        return [np.flatnonzero(self.labels == c) for c in np.unique(self.labels)]

    def cluster_values(self):
        """Representative eigenvalue of each cluster (largest magnitude member)."""
        out = []
        for idx in self.clusters():
            j = idx[np.argmax(np.abs(self.eigenvalues[idx]))]
            out.append(float(self.eigenvalues[j]))
        return out

    def cluster_basis(self, c):
        """Orthonormal basis (columns) of the c-th cluster eigenspace."""
        return self.eigenvectors[:, self.clusters()[c]]

    def projector(self, c):
        B = self.cluster_basis(c)
        return B @ B.T

    def cluster_of(self, mu):
        """Index of the cluster whose representative is closest to ``mu``."""
        vals = np.array(self.cluster_values())
        return int(np.argmin(np.abs(vals - mu)))

    def coords(self, v):
        """Coordinates of ``v`` in the eigenbasis, shape (..., n)."""
        return np.einsum("...ij,...i->...j", self.eigenvectors, np.asarray(v, dtype=float))

    def from_coords(self, c):
        return np.einsum("...ij,...j->...i", self.eigenvectors, c)

    def reconstruct(self):
        V = self.eigenvectors
        return np.einsum("...ij,...j,...kj->...ik", V, self.eigenvalues, V)

    def _require_single(self):
        if self.batched:
            raise ValueError("operation needs a single (unbatched) decomposition")


@lru_cache(maxsize=65536)
def _decompose_cached(phase, key):
    x = np.frombuffer(key, dtype=float)
    return SpectralDecomposition.from_matrix(phase.hessian(x))


def decompose(phase, x):
    """Spectral decomposition of the Hessian of ``phase`` at ``x``.

    Single points are memoized by their exact bytes; batches are not cached.
    """
    x = np.ascontiguousarray(x, dtype=float)
    if x.ndim == 1:
        if x.shape[0] != phase.n:
            raise ValueError(f"expected a point of dimension {phase.n}, got {x.shape[0]}")
        return _decompose_cached(phase, x.tobytes())
    return SpectralDecomposition.from_matrix(phase.hessian(x))


def _resolve_K(phase, K):
    if K is None:
        return phase.K_eff
    K = float(K)
    if K < 0:
        raise ValueError("K must be nonnegative")
    return K


def _check_r(r):
    r = np.asarray(r, dtype=float)
    if np.any(~(r > 0)):
        raise ValueError("scale r must be positive")
    return r


# -- formulas on decompositions ------------------------------------------------

def bracket(mag, r, K):
    """``(|mu| r)^{1/2} + (K r^2)^{1/3}``, broadcasting."""
    return np.sqrt(mag * r) + np.cbrt(K * r * r)


def _N_from(dec, c2, r, K):
    a = bracket(dec.magnitudes, np.asarray(r)[..., None], K)
    return np.sqrt(np.sum(c2 * a * a, axis=-1)) / r


def _Nstar_from(dec, c2, r, K):
    a = bracket(dec.magnitudes, np.asarray(r)[..., None], K)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(c2 > 0, c2 / (a * a), 0.0)
    return np.sqrt(np.sum(terms, axis=-1))


def N_dec(dec, v, r, K):
    """N[v, r] for a (possibly batched) decomposition."""
    r = _check_r(r)
    c = dec.coords(v)
    return _N_from(dec, c * c, r, K)


def Nstar_dec(dec, v, r, K):
    r = _check_r(r)
    c = dec.coords(v)
    return _Nstar_from(dec, c * c, r, K)


def _bisect_root(f, shape, lo=BISECT_LO, hi=BISECT_HI, steps=BISECT_STEPS):
    """Root of a decreasing ``f(r) - 1`` by bisection on ``log r``.

    ``f`` maps an array of scales (``shape``) to values.  The bracket starts
    at ``[lo, hi]`` and is widened by powers of 1e16 (up to the range of
    doubles) for entries whose root lies outside it.
    """
    llo = np.full(shape, math.log(lo))
    lhi = np.full(shape, math.log(hi))
    for _ in range(16):
        bad_lo = f(np.exp(llo)) < 1.0
        bad_hi = f(np.exp(lhi)) > 1.0
        if not (np.any(bad_lo) or np.any(bad_hi)):
            break
        llo = np.where(bad_lo, np.maximum(llo - 36.8, -700.0), llo)
        lhi = np.where(bad_hi, np.minimum(lhi + 36.8, 700.0), lhi)
    else:
        raise SeminormError("could not bracket the seminorm root (degenerate K floor?)")
    if np.any(f(np.exp(llo)) < 1.0) or np.any(f(np.exp(lhi)) > 1.0):
        raise SeminormError("could not bracket the seminorm root (degenerate K floor?)")
    for _ in range(steps):
        mid = 0.5 * (llo + lhi)
        above = f(np.exp(mid)) >= 1.0
        llo = np.where(above, mid, llo)
        lhi = np.where(above, lhi, mid)
        if np.all(lhi - llo < 1e-15):
            break
    else:
        if np.any(lhi - llo > 1e-10):
            raise SeminormError("seminorm bisection did not converge in 200 steps")
    return np.exp(0.5 * (llo + lhi))


def seminorm_dec(dec, v, K, dual=False):
    """Seminorm ``N[v]`` (or ``N*[v]``) for a (possibly batched) decomposition."""
    c = dec.coords(v)
    c2 = c * c
    zero = np.sum(c2, axis=-1) == 0.0
    c2 = np.where(zero[..., None], 1.0, c2)
    fn = _Nstar_from if dual else _N_from
    root = _bisect_root(lambda r: fn(dec, c2, r, K), c2.shape[:-1])
    return np.where(zero, 0.0, root)


def semi_axes_dec(dec, r, K):
    """Semi-axis lengths ``r / a(mu, r)`` per eigenvector."""
    r = np.asarray(r, dtype=float)[..., None]
    return r / bracket(dec.magnitudes, r, K)


def loc_rank_dec(dec, r, s, K):
    thresh = s * np.cbrt(K * K * np.asarray(r, dtype=float))
    return np.sum(np.abs(dec.eigenvalues) > np.asarray(thresh)[..., None], axis=-1)


def unit_ball_volume(n):
    return math.pi ** (n / 2) / gamma(n / 2 + 1)


# -- public API on phases ----------------------------------------------------------

def norm_N(phase, x, v, r, K=None):
    """``N_x[v, r]`` for the Hessian of ``phase`` at ``x``.

    Examples
    --------
    >>> from oscdecay.phase_model import PolynomialPhase
    >>> p = PolynomialPhase.from_terms(2, {(3, 0): 1.0, (0, 2): 1.0})
    >>> round(float(norm_N(p, [1.0, 0.0], [0.0, 1.0], 1.0, K=6.0)), 3)
    3.231
    """
    return N_dec(decompose(phase, x), v, r, _resolve_K(phase, K))


def norm_Nstar(phase, x, v, r, K=None):
    """``N*_x[v, r]``, the dual of :func:`norm_N`."""
    return Nstar_dec(decompose(phase, x), v, r, _resolve_K(phase, K))


def seminorm_N(phase, x, v, K=None):
    """``N_x[v] = inf{r > 0 : N_x[v, r] < 1}``; zero for ``v = 0``."""
    return seminorm_dec(decompose(phase, x), v, _resolve_K(phase, K))


def seminorm_Nstar(phase, x, v, K=None):
    return seminorm_dec(decompose(phase, x), v, _resolve_K(phase, K), dual=True)


def distance(phase, x, y, K=None):
    """Nonisotropic distance ``d(x, y) = N_x[x - y]`` (not symmetric)."""
    x = np.asarray(x, dtype=float)
    return seminorm_N(phase, x, x - np.asarray(y, dtype=float), K)


def dual_extremal(phase, x, v, r, K=None):
    """Vector ``w`` attaining ``|v.w| = r N_x[v, r] N*_x[w, r]``."""
    dec = decompose(phase, x)
    K = _resolve_K(phase, K)
    a = bracket(dec.magnitudes, np.asarray(r, dtype=float)[..., None], K)
    return dec.from_coords(a * a * dec.coords(v))


@dataclass(frozen=True)
class Ball:
    """Open ellipsoid ``B(y, r) = {x : N_y[x - y, r] < 1}``.

    ``axes`` holds the eigenvectors of ``H_y`` as columns and ``semi_axes``
    the matching lengths ``r / ((|mu| r)^{1/2} + (K r^2)^{1/3})``.
    """

    center: np.ndarray
    r: float
    K: float
    axes: np.ndarray
    semi_axes: np.ndarray

    @property
    def n(self):
        return self.center.shape[0]

    def contains(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        c = (X - self.center) @ self.axes
        return np.sum((c / self.semi_axes) ** 2, axis=1) < 1.0

    def gauge(self, X):
        """``N_y[x - y, r]``; the ball is where this is below one."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        c = (X - self.center) @ self.axes
        return np.sqrt(np.sum((c / self.semi_axes) ** 2, axis=1))

    @property
    def volume(self):
        return unit_ball_volume(self.n) * float(np.prod(self.semi_axes))

    def sample(self, m, seed=0, include_center=True):
        """Quasi-uniform points inside the ball (scrambled Sobol, seeded)."""
        U = unit_ball_points(self.n, m, seed)
        if include_center:
            U = np.vstack([np.zeros(self.n), U[:-1]]) if m > 0 else U
        return self.center + (U * self.semi_axes) @ self.axes.T


def unit_ball_points(n, m, seed=0):
    """``m`` quasi-uniform points in the open unit ball of R^n."""
    if m <= 0:
        return np.zeros((0, n))
    sob = qmc.Sobol(d=n + 1, scramble=True, seed=seed)
    U = sob.random(1 << max(0, math.ceil(math.log2(m))))[:m]
    U = np.clip(U, 1e-12, 1 - 1e-12)
    G = _normal.ppf(U[:, :n])
    G /= np.linalg.norm(G, axis=1, keepdims=True)
    rad = U[:, n] ** (1.0 / n) * (1 - 1e-12)
    return G * rad[:, None]


def ball(phase, y, r, K=None):
    r = float(_check_r(r))
    y = np.asarray(y, dtype=float)
    dec = decompose(phase, y)
    K = _resolve_K(phase, K)
    return Ball(y.copy(), r, K, dec.eigenvectors, semi_axes_dec(dec, r, K))


def ball_volume(b):
    """``omega_n * prod(semi_axes)``."""
    return b.volume


def loc_rank(phase, x, r, s, K=None):
    """Number of eigenvalues of ``H_x`` with ``|mu| > s (K^2 r)^{1/3}``."""
    _check_r(r)
    if s <= 0:
        raise ValueError("s must be positive")
    dec = decompose(phase, x)
    return int(loc_rank_dec(dec, r, s, _resolve_K(phase, K)))


def rank_s(phase, b, s, samples=256, seed=0):
    """Sampled minimum of ``loc_rank(x, b.r, s)`` over ``x`` in the ball.

    This is an over-estimate of the infimum over the continuum (the true
    rank can only be lower); the center is always included so the result
    never exceeds the local rank at the center.
    """
    X = b.sample(samples, seed=seed)
    dec = decompose(phase, X)
    return int(np.min(loc_rank_dec(dec, b.r, s, b.K)))


def has_gap(phase, x, r, a, b, K=None):
    """Local spectral gap on ``(a, b]``: equal loc ranks at ``a`` and ``b``."""
    if not 0 < a < b:
        raise ValueError("need 0 < a < b")
    return loc_rank(phase, x, r, a, K) == loc_rank(phase, x, r, b, K)


@dataclass
class GapScanReport:
    center: np.ndarray
    r: float
    a: float
    b: float
    scales: np.ndarray
    rank_a: np.ndarray
    rank_b: np.ndarray
    gap: np.ndarray
    exceptional_scales: list

    def to_json(self):
        return {"center": self.center.tolist(), "r": self.r, "a": self.a, "b": self.b,
                "scales": self.scales.tolist(), "rank_a": self.rank_a.tolist(),
                "rank_b": self.rank_b.tolist(), "gap": self.gap.tolist(),
                "exceptional_scales": list(self.exceptional_scales)}


def gap_scan(phase, z, r, a, b, depth=SCAN_DEPTH, K=None):
    """Scan the dyadic scales ``2^-j r`` (j = 0..depth) for local gaps on (a, b]."""
    if not 0 < a < b:
        raise ValueError("need 0 < a < b")
    _check_r(r)
    K = _resolve_K(phase, K)
    dec = decompose(phase, z)
    scales = r * 2.0 ** -np.arange(depth + 1)
    ra = np.array([loc_rank_dec(dec, s_, a, K) for s_ in scales], dtype=int)
    rb = np.array([loc_rank_dec(dec, s_, b, K) for s_ in scales], dtype=int)
    gap = ra == rb
    return GapScanReport(np.asarray(z, dtype=float), float(r), float(a), float(b),
                         scales, ra, rb, gap, [int(j) for j in np.flatnonzero(~gap)])


def _cluster_extent(dec, idx):
    m = np.abs(dec.eigenvalues[idx])
    return float(m.min()), float(m.max())


def spectrum_perturbation_check(phase, x, y, mu1, mu2, K=None):
    """Both sides of ``||E^{mu1}_x E^{mu2}_y|| <= (min|mu| + K|x-y|) / max|mu|``.

    ``mu1`` selects the cluster of ``H_x`` and ``mu2`` that of ``H_y`` whose
    representatives are nearest.  The left side is the top singular value of
    ``V1^T V2``.  On the right side, cluster extents are used
    conservatively: the larger cluster contributes its smallest magnitude and
    the smaller one its largest.  Returns ``(lhs, rhs)``.
    """
    K = _resolve_K(phase, K)
    dx, dy = decompose(phase, x), decompose(phase, y)
    c1, c2 = dx.cluster_of(mu1), dy.cluster_of(mu2)
    V1, V2 = dx.cluster_basis(c1), dy.cluster_basis(c2)
    lhs = float(np.linalg.svd(V1.T @ V2, compute_uv=False)[0])
    return lhs, _pert_rhs(_cluster_extent(dx, dx.clusters()[c1]),
                          _cluster_extent(dy, dy.clusters()[c2]),
                          K * float(np.linalg.norm(np.subtract(x, y))))


def _pert_rhs(ext1, ext2, shift):
    (lo1, hi1), (lo2, hi2) = ext1, ext2
    big_lo, small_hi = (lo1, hi2) if hi1 >= hi2 else (lo2, hi1)
    if big_lo == 0.0:
        return math.inf
    return (small_hi + shift) / big_lo


def gap_persistence_check(phase, x, r, s, delta, samples=64, seed=0, K=None):
    """Check both rank-persistence statements for a ball ``B(x, r)``.

    With ``k = loc_rank(x, r, s)``, verifies at sampled ``y`` in
    ``B(x, delta r)`` that ``loc_rank(y, (1 - delta^{1/3}/s)^3 r, s) >= k``,
    and that the sampled ``rank_s`` of ``B(x, (s/(s+1))^3 r)`` is ``>= k``.
    """
    if not 0 < delta < s ** 3:
        raise ValueError("need 0 < delta < s^3")
    K = _resolve_K(phase, K)
    k = loc_rank(phase, x, r, s, K)
    Y = ball(phase, x, delta * r, K).sample(samples, seed=seed)
    r1 = (1.0 - delta ** (1 / 3) / s) ** 3 * r
    ok1 = bool(np.all(loc_rank_dec(decompose(phase, Y), r1, s, K) >= k))
    inner = ball(phase, x, (s / (s + 1.0)) ** 3 * r, K)
    ok2 = rank_s(phase, inner, s, samples=samples, seed=seed + 1) >= k
    return ok1 and ok2
