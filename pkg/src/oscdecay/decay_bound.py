"""
The sublevel bound, the gradient scale r(y), the partition of unity and the
dyadic volume sum.

With ``r(y) = min(N*_y[grad Phi(y)], R_max)`` the oscillatory integral is
controlled (up to a constant) by

    rhs(lam) = int_Omega dy / (1 + (lam r(y))^N) + |Omega| / (lam R_max)^N.

The y-integral is computed on an adaptive cell tree whose cells are kept
smaller than the nonisotropic ball on which ``r`` is roughly constant.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .phase_model import Box
from .spectral_geometry import (bracket, decompose, seminorm_dec, semi_axes_dec,
                                unit_ball_volume, ball, norm_N, _resolve_K)

THETA = 0.5
MAX_LEVELS = 40
MAX_CELLS = 2_000_000
REFINE_TOL = 0.10


class GridTooCoarse(RuntimeError):
    """Raised when halving the cell-size ratio changes the bound by more than 10%."""


def r_values(phase, Y, R_max, K=None):
    """``r(y)`` at many points; zero where the gradient vanishes."""
    K = _resolve_K(phase, K)
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    dec = decompose(phase, Y)
    g = phase.gradient(Y)
    return np.minimum(seminorm_dec(dec, g, K, dual=True), R_max)


def r_of(phase, y, R_max, K=None):
    """``min(N*_y[grad Phi(y)], R_max)``; equals 0 at critical points."""
    if R_max <= 0:
        raise ValueError("R_max must be positive")
    return float(r_values(phase, np.asarray(y, dtype=float)[None, :], R_max, K)[0])


def default_R_max(phase, support, domain, samples=9, K=None):
    """Largest ``R`` with ``B(y, R)`` inside ``domain`` for sampled ``y`` in ``support``.

    Ball extents along coordinate axes come from the support function of the
    ellipsoid; ``R`` is found by bisection on ``log R`` (extents grow with R).
    """
    K = _resolve_K(phase, K)
    Y = support.grid(samples)
    dec = decompose(phase, Y)
    room = np.minimum(Y - np.asarray(domain.lower), np.asarray(domain.upper) - Y)
    if np.any(room <= 0):
        raise ValueError("domain must contain the support with positive margin")

    def fits(R):
        rho = semi_axes_dec(dec, np.full(len(Y), R), K)
        extent = np.sqrt(np.einsum("mij,mj->mi", dec.eigenvectors ** 2, rho ** 2))
        return bool(np.all(extent <= room))

    lo, hi = math.log(1e-16), math.log(1e16)
    if not fits(math.exp(lo)):
        raise ValueError("no admissible R_max")
    if fits(math.exp(hi)):
        return math.exp(hi)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        lo, hi = (mid, hi) if fits(math.exp(mid)) else (lo, mid)
        if hi - lo < 1e-12:
            break
    return math.exp(lo)


# -- adaptive cells ---------------------------------------------------------------

_G2 = np.array([-1.0, 1.0]) / math.sqrt(3.0)


def _gauss_points(centers, half):
    """2-point Gauss tensor nodes per cell (weights are equal)."""
    n = centers.shape[1]
    offs = np.array(np.meshgrid(*([_G2] * n), indexing="ij")).reshape(n, -1).T
    pts = centers[:, None, :] + half[:, None, :] * offs[None, :, :]
    w = np.prod(2 * half, axis=1)[:, None] / offs.shape[0] * np.ones(offs.shape[0])
    return pts.reshape(-1, n), w.reshape(-1)


def _min_semi_axis(phase, C, r, K):
    dec = decompose(phase, C)
    return semi_axes_dec(dec, r, K).min(axis=1)


def build_cells(phase, box, R_max, lam_max, theta=THETA, base=8, K=None):
    """Leaf cells (centers, half-widths) of the adaptive tree over ``box``."""
    K = _resolve_K(phase, K)
    n = box.n
    lo, hi = np.asarray(box.lower), np.asarray(box.upper)
    h = (hi - lo) / base
    idx = np.array(np.meshgrid(*([np.arange(base)] * n), indexing="ij")).reshape(n, -1).T
    centers = lo + (idx + 0.5) * h
    half = np.tile(h / 2, (len(centers), 1))
    leaves_c, leaves_h = [], []
    floor = 1.0 / lam_max if lam_max > 0 else R_max
    for level in range(MAX_LEVELS):
        r = r_values(phase, centers, R_max, K)
        scale = np.maximum(r, min(floor, R_max))
        size = 2 * half.max(axis=1)
        split = size > theta * _min_semi_axis(phase, centers, scale, K)
        leaves_c.append(centers[~split])
        leaves_h.append(half[~split])
        if not np.any(split):
            break
        c, hh = centers[split], half[split] / 2
        offs = np.array(np.meshgrid(*([[-1.0, 1.0]] * n), indexing="ij")).reshape(n, -1).T
        centers = (c[:, None, :] + hh[:, None, :] * offs[None]).reshape(-1, n)
        half = np.repeat(hh, len(offs), axis=0)
        if sum(len(x) for x in leaves_c) + len(centers) > MAX_CELLS:
            raise GridTooCoarse("adaptive cell limit reached")
    else:
        leaves_c.append(centers)
        leaves_h.append(half)
    return np.concatenate(leaves_c), np.concatenate(leaves_h)


@dataclass
class BoundProfile:
    """Sampled ``r(y)`` over the integration box and the resulting bound."""

    box: Box
    R_max: float
    N: int
    points: np.ndarray
    weights: np.ndarray
    r_values: np.ndarray
    singular_samples: int = 0
    refinement_delta: float = float("nan")
    cells: int = 0

    @property
    def volume(self):
        return self.box.volume

    def bound_integral(self, lam):
        """``int dy / (1 + (lam r(y))^N)`` for each ``lam`` (array or scalar)."""
        lam = np.atleast_1d(np.asarray(lam, dtype=float))
        good = self.r_values > 0
        r, w = self.r_values[good], self.weights[good]
        out = np.array([np.sum(w / (1.0 + (L * r) ** self.N)) for L in lam])
        return out

    def tail(self, lam):
        lam = np.atleast_1d(np.asarray(lam, dtype=float))
        with np.errstate(divide="ignore"):
            return np.where(lam > 0, self.volume / (lam * self.R_max) ** self.N, 0.0)

    def rhs(self, lam):
        return self.bound_integral(lam) + self.tail(lam)

    def summary(self):
        return {"R_max": self.R_max, "N": self.N, "cells": self.cells,
                "samples": int(len(self.r_values)),
                "singular_samples_excluded": self.singular_samples,
                "refinement_delta": self.refinement_delta,
                "r_min": float(self.r_values[self.r_values > 0].min()),
                "r_max": float(self.r_values.max())}


def bound_profile(phase, box, N, lam_max, R_max, theta=THETA, K=None):
    C, H = build_cells(phase, box, R_max, lam_max, theta, K=K)
    P, W = _gauss_points(C, H)
    r = r_values(phase, P, R_max, K)
    return BoundProfile(box, float(R_max), int(N), P, W, r, int(np.sum(r <= 0)),
                        cells=int(len(C)))


def sublevel_rhs(phase, amplitude, lam, N, theta=THETA, R_max=None, domain=None,
                 strict=True, K=None, return_profile=False):
    """Right-hand side of the sublevel bound over the amplitude support.

    ``lam`` may be an array.  The profile is rebuilt with ``theta / 2`` and
    the largest relative change over ``lam`` is stored as
    ``refinement_delta``; above 10% ``GridTooCoarse`` is raised when
    ``strict``.  Amplitude derivative norms are taken as one.
    """
    if N < 1:
        raise ValueError("N must be at least one")
    lam = np.atleast_1d(np.asarray(lam, dtype=float))
    support = amplitude.support_box()
    if domain is None:
        domain = support.expanded(2.0)
    if R_max is None:
        R_max = default_R_max(phase, support, domain, K=K)
    lam_max = float(np.max(lam)) if np.max(lam) > 0 else 1.0
    prof = bound_profile(phase, support, N, lam_max, R_max, theta, K)
    fine = bound_profile(phase, support, N, lam_max, R_max, theta / 2, K)
    a, b = prof.rhs(lam), fine.rhs(lam)
    fine.refinement_delta = float(np.max(np.abs(a - b) / b))
    if strict and fine.refinement_delta > REFINE_TOL:
        raise GridTooCoarse(f"refinement delta {fine.refinement_delta:.3g} exceeds 10%")
    out = fine.rhs(lam)
    return (out, fine) if return_profile else out


# -- partition of unity -----------------------------------------------------------

def _smooth_step(u):
    """C-infinity step: 0 for u <= 0, 1 for u >= 1."""
    u = np.asarray(u, dtype=float)
    with np.errstate(divide="ignore", over="ignore"):
        f = np.where(u > 0, np.exp(-1.0 / np.where(u > 0, u, 1.0)), 0.0)
        g = np.where(u < 1, np.exp(-1.0 / np.where(u < 1, 1.0 - u, 1.0)), 0.0)
    return f / (f + g)


def plateau(t):
    """Smooth bump equal to 1 on ``|t| <= 1/2`` and 0 on ``|t| >= 1``."""
    return _smooth_step(2.0 * (1.0 - np.abs(np.asarray(t, dtype=float))))


def partition_weight(phase, y, x, R_max, K=None):
    """``eta_y(x) = |B(y, r(y))|^{-1} phi(N_y[x - y, r(y)])``."""
    y = np.asarray(y, dtype=float)
    r = r_of(phase, y, R_max, K)
    if r <= 0:
        return 0.0
    b = ball(phase, y, r, K)
    t = norm_N(phase, y, np.asarray(x, dtype=float) - y, r, K)
    return float(plateau(t) / b.volume)


def partition_sum(phase, x, box, R_max, per_axis=200, K=None):
    """``Psi(x) = int eta_y(x) dy`` by midpoint quadrature over a grid of ``box``.

    ``x`` may be one point or an ``(m, n)`` array; the y-grid decomposition is
    shared across all of them.
    """
    K = _resolve_K(phase, K)
    n = box.n
    lo, hi = np.asarray(box.lower), np.asarray(box.upper)
    h = (hi - lo) / per_axis
    axes = [lo[i] + (np.arange(per_axis) + 0.5) * h[i] for i in range(n)]
    Y = np.stack([m.ravel() for m in np.meshgrid(*axes, indexing="ij")], axis=1)
    r = r_values(phase, Y, R_max, K)
    good = r > 0
    Y, r = Y[good], r[good]
    dec = decompose(phase, Y)
    a = bracket(dec.magnitudes, r[:, None], K)
    inv_vol = 1.0 / (unit_ball_volume(n) * np.prod(r[:, None] / a, axis=1))
    X = np.atleast_2d(np.asarray(x, dtype=float))
    out = np.empty(len(X))
    for i, xi in enumerate(X):
        c = dec.coords(xi - Y)
        t = np.sqrt(np.sum(c * c * a * a, axis=1)) / r
        out[i] = np.sum(plateau(t) * inv_vol) * np.prod(h)
    return out if np.ndim(x) == 2 else float(out[0])


# -- dyadic volume sum ------------------------------------------------------------------

@dataclass
class DyadicSum:
    value: float
    expected_exponent: float
    terms: int


def dyadic_volume_sum(phase, z_list, lam, N, k, M=None, K=None, j_max=4000):
    """``sum_i sum_{j>=0} 2^{-N j} |B(z_i, 2^j / lam)|``.

    The series is summed until a term drops below ``1e-17`` of the running
    total.  ``expected_exponent`` is ``-min(N, (n-k)/2 + k/3)``, the lam
    power predicted when the centers see ``k`` small and ``n - k`` large
    eigenvalues (``M`` is informational).
    """
    Z = np.atleast_2d(np.asarray(z_list, dtype=float))
    n = phase.n
    p = (n - k) / 2 + k / 3
    if N <= p:
        raise ValueError(f"series needs N > (n-k)/2 + k/3 = {p:.4g}")
    K = _resolve_K(phase, K)
    dec = decompose(phase, Z)
    w = unit_ball_volume(n)
    total, j = 0.0, 0
    chunk = 64
    while j < j_max:
        js = np.arange(j, j + chunk)
        r = 2.0 ** js / lam
        a = bracket(dec.magnitudes[:, None, :], r[None, :, None], K)
        vol = w * np.prod(r[None, :, None] / a, axis=2)          # (z, j)
        terms = 2.0 ** (-N * js) * vol.sum(axis=0)
        total += float(terms.sum())
        j += chunk
        if terms[-1] < 1e-17 * total:
            break
    return DyadicSum(total, -min(N, p), j)


def model_spectrum_phase(n, k, M=1e3, cubic_coeff=1.0):
    """``sum_{i<k} x_i^3 + (M/2) sum_{i>=k} x_i^2``: k null and n-k eigenvalues M at 0."""
    from .phase_model import model_phase
    return model_phase(n, k, M, cubic_coeff)


def dyadic_slope(phase, z_list, lambdas, N, k, K=None):
    """Least-squares log-log slope of the dyadic sum over ``lambdas``."""
    vals = [dyadic_volume_sum(phase, z_list, L, N, k, K=K).value for L in lambdas]
    return float(np.polyfit(np.log(lambdas), np.log(vals), 1)[0])
