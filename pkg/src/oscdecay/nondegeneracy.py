"""
Third-derivative nondegeneracy check and the degeneracy dimension k.

For ``mu >= 0`` let ``V_{mu,x}`` be the span of eigenvectors of ``H_x`` with
``|eigenvalue| <= mu``.  The condition asks for constants ``K' > 0, M, R`` such
that for every ``mu <= M`` and unit ``v`` in ``V_{mu,x}`` some unit ``w`` in
``V_{R mu,x}`` has ``(v.grad)^2 (w.grad) Phi(y) >= K'`` for all ``y``.

The checker samples ``x`` and ``v`` and searches ``w``; the reported margin is
the minimum over sampled ``(x, mu, v)`` of the best ``w`` found, so it is a
witness search rather than a proof.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import norm as _normal
from scipy.stats import qmc

from .phase_model import Box
from .spectral_geometry import decompose

V_DIRECTIONS = 64


def _points(domain, grid):
    if isinstance(grid, (int, np.integer)):
        return domain.grid(int(grid))
    return np.atleast_2d(np.asarray(grid, dtype=float))


def v_space(phase, x, mu):
    """Orthonormal basis (columns) of ``V_{mu,x}``.

    Membership is decided per cluster with the cluster tolerance, so a
    cluster is included whole or not at all.
    """
    if mu < 0:
        raise ValueError("mu must be nonnegative")
    dec = decompose(phase, x)
    keep = dec.magnitudes <= mu + dec.tol
    return dec.eigenvectors[:, keep]


def sphere_directions(d, seed=0, per_dim=V_DIRECTIONS):
    """Unit vectors in R^d used to sample ``v``.

    ``d = 1`` gives ``+-1``; ``d = 2`` gives ``per_dim`` equally spaced angles;
    larger ``d`` gives ``per_dim * (d - 1)`` scrambled-Sobol normal directions.
    """
    if d == 1:
        return np.array([[1.0], [-1.0]])
    if d == 2:
        t = 2 * np.pi * np.arange(per_dim) / per_dim
        return np.stack([np.cos(t), np.sin(t)], axis=1)
    m = per_dim * (d - 1)
    U = qmc.Sobol(d=d, scramble=True, seed=seed).random(1 << math.ceil(math.log2(m)))[:m]
    G = _normal.ppf(np.clip(U, 1e-12, 1 - 1e-12))
    G = np.vstack([G, np.eye(d)])
    return G / np.linalg.norm(G, axis=1, keepdims=True)


@dataclass
class NondegenReport:
    M: float
    R: float
    margin: float
    k_inf: int
    witnesses: list = field(default_factory=list)
    samples: dict = field(default_factory=dict)
    failed_empty: bool = False

    @property
    def satisfied(self):
        return self.margin > 0

    def to_json(self):
        return {"M": self.M, "R": self.R, "K_prime_margin": self.margin,
                "k_inf": self.k_inf, "satisfied": self.satisfied,
                "empty_V_failure": self.failed_empty,
                "witnesses": self.witnesses, "samples": self.samples}


def _best_w(g_all, W, rng, restarts, iters=200):
    """Max over unit ``w`` in span(W) of ``min_y g_y . w``.

    ``g_all`` has one row per ``y`` (the covector ``T_y(v, v, .)``).  For a
    single row the answer is exact: ``|P_W g|``.  Otherwise candidates from
    each row and random directions are improved by projected supergradient
    ascent; the result is a certified lower bound on the true maximum.
    """
    G = g_all @ W                     # coordinates in the basis of W
    if G.shape[0] == 1 or np.allclose(G, G[0], rtol=0, atol=1e-14 * (1 + np.abs(G).max())):
        g = G[0]
        nrm = np.linalg.norm(g)
        u = g / nrm if nrm > 0 else np.eye(len(g))[0]
        return float(nrm), W @ u
    d = G.shape[1]
    cands = G / np.maximum(np.linalg.norm(G, axis=1, keepdims=True), 1e-300)
    cands = np.vstack([cands, G.mean(0, keepdims=True), rng.standard_normal((restarts, d))])
    cands /= np.maximum(np.linalg.norm(cands, axis=1, keepdims=True), 1e-300)
    best_val, best_u = -np.inf, cands[0]
    for u in cands:
        val = np.min(G @ u)
        step = 0.5
        for _ in range(iters):
            j = np.argmin(G @ u)
            trial = u + step * G[j] / max(np.linalg.norm(G[j]), 1e-300)
            trial /= np.linalg.norm(trial)
            tv = np.min(G @ trial)
            if tv > val:
                u, val = trial, tv
            else:
                step *= 0.5
                if step < 1e-10:
                    break
        if val > best_val:
            best_val, best_u = val, u
    return float(best_val), W @ best_u


def check_condition(phase, domain, M, R=1.0, grid=5, y_grid=None, seed=0,
                    restarts=64, max_witnesses=5):
    """Estimate the nondegeneracy margin ``K'`` of ``phase`` on ``domain``.

    Parameters
    ----------
    phase : PolynomialPhase
    domain : Box
    M, R : float
        Constants of the condition; ``M > 0`` and ``R >= 1``.
    grid : int or array
        Points ``x`` (grid points per axis, or explicit points).
    y_grid : int or array, optional
        Points ``y`` for the "for all y" clause; defaults to ``grid``.  For
        cubic phases the third derivative is constant and ``y`` is irrelevant.
    """
    if M <= 0 or R < 1:
        raise ValueError("need M > 0 and R >= 1")
    rng = np.random.default_rng(seed)
    X = _points(domain, grid)
    if phase.degree <= 3:
        Ty = phase.third_tensor(np.zeros((1, phase.n)))
    else:
        Ty = phase.third_tensor(_points(domain, grid if y_grid is None else y_grid))
    margin, failed = math.inf, False
    records = []
    n_pairs = 0
    for x in X:
        dec = decompose(phase, x)
        mags = np.unique(dec.magnitudes[dec.magnitudes <= M + dec.tol])
        for mu in list(mags) + [M]:
            V = v_space(phase, x, mu)
            if V.shape[1] == 0:
                continue
            W = v_space(phase, x, R * mu)
            if W.shape[1] == 0:
                failed = True
                margin = -math.inf
                continue
            Vs = sphere_directions(V.shape[1], seed=seed) @ V.T
            n_pairs += len(Vs)
            if len(Ty) == 1:
                # constant tensor: the best w is along P_W T(v, v, .), exactly
                G = np.einsum("ijk,mi,mj->mk", Ty[0], Vs, Vs) @ W
                vals = np.linalg.norm(G, axis=1)
                j = int(np.argmin(vals))
                g = G[j]
                w = W @ (g / vals[j] if vals[j] > 0 else np.eye(W.shape[1])[0])
                val, v = float(vals[j]), Vs[j]
            else:
                val, v, w = math.inf, None, None
                for vv in Vs:
                    g_all = np.einsum("yijk,i,j->yk", Ty, vv, vv)
                    cand, ww = _best_w(g_all, W, rng, restarts)
                    if cand < val:
                        val, v, w = cand, vv, ww
            margin = min(margin, val)
            records.append((val, x, float(mu), v, w))
    records.sort(key=lambda t: t[0])
    witnesses = [{"x": x.tolist(), "mu": mu, "v": v.tolist(), "w": w.tolist(), "value": val}
                 for val, x, mu, v, w in records[:max_witnesses]]
    samples = {"x_points": int(len(X)), "y_points": int(len(Ty)),
               "v_w_pairs": int(n_pairs), "v_directions_2d": V_DIRECTIONS,
               "w_restarts": int(restarts)}
    return NondegenReport(float(M), float(R), float(margin),
                          infimum_k(phase, domain, M, X), witnesses, samples, failed)


def infimum_k(phase, support, M, grid=5):
    """Minimum over sampled support points of ``dim V_{M,x}``."""
    X = _points(support, grid)
    dec = decompose(phase, X)
    dims = np.sum(dec.magnitudes <= M + dec.tol[..., None], axis=-1)
    return int(dims.min())
