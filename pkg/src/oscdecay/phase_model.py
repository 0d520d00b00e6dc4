"""
Polynomial phase functions, amplitudes and integration domains.

A phase is stored as a sparse map from exponent tuples to real coefficients.
Derivatives up to order three are obtained by exact differentiation of that
map, so every downstream quantity (Hessians, third-derivative tensors, norms,
balls) is free of finite-difference error.
"""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
from numpy.polynomial import polynomial as npoly
from scipy.optimize import minimize

#: Floor substituted for the third-derivative bound when a phase has K = 0.
K_MIN = 1e-8


def _as_points(x, n):
    """Return ``x`` as an (m, n) float array plus a flag telling if it was 1-D."""
    arr = np.asarray(x, dtype=float)
    single = arr.ndim == 1
    if single:
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[1] != n:
        raise ValueError(f"expected points of dimension {n}, got shape {np.shape(x)}")
    return arr, single


@dataclass(frozen=True)
class PolynomialPhase:
    """Real polynomial phase in ``n`` variables.

    Parameters
    ----------
    n : int
        Number of variables.
    terms : tuple of (exponents, coefficient)
        Exponent tuples of length ``n``, sorted lexicographically and unique.
        Use :meth:`from_terms` to build one from an arbitrary mapping.
    max_degree : int
        Capacity bound on the total degree of any term.
    name : str
        Optional catalog label.
    K : float, optional
        Cached third-derivative bound (see :func:`bound_K`).  When ``None``
        it is computed lazily over the unit box ``[-1, 1]^n``.
    """

    n: int
    terms: tuple
    max_degree: int = 4
    name: str = field(default="", compare=False)
    K: float | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("dimension must be positive")
        for exps, _ in self.terms:
            if len(exps) != self.n:
                raise ValueError(f"exponent {exps} does not have length {self.n}")
            if any(e < 0 for e in exps):
                raise ValueError(f"negative exponent in {exps}")
            if sum(exps) > self.max_degree:
                raise ValueError(
                    f"term {exps} has degree {sum(exps)} > max_degree {self.max_degree}")

    @classmethod
    def from_terms(cls, n, terms, max_degree=4, name="", K=None):
        """Build a phase from a mapping or an iterable of ``(exponents, coeff)``."""
        items = terms.items() if isinstance(terms, Mapping) else terms
        acc: dict[tuple, float] = {}
        for exps, coeff in items:
            key = tuple(int(e) for e in exps)
            acc[key] = acc.get(key, 0.0) + float(coeff)
        cleaned = tuple(sorted((k, v) for k, v in acc.items() if v != 0.0))
        return cls(n=n, terms=cleaned, max_degree=max_degree, name=name, K=K)

    @classmethod
    def from_symmetric_tensor(cls, T, name=""):
        """Homogeneous cubic ``p(x) = T(x, x, x) / 6`` for a symmetric 3-tensor.

        With this normalisation the third-derivative tensor of ``p`` is ``T``.
        """
        T = np.asarray(T, dtype=float)
        n = T.shape[0]
        acc: dict[tuple, float] = {}
        for i, j, k in itertools.product(range(n), repeat=3):
            e = [0] * n
            e[i] += 1
            e[j] += 1
            e[k] += 1
            key = tuple(e)
            acc[key] = acc.get(key, 0.0) + T[i, j, k] / 6.0
        return cls.from_terms(n, acc, max_degree=3, name=name)

    # -- basic structure -------------------------------------------------

    @property
    def coefficients(self) -> dict:
        return dict(self.terms)

    @cached_property
    def degree(self) -> int:
        return max((sum(e) for e, _ in self.terms), default=0)

    @cached_property
    def _exponents(self):
        if not self.terms:
            return np.zeros((0, self.n), dtype=int)
        return np.array([e for e, _ in self.terms], dtype=int)

    @cached_property
    def _coeffs(self):
        return np.array([c for _, c in self.terms], dtype=float)

    def with_K(self, K):
        """Copy of the phase with the third-derivative bound cached."""
        return PolynomialPhase(self.n, self.terms, self.max_degree, self.name, float(K))

    @property
    def boundedness_constant(self) -> float:
        """Third-derivative bound, computed over ``[-1, 1]^n`` if not cached."""
        if self.K is not None:
            return self.K
        return self._default_K

    @cached_property
    def _default_K(self):
        return bound_K(self, Box.cube(self.n, 1.0))

    @property
    def K_eff(self) -> float:
        """Third-derivative bound with the ``K_MIN`` floor applied."""
        return max(self.boundedness_constant, K_MIN)

    def is_separable(self) -> bool:
        """True when every term involves at most one variable."""
        return all(sum(1 for e in exps if e) <= 1 for exps, _ in self.terms)

    def split_separable(self):
        """Split a separable phase into ``n`` one-variable phases.

        Constant terms are attached to the first factor.
        """
        if not self.is_separable():
            raise ValueError("phase is not separable")
        parts = [dict() for _ in range(self.n)]
        for exps, c in self.terms:
            axis = next((i for i, e in enumerate(exps) if e), 0)
            parts[axis][(exps[axis],)] = parts[axis].get((exps[axis],), 0.0) + c
        return [PolynomialPhase.from_terms(1, p, self.max_degree, f"{self.name}[{i}]")
                for i, p in enumerate(parts)]

    def translate(self, a):
        """Return the phase ``x -> Phi(x - a)``."""
        a = np.asarray(a, dtype=float)
        acc: dict[tuple, float] = {}
        for exps, c in self.terms:
            # prod_i (x_i - a_i)^{e_i}, expanded per variable
            per_var = []
            for e, ai in zip(exps, a):
                per_var.append([(k, math.comb(e, k) * (-ai) ** (e - k)) for k in range(e + 1)])
            for combo in itertools.product(*per_var):
                key = tuple(k for k, _ in combo)
                acc[key] = acc.get(key, 0.0) + c * math.prod(v for _, v in combo)
        return PolynomialPhase.from_terms(self.n, acc, self.max_degree, self.name, self.K)

    def add_constant(self, c):
        acc = self.coefficients
        zero = (0,) * self.n
        acc[zero] = acc.get(zero, 0.0) + c
        return PolynomialPhase.from_terms(self.n, acc, self.max_degree, self.name, self.K)

    # -- evaluation --------------------------------------------------------

    @cached_property
    def _tables(self):
        """Derivative tables: order k -> (reduced exponents, scatter matrix).

        Order-k derivatives at points X are ``prod(X ** R, -1) @ S`` reshaped
        to ``(m,) + (n,) * k``.
        """
        n = self.n
        E, c = self._exponents, self._coeffs
        tables = {}
        for order in range(4):
            rows: dict[tuple, int] = {}
            entries = []
            for t in range(len(c)):
                # only variables present in the monomial can carry a derivative
                support = [int(i) for i in np.flatnonzero(E[t])]
                for idx in itertools.product(support, repeat=order):
                    e = E[t].copy()
                    factor = c[t]
                    for i in idx:
                        factor *= e[i]
                        e[i] -= 1
                    if factor == 0.0:
                        continue
                    key = tuple(e)
                    r = rows.setdefault(key, len(rows))
                    flat = np.ravel_multi_index(idx, (n,) * order) if order else 0
                    entries.append((r, flat, factor))
            R = np.array(list(rows), dtype=int).reshape(len(rows), n)
            S = np.zeros((len(rows), n ** order))
            for r, flat, f in entries:
                S[r, flat] += f
            tables[order] = (R, S)
        return tables

    def _derivative(self, x, order):
        X, single = _as_points(x, self.n)
        R, S = self._tables[order]
        if R.shape[0] == 0:
            out = np.zeros((X.shape[0],) + (self.n,) * order)
        else:
            monos = np.prod(X[:, None, :] ** R[None, :, :], axis=2)
            out = (monos @ S).reshape((X.shape[0],) + (self.n,) * order)
        return out[0] if single else out

    def value(self, x):
        """Phase value at one point ``(n,)`` or many points ``(m, n)``."""
        return self._derivative(x, 0)

    __call__ = value

    def gradient(self, x):
        return self._derivative(x, 1)

    def hessian(self, x):
        H = self._derivative(x, 2)
        return 0.5 * (H + np.swapaxes(H, -1, -2))

    def third_tensor(self, x):
        return self._derivative(x, 3)

    def trilinear(self, x, w1, w2, w3):
        """``(w1.grad)(w2.grad)(w3.grad) Phi(x)``."""
        T = self.third_tensor(x)
        return np.einsum("...ijk,...i,...j,...k->...", T, w1, w2, w3)

    # -- tensor-grid evaluation (used by quadrature, n small) ------------

    @cached_property
    def dense_coefficients(self):
        """Coefficient array ``C[e_1, ..., e_n]`` (only sensible for small n)."""
        if self.n > 4:
            raise ValueError("dense coefficients only supported for n <= 4")
        D = max(self.degree, 0)
        C = np.zeros((D + 1,) * self.n)
        for exps, c in self.terms:
            C[exps] += c
        return C

    def dense_derivative(self, axis):
        """Dense coefficients of the partial derivative along ``axis``."""
        C = self.dense_coefficients
        if C.shape[axis] == 1:
            return np.zeros_like(C)
        return npoly.polyder(C, axis=axis)

    def to_json(self):
        return {"name": self.name, "n": self.n,
                "terms": [[list(e), c] for e, c in self.terms]}


def grid_eval(coef, axes):
    """Evaluate dense polynomial coefficients on the tensor grid ``axes``.

    Returns an array of shape ``tuple(len(a) for a in axes)``.
    """
    out = coef
    # contract the leading coefficient axis each time; the grid axis is appended
    for pts in axes:
        V = npoly.polyvander(np.asarray(pts, dtype=float), out.shape[0] - 1)
        out = np.moveaxis(np.tensordot(V, out, axes=(1, 0)), 0, -1)
    return out


# -- catalog -----------------------------------------------------------------

def _sum_cubes_plus_squares(n, k):
    terms = {}
    for i in range(n):
        e = [0] * n
        e[i] = 3 if i < k else 2
        terms[tuple(e)] = 1.0
    return terms


def model_phase(n, k, M=2.0, cubic_coeff=1.0):
    """``cubic_coeff * sum_{i<k} x_i^3 + (M/2) sum_{i>=k} x_i^2``.

    At the origin the Hessian is ``diag(0,...,0, M,...,M)`` with ``k`` zeros.
    """
    terms = {}
    for i in range(n):
        e = [0] * n
        e[i] = 3 if i < k else 2
        terms[tuple(e)] = cubic_coeff if i < k else 0.5 * M
    return PolynomialPhase.from_terms(n, terms, name=f"model-n{n}-k{k}")


def phase_from_json(spec):
    """Build a phase from ``{"name", "n", "terms": [[exponents, coeff], ...]}``."""
    unknown = set(spec) - {"name", "n", "terms", "max_degree"}
    if unknown:
        raise ValueError(f"unknown phase keys: {sorted(unknown)}")
    n = int(spec["n"])
    terms = [(tuple(e), float(c)) for e, c in spec["terms"]]
    max_degree = int(spec.get("max_degree", max([4] + [sum(e) for e, _ in terms])))
    return PolynomialPhase.from_terms(n, terms, max_degree=max_degree,
                                      name=spec.get("name", ""))


def load_catalog(path=None):
    """Load a JSON phase catalog (a list of phase specs) keyed by name."""
    if path is None:
        text = resources.files("oscdecay").joinpath("catalog.json").read_text()
    else:
        text = Path(path).read_text()
    return {entry["name"]: phase_from_json(entry) for entry in json.loads(text)}


def get_phase(name):
    """Look a phase up by name.

    Besides the catalog file this understands ``random-cubic-n<N>[-s<seed>]``
    and ``model-n<N>-k<K>``.
    """
    if name.startswith("random-cubic-n"):
        from .generic_cubic import sample_cubic
        rest = name[len("random-cubic-n"):]
        n_part, _, seed_part = rest.partition("-s")
        return sample_cubic(int(n_part), int(seed_part) if seed_part else 0)
    if name.startswith("model-n"):
        n_part, _, k_part = name[len("model-n"):].partition("-k")
        return model_phase(int(n_part), int(k_part))
    catalog = load_catalog()
    if name not in catalog:
        raise KeyError(f"unknown phase {name!r}; known: {sorted(catalog)}")
    return catalog[name]


# -- amplitudes and domains ---------------------------------------------------

def smooth_bump(t):
    """``exp(1 - 1/(1 - t^2))`` on ``|t| < 1``, zero elsewhere; peak value 1."""
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    inside = np.abs(t) < 1.0
    ti = t[inside]
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - ti * ti))
    return out


def cosine_window(t):
    t = np.asarray(t, dtype=float)
    return np.where(np.abs(t) < 1.0, np.cos(0.5 * np.pi * t) ** 2, 0.0)


_PROFILES = {"smooth-bump": smooth_bump, "cosine-window": cosine_window}


@dataclass(frozen=True)
class Box:
    """Axis-aligned box ``prod [lower_i, upper_i]``."""

    lower: tuple
    upper: tuple

    def __post_init__(self):
        if len(self.lower) != len(self.upper):
            raise ValueError("lower and upper must have equal length")
        if any(lo >= hi for lo, hi in zip(self.lower, self.upper)):
            raise ValueError("box must have positive width in every axis")

    @classmethod
    def cube(cls, n, half_width, center=None):
        c = np.zeros(n) if center is None else np.asarray(center, dtype=float)
        return cls(tuple(c - half_width), tuple(c + half_width))

    @property
    def n(self):
        return len(self.lower)

    @property
    def volume(self):
        return float(np.prod(np.subtract(self.upper, self.lower)))

    def grid(self, per_axis):
        axes = [np.linspace(lo, hi, per_axis) for lo, hi in zip(self.lower, self.upper)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def vertices(self):
        return np.array(list(itertools.product(*zip(self.lower, self.upper))), dtype=float)

    def contains(self, X, margin=0.0):
        X = np.atleast_2d(X)
        lo = np.asarray(self.lower) + margin
        hi = np.asarray(self.upper) - margin
        return np.all((X >= lo) & (X <= hi), axis=1)

    def expanded(self, factor):
        lo, hi = np.asarray(self.lower), np.asarray(self.upper)
        mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo) * factor
        return Box(tuple(mid - half), tuple(mid + half))


#: Domains are boxes; the name mirrors the convex set in which amplitudes live.
Domain = Box


@dataclass(frozen=True)
class Amplitude:
    """Compactly supported amplitude with values in [0, 1].

    ``product`` amplitudes are ``prod_i f((x_i - c_i) / rho_i)``; ``radial``
    ones are ``f(|(x - c) / rho|)``.  ``f`` is the smooth bump
    ``exp(1 - 1/(1 - t^2))`` or the window ``cos^2(pi t / 2)``.
    """

    kind: str = "smooth-bump"
    center: tuple = (0.0,)
    radius: tuple = (0.5,)
    profile: str = "product"

    def __post_init__(self):
        if self.kind not in _PROFILES:
            raise ValueError(f"unknown amplitude kind {self.kind!r}")
        if self.profile not in ("product", "radial"):
            raise ValueError(f"unknown amplitude profile {self.profile!r}")
        if len(self.center) != len(self.radius):
            raise ValueError("center and radius must have the same length")
        if any(r <= 0 for r in self.radius):
            raise ValueError("radius must be positive")

    @classmethod
    def centered(cls, n, radius=0.5, kind="smooth-bump", profile="product"):
        return cls(kind, (0.0,) * n, (float(radius),) * n, profile)

    @property
    def n(self):
        return len(self.center)

    def support_box(self) -> Box:
        c, r = np.asarray(self.center), np.asarray(self.radius)
        return Box(tuple(c - r), tuple(c + r))

    def axis_factors(self):
        """Per-axis callables for product amplitudes, else ``None``."""
        if self.profile != "product":
            return None
        f = _PROFILES[self.kind]
        return [lambda t, c=c, r=r: f((np.asarray(t) - c) / r)
                for c, r in zip(self.center, self.radius)]

    def __call__(self, x):
        X, single = _as_points(x, self.n)
        T = (X - np.asarray(self.center)) / np.asarray(self.radius)
        f = _PROFILES[self.kind]
        if self.profile == "product":
            out = np.prod(f(T), axis=1)
        else:
            out = f(np.linalg.norm(T, axis=1))
        return out[0] if single else out

    def translate(self, a):
        return Amplitude(self.kind, tuple(np.asarray(self.center) + np.asarray(a)),
                         self.radius, self.profile)

    def to_json(self):
        return {"kind": self.kind, "center": list(self.center),
                "radius": list(self.radius), "profile": self.profile}


# -- the boundedness constant ---------------------------------------------------

def _cubic_form_max(T, restarts, rng, iters=300):
    """Max of ``T(w, w, w)`` over the unit sphere for a symmetric 3-tensor.

    Shifted symmetric higher-order power iteration from several starts, with
    the best candidates polished by BFGS on the sphere.  Since the form is
    odd, this is also the max of ``|T(w, w, w)|`` and, for symmetric tensors,
    of ``|T(w1, w2, w3)|`` over unit ``w1, w2, w3``.
    """
    n = T.shape[0]
    if not np.any(T):
        return 0.0
    # shift large enough that the iteration map stays away from zero
    alpha = 2.0 * np.sqrt(np.sum(T * T))
    W = rng.standard_normal((restarts, n))
    W = np.vstack([W, np.eye(n), -np.eye(n)])
    W /= np.linalg.norm(W, axis=1, keepdims=True)
    for _ in range(iters):
        G = np.einsum("ijk,rj,rk->ri", T, W, W) + alpha * W
        W_new = G / np.linalg.norm(G, axis=1, keepdims=True)
        if np.max(np.abs(W_new - W)) < 1e-13:
            W = W_new
            break
        W = W_new
    vals = np.einsum("ijk,ri,rj,rk->r", T, W, W, W)

    def f(u):
        nu = np.linalg.norm(u)
        w = u / nu
        g = np.einsum("ijk,j,k->i", T, w, w)
        val = g @ w
        grad = 3.0 * (g - val * w) / nu
        return -val, -grad

    best = float(vals.max())
    for r in np.argsort(vals)[-4:]:
        res = minimize(f, W[r], jac=True, method="BFGS", options={"gtol": 1e-14})
        best = max(best, float(-res.fun))
    return best


def bound_K(phase, domain=None, restarts=32, per_axis=5, seed=0):
    """Upper estimate of ``sup |(w1.grad)(w2.grad)(w3.grad) Phi|`` over a box.

    The third-derivative tensor is sampled on a grid of the box (plus its
    vertices, where the sup is attained for degree <= 4 because the tensor is
    affine in x there) and the cubic-form maximum is found by power
    iteration with ``restarts`` random starts.  Returns 0 for phases of
    degree <= 2; geometry code substitutes ``K_MIN`` in that case.
    """
    if phase.degree <= 2:
        return 0.0
    if domain is None:
        domain = Box.cube(phase.n, 1.0)
    if phase.degree == 3:
        pts = np.zeros((1, phase.n))
    else:
        pts = domain.grid(per_axis) if per_axis ** phase.n <= 4096 else \
            np.random.default_rng(seed).uniform(domain.lower, domain.upper, (4096, phase.n))
        if phase.n <= 12:
            pts = np.vstack([pts, domain.vertices()])
    tensors = phase.third_tensor(pts)
    tensors = np.unique(np.round(tensors.reshape(len(pts), -1), 14), axis=0)
    rng = np.random.default_rng(seed)
    best = 0.0
    for flat in tensors:
        T = flat.reshape((phase.n,) * 3)
        best = max(best, _cubic_form_max(T, restarts, rng))
    # round-off guard so the estimate dominates every sampled trilinear value
    return best * (1.0 + 1e-10)
