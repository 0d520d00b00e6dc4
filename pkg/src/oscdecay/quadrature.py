"""
Panel Gauss-Legendre quadrature for I(lam, xi) = int exp(i lam (Phi + xi.x)) psi dx.

Each axis is cut into panels whose width keeps the phase variation per panel
below ``PHASE_BUDGET`` radians, and every panel carries ``GL_ORDER`` Gauss
nodes.  In several dimensions the first axis is meshed against the worst
case over the others, and each of its panels gets its own tensor mesh of
the remaining axes adapted to that strip.  A sweep over a tensor grid of
offsets ``xi`` reuses one mesh per ``lam``: the integrand is formed once and
contracted with ``exp(i lam xi_j x_j)`` along each axis.

Accuracy is validated by re-running with half the phase budget (twice the
panel count per axis) and reporting the change.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.stats import linregress

from .phase_model import Amplitude, PolynomialPhase, grid_eval, smooth_bump, cosine_window

GL_ORDER = 32
PHASE_BUDGET = 48.0
MIN_PANELS = 16
RATE_SAMPLES = 9
OTHER_SAMPLES = 33
SAFETY = 1.1
DEFAULT_NODE_BUDGET = 10 ** 8
REL_TOL = 1e-8
ABS_TOL = 1e-13
SWEEP_REFINE_TOL = 1e-6
BLOCK_ELEMENTS = 1 << 22

_GL_X, _GL_W = leggauss(GL_ORDER)


class BudgetExceeded(RuntimeError):
    """Raised when a computation would evaluate more nodes than allowed."""


class NodeCounter:
    def __init__(self, budget=DEFAULT_NODE_BUDGET):
        self.budget = budget
        self.used = 0

    def charge(self, count):
        if self.budget is not None and self.used + count > self.budget:
            raise BudgetExceeded(
                f"node budget {self.budget:.3g} exceeded ({self.used + count:.3g} requested)")
        self.used += count


# -- meshes --------------------------------------------------------------------

def axis_mesh(a, b, rate, lam, c=PHASE_BUDGET, min_panels=MIN_PANELS, with_panels=False):
    """Gauss nodes and weights on ``[a, b]`` adapted to a phase-rate bound.

    ``rate(x)`` bounds ``|d/dx (Phi + xi x)|`` pointwise.  Each of the
    ``min_panels`` base panels is split into ``ceil(|lam| h B / c)`` equal
    panels, where ``B`` is the sampled maximum of ``rate`` over the base
    panel times a safety factor.
    """
    edges = np.linspace(a, b, min_panels + 1)
    h = np.diff(edges)
    t = np.linspace(0.0, 1.0, RATE_SAMPLES)
    S = edges[:-1, None] + h[:, None] * t
    B = np.asarray(rate(S.ravel())).reshape(S.shape).max(axis=1) * SAFETY
    m = np.maximum(1, np.ceil(abs(lam) * h * B / c)).astype(int)
    width = np.repeat(h / m, m)
    offset = np.concatenate([np.arange(k) for k in m])
    starts = np.repeat(edges[:-1], m) + offset * width
    X = starts[:, None] + width[:, None] * (0.5 * (_GL_X + 1.0))
    W = width[:, None] * (0.5 * _GL_W)
    if with_panels:
        return X, W, starts, width
    return X, W


@dataclass
class TensorIntegrand:
    """Integrand data on a box: polynomial phase and amplitude.

    The amplitude is either a list of per-axis factors ``f_i(x_i)`` or a
    callable on points ``(m, n)``.
    """

    phase: PolynomialPhase
    lower: np.ndarray
    upper: np.ndarray
    factors: list | None = None
    amplitude: object = None

    @property
    def n(self):
        return self.phase.n

    def amplitude_grid(self, axes):
        if self.factors is not None:
            out = np.asarray(self.factors[0](axes[0]), dtype=float)
            for f, ax in zip(self.factors[1:], axes[1:]):
                out = np.multiply.outer(out, np.asarray(f(ax), dtype=float))
            return out
        mesh = np.meshgrid(*axes, indexing="ij")
        pts = np.stack([m.ravel() for m in mesh], axis=1)
        return self.amplitude(pts).reshape(mesh[0].shape)

    @classmethod
    def from_amplitude(cls, phase, amplitude: Amplitude):
        box = amplitude.support_box()
        factors = amplitude.axis_factors()
        return cls(phase, np.asarray(box.lower), np.asarray(box.upper), factors,
                   None if factors is not None else amplitude)


def _rate_fn(deriv_coef, axis, fixed_axes, xi_lo, xi_hi):
    """Bound for ``|d_axis Phi + xi|`` at x_axis, maximized over ``fixed_axes`` samples.

    ``fixed_axes`` lists the sample coordinates for every axis (the entry at
    ``axis`` is ignored).
    """
    def rate(x):
        axes = list(fixed_axes)
        axes[axis] = x
        G = grid_eval(deriv_coef, axes)
        G = np.moveaxis(G, axis, 0).reshape(len(x), -1)
        return np.maximum(np.abs(G + xi_lo), np.abs(G + xi_hi)).max(axis=1)
    return rate


def _contract(E, F):
    """Contract every axis of ``E`` with the matching ``F[i]`` (shape (k_i, m_i))."""
    out = E
    for Fi in F:
        # contract the leading axis, append the result axis at the end
        out = np.tensordot(Fi, out, axes=(1, 0))
        out = np.moveaxis(out, 0, -1)
    return out


def tensor_sweep_values(integrand, lam, xi_axes, c=PHASE_BUDGET, counter=None,
                        min_panels=MIN_PANELS):
    """``I(lam, xi)`` for every ``xi`` in the tensor grid ``xi_axes``.

    Returns a complex array of shape ``tuple(len(a) for a in xi_axes)`` and
    the number of integrand nodes used.
    """
    ph = integrand.phase
    n = ph.n
    coef = ph.dense_coefficients
    dcoef = [ph.dense_derivative(i) for i in range(n)]
    lo, hi = integrand.lower, integrand.upper
    xi_axes = [np.atleast_1d(np.asarray(a, dtype=float)) for a in xi_axes]
    xlo = [a.min() for a in xi_axes]
    xhi = [a.max() for a in xi_axes]
    samples = [np.linspace(lo[i], hi[i], OTHER_SAMPLES) for i in range(n)]
    X0, W0, starts, widths = axis_mesh(
        lo[0], hi[0], _rate_fn(dcoef[0], 0, samples, xlo[0], xhi[0]), lam, c, min_panels,
        with_panels=True)
    total = np.zeros(tuple(len(a) for a in xi_axes), dtype=complex)
    if n == 1:
        x, w = X0.ravel(), W0.ravel()
        if counter is not None:
            counter.charge(x.size)
        step = max(1, BLOCK_ELEMENTS // len(xi_axes[0]))
        for k in range(0, x.size, step):
            xb = x[k:k + step]
            E = np.exp(1j * lam * grid_eval(coef, [xb])) * integrand.amplitude_grid([xb]) \
                * w[k:k + step]
            total += np.exp(1j * lam * np.multiply.outer(xi_axes[0], xb)) @ E
        return total, x.size
    # first-axis panels, each with its own mesh of the remaining axes
    t = np.linspace(0.0, 1.0, RATE_SAMPLES)
    inner_meshes = []
    for p in range(X0.shape[0]):
        strip = starts[p] + widths[p] * t
        axes_p = []
        for i in range(1, n):
            fixed = list(samples)
            fixed[0] = strip
            Xi, Wi = axis_mesh(lo[i], hi[i], _rate_fn(dcoef[i], i, fixed, xlo[i], xhi[i]),
                               lam, c, min_panels)
            axes_p.append((Xi.ravel(), Wi.ravel()))
        inner_meshes.append(axes_p)
    count = sum(GL_ORDER * math.prod(len(x) for x, _ in m) for m in inner_meshes)
    if counter is not None:
        counter.charge(count)
    F0 = np.exp(1j * lam * np.multiply.outer(xi_axes[0], X0))          # (k0, P, G)
    for p, axes_p in enumerate(inner_meshes):
        xs = [X0[p]] + [x for x, _ in axes_p]
        ws = [W0[p]] + [w for _, w in axes_p]
        Wt = ws[0]
        for w in ws[1:]:
            Wt = np.multiply.outer(Wt, w)
        E = np.exp(1j * lam * grid_eval(coef, xs)) * integrand.amplitude_grid(xs) * Wt
        F = [F0[:, p, :]] + [np.exp(1j * lam * np.multiply.outer(xi_axes[i], xs[i]))
                             for i in range(1, n)]
        total += _contract(E, F)
    return total, count


# -- single integrals -------------------------------------------------------------

@dataclass
class QuadInfo:
    value: complex
    error: float
    flagged: bool
    nodes: int
    refinements: int


def _validated(fn, mass, max_refine=3, c=PHASE_BUDGET):
    """Run ``fn(c)`` with halving budgets until two runs agree."""
    prev, nodes = fn(c)
    used = nodes
    for k in range(1, max_refine + 1):
        cur, nodes = fn(c / 2 ** k)
        used += nodes
        err = float(np.max(np.abs(cur - prev)))
        if err <= REL_TOL * float(np.max(np.abs(cur))) + ABS_TOL * mass:
            return QuadInfo(complex(np.ravel(cur)[0]), err, False, used, k)
        prev = cur
    return QuadInfo(complex(np.ravel(cur)[0]), err, True, used, max_refine)


def _mass(integrand):
    vals, _ = tensor_sweep_values(integrand, 0.0, [[0.0]] * integrand.n)
    return float(abs(vals.ravel()[0]))


def integrate_tensor(integrand, lam, xi, full_output=False, budget=DEFAULT_NODE_BUDGET):
    xi = np.broadcast_to(np.asarray(xi, dtype=float), (integrand.n,))
    counter = NodeCounter(budget)
    info = _validated(lambda c: tensor_sweep_values(integrand, lam, [[v] for v in xi], c,
                                                    counter),
                      _mass(integrand))
    return info if full_output else info.value


def integrate_1d(phase1d, amplitude, lam, xi=0.0, full_output=False,
                 budget=DEFAULT_NODE_BUDGET):
    """``int exp(i lam (Phi(x) + xi x)) psi(x) dx`` in one variable.

    The result is refined until halving the panel widths changes it by at
    most ``1e-8 |I| + 1e-13 int psi``; otherwise the returned
    :class:`QuadInfo` (with ``full_output``) is flagged.
    """
    if phase1d.n != 1 or amplitude.n != 1:
        raise ValueError("integrate_1d needs one-variable phase and amplitude")
    return integrate_tensor(TensorIntegrand.from_amplitude(phase1d, amplitude), lam, xi,
                            full_output, budget)


def integrate_nd(phase, amplitude, lam, xi=None, full_output=False,
                 budget=DEFAULT_NODE_BUDGET):
    """Direct tensor quadrature in up to three variables."""
    if phase.n > 3:
        raise ValueError("direct quadrature supports n <= 3; use the factored "
                         "or radial paths")
    if amplitude.n != phase.n:
        raise ValueError("amplitude and phase dimensions differ")
    xi = np.zeros(phase.n) if xi is None else xi
    return integrate_tensor(TensorIntegrand.from_amplitude(phase, amplitude), lam, xi,
                            full_output, budget)


def integrate_factored(phases_1d, amplitudes_1d, lam, xi=None, budget=DEFAULT_NODE_BUDGET):
    """Product of one-dimensional integrals (separable phase and amplitude)."""
    if len(phases_1d) != len(amplitudes_1d):
        raise ValueError("need one amplitude per phase factor")
    xi = np.zeros(len(phases_1d)) if xi is None else np.asarray(xi, dtype=float)
    out = 1.0 + 0.0j
    for p, a, x in zip(phases_1d, amplitudes_1d, xi):
        out *= integrate_1d(p, a, lam, x, budget=budget)
    return out


RADIAL_PHASE = PolynomialPhase.from_terms(2, {(3, 0): -1.0, (1, 2): 1.0}, name="radial-reduced")


def radial_integrand(radius=0.6, kind="smooth-bump"):
    """Reduced planar integrand of ``-x1^3 + x1 |x'|^2`` in ``(x1, r = |x'|)``.

    The 4-D amplitude is ``b(x1/rho) b(|x'|/rho)``; integrating out the
    2-sphere gives the weight ``4 pi r^2`` on ``r >= 0``.
    """
    f = {"smooth-bump": smooth_bump, "cosine-window": cosine_window}[kind]
    factors = [lambda t: f(np.asarray(t) / radius),
               lambda t: 4.0 * np.pi * np.asarray(t) ** 2 * f(np.asarray(t) / radius)]
    return TensorIntegrand(RADIAL_PHASE, np.array([-radius, 0.0]),
                           np.array([radius, radius]), factors)


def integrate_radial_reduced(eps, lam, radius=0.6, full_output=False,
                             budget=DEFAULT_NODE_BUDGET):
    """``I(lam, (-eps, 0, 0, 0))`` for the 4-D counterexample, via the plane."""
    return integrate_tensor(radial_integrand(radius), lam, [-eps, 0.0], full_output, budget)


# -- sweeps ---------------------------------------------------------------------------

@dataclass
class IntegratorSpec:
    """What to integrate in a sweep.

    ``method`` is ``direct`` (tensor quadrature, n <= 3), ``factored``
    (separable phase and product amplitude) or ``radial`` (the reduced
    counterexample; ``xi`` is then the scalar ``-eps``).
    """

    method: str
    phase: PolynomialPhase | None = None
    amplitude: Amplitude | None = None
    radius: float = 0.6

    def __post_init__(self):
        if self.method not in ("direct", "factored", "radial"):
            raise ValueError(f"unknown method {self.method!r}")
        if self.method != "radial" and (self.phase is None or self.amplitude is None):
            raise ValueError("direct and factored sweeps need a phase and an amplitude")
        if self.method == "direct" and self.phase.n > 3:
            raise ValueError("direct quadrature supports n <= 3")
        if self.method == "factored":
            if not self.phase.is_separable() or self.amplitude.profile != "product":
                raise ValueError("factored method needs a separable phase and product amplitude")

    @property
    def xi_dim(self):
        return 1 if self.method == "radial" else self.phase.n


@dataclass
class DecaySweep:
    lambda_grid: np.ndarray
    xi_axes: list
    values: np.ndarray               # complex, (n_lambda,) + xi grid shape
    refinement_delta: np.ndarray     # per lambda, max |change| / row sup
    xi_refinement_delta: np.ndarray  # per lambda, (sup on 2x finer xi grid) / sup - 1
    nodes: int
    method: str
    fit_window: tuple = (0, 0)
    fitted_exponent: float = float("nan")
    stderr: float = float("nan")
    flagged: list = field(default_factory=list)

    @property
    def abs_values(self):
        return np.abs(self.values)

    @property
    def sup_over_xi(self):
        a = self.abs_values
        return a.reshape(a.shape[0], -1).max(axis=1)

    @property
    def xi_grid(self):
        mesh = np.meshgrid(*self.xi_axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def rows(self):
        """``(lam, xi..., re, im, abs)`` rows in grid order."""
        xi = self.xi_grid
        for i, lam in enumerate(self.lambda_grid):
            flat = self.values[i].ravel()
            for x, v in zip(xi, flat):
                yield (float(lam), *map(float, x), float(v.real), float(v.imag), float(abs(v)))

    def summary(self):
        return {"method": self.method, "lambda_min": float(self.lambda_grid[0]),
                "lambda_max": float(self.lambda_grid[-1]),
                "lambda_points": int(len(self.lambda_grid)),
                "xi_axes": [a.tolist() for a in self.xi_axes],
                "fit_window": list(self.fit_window),
                "fitted_exponent": self.fitted_exponent, "stderr": self.stderr,
                "sup_over_xi": self.sup_over_xi.tolist(),
                "refinement_delta": self.refinement_delta.tolist(),
                "xi_refinement_delta": self.xi_refinement_delta.tolist(),
                "max_refinement_delta": float(np.max(self.refinement_delta)),
                "nodes": int(self.nodes), "flagged_lambdas": self.flagged}


def geometric_grid(lo, hi, points):
    if not 0 < lo < hi or points < 2:
        raise ValueError("need 0 < lo < hi and at least two points")
    return np.geomspace(lo, hi, points)


def xi_axes_from_box(lo, hi, points_per_axis, dim):
    """Per-axis offset values for a cube ``[lo, hi]^dim``."""
    ax = np.linspace(lo, hi, points_per_axis) if points_per_axis > 1 else np.array([0.5 * (lo + hi)])
    return [ax.copy() for _ in range(dim)]


def _refined_axis(ax):
    """Insert midpoints; the original values sit at even positions."""
    if len(ax) < 2:
        return ax.copy()
    mid = 0.5 * (ax[:-1] + ax[1:])
    out = np.empty(2 * len(ax) - 1)
    out[0::2], out[1::2] = ax, mid
    return out


def _integrands(spec):
    if spec.method == "radial":
        return [radial_integrand(spec.radius)]
    if spec.method == "direct":
        return [TensorIntegrand.from_amplitude(spec.phase, spec.amplitude)]
    parts = spec.phase.split_separable()
    amps = [Amplitude(spec.amplitude.kind, (c,), (r,), "product")
            for c, r in zip(spec.amplitude.center, spec.amplitude.radius)]
    return [TensorIntegrand.from_amplitude(p, a) for p, a in zip(parts, amps)]


def _values_at(spec, integrands, lam, xi_axes, c, counter):
    """Complex values on the xi grid for one lam (all methods)."""
    if spec.method == "radial":
        vals, nodes = tensor_sweep_values(integrands[0], lam, [xi_axes[0], [0.0]], c, counter)
        return vals[:, 0], nodes
    if spec.method == "direct":
        return tensor_sweep_values(integrands[0], lam, xi_axes, c, counter)
    out, nodes = None, 0
    for integ, ax in zip(integrands, xi_axes):
        v, k = tensor_sweep_values(integ, lam, [ax], c, counter)
        nodes += k
        out = v if out is None else np.multiply.outer(out, v)
    return out, nodes


def sweep(spec, lambda_grid, xi_axes, budget=DEFAULT_NODE_BUDGET, validate=True,
          xi_refine=True, window=None, c=PHASE_BUDGET):
    """Evaluate ``|I(lam, xi)|`` on ``lambda_grid`` x (tensor grid of ``xi_axes``).

    With ``validate`` every lam is recomputed with half the phase budget;
    the finer values are reported and the change relative to the row's sup
    is stored in ``refinement_delta``.  With ``xi_refine`` the coarse pass
    also evaluates a twice-finer xi grid to report how much the grid sup
    can under-estimate the sup over the box.
    """
    lam = np.asarray(lambda_grid, dtype=float)
    if np.any(np.diff(lam) <= 0):
        raise ValueError("lambda grid must be strictly increasing")
    xi_axes = [np.atleast_1d(np.asarray(a, dtype=float)) for a in xi_axes]
    if len(xi_axes) != spec.xi_dim:
        raise ValueError(f"expected {spec.xi_dim} xi axes, got {len(xi_axes)}")
    integrands = _integrands(spec)
    counter = NodeCounter(budget)
    fine_axes = [_refined_axis(a) for a in xi_axes] if xi_refine else xi_axes
    take = tuple(slice(0, None, 2) if xi_refine else slice(None) for _ in xi_axes)
    values = np.zeros((len(lam),) + tuple(len(a) for a in xi_axes), dtype=complex)
    delta = np.zeros(len(lam))
    xi_delta = np.zeros(len(lam))
    for i, L in enumerate(lam):
        coarse_all, _ = _values_at(spec, integrands, L, fine_axes, c, counter)
        coarse = coarse_all[take]
        sup = np.abs(coarse).max()
        xi_delta[i] = np.abs(coarse_all).max() / sup - 1.0 if sup > 0 else 0.0
        if validate:
            fine, _ = _values_at(spec, integrands, L, xi_axes, c / 2, counter)
            row_sup = max(np.abs(fine).max(), 1e-300)
            delta[i] = np.abs(fine - coarse).max() / row_sup
            values[i] = fine
        else:
            values[i] = coarse
            delta[i] = np.nan
    out = DecaySweep(lam, xi_axes, values, delta, xi_delta, counter.used, spec.method)
    out.flagged = [float(L) for L, d in zip(lam, delta) if d > SWEEP_REFINE_TOL]
    if len(lam) >= 6:
        fit_exponent(out, window)
    return out


def default_window(m):
    """Upper half of a grid of ``m`` points, never fewer than six points."""
    start = min(m // 2, max(m - 6, 0))
    return (start, m)


def fit_exponent(sweep_or_lams, window=None, values=None):
    """Least-squares slope of ``log sup|I|`` against ``log lam``.

    Accepts a :class:`DecaySweep` (its ``fitted_exponent``, ``stderr`` and
    ``fit_window`` are updated) or a lam array plus ``values``.
    Returns ``(slope, stderr)``.
    """
    if isinstance(sweep_or_lams, DecaySweep):
        lam, y = sweep_or_lams.lambda_grid, sweep_or_lams.sup_over_xi
    else:
        lam, y = np.asarray(sweep_or_lams, dtype=float), np.asarray(values, dtype=float)
    m = len(lam)
    window = default_window(m) if window is None else tuple(window)
    lo, hi = window
    if hi - lo < 6 or lo < 0 or hi > m:
        raise ValueError("fit window needs at least six lambda points")
    if np.any(y[lo:hi] <= 0):
        raise ValueError("cannot fit nonpositive values")
    res = linregress(np.log(lam[lo:hi]), np.log(y[lo:hi]))
    slope, err = float(res.slope), float(res.stderr)
    if isinstance(sweep_or_lams, DecaySweep):
        sweep_or_lams.fit_window = (int(lo), int(hi))
        sweep_or_lams.fitted_exponent = slope
        sweep_or_lams.stderr = err
    return slope, err
