"""
Run configurations, their defaults and validation, and the runners behind
each CLI subcommand.  Acceptance presets live in :data:`PRESETS`.
"""
from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field

import numpy as np

from . import decay_bound as db
from .generic_cubic import rank_scan
from .nondegeneracy import check_condition
from .phase_model import Amplitude, Box, get_phase, phase_from_json
from .properties import check_gap_persistence, run_suite
from .quadrature import (DEFAULT_NODE_BUDGET, IntegratorSpec, geometric_grid,
                         sweep, xi_axes_from_box)
from .spectral_geometry import decompose


class ConfigError(ValueError):
    """Invalid run configuration."""


_SWEEP = {
    "phase": "cubic1d",
    "amplitude": {"kind": "smooth-bump", "radius": 0.5, "center": None, "profile": "product"},
    "lambda": {"min": 1e3, "max": 1e6, "points": 25},
    "xi": {"box": [-0.3, 0.3], "points_per_axis": 13},
    "method": "direct",
    "radial_radius": 0.6,
    "budget": float(DEFAULT_NODE_BUDGET),
    "validate": True,
    "xi_refine": True,
    "fit_window": None,
    "expect": {"exponent": None, "tol": None, "max": None},
}

DEFAULTS = {
    "sweep": _SWEEP,
    "bound-check": {**_SWEEP, "N": None, "k": None, "M": 1.0, "extend": 4.0,
                    "stability_tol": 0.2, "theta": 0.5, "R_max": None},
    "geom-check": {"phase": "random-cubic-n3", "trials": 10_000, "half_width": 1.0,
                   "gap_trials": 1000},
    "nondegen": {"phase": "cubic-saddle", "half_width": 0.1, "M": 1.0, "R": 1.0,
                 "grid": 5, "min_margin": 0.0},
    "rank-scan": {"n": 10, "cubics": 50, "points": 200, "tol": 1e-8},
}
COMMON = {"out": "oscdecay-out", "seed": 0, "plot": False}
NESTED = ("amplitude", "lambda", "xi", "expect")


def resolve(config):
    """Fill defaults and validate; unknown keys raise :class:`ConfigError`."""
    config = copy.deepcopy(config)
    sub = config.pop("subcommand", None)
    if sub not in DEFAULTS:
        raise ConfigError(f"unknown subcommand {sub!r}; expected one of {sorted(DEFAULTS)}")
    base = {**copy.deepcopy(DEFAULTS[sub]), **COMMON}
    unknown = sorted(set(config) - set(base))
    if unknown:
        raise ConfigError(f"unknown config keys for {sub}: {unknown}")
    out = {"subcommand": sub}
    for key, default in base.items():
        val = config.get(key, default)
        if key in NESTED:
            if not isinstance(val, dict):
                raise ConfigError(f"{key} must be an object")
            bad = sorted(set(val) - set(default))
            if bad:
                raise ConfigError(f"unknown keys in {key}: {bad}")
            val = {**default, **val}
        out[key] = val
    _check_values(out)
    return out


def _check_values(cfg):
    sub = cfg["subcommand"]
    if not isinstance(cfg["seed"], int) or isinstance(cfg["seed"], bool):
        raise ConfigError("seed must be an integer")
    if sub in ("sweep", "bound-check"):
        lam = cfg["lambda"]
        if not (0 < lam["min"] < lam["max"]) or int(lam["points"]) < 2:
            raise ConfigError("lambda needs 0 < min < max and points >= 2")
        if cfg["method"] not in ("direct", "factored", "radial"):
            raise ConfigError(f"unknown method {cfg['method']!r}")
        if cfg["budget"] is not None and cfg["budget"] <= 0:
            raise ConfigError("budget must be positive or null")
        box = cfg["xi"]["box"]
        if len(box) != 2 or box[0] > box[1] or int(cfg["xi"]["points_per_axis"]) < 1:
            raise ConfigError("xi needs box [lo, hi] with lo <= hi and points_per_axis >= 1")
    if sub == "bound-check" and cfg["extend"] <= 1:
        raise ConfigError("extend must exceed 1")
    if sub == "geom-check" and cfg["trials"] < 1:
        raise ConfigError("trials must be positive")
    if sub == "nondegen" and (cfg["M"] <= 0 or cfg["R"] < 1):
        raise ConfigError("nondegen needs M > 0 and R >= 1")
    if sub == "rank-scan" and (cfg["n"] < 1 or cfg["cubics"] < 1 or cfg["points"] < 1):
        raise ConfigError("rank-scan counts must be positive")
    if sub != "rank-scan" and cfg.get("method") != "radial":
        phase_of(cfg)


def phase_of(cfg):
    p = cfg["phase"]
    try:
        return phase_from_json(p) if isinstance(p, dict) else get_phase(p)
    except (KeyError, ValueError, TypeError) as exc:
        raise ConfigError(f"bad phase: {exc}") from None


def amplitude_of(cfg, n):
    a = cfg["amplitude"]
    radius = a["radius"]
    radius = tuple(float(r) for r in radius) if isinstance(radius, list) else (float(radius),) * n
    center = tuple(float(c) for c in a["center"]) if a["center"] is not None else (0.0,) * n
    if len(radius) != n or len(center) != n:
        raise ConfigError("amplitude center/radius length must match the phase dimension")
    try:
        return Amplitude(a["kind"], center, radius, a["profile"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def spec_of(cfg):
    """``(IntegratorSpec, lambda grid, xi axes)`` for sweep-like configs."""
    lam = geometric_grid(cfg["lambda"]["min"], cfg["lambda"]["max"], int(cfg["lambda"]["points"]))
    lo, hi = cfg["xi"]["box"]
    ppa = int(cfg["xi"]["points_per_axis"])
    if cfg["method"] == "radial":
        return IntegratorSpec("radial", radius=cfg["radial_radius"]), lam, xi_axes_from_box(lo, hi, ppa, 1)
    phase = phase_of(cfg)
    try:
        spec = IntegratorSpec(cfg["method"], phase, amplitude_of(cfg, phase.n))
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return spec, lam, xi_axes_from_box(lo, hi, ppa, phase.n)


def check_expect(expect, slope):
    """``(passed, message)`` for an optional exponent expectation."""
    ok, parts = True, []
    if expect.get("exponent") is not None:
        tol = expect.get("tol") or 0.0
        good = abs(slope - expect["exponent"]) <= tol
        ok &= good
        parts.append(f"|{slope:.4f} - ({expect['exponent']:.4f})| <= {tol}")
    if expect.get("max") is not None:
        good = slope <= expect["max"]
        ok &= good
        parts.append(f"{slope:.4f} <= {expect['max']}")
    return bool(ok), "; ".join(parts) or "no expectation"


# -- bound check ------------------------------------------------------------------------

def degeneracy_k(phase, support, M=1.0, grid=5):
    """Largest sampled ``dim V_{M,x}`` over ``support`` (the worst point)."""
    dec = decompose(phase, support.grid(grid))
    return int(np.sum(dec.magnitudes <= M + dec.tol[..., None], axis=-1).max())


def predicted_exponent(n, k):
    return (n - k) / 2 + k / 3


def extended_grid(lam, factor=4.0):
    """Points past ``lam[-1]`` up to ``factor * lam[-1]`` at about the same log spacing."""
    step = lam[-1] / lam[-2]
    m = max(1, math.ceil(math.log(factor) / math.log(step) - 1e-9))
    return np.geomspace(lam[-1], factor * lam[-1], m + 1)[1:]


@dataclass
class BoundCheck:
    lambda_grid: np.ndarray
    rhs: np.ndarray
    sup: np.ndarray
    base_points: int
    N: int
    k: int
    tol: float
    profile: dict = field(default_factory=dict)
    nodes: int = 0

    @property
    def ratio(self):
        return self.sup / self.rhs

    @property
    def max_ratio_base(self):
        return float(self.ratio[: self.base_points].max())

    @property
    def max_ratio_extended(self):
        return float(self.ratio.max())

    @property
    def change(self):
        return abs(self.max_ratio_extended / self.max_ratio_base - 1.0)

    @property
    def passed(self):
        return bool(np.all(np.isfinite(self.ratio)) and self.change < self.tol)

    def rows(self):
        for L, r, s in zip(self.lambda_grid, self.rhs, self.sup):
            yield float(L), float(r), float(s), float(s / r)

    def summary(self):
        return {"N": self.N, "k": self.k, "base_points": self.base_points,
                "lambda_max_base": float(self.lambda_grid[self.base_points - 1]),
                "lambda_max_extended": float(self.lambda_grid[-1]),
                "max_ratio_base": self.max_ratio_base,
                "max_ratio_extended": self.max_ratio_extended,
                "relative_change": self.change, "stability_tol": self.tol,
                "passed": self.passed, "rhs_profile": self.profile, "nodes": self.nodes}


def bound_check(spec, lam, xi_axes, N=None, k=None, M=1.0, extend=4.0, tol=0.2,
                budget=DEFAULT_NODE_BUDGET, base=None, theta=db.THETA, R_max=None):
    """Compare ``sup_xi |I|`` with the sublevel bound on a grid and its extension.

    ``base`` may be a finished sweep over ``lam`` to reuse.  The node budget
    covers all sweeps run here.  For the radial method the bound is
    evaluated for the reduced planar phase and its weighted amplitude box.
    """
    if spec.method == "radial":
        raise ValueError("bound-check needs a direct or factored sweep")
    phase, amp = spec.phase, spec.amplitude
    if k is None:
        k = degeneracy_k(phase, amp.support_box(), M)
    if N is None:
        N = math.ceil(predicted_exponent(phase.n, k)) + 1
    if base is None:
        base = sweep(spec, lam, xi_axes, budget=budget)
    ext_lam = extended_grid(np.asarray(lam), extend)
    left = None if budget is None else max(budget - base.nodes, 1)
    ext = sweep(spec, ext_lam, xi_axes, budget=left)
    full = np.concatenate([np.asarray(lam), ext_lam])
    rhs, prof = db.sublevel_rhs(phase, amp, full, N, theta=theta, R_max=R_max,
                                return_profile=True)
    sup = np.concatenate([base.sup_over_xi, ext.sup_over_xi])
    return BoundCheck(full, rhs, sup, len(lam), int(N), int(k), tol, prof.summary(),
                      int(base.nodes + ext.nodes))


# -- other runners -------------------------------------------------------------------------

def geom_check(cfg):
    phase = phase_of(cfg)
    results = run_suite(phase, trials=int(cfg["trials"]), seed=cfg["seed"],
                        half_width=cfg["half_width"])
    if cfg["gap_trials"]:
        results += check_gap_persistence(phase, trials=int(cfg["gap_trials"]),
                                         seed=cfg["seed"])
    return results


def nondegen(cfg):
    phase = phase_of(cfg)
    h = float(cfg["half_width"])
    return check_condition(phase, Box.cube(phase.n, h), cfg["M"], cfg["R"],
                           grid=int(cfg["grid"]), seed=cfg["seed"])


def rank(cfg):
    return rank_scan(int(cfg["n"]), int(cfg["cubics"]), int(cfg["points"]),
                     float(cfg["tol"]), cfg["seed"])


# -- acceptance presets ---------------------------------------------------------------------

def _sweep_preset(phase, lam, xi, expect, method="direct", radius=0.5, **extra):
    return {"subcommand": "sweep", "phase": phase, "method": method,
            "amplitude": {"radius": radius}, "lambda": lam, "xi": xi,
            "expect": expect, **extra}


_L1 = {"min": 1e3, "max": 1e6, "points": 25}
_X1 = {"box": [-0.3, 0.3], "points_per_axis": 13}

PRESETS = {
    "x2": _sweep_preset("quadratic1d", _L1, _X1, {"exponent": -0.5, "tol": 0.03}),
    "x3": _sweep_preset("cubic1d", _L1, _X1, {"exponent": -1 / 3, "tol": 0.03}),
    "mixed": _sweep_preset("mixed2d", _L1, _X1, {"exponent": -5 / 6, "tol": 0.05},
                           method="factored"),
    "saddle": _sweep_preset("cubic-saddle", {"min": 1e2, "max": 5e3, "points": 13},
                            {"box": [-0.2, 0.2], "points_per_axis": 5},
                            {"exponent": -2 / 3, "tol": 0.07}),
    "radial-xi0": _sweep_preset(None, {"min": 1e2, "max": 1e4, "points": 13},
                                {"box": [0.0, 0.0], "points_per_axis": 1},
                                {"max": -1.23}, method="radial"),
    "radial-eps0.1": _sweep_preset(None, {"min": 1e2, "max": 1e4, "points": 13},
                                   {"box": [-0.1, -0.1], "points_per_axis": 1},
                                   {"exponent": -1.0, "tol": 0.07}, method="radial"),
}


def preset(name):
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; known: {sorted(PRESETS)}")
    return copy.deepcopy(PRESETS[name])
