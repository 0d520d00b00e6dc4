"""
Deterministic SVG figures for sweep, bound and rank reports.
"""
from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

_RC = {"svg.hashsalt": "oscdecay", "svg.fonttype": "path"}


def _save(fig, path):
    path = os.fspath(path)
    tmp = path + ".tmp"
    with matplotlib.rc_context(_RC):
        fig.savefig(tmp, format="svg", metadata={"Date": None})
    plt.close(fig)
    os.replace(tmp, path)


def plot_sweep(sweep, path, title=""):
    """Log-log plot of ``sup_xi |I|`` against lambda with the fitted line."""
    lam, sup = sweep.lambda_grid, sweep.sup_over_xi
    fig, ax = plt.subplots(figsize=(5, 3.6))
    ax.loglog(lam, sup, "o-", ms=3, label=r"$\sup_\xi |I(\lambda,\xi)|$")
    if sweep.fit_window is not None and np.isfinite(sweep.fitted_exponent):
        i, j = sweep.fit_window
        ref = sup[j - 1] * (lam[i:j] / lam[j - 1]) ** sweep.fitted_exponent
        ax.loglog(lam[i:j], ref, "--", lw=1,
                  label=f"slope {sweep.fitted_exponent:.4f}")
    ax.set_xlabel(r"$\lambda$")
    ax.set_ylabel(r"$|I|$")
    ax.set_title(title)
    ax.legend(fontsize=8)
    fig.tight_layout()
    _save(fig, path)


def plot_bound(lam, rhs, sup, path, title=""):
    """Sweep sup and the scaled bound on shared log-log axes."""
    ratio = sup / rhs
    fig, ax = plt.subplots(figsize=(5, 3.6))
    ax.loglog(lam, sup, "o-", ms=3, label=r"$\sup_\xi |I|$")
    ax.loglog(lam, rhs * ratio.max(), "--", label=r"$C\cdot$rhs")
    ax.set_xlabel(r"$\lambda$")
    ax.set_title(title)
    ax.legend(fontsize=8)
    fig.tight_layout()
    _save(fig, path)


def plot_histogram(hist, bound, path, title=""):
    ks = sorted(hist)
    fig, ax = plt.subplots(figsize=(5, 3.6))
    ax.bar(ks, [hist[k] for k in ks])
    ax.axvline(bound - 0.5, color="k", ls="--", lw=1, label=f"bound {bound}")
    ax.set_xlabel("Hessian rank")
    ax.set_ylabel("points")
    ax.set_title(title)
    ax.legend(fontsize=8)
    fig.tight_layout()
    _save(fig, path)
