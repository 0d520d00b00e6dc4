import time

import pytest

from oscdecay.experiments import preset, resolve, spec_of
from oscdecay.quadrature import sweep


class SweepCache:
    """Acceptance sweeps computed once per session, with their wall time."""

    def __init__(self):
        self._store = {}

    def get(self, name):
        if name not in self._store:
            cfg = resolve(preset(name))
            spec, lam, xi = spec_of(cfg)
            t0 = time.perf_counter()
            s = sweep(spec, lam, xi, budget=cfg["budget"], validate=cfg["validate"],
                      xi_refine=cfg["xi_refine"], window=cfg["fit_window"])
            self._store[name] = (cfg, spec, lam, xi, s, time.perf_counter() - t0)
        return self._store[name]


@pytest.fixture(scope="session")
def sweeps():
    return SweepCache()
