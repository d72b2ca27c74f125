import numpy as np
import pytest

from nlslab.solver import SolverConfig, evolve
from nlslab.spectral import Field, Grid


@pytest.fixture(scope="session")
def line():
    return Grid(1, 64.0, 1024)


@pytest.fixture(scope="session")
def plane():
    return Grid(2, 16.0, 64)


@pytest.fixture(scope="session")
def gaussian_1d(line):
    return Field(line, np.exp(-line.coords[0] ** 2))


@pytest.fixture(scope="session")
def reference_run(line):
    """p = 3 Gaussian run shared by the conservation checks."""
    u0 = Field(line, np.exp(-line.coords[0] ** 2 / 9.0))
    return evolve(u0, SolverConfig(p=3, dt=1e-3, T=4.0, dt_out=0.02))


def moving_bumps(grid, v=0.6):
    """Asymmetric complex datum: two offset bumps, one of them moving."""
    x = grid.coords
    r1 = (x[0] - 1.0) ** 2 + sum(c**2 for c in x[1:])
    r2 = (x[0] + 2.0) ** 2 + sum((c - 1.0) ** 2 for c in x[1:])
    return Field(grid, np.exp(-r1 / 2 + 1j * v * x[0]) + 0.7 * np.exp(-r2 / 1.5))


def sections(name, grid, solver, initial=None, params=None):
    """Config sections from plain values: ``grid = (n, L, M)``, ``solver = (p, dt, T, dt_out)``."""
    n, L, M = grid
    p, dt, T, dt_out = solver
    out = {
        "experiment": {"name": name},
        "grid": {"n": str(n), "L": str(L), "M": str(M)},
        "solver": {"p": str(p), "dt": str(dt), "T": str(T), "dt_out": str(dt_out)},
        "initial": {k: str(v) for k, v in (initial or {}).items()},
    }
    if params:
        out["params"] = {k: str(v) for k, v in params.items()}
    return out


def make_config(*args, coupling=None, **kw):
    from nlslab.config import from_sections

    sec = sections(*args, **kw)
    if coupling is not None:
        sec["solver"]["coupling"] = str(coupling)
    return from_sections(sec)
