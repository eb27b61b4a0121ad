import numpy as np
import pytest

from tdgl2d.fields import Params, State, refresh_closures
from tdgl2d.grid import GridConfig, GridSpec, build_grid


@pytest.fixture
def g_small():
    # 8x6 cells at h = 1, one blanket cell per side: n_sx=2, n_ex=7
    return build_grid(GridConfig(8, 6, 1, 1))


@pytest.fixture
def p_small():
    return Params(kappa=2.0, sigma=1.3, dt=0.02, h_l=0.3, h_r=0.1)


@pytest.fixture
def g_desk():
    return build_grid(GridConfig(34, 48, 2, 0.5))


def random_state(g: GridSpec, p: Params, rng) -> State:
    """Finite random state with all closures freshly applied."""
    psi = np.full(g.shape, np.nan + 0j, dtype=np.complex128)
    blk = rng.standard_normal((g.n_sc + 2, g.n_y)) \
        + 1j * rng.standard_normal((g.n_sc + 2, g.n_y))
    psi[g.n_sx - 1:g.n_ex + 2, 1:g.n_y + 1] = blk
    s = State(psi=psi,
              a_x=rng.standard_normal(g.shape),
              a_y=rng.standard_normal(g.shape))
    refresh_closures(s, p, g)
    return s


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
