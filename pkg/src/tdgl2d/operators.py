"""Matrix-free discrete spatial operators and semidiscrete right-hand sides.

All operators act on the ghost-extended storage arrays and return dense
blocks covering exactly the sites they are defined on:

* ``apply_lxx`` / ``apply_lyy``: link-covariant second differences of the
  order parameter on the superconducting block, shape (n_sc, n_y).
* ``apply_dyy`` / ``apply_dyx``: plain second and mixed differences at
  the dynamic A_x sites i = 1 .. n_x - 1, shape (n_x - 1, n_y).
* ``apply_dxx`` / ``apply_dxy``: the same at the dynamic A_y sites
  i = 1 .. n_x, shape (n_x, n_y).

Block entry [a, b] refers to storage site (i0 + a, 1 + b) where i0 is
the first dynamic column of the block.  Callers must refresh ghost
values first; the operators read ghosts but never write them.  Dense
matrix forms of the same stencils live in the oracles module and exist
only for tests.

Note the curl-curl identities tying the A stencils to the cell field B:

    (Dyy A_x - Dyx A_y)[i,j] = -(B[i,j] - B[i,j-1]) / h_y
    (Dxx A_y - Dxy A_x)[i,j] = +(B[i,j] - B[i-1,j]) / h_x

which hold exactly for any A; the boundary rows of Dxx absorb the
fixed-field closure through the ghost A_y columns, so the same formula
applies there with the boundary-cell B pinned at the applied field.
"""

from __future__ import annotations

import numpy as np

from .fields import LinkField, Params, State, link_variables, supercurrent
from .grid import GridSpec


class Workspace:
    """Preallocated scratch arrays, keyed by (name); contents are
    undefined between operations and never alias State storage."""

    def __init__(self):
        self._bufs = {}

    def buf(self, name: str, shape, dtype=np.float64) -> np.ndarray:
        b = self._bufs.get(name)
        if b is None or b.shape != tuple(shape) or b.dtype != dtype:
            b = np.empty(shape, dtype)
            self._bufs[name] = b
        return b


def apply_lxx(psi: np.ndarray, u_x: np.ndarray, g: GridSpec) -> np.ndarray:
    """(L_xx psi)[i,j] = [U_x[i,j] psi[i+1,j] - 2 psi[i,j]
    + conj(U_x[i-1,j]) psi[i-1,j]] / h_x^2 on the core block."""
    i0, i1 = g.n_sx, g.n_ex
    rows = slice(1, g.n_y + 1)
    return (
        u_x[i0:i1 + 1, rows] * psi[i0 + 1:i1 + 2, rows]
        - 2.0 * psi[i0:i1 + 1, rows]
        + np.conj(u_x[i0 - 1:i1, rows]) * psi[i0 - 1:i1, rows]
    ) / (g.h_x * g.h_x)


def apply_lyy(psi: np.ndarray, u_y: np.ndarray, g: GridSpec) -> np.ndarray:
    """y analogue of apply_lxx, periodic through the ghost rows."""
    i0, i1 = g.n_sx, g.n_ex
    cols = slice(i0, i1 + 1)
    mid = slice(1, g.n_y + 1)
    up = slice(2, g.n_y + 2)
    dn = slice(0, g.n_y)
    return (
        u_y[cols, mid] * psi[cols, up]
        - 2.0 * psi[cols, mid]
        + np.conj(u_y[cols, dn]) * psi[cols, dn]
    ) / (g.h_y * g.h_y)


def nonlinear_n(psi, tau):
    """N(psi) = tau psi - |psi|^2 psi."""
    return tau * psi - (psi.real * psi.real + psi.imag * psi.imag) * psi


def apply_dyy(a_x: np.ndarray, g: GridSpec) -> np.ndarray:
    """Periodic second difference of A_x in y at the dynamic A_x sites."""
    cols = slice(1, g.n_x)
    return (
        a_x[cols, 2:g.n_y + 2] - 2.0 * a_x[cols, 1:g.n_y + 1]
        + a_x[cols, 0:g.n_y]
    ) / (g.h_y * g.h_y)


def apply_dxx(a_y: np.ndarray, g: GridSpec) -> np.ndarray:
    """Second difference of A_y in x at the dynamic A_y sites.

    Reads the closure columns i = 0 and i = n_x + 1, so the outer
    boundary must have been applied first.
    """
    rows = slice(1, g.n_y + 1)
    return (
        a_y[2:g.n_x + 2, rows] - 2.0 * a_y[1:g.n_x + 1, rows]
        + a_y[0:g.n_x, rows]
    ) / (g.h_x * g.h_x)


def apply_dyx(a_y: np.ndarray, g: GridSpec) -> np.ndarray:
    """Mixed difference of A_y at the dynamic A_x sites."""
    up = slice(2, g.n_x + 1)
    mid = slice(1, g.n_x)
    j1 = slice(1, g.n_y + 1)
    j0 = slice(0, g.n_y)
    return (
        (a_y[up, j1] - a_y[mid, j1]) - (a_y[up, j0] - a_y[mid, j0])
    ) / (g.h_x * g.h_y)


def apply_dxy(a_x: np.ndarray, g: GridSpec) -> np.ndarray:
    """Mixed difference of A_x at the dynamic A_y sites."""
    mid = slice(1, g.n_x + 1)
    dn = slice(0, g.n_x)
    j1 = slice(1, g.n_y + 1)
    j2 = slice(2, g.n_y + 2)
    return (
        (a_x[mid, j2] - a_x[mid, j1]) - (a_x[dn, j2] - a_x[dn, j1])
    ) / (g.h_x * g.h_y)


def rhs_psi(s: State, p: Params, g: GridSpec,
            links: LinkField | None = None) -> np.ndarray:
    """d psi / dt on the core block from step-n data."""
    if links is None:
        links = link_variables(s, p, g)
    sc = s.psi[g.n_sx:g.n_ex + 1, 1:g.n_y + 1]
    return (apply_lxx(s.psi, links.u_x, g) + apply_lyy(s.psi, links.u_y, g)
            + nonlinear_n(sc, p.tau_sc(g)))


def rhs_a(s: State, p: Params, g: GridSpec,
          links: LinkField | None = None):
    """(dA_x/dt, dA_y/dt) blocks at the dynamic sites from step-n data."""
    if links is None:
        links = link_variables(s, p, g)
    jx, jy = supercurrent(s, links, p, g)
    rows = slice(1, g.n_y + 1)
    dax = (apply_dyy(s.a_x, g) - apply_dyx(s.a_y, g)
           + jx[1:g.n_x, rows]) / p.sigma
    day = (apply_dxx(s.a_y, g) - apply_dxy(s.a_x, g)
           + jy[1:g.n_x + 1, rows]) / p.sigma
    return dax, day
