"""Dense brute-force references for the matrix-free operators and solvers.

These exist so every production stencil and solver can be checked against
an independent path: explicit matrices applied to basis vectors, LU
solves with partial pivoting, and the unfactored 2D implicit system that
the ADI sweeps approximate.  Size guards keep them out of production
use; they live in the shipped library (not only in tests) so the CLI
verify command can run them on demand.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg

from .fields import LinkField, Params
from .grid import GridSpec

MAX_DENSE_DIM = 4096


class OracleSizeError(ValueError):
    """Requested dense object exceeds the test-scale guard."""


class SingularMatrixError(ValueError):
    """Dense elimination met a numerically zero pivot."""


def _guard(rows: int, cols: int) -> None:
    if rows > MAX_DENSE_DIM or cols > MAX_DENSE_DIM:
        raise OracleSizeError(
            f"dense oracle limited to {MAX_DENSE_DIM} rows/columns, "
            f"requested {rows} x {cols}"
        )


def dense_lxx(g: GridSpec, ux_row: np.ndarray,
              ux_fold_row: np.ndarray | None = None) -> np.ndarray:
    """Dense L_xx for one grid row.

    ux_row holds the x-link values along the row, indexed by storage i.
    The interface ghost unknowns are eliminated into the first and last
    diagonal entries using ux_fold_row (defaults to ux_row).
    """
    n = g.n_sc
    _guard(n, n)
    if ux_fold_row is None:
        ux_fold_row = ux_row
    inv_h2 = 1.0 / (g.h_x * g.h_x)
    m = np.zeros((n, n), dtype=complex)
    for a in range(n):
        i = g.n_sx + a
        m[a, a] = -2.0 * inv_h2
        if a + 1 < n:
            m[a, a + 1] = ux_row[i] * inv_h2
        if a - 1 >= 0:
            m[a, a - 1] = np.conj(ux_row[i - 1]) * inv_h2
    m[0, 0] += np.conj(ux_row[g.n_sx - 1]) * ux_fold_row[g.n_sx - 1] * inv_h2
    m[n - 1, n - 1] += ux_row[g.n_ex] * np.conj(ux_fold_row[g.n_ex]) * inv_h2
    return m


def dense_lyy(g: GridSpec, uy_col: np.ndarray) -> np.ndarray:
    """Dense periodic L_yy for one grid column (uy indexed by storage j)."""
    n = g.n_y
    _guard(n, n)
    inv_h2 = 1.0 / (g.h_y * g.h_y)
    m = np.zeros((n, n), dtype=complex)
    for b in range(n):
        j = 1 + b
        m[b, b] = -2.0 * inv_h2
        m[b, (b + 1) % n] += uy_col[j] * inv_h2
        jm1 = j - 1 if b > 0 else n            # periodic image of row 0
        m[b, (b - 1) % n] += np.conj(uy_col[jm1]) * inv_h2
    return m


def dense_dyy(g: GridSpec) -> np.ndarray:
    """Dense periodic second-difference matrix in y (size n_y)."""
    n = g.n_y
    _guard(n, n)
    inv_h2 = 1.0 / (g.h_y * g.h_y)
    m = np.zeros((n, n))
    for b in range(n):
        m[b, b] = -2.0 * inv_h2
        m[b, (b + 1) % n] += inv_h2
        m[b, (b - 1) % n] += inv_h2
    return m


def dense_dxx(g: GridSpec) -> np.ndarray:
    """Dense second-difference matrix in x for A_y (size n_x).

    The first and last rows carry the linear part of the fixed-field
    closure (the ghost column aliases the adjacent unknown plus a
    constant, which belongs to the right-hand side, not the matrix).
    """
    n = g.n_x
    _guard(n, n)
    inv_h2 = 1.0 / (g.h_x * g.h_x)
    m = np.zeros((n, n))
    for a in range(n):
        m[a, a] = -2.0 * inv_h2
        if a + 1 < n:
            m[a, a + 1] = inv_h2
        if a - 1 >= 0:
            m[a, a - 1] = inv_h2
    m[0, 0] += inv_h2
    m[n - 1, n - 1] += inv_h2
    return m


def dense_dyx(g: GridSpec) -> np.ndarray:
    """Dense mixed difference mapping the A_y block to the A_x block.

    Input index (i, j) with i = 1 .. n_x flattens to (i-1)*n_y + (j-1);
    output rows cover the A_x sites i = 1 .. n_x - 1 in the same order.
    """
    ny = g.n_y
    rows, cols = (g.n_x - 1) * ny, g.n_x * ny
    _guard(rows, cols)
    m = np.zeros((rows, cols))
    c = 1.0 / (g.h_x * g.h_y)
    for i in range(1, g.n_x):
        for j in range(1, ny + 1):
            r = (i - 1) * ny + (j - 1)
            jm = j - 1 if j > 1 else ny
            m[r, (i - 1 + 1) * ny + (j - 1)] += c      # A_y[i+1, j]
            m[r, (i - 1) * ny + (j - 1)] -= c          # A_y[i, j]
            m[r, (i - 1 + 1) * ny + (jm - 1)] -= c     # A_y[i+1, j-1]
            m[r, (i - 1) * ny + (jm - 1)] += c         # A_y[i, j-1]
    return m


def dense_dxy(g: GridSpec) -> np.ndarray:
    """Dense mixed difference mapping the A_x block to the A_y block.

    Input covers A_x columns i = 0 .. n_x (the two surface columns
    included), flattened as i*n_y + (j-1); output rows cover the A_y
    sites i = 1 .. n_x.
    """
    ny = g.n_y
    rows, cols = g.n_x * ny, (g.n_x + 1) * ny
    _guard(rows, cols)
    m = np.zeros((rows, cols))
    c = 1.0 / (g.h_x * g.h_y)
    for i in range(1, g.n_x + 1):
        for j in range(1, ny + 1):
            r = (i - 1) * ny + (j - 1)
            jp = j + 1 if j < ny else 1
            m[r, i * ny + (jp - 1)] += c               # A_x[i, j+1]
            m[r, i * ny + (j - 1)] -= c                # A_x[i, j]
            m[r, (i - 1) * ny + (jp - 1)] -= c         # A_x[i-1, j+1]
            m[r, (i - 1) * ny + (j - 1)] += c          # A_x[i-1, j]
    return m


def dense_operator(tag: str, g: GridSpec, links: LinkField | None = None,
                   line: int | None = None) -> np.ndarray:
    """Dense matrix for one of the discrete operators.

    For the link-dependent tags, ``line`` selects the grid row (Lxx) or
    column (Lyy) whose link values enter the matrix; links defaults to
    the zero-potential identity.
    """
    if tag in ("Lxx", "Lyy"):
        if links is None:
            u = np.ones(g.shape, dtype=complex)
            links = LinkField(u_x=u, u_y=u)
        if tag == "Lxx":
            j = 1 if line is None else line
            return dense_lxx(g, links.u_x[:, j])
        i = g.n_sx if line is None else line
        return dense_lyy(g, links.u_y[i, :])
    if tag == "Dyy":
        return dense_dyy(g)
    if tag == "Dxx":
        return dense_dxx(g)
    if tag == "Dyx":
        return dense_dyx(g)
    if tag == "Dxy":
        return dense_dxy(g)
    raise ValueError(f"unknown operator tag {tag!r}")


def dense_solve(m: np.ndarray, b: np.ndarray) -> np.ndarray:
    """LU solve with partial pivoting; reports numerical singularity."""
    m = np.asarray(m)
    _guard(m.shape[0], m.shape[1])
    lu, piv = scipy.linalg.lu_factor(m, check_finite=False)
    d = np.abs(np.diag(lu))
    scale = max(d.max(), 1e-300)
    if d.min() <= m.shape[0] * np.finfo(float).eps * scale:
        raise SingularMatrixError(
            f"matrix numerically singular (pivot ratio {d.min() / scale:.2e})"
        )
    return scipy.linalg.lu_solve((lu, piv), b, check_finite=False)


def unfactored_psi_system(links: LinkField, p: Params, g: GridSpec,
                          dt: float | None = None,
                          interface_links: LinkField | None = None) -> np.ndarray:
    """Dense (I - dt (L_xx + L_yy)) over the core unknowns.

    Unknown (i, j) flattens to (i - n_sx)*n_y + (j - 1).  The interface
    ghost unknowns are eliminated with interface_links (default: the same
    links that enter L).
    """
    if dt is None:
        dt = p.dt
    n_sc, ny = g.n_sc, g.n_y
    n = n_sc * ny
    _guard(n, n)
    fold = links if interface_links is None else interface_links
    lop = np.zeros((n, n), dtype=complex)
    inv_hx2 = 1.0 / (g.h_x * g.h_x)
    inv_hy2 = 1.0 / (g.h_y * g.h_y)
    for a in range(n_sc):
        i = g.n_sx + a
        for b in range(ny):
            j = 1 + b
            k = a * ny + b
            lop[k, k] += -2.0 * inv_hx2 - 2.0 * inv_hy2
            if a + 1 < n_sc:
                lop[k, (a + 1) * ny + b] += links.u_x[i, j] * inv_hx2
            else:
                lop[k, k] += links.u_x[g.n_ex, j] * np.conj(
                    fold.u_x[g.n_ex, j]) * inv_hx2
            if a - 1 >= 0:
                lop[k, (a - 1) * ny + b] += np.conj(links.u_x[i - 1, j]) * inv_hx2
            else:
                lop[k, k] += np.conj(links.u_x[g.n_sx - 1, j]) * \
                    fold.u_x[g.n_sx - 1, j] * inv_hx2
            lop[k, a * ny + (b + 1) % ny] += links.u_y[i, j] * inv_hy2
            jm1 = j - 1 if b > 0 else ny
            lop[k, a * ny + (b - 1) % ny] += np.conj(links.u_y[i, jm1]) * inv_hy2
    return np.eye(n, dtype=complex) - dt * lop


def unfactored_psi_solve(rhs: np.ndarray, links: LinkField, p: Params,
                         g: GridSpec, dt: float | None = None,
                         interface_links: LinkField | None = None) -> np.ndarray:
    """Solve the unfactored 2D implicit system; reference for the ADI split.

    rhs is the core block of shape (n_sc, n_y); returns the correction in
    the same shape.
    """
    m = unfactored_psi_system(links, p, g, dt=dt, interface_links=interface_links)
    x = dense_solve(m, rhs.reshape(-1))
    return x.reshape(g.n_sc, g.n_y)
