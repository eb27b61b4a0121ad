"""Tridiagonal and cyclic-tridiagonal solvers, real and complex.

All coefficient vectors use the same-length convention: for an n by n
system, ``sub[i]`` multiplies x[i-1] in row i (``sub[0]`` is the corner
element A[0, n-1] when periodic, and must be zero otherwise), ``sup[i]``
multiplies x[i+1] (``sup[n-1]`` is the corner A[n-1, 0] when periodic).

The kernels accept stacked systems: coefficient and right-hand-side
arrays of shape (n, m) solve m independent systems at once, sweeping
over the n axis with vectorized arithmetic over the batch axis.  Shape
(n,) coefficients against an (n, m) right-hand side solve one matrix
against m right-hand sides.  Solving through a stored factorization is
bit-identical to factoring and solving in one call, since it runs the
same substitution code on the same factors.

Cyclic systems are reduced to two non-periodic solves by a rank-one
corner correction, so they reuse the same Thomas kernel and factor
cleanly into the constant-system cache.

No pivoting is performed beyond breakdown detection.  The solvers used
in the time-stepping loop act on shifted operators (identity minus a
positive multiple of a second difference) which are strictly diagonally
dominant, so elimination cannot break down there; arbitrary user systems
that hit a vanishing pivot raise SolveBreakdown with the offending index.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

# severe-cancellation threshold for pivot acceptance
_PIVOT_RTOL = 64.0 * np.finfo(float).eps


class SolveBreakdown(RuntimeError):
    """Elimination hit a vanishing pivot or a singular corner closure."""

    def __init__(self, message: str, index: Optional[int] = None):
        super().__init__(message)
        self.index = index


@dataclass
class TridiagSystem:
    """Coefficients of a (possibly periodic) tridiagonal system."""

    sub: np.ndarray
    diag: np.ndarray
    sup: np.ndarray
    periodic: bool = False
    _factor: object = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.sub = np.asarray(self.sub)
        self.diag = np.asarray(self.diag)
        self.sup = np.asarray(self.sup)
        n = self.diag.shape[0]
        if self.sub.shape[0] != n or self.sup.shape[0] != n:
            raise ValueError("sub, diag, sup must have equal leading length")
        if not self.periodic:
            if np.any(self.sub[0] != 0) or np.any(self.sup[-1] != 0):
                raise ValueError(
                    "non-periodic system must have sub[0] = sup[n-1] = 0"
                )
        elif n < 3:
            raise ValueError("periodic system needs n >= 3")

    @property
    def n(self) -> int:
        return self.diag.shape[0]

    def dense(self) -> np.ndarray:
        """Dense matrix form (single system only), for tests and oracles."""
        if self.diag.ndim != 1:
            raise ValueError("dense() requires unstacked coefficients")
        n = self.n
        m = np.diag(self.diag.astype(np.result_type(self.diag, self.sub, self.sup)))
        m = m + np.diag(self.sub[1:], -1) + np.diag(self.sup[:-1], 1)
        if self.periodic:
            m[0, n - 1] += self.sub[0]
            m[n - 1, 0] += self.sup[n - 1]
        return m


@dataclass
class ThomasFactor:
    """LU factors of a non-periodic tridiagonal matrix stack."""

    sub: np.ndarray
    beta: np.ndarray
    gamma: np.ndarray


@dataclass
class CyclicFactor:
    """Corner-corrected factorization of a periodic tridiagonal stack."""

    base: ThomasFactor
    z: np.ndarray
    denom: np.ndarray
    v_last: np.ndarray


def thomas_factor(sub, diag, sup) -> ThomasFactor:
    """Factor a stack of non-periodic tridiagonal matrices.

    Raises SolveBreakdown if any pivot vanishes to rounding level.
    """
    n = diag.shape[0]
    out_t = np.result_type(sub, diag, sup)
    beta = np.empty(np.broadcast_shapes(sub.shape, diag.shape, sup.shape), out_t)
    gamma = np.empty_like(beta)
    beta[0] = diag[0]
    # track the magnitude the pivot was formed from, for the breakdown test
    ref = np.empty_like(beta, dtype=float)
    ref[0] = np.abs(diag[0])
    with np.errstate(divide="ignore", invalid="ignore"):
        for i in range(1, n):
            gamma[i - 1] = sup[i - 1] / beta[i - 1]
            corr = sub[i] * gamma[i - 1]
            beta[i] = diag[i] - corr
            ref[i] = np.abs(diag[i]) + np.abs(corr)
    bad = ~(np.abs(beta) > _PIVOT_RTOL * ref)
    if bad.any():
        idx = int(np.argwhere(bad)[0][0])
        raise SolveBreakdown(f"zero pivot at row {idx}", index=idx)
    return ThomasFactor(sub=np.asarray(sub), beta=beta, gamma=gamma)


def thomas_solve(f: ThomasFactor, rhs: np.ndarray) -> np.ndarray:
    """Substitute a right-hand-side stack through Thomas factors.

    Factor and right-hand-side stacks broadcast against each other along
    the trailing (batch) axes; the leading axis is the system dimension.
    """
    n = f.beta.shape[0]
    batch = np.broadcast_shapes(f.beta.shape[1:], rhs.shape[1:])
    x = np.empty((n,) + batch, np.result_type(f.beta, rhs))
    x[0] = rhs[0] / f.beta[0]
    for i in range(1, n):
        x[i] = (rhs[i] - f.sub[i] * x[i - 1]) / f.beta[i]
    for i in range(n - 2, -1, -1):
        x[i] = x[i] - f.gamma[i] * x[i + 1]
    return x


def cyclic_factor(sub, diag, sup) -> CyclicFactor:
    """Factor a stack of periodic tridiagonal matrices.

    Uses the rank-one corner correction A = T + u v^T with
    u = (g, 0, .., 0, sup[n-1]), v = (1, 0, .., 0, sub[0]/g), g = -diag[0],
    so T stays tridiagonal with modified first and last diagonal entries.
    Raises SolveBreakdown on a vanishing pivot in T or a singular closure.
    """
    n = diag.shape[0]
    if n < 3:
        raise ValueError("periodic solve needs n >= 3")
    out_t = np.result_type(sub, diag, sup)
    g = -np.asarray(diag[0], dtype=out_t)
    if np.any(np.abs(g) == 0):
        # fall back to a nonzero gauge entry; only the corner bookkeeping cares
        g = np.where(np.abs(g) == 0, np.asarray(1.0, out_t), g)
    d = np.broadcast_to(np.asarray(diag, out_t),
                        np.broadcast_shapes(sub.shape, diag.shape, sup.shape)).copy()
    d[0] = d[0] - g
    d[n - 1] = d[n - 1] - sub[0] * sup[n - 1] / g
    sub_t = np.asarray(sub, out_t).copy()
    sup_t = np.asarray(sup, out_t).copy()
    sub_t[0] = 0
    sup_t[n - 1] = 0
    base = thomas_factor(sub_t, d, sup_t)
    u = np.zeros_like(d)
    u[0] = g
    u[n - 1] = sup[n - 1]
    z = thomas_solve(base, u)
    v_last = sub[0] / g
    denom = 1.0 + z[0] + v_last * z[n - 1]
    scale = 1.0 + np.abs(z[0]) + np.abs(v_last * z[n - 1])
    bad = np.abs(denom) <= _PIVOT_RTOL * scale
    if np.any(bad):
        raise SolveBreakdown("singular periodic system (corner closure)",
                             index=None)
    return CyclicFactor(base=base, z=z, denom=denom, v_last=v_last)


def cyclic_solve(f: CyclicFactor, rhs: np.ndarray) -> np.ndarray:
    """Substitute a right-hand-side stack through cyclic factors."""
    y = thomas_solve(f.base, rhs)
    n = y.shape[0]
    frac = (y[0] + f.v_last * y[n - 1]) / f.denom
    z = f.z.reshape(f.z.shape + (1,) * (y.ndim - f.z.ndim))
    return y - frac * z


def solve_tridiag(sys: TridiagSystem, rhs: np.ndarray) -> np.ndarray:
    """Solve a non-periodic tridiagonal system."""
    if sys.periodic:
        raise ValueError("system is periodic; use solve_cyclic_tridiag")
    if sys._factor is None:
        sys._factor = thomas_factor(sys.sub, sys.diag, sys.sup)
    return thomas_solve(sys._factor, np.asarray(rhs))


def solve_cyclic_tridiag(sys: TridiagSystem, rhs: np.ndarray) -> np.ndarray:
    """Solve a periodic tridiagonal system (corner-corrected Thomas)."""
    if not sys.periodic:
        raise ValueError("system is not periodic; use solve_tridiag")
    if sys._factor is None:
        sys._factor = cyclic_factor(sys.sub, sys.diag, sys.sup)
    return cyclic_solve(sys._factor, np.asarray(rhs))


@dataclass
class ConstantSystems:
    """Prefactored shifted curl-curl systems for the vector potential.

    Holds the factorizations of (I - (dt_eff/sigma) Dyy), periodic of size
    n_y, shared by every A_x column, and (I - (dt_eff/sigma) Dxx), bounded
    of size n_x with its first and last diagonal entries reduced by the
    fixed-field boundary closure, shared by every A_y row.  Both matrices
    are independent of the line index and of time while (dt_eff, sigma,
    grid) are unchanged, so one factorization serves the whole run.
    """

    key: tuple
    ax_cyclic: CyclicFactor
    ay_tridiag: ThomasFactor


def constant_systems_key(dt_eff: float, sigma: float, g) -> tuple:
    return (float(dt_eff), float(sigma), g.n_x, g.n_y, g.h_x, g.h_y)


def prefactor_constant_systems(dt_eff: float, sigma: float, g) -> ConstantSystems:
    """Factor the two constant-coefficient A systems once for reuse.

    The cache key records (dt_eff, sigma, grid); callers must refactor
    when any of those change.
    """
    r_y = dt_eff / (sigma * g.h_y * g.h_y)
    n_y = g.n_y
    sub = np.full(n_y, -r_y)
    diag = np.full(n_y, 1.0 + 2.0 * r_y)
    sup = np.full(n_y, -r_y)
    ax = cyclic_factor(sub, diag, sup)

    r_x = dt_eff / (sigma * g.h_x * g.h_x)
    n_x = g.n_x
    sub = np.full(n_x, -r_x)
    diag = np.full(n_x, 1.0 + 2.0 * r_x)
    sup = np.full(n_x, -r_x)
    sub[0] = 0.0
    sup[n_x - 1] = 0.0
    # boundary closure: the ghost columns alias the adjacent unknown plus a
    # constant, which removes one neighbor coupling from the edge rows
    diag[0] = 1.0 + r_x
    diag[n_x - 1] = 1.0 + r_x
    ay = thomas_factor(sub, diag, sup)

    return ConstantSystems(key=constant_systems_key(dt_eff, sigma, g),
                           ax_cyclic=ax, ay_tridiag=ay)
