"""Energy, vortex detection, lattice statistics, and equilibrium tests.

Everything here is a pure function of a state snapshot; diagnostics may
run on a copy concurrently with the next integration step.  The energy
uses a fixed summation order so repeated evaluation of the same state is
bit-identical.

Vortices are located per grid cell from the gauge-invariant phase
circulation: the plaquette sum of arg[psi_a* U_edge psi_b] plus the
enclosed-flux correction (hx hy / kappa) B is an exact integer multiple
of 2 pi, the winding number.  Zeros of psi are gauge invariant, so the
sub-cell position refined from the bilinear Re/Im zero crossing is too.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.spatial import Delaunay

from .fields import LinkField, Params, State, link_variables, magnetic_field
from .grid import GridSpec

TWO_PI = 2.0 * math.pi


class DiagnosticsError(ValueError):
    pass


@dataclass
class Vortex:
    x: float
    y: float
    winding: int
    confident: bool = True


@dataclass
class VortexSet:
    vortices: list = field(default_factory=list)

    @property
    def count(self) -> int:
        return len(self.vortices)

    def positions(self) -> np.ndarray:
        if not self.vortices:
            return np.zeros((0, 2))
        return np.array([[v.x, v.y] for v in self.vortices])

    def windings(self) -> np.ndarray:
        return np.array([v.winding for v in self.vortices], dtype=int)

    def total_winding(self) -> int:
        return int(self.windings().sum()) if self.vortices else 0


@dataclass
class BondStats:
    mean_bond_length: float
    mean_bond_angle: float
    bond_count: int


@dataclass
class DiagnosticsRecord:
    t: float
    step: int
    energy: float
    vortex_count: int
    mean_bond_length: float
    mean_bond_angle: float
    max_position_drift: float


CSV_HEADER = ("step,t,energy,vortex_count,mean_bond_length,"
              "mean_bond_angle,max_position_drift")


def record_to_csv_row(r: DiagnosticsRecord) -> str:
    return ",".join([
        str(r.step),
        "%.17g" % r.t,
        "%.17g" % r.energy,
        str(r.vortex_count),
        "%.17g" % r.mean_bond_length,
        "%.17g" % r.mean_bond_angle,
        "%.17g" % r.max_position_drift,
    ])


def energy(s: State, p: Params, g: GridSpec,
           links: Optional[LinkField] = None) -> float:
    """Discrete free energy relative to the normal state.

    Kinetic term from link-covariant differences on core edges,
    condensation term on core vertices, field term |B - H|^2 on every
    cell, each weighted by the cell area.  Zero in the normal state
    (psi = 0, B = H); the applied-field reference uses the mean of the
    two boundary fields.
    """
    if links is None:
        links = link_variables(s, p, g)
    i0, i1 = g.n_sx, g.n_ex
    rows = slice(1, g.n_y + 1)
    hx2 = g.h_x * g.h_x
    hy2 = g.h_y * g.h_y

    dx = links.u_x[i0:i1, rows] * s.psi[i0 + 1:i1 + 1, rows] - s.psi[i0:i1, rows]
    kin_x = np.sum(dx.real * dx.real + dx.imag * dx.imag) / hx2
    dy = links.u_y[i0:i1 + 1, rows] * s.psi[i0:i1 + 1, 2:g.n_y + 2] \
        - s.psi[i0:i1 + 1, rows]
    kin_y = np.sum(dy.real * dy.real + dy.imag * dy.imag) / hy2

    sc = s.psi[i0:i1 + 1, rows]
    a2 = sc.real * sc.real + sc.imag * sc.imag
    cond = np.sum(-p.tau_sc(g) * a2 + 0.5 * a2 * a2)

    h_ref = 0.5 * (p.h_l + p.h_r)
    b = magnetic_field(s, g)[:, 1:]
    fld = np.sum((b - h_ref) ** 2)

    return float((kin_x + kin_y + cond + fld) * g.h_x * g.h_y)


def detect_vortices(s: State, p: Params, g: GridSpec,
                    links: Optional[LinkField] = None) -> VortexSet:
    """Vortices from the gauge-invariant phase circulation per core cell.

    Scans cells whose four corners are real core vertices
    (i = n_sx .. n_ex - 1, j = 1 .. n_y).  Cells with all four corner
    magnitudes below 1e-8 keep the cell-center position with a
    low-confidence mark.
    """
    if links is None:
        links = link_variables(s, p, g)
    i0, i1 = g.n_sx, g.n_ex
    ny = g.n_y
    psi = s.psi

    # edge phase differences, rows j = 1 .. n_y + 1 for x edges
    ex = np.angle(np.conj(psi[i0:i1, 1:ny + 2])
                  * (links.u_x[i0:i1, 1:ny + 2] * psi[i0 + 1:i1 + 1, 1:ny + 2]))
    ey = np.angle(np.conj(psi[i0:i1 + 1, 1:ny + 1])
                  * (links.u_y[i0:i1 + 1, 1:ny + 1] * psi[i0:i1 + 1, 2:ny + 2]))

    circ = ex[:, :ny] + ey[1:, :] - ex[:, 1:] - ey[:-1, :]
    b_cells = magnetic_field(s, g)[i0:i1, 1:]
    w = np.rint((circ + (g.h_x * g.h_y / p.kappa) * b_cells) / TWO_PI)

    out = VortexSet()
    for a, b in np.argwhere(w != 0):
        i, j = i0 + int(a), 1 + int(b)
        corners = np.array([psi[i, j], psi[i + 1, j],
                            psi[i, j + 1], psi[i + 1, j + 1]])
        if np.all(np.abs(corners) < 1e-8):
            out.vortices.append(Vortex(
                x=g.x_vertex(i) + 0.5 * g.h_x,
                y=g.y_vertex(j) + 0.5 * g.h_y,
                winding=int(w[a, b]), confident=False,
            ))
            continue
        x, y, ok = refine_vortex_position((i, j), s, g)
        out.vortices.append(Vortex(x=x, y=y, winding=int(w[a, b]),
                                   confident=ok))
    return out


def refine_vortex_position(cell, s: State, g: GridSpec):
    """Zero of the bilinear interpolant of psi inside a winding cell.

    Two-variable Newton on (Re psi, Im psi) = 0 over the unit cell,
    at most 20 iterations, tolerance 1e-10 in units of xi.  Returns
    (x, y, converged); falls back to the cell center.
    """
    i, j = cell
    f00 = s.psi[i, j]
    f10 = s.psi[i + 1, j]
    f01 = s.psi[i, j + 1]
    f11 = s.psi[i + 1, j + 1]
    u, v = 0.5, 0.5
    tol = 1e-10 / max(g.h_x, g.h_y)
    converged = False
    for _ in range(20):
        f = (f00 * (1 - u) * (1 - v) + f10 * u * (1 - v)
             + f01 * (1 - u) * v + f11 * u * v)
        fu = (f10 - f00) * (1 - v) + (f11 - f01) * v
        fv = (f01 - f00) * (1 - u) + (f11 - f10) * u
        det = fu.real * fv.imag - fv.real * fu.imag
        if det == 0.0:
            break
        du = (f.real * fv.imag - fv.real * f.imag) / det
        dv = (fu.real * f.imag - f.real * fu.imag) / det
        u -= du
        v -= dv
        if not (-0.5 <= u <= 1.5 and -0.5 <= v <= 1.5):
            break
        if abs(du) + abs(dv) < tol:
            converged = True
            break
    if not converged or not (0.0 <= u <= 1.0 and 0.0 <= v <= 1.0):
        u, v, converged = 0.5, 0.5, False
    return (g.x_vertex(i) + u * g.h_x, g.y_vertex(j) + v * g.h_y, converged)


def bond_statistics(v: VortexSet, g: GridSpec,
                    length_cutoff: float = 1.5) -> BondStats:
    """Delaunay bond statistics of the vortex lattice on the periodic strip.

    Positions are duplicated one period up and down before triangulating;
    edges are deduplicated back to the primary copy.  Bonds are the edges
    shorter than ``length_cutoff`` times the median edge length.  The mean
    bond angle averages the angular gaps between bonds adjacent around a
    shared vortex, gaps of half a turn or more excluded (those open away
    from the lattice at its x edges rather than between neighbors).
    """
    n = v.count
    if n < 3:
        raise DiagnosticsError(f"bond statistics need >= 3 vortices, have {n}")
    period = g.period_y
    pts = v.positions()
    shifted = np.vstack([
        pts,
        pts + np.array([0.0, period]),
        pts - np.array([0.0, period]),
    ])
    tri = Delaunay(shifted)

    edges = {}
    for simplex in tri.simplices:
        for a in range(3):
            p_, q_ = int(simplex[a]), int(simplex[(a + 1) % 3])
            if p_ % n == q_ % n and p_ != q_:
                continue  # a point and its own image; not a bond
            if p_ >= n and q_ >= n:
                continue  # fully in the image copies; primary copy exists
            if p_ >= n:
                p_, q_ = q_, p_
            # canonical key: primary endpoint, neighbor base index, image shift
            shift = (0, 1, -1)[q_ // n]
            key = (p_ % n, q_ % n, shift)
            alt = (q_ % n, p_ % n, -shift)
            if alt in edges:
                continue
            edges[key] = (shifted[p_], shifted[q_])

    if not edges:
        raise DiagnosticsError("triangulation produced no usable edges")
    keys = sorted(edges)
    vecs = {k: edges[k][1] - edges[k][0] for k in keys}
    lengths = np.array([np.hypot(*vecs[k]) for k in keys])
    cutoff = length_cutoff * np.median(lengths)
    kept = [k for k, ell in zip(keys, lengths) if ell < cutoff]
    if not kept:
        raise DiagnosticsError("no bonds below the length cutoff")
    kept_len = np.array([np.hypot(*vecs[k]) for k in kept])

    # bond directions around each vortex (both endpoints see the bond)
    around: dict[int, list[float]] = {}
    for k in kept:
        p_, q_, _ = k
        dx, dy = vecs[k]
        around.setdefault(p_, []).append(math.atan2(dy, dx))
        around.setdefault(q_, []).append(math.atan2(-dy, -dx))
    gaps = []
    for angles in around.values():
        if len(angles) < 2:
            continue
        angles = sorted(angles)
        for a, b in zip(angles, angles[1:] + [angles[0] + TWO_PI]):
            gap = b - a
            if gap < math.pi - 1e-12:
                gaps.append(gap)
    if not gaps:
        raise DiagnosticsError("no adjacent bond pairs below half a turn")

    return BondStats(
        mean_bond_length=float(np.mean(kept_len)),
        mean_bond_angle=float(np.mean(gaps)),
        bond_count=len(kept),
    )


def match_drift(a: VortexSet, b: VortexSet, g: GridSpec) -> Optional[float]:
    """Greedy nearest-neighbor drift between two vortex sets.

    Matches with the y-periodic metric; returns the largest matched
    displacement, or None when the counts differ (no matching exists).
    """
    if a.count != b.count:
        return None
    if a.count == 0:
        return 0.0
    period = g.period_y
    pa = a.positions()
    pb = b.positions()
    dx = pa[:, 0][:, None] - pb[:, 0][None, :]
    dy = pa[:, 1][:, None] - pb[:, 1][None, :]
    dy = dy - period * np.round(dy / period)
    d = np.hypot(dx, dy)
    n = a.count
    order = np.argsort(d, axis=None)
    used_a = np.zeros(n, bool)
    used_b = np.zeros(n, bool)
    worst = 0.0
    matched = 0
    for flat in order:
        ia, ib = divmod(int(flat), n)
        if used_a[ia] or used_b[ib]:
            continue
        used_a[ia] = used_b[ib] = True
        worst = max(worst, float(d[ia, ib]))
        matched += 1
        if matched == n:
            break
    return worst


def equilibrium_check(history: Sequence[VortexSet], g: GridSpec,
                      drift_tol: float = 1e-6) -> bool:
    """True when the vortex count is constant across the window and every
    matched position drifts less than drift_tol between consecutive
    samples."""
    if len(history) < 2:
        return False
    counts = {vs.count for vs in history}
    if len(counts) != 1:
        return False
    for prev, cur in zip(history, list(history)[1:]):
        drift = match_drift(prev, cur, g)
        if drift is None or drift >= drift_tol:
            return False
    return True


def reduced_ode_oracle(x0: float, y0: float, tau: float, eps: float,
                       t: float):
    """Independent reference for the local nonlinear dynamics.

    Integrates x' = 2x(tau - x - y), y' = -2 eps x y.  For y0 = 0 the
    closed form x(t) = tau x0 / (x0 + (tau - x0) exp(-2 tau t)) is exact
    and returned directly; otherwise classical RK4 with step <= 1e-4.
    """
    if x0 < 0 or y0 < 0 or tau <= 0:
        raise ValueError("need x0, y0 >= 0 and tau > 0")
    if t == 0:
        return (x0, y0)
    if y0 == 0:
        x = tau * x0 / (x0 + (tau - x0) * math.exp(-2.0 * tau * t))
        return (x, 0.0)

    def f(x, y):
        return (2.0 * x * (tau - x - y), -2.0 * eps * x * y)

    n = max(1, math.ceil(t / 1e-4))
    h = t / n
    x, y = x0, y0
    for _ in range(n):
        k1 = f(x, y)
        k2 = f(x + 0.5 * h * k1[0], y + 0.5 * h * k1[1])
        k3 = f(x + 0.5 * h * k2[0], y + 0.5 * h * k2[1])
        k4 = f(x + h * k3[0], y + h * k3[1])
        x += (h / 6.0) * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
        y += (h / 6.0) * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
    return (x, y)
