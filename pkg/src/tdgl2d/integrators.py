"""Time integration: four algorithms from fully explicit to fully implicit.

Within any step, all right-hand sides are assembled from step-n data
first, then the vector-potential systems are solved, then the order
parameter; only the diagonal implicit terms couple to step n+1 values.
Every step leaves the state closure-fresh (ghost rows, boundary columns,
interface columns), which the next step relies on.

Algorithm summary for one step of size dt:

I    forward Euler for psi and A.
II   psi as in I; A through the prefactored shifted systems
     (I - (dt/sigma) Dyy) per column and (I - (dt/sigma) Dxx) per row.
III  A as in II; the psi correction phi = psi(n+1) - psi(n) from the
     factored sweeps (I - dt Lxx)(I - dt Lyy) phi = F with
     F = dt [(Lxx + Lyy) psi + N(psi)], the reduced interface conditions
     folded into the first and last rows of each x line.
IV   as III with F replaced by G = dt (Lxx + Lyy) psi + (S(psi) - psi),
     where S is the exact flow of the local amplitude dynamics, making
     the nonlinearity implicit at no iteration cost.

The multirate variant steps psi with the fully implicit scheme every
step and advances A only every m-th step with effective step m*dt,
freezing the link variables (and hence the sweep factorizations) in
between.  With m = 1 it is bit-identical to Algorithm IV.

The links entering Lxx/Lyy are always the step-n values; the interface
fold uses the freshest links by default (those of the just-updated A),
switchable to the step-n links via StepperCache.interface_uses_new.
"""

from __future__ import annotations

import enum
import math
import time
from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np

from . import linalg
from .fields import (LinkField, Params, State, interface_link_columns,
                     link_variables, make_initial_state, refresh_closures,
                     state_diverged, supercurrent)
from .grid import GridSpec
from .operators import (Workspace, apply_dxx, apply_dxy, apply_dyx, apply_dyy,
                        apply_lxx, apply_lyy, nonlinear_n)

DEFAULT_PSI_MAX = 10.0
DEFAULT_PROBE_HORIZON = 50_000


class AlgorithmId(enum.Enum):
    EXPLICIT = "I"
    SEMI_IMPLICIT = "II"
    IMPLICIT = "III"
    FULLY_IMPLICIT = "IV"

    @classmethod
    def parse(cls, label: str) -> "AlgorithmId":
        key = str(label).strip().upper()
        for member in cls:
            if key in (member.value, member.name):
                return member
        raise ValueError(f"unknown algorithm {label!r}; use I, II, III or IV")

    @property
    def label(self) -> str:
        return self.value


@dataclass
class StepReport:
    """Outcome of one step; the state field aliases the stepped state."""

    state: State
    max_dpsi: float
    max_da: float
    diverged: bool
    wall_time: float


class StepperCache:
    """Per-run reusable pieces: prefactored A systems, frozen-link sweep
    factors for multirate runs, scratch buffers, and the interface-fold
    convention."""

    def __init__(self, p: Params, g: GridSpec, interface_uses_new: bool = True):
        self.grid = g
        self.workspace = Workspace()
        self.interface_uses_new = interface_uses_new
        self.link_version = 0
        self._const: dict = {}
        self._links: Optional[tuple] = None
        self._psi_factors: Optional[tuple] = None

    def const_systems(self, dt_eff: float, sigma: float) -> linalg.ConstantSystems:
        key = linalg.constant_systems_key(dt_eff, sigma, self.grid)
        cs = self._const.get(key)
        if cs is None:
            cs = linalg.prefactor_constant_systems(dt_eff, sigma, self.grid)
            self._const[key] = cs
        return cs

    def invalidate_links(self) -> None:
        self.link_version += 1

    def links_for(self, s: State, p: Params) -> LinkField:
        """Current links; reused while A is frozen between updates."""
        if self._links is not None and self._links[0] == self.link_version:
            return self._links[1]
        links = link_variables(s, p, self.grid)
        self._links = (self.link_version, links)
        return links

    def frozen_psi_factors(self, links: LinkField, p: Params, dt: float):
        key = (self.link_version, dt)
        if self._psi_factors is not None and self._psi_factors[0] == key:
            return self._psi_factors[1]
        u_l = links.u_x[self.grid.n_sx - 1, :]
        u_r = links.u_x[self.grid.n_ex, :]
        factors = psi_sweep_factors(links, u_l, u_r, dt, self.grid)
        self._psi_factors = (key, factors)
        return factors


def semigroup_s(psi, tau, dt):
    """Exact flow of the local amplitude dynamics applied to psi.

    S(psi) = sqrt(tau) psi / sqrt(|psi|^2 + (tau - |psi|^2) exp(-2 tau dt));
    the phase of psi is preserved exactly and psi = 0 maps to 0.
    """
    psi = np.asarray(psi)
    x = psi.real * psi.real + psi.imag * psi.imag
    return np.sqrt(tau) * psi / np.sqrt(x + (tau - x) * np.exp(-2.0 * tau * dt))


def psi_sweep_factors(links: LinkField, u_fold_left: np.ndarray,
                      u_fold_right: np.ndarray, dt: float, g: GridSpec):
    """Factor the per-line sweep systems (I - dt Lxx) and (I - dt Lyy).

    The x systems (one per row, complex tridiagonal over the core
    columns) eliminate the interface ghost unknowns
    phi[n_sx-1] = U phi[n_sx] and phi[n_ex+1] = U* phi[n_ex] into the
    first and last diagonal entries, with U taken from the fold columns.
    The y systems are complex cyclic tridiagonal, one per core column.
    These matrices are strictly diagonally dominant for any dt > 0, so
    the factorization cannot break down.
    """
    i0, i1 = g.n_sx, g.n_ex
    n_sc, ny = g.n_sc, g.n_y
    rows = slice(1, ny + 1)
    cx = dt / (g.h_x * g.h_x)
    cy = dt / (g.h_y * g.h_y)

    sup_x = np.zeros((n_sc, ny), dtype=complex)
    sub_x = np.zeros((n_sc, ny), dtype=complex)
    sup_x[:-1, :] = -cx * links.u_x[i0:i1, rows]
    sub_x[1:, :] = -cx * np.conj(links.u_x[i0:i1, rows])
    diag_x = np.full((n_sc, ny), 1.0 + 2.0 * cx, dtype=complex)
    diag_x[0, :] = 1.0 + cx * (
        2.0 - np.conj(links.u_x[i0 - 1, rows]) * u_fold_left[rows])
    diag_x[-1, :] = 1.0 + cx * (
        2.0 - links.u_x[i1, rows] * np.conj(u_fold_right[rows]))
    xfac = linalg.thomas_factor(sub_x, diag_x, sup_x)

    # y systems: arrays (n_y, n_sc); row b is grid row j = 1 + b
    u_y = links.u_y[i0:i1 + 1, :]
    sup_y = (-cy * u_y[:, rows]).T.copy()
    sub_y = (-cy * np.conj(u_y[:, 0:ny])).T.copy()
    diag_y = np.full((ny, n_sc), 1.0 + 2.0 * cy, dtype=complex)
    yfac = linalg.cyclic_factor(sub_y, diag_y, sup_y)
    return xfac, yfac


def adi_solve_psi(rhs: np.ndarray, links: LinkField, p: Params, g: GridSpec,
                  dt: Optional[float] = None,
                  interface_links: Optional[LinkField] = None,
                  factors=None) -> np.ndarray:
    """Solve (I - dt Lxx)(I - dt Lyy) phi = rhs by two sweeps.

    rhs and the returned correction are core blocks of shape (n_sc, n_y).
    With dt = 0 both factors are the identity and phi equals rhs.  The
    interface ghost elimination uses interface_links (default: links).
    """
    if dt is None:
        dt = p.dt
    if factors is None:
        fold = links if interface_links is None else interface_links
        factors = psi_sweep_factors(links, fold.u_x[g.n_sx - 1, :],
                                    fold.u_x[g.n_ex, :], dt, g)
    xfac, yfac = factors
    phi_half = linalg.thomas_solve(xfac, np.asarray(rhs, dtype=complex))
    phi = linalg.cyclic_solve(yfac, phi_half.T.copy()).T
    return np.ascontiguousarray(phi)


def _commit_a_implicit(s: State, p: Params, g: GridSpec, cache: StepperCache,
                       dt_eff: float, links: LinkField) -> float:
    """Advance A by the shifted implicit systems; returns max |Delta A|."""
    nx, ny = g.n_x, g.n_y
    rows = slice(1, ny + 1)
    up = slice(2, ny + 2)
    r = dt_eff / p.sigma
    jx, jy = supercurrent(s, links, p, g)

    rhs_ax = s.a_x[1:nx, rows] + r * (-apply_dyx(s.a_y, g) + jx[1:nx, rows])
    rhs_ay = s.a_y[1:nx + 1, rows] + r * (-apply_dxy(s.a_x, g)
                                          + jy[1:nx + 1, rows])
    # constants from the boundary ghost closure, into the edge rows
    c_l = -g.h_x * (p.h_l + (s.a_x[0, up] - s.a_x[0, rows]) / g.h_y)
    c_r = g.h_x * (p.h_r + (s.a_x[nx, up] - s.a_x[nx, rows]) / g.h_y)
    rx_h2 = r / (g.h_x * g.h_x)
    rhs_ay[0, :] += rx_h2 * c_l
    rhs_ay[-1, :] += rx_h2 * c_r

    cs = cache.const_systems(dt_eff, p.sigma)
    new_ax = linalg.cyclic_solve(cs.ax_cyclic, rhs_ax.T.copy()).T
    new_ay = linalg.thomas_solve(cs.ay_tridiag, rhs_ay)

    max_da = max(
        float(np.max(np.abs(new_ax - s.a_x[1:nx, rows]))) if nx > 1 else 0.0,
        float(np.max(np.abs(new_ay - s.a_y[1:nx + 1, rows]))),
    )
    s.a_x[1:nx, rows] = new_ax
    s.a_y[1:nx + 1, rows] = new_ay
    cache.invalidate_links()
    return max_da


def _finish(s: State, p: Params, g: GridSpec, max_dpsi: float, max_da: float,
            psi_max: float, t0: float) -> StepReport:
    s.t += p.dt
    s.step += 1
    refresh_closures(s, p, g)
    diverged = state_diverged(s, g, psi_max)
    return StepReport(state=s, max_dpsi=max_dpsi, max_da=max_da,
                      diverged=diverged, wall_time=time.perf_counter() - t0)


def step_explicit(s: State, p: Params, g: GridSpec,
                  psi_max: float = DEFAULT_PSI_MAX) -> StepReport:
    """Algorithm I: forward Euler for psi and A from step-n data."""
    t0 = time.perf_counter()
    links = link_variables(s, p, g)
    sc = s.psi[g.n_sx:g.n_ex + 1, 1:g.n_y + 1]
    dpsi = (apply_lxx(s.psi, links.u_x, g) + apply_lyy(s.psi, links.u_y, g)
            + nonlinear_n(sc, p.tau_sc(g)))
    jx, jy = supercurrent(s, links, p, g)
    rows = slice(1, g.n_y + 1)
    dax = (apply_dyy(s.a_x, g) - apply_dyx(s.a_y, g)
           + jx[1:g.n_x, rows]) / p.sigma
    day = (apply_dxx(s.a_y, g) - apply_dxy(s.a_x, g)
           + jy[1:g.n_x + 1, rows]) / p.sigma

    sc += p.dt * dpsi
    s.a_x[1:g.n_x, rows] += p.dt * dax
    s.a_y[1:g.n_x + 1, rows] += p.dt * day
    max_dpsi = p.dt * float(np.max(np.abs(dpsi)))
    max_da = p.dt * max(float(np.max(np.abs(dax))) if dax.size else 0.0,
                        float(np.max(np.abs(day))))
    return _finish(s, p, g, max_dpsi, max_da, psi_max, t0)


def step_semi_implicit(s: State, p: Params, g: GridSpec, cache: StepperCache,
                       psi_max: float = DEFAULT_PSI_MAX) -> StepReport:
    """Algorithm II: psi explicit, A through the prefactored systems."""
    t0 = time.perf_counter()
    links = link_variables(s, p, g)
    sc = s.psi[g.n_sx:g.n_ex + 1, 1:g.n_y + 1]
    dpsi = (apply_lxx(s.psi, links.u_x, g) + apply_lyy(s.psi, links.u_y, g)
            + nonlinear_n(sc, p.tau_sc(g)))
    max_da = _commit_a_implicit(s, p, g, cache, p.dt, links)
    sc += p.dt * dpsi
    max_dpsi = p.dt * float(np.max(np.abs(dpsi)))
    return _finish(s, p, g, max_dpsi, max_da, psi_max, t0)


def _step_adi(s: State, p: Params, g: GridSpec, cache: StepperCache,
              fully: bool, update_a: bool, dt_a: float,
              use_link_cache: bool, psi_max: float) -> StepReport:
    t0 = time.perf_counter()
    if use_link_cache:
        links = cache.links_for(s, p)
    else:
        links = link_variables(s, p, g)
    sc = s.psi[g.n_sx:g.n_ex + 1, 1:g.n_y + 1]
    lsum = apply_lxx(s.psi, links.u_x, g) + apply_lyy(s.psi, links.u_y, g)
    tau = p.tau_sc(g)
    if fully:
        rhs = p.dt * lsum + (semigroup_s(sc, tau, p.dt) - sc)
    else:
        rhs = p.dt * (lsum + nonlinear_n(sc, tau))

    if update_a:
        max_da = _commit_a_implicit(s, p, g, cache, dt_a, links)
        if cache.interface_uses_new:
            u_l, u_r = interface_link_columns(s, p, g)
        else:
            u_l = links.u_x[g.n_sx - 1, :]
            u_r = links.u_x[g.n_ex, :]
        factors = psi_sweep_factors(links, u_l, u_r, p.dt, g)
    else:
        max_da = 0.0
        factors = cache.frozen_psi_factors(links, p, p.dt)

    phi = adi_solve_psi(rhs, links, p, g, dt=p.dt, factors=factors)
    sc += phi
    max_dpsi = float(np.max(np.abs(phi)))
    return _finish(s, p, g, max_dpsi, max_da, psi_max, t0)


def step_implicit(s: State, p: Params, g: GridSpec, cache: StepperCache,
                  psi_max: float = DEFAULT_PSI_MAX) -> StepReport:
    """Algorithm III: A as in II, psi by the factored sweeps with the
    explicit nonlinear term dt N(psi^n) in the right-hand side."""
    return _step_adi(s, p, g, cache, fully=False, update_a=True, dt_a=p.dt,
                     use_link_cache=False, psi_max=psi_max)


def step_fully_implicit(s: State, p: Params, g: GridSpec, cache: StepperCache,
                        psi_max: float = DEFAULT_PSI_MAX) -> StepReport:
    """Algorithm IV: as III with the semigroup term S(psi^n) - psi^n
    making the nonlinearity implicit."""
    return _step_adi(s, p, g, cache, fully=True, update_a=True, dt_a=p.dt,
                     use_link_cache=False, psi_max=psi_max)


def step_multirate(s: State, p: Params, g: GridSpec, cache: StepperCache,
                   phase: int, psi_max: float = DEFAULT_PSI_MAX) -> StepReport:
    """Fully implicit psi step; A advances only when phase % m == 0,
    with effective step m*dt.  Links and the sweep factorizations stay
    frozen while A does.  Bit-identical to Algorithm IV when m = 1."""
    update_a = (phase % p.m) == 0
    return _step_adi(s, p, g, cache, fully=True, update_a=update_a,
                     dt_a=p.m * p.dt, use_link_cache=True, psi_max=psi_max)


# ---------------------------------------------------------------------------
# stability-limit search
# ---------------------------------------------------------------------------


class BracketError(RuntimeError):
    """The supplied [lo, hi] interval does not bracket the limit."""


class LowerBoundUnstable(BracketError):
    pass


class UpperBoundStable(BracketError):
    """No divergence up to the search cap; the limit, if finite, exceeds it."""

    def __init__(self, cap: float):
        super().__init__(f"upper bound {cap} is stable; no finite limit found")
        self.cap = cap


@dataclass
class Scenario:
    """A reproducible stability-probe setup: grid, parameters (dt is
    overridden per probe), initial state recipe, and probe horizon."""

    grid: GridSpec
    params: Params
    seed: int = 0
    probe_horizon: int = DEFAULT_PROBE_HORIZON
    psi_max: float = DEFAULT_PSI_MAX
    initial: str = "field-cooled"
    noise_eps: float = 1e-3


def run_probe(alg: AlgorithmId, scen: Scenario, dt: float) -> bool:
    """True when the scenario survives the probe horizon without divergence."""
    p = replace(scen.params, dt=dt)
    s = make_initial_state(scen.grid, p, scen.seed, noise_eps=scen.noise_eps,
                           mode=scen.initial)
    cache = StepperCache(p, scen.grid)
    for n in range(scen.probe_horizon):
        if alg is AlgorithmId.EXPLICIT:
            rep = step_explicit(s, p, scen.grid, psi_max=scen.psi_max)
        elif alg is AlgorithmId.SEMI_IMPLICIT:
            rep = step_semi_implicit(s, p, scen.grid, cache,
                                     psi_max=scen.psi_max)
        elif alg is AlgorithmId.IMPLICIT:
            rep = step_implicit(s, p, scen.grid, cache, psi_max=scen.psi_max)
        else:
            rep = step_multirate(s, p, scen.grid, cache, phase=n,
                                 psi_max=scen.psi_max)
        if rep.diverged:
            return False
    return True


def _two_sig_fig_unit(x: float) -> float:
    return 10.0 ** (math.floor(math.log10(x)) - 1)


def find_stability_limit(alg: AlgorithmId, scenario: Scenario,
                         lo: float, hi: float,
                         probe: Optional[Callable[[float], bool]] = None) -> float:
    """Largest probed stable dt, bisected to two-significant-figure
    resolution.  "Unstable" means the divergence flag trips within the
    scenario's probe horizon.

    Raises LowerBoundUnstable when even dt = lo diverges and
    UpperBoundStable when dt = hi survives (no finite limit below hi).
    With degenerate bounds lo == hi, a single probe decides: the value is
    returned when stable, LowerBoundUnstable raised otherwise.
    """
    if not (0 < lo <= hi):
        raise ValueError("need 0 < lo <= hi")
    if probe is None:
        probe = lambda dt: run_probe(alg, scenario, dt)
    if not probe(lo):
        raise LowerBoundUnstable(f"lower bound dt={lo} already diverges")
    if lo == hi:
        return lo
    if probe(hi):
        raise UpperBoundStable(hi)
    for _ in range(200):
        if hi - lo <= _two_sig_fig_unit(lo):
            break
        mid = 0.5 * (lo + hi)
        if probe(mid):
            lo = mid
        else:
            hi = mid
    return lo
