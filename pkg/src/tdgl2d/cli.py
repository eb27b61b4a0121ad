"""Command-line front end: run loop, stability scan, rendering, verification.

Subcommands:

    run            integrate a configuration to equilibrium or max_steps
    resume         continue a run from a checkpoint file
    stability-scan bisect the maximal stable time step per algorithm
    render         rasterize a snapshot field to a portable graymap
    verify         run the built-in oracle property suite

The configuration file is INI-style key/value text with sections [grid],
[physics], [integrator], [diagnostics], [io] and [run]; see the README
for the full grammar and defaults.  A few keys can be overridden from
the command line (--dt, --algorithm, --m, --max-steps, --seed, --out).

Determinism: with a fixed configuration and seed the diagnostics CSV is
bit-identical between runs on the same platform, and interrupting at a
checkpoint and resuming reproduces the uninterrupted trajectory bit for
bit.  Wall-clock figures (the summary's cost columns) are measured
around the numerics only, excluding file output and diagnostics.

The environment variable TDGL2D_THREADS, when set, is exported to the
BLAS thread-count variables before numpy gets to spawn its pools; the
default leaves the library defaults (all available cores) in place.
"""

from __future__ import annotations

import argparse
import configparser
import json
import math
import os
import sys
from collections import deque
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import __version__, oracles
from .diagnostics import (CSV_HEADER, DiagnosticsRecord, Vortex, VortexSet,
                          bond_statistics, detect_vortices, energy,
                          equilibrium_check, match_drift, record_to_csv_row,
                          reduced_ode_oracle)
from .fields import (INITIAL_MODES, Params, State, gauge_transform,
                     link_variables, load_checkpoint, load_snapshot,
                     magnetic_field, make_initial_state, psi_valid_block,
                     refresh_closures, save_checkpoint, save_snapshot,
                     supercurrent)
from .grid import GridConfig, GridSpec, build_grid
from .integrators import (AlgorithmId, LowerBoundUnstable, Scenario,
                          StepperCache, UpperBoundStable, adi_solve_psi,
                          find_stability_limit, semigroup_s, step_explicit,
                          step_implicit, step_multirate, step_semi_implicit)


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    """Validated run configuration assembled from file plus overrides."""

    grid: GridConfig
    kappa: float
    sigma: float
    h_l: float
    h_r: float
    tau_file: Optional[str]
    algorithm: AlgorithmId
    dt: float
    m: int
    max_steps: int
    probe_horizon: int
    divergence_psi_max: float
    interface_links: str
    sample_every: int
    equilibrium_window: int
    drift_tol: float
    out_dir: str
    snapshot_every: int
    checkpoint_every: int
    snapshot_format: str
    seed: int
    initial: str
    noise_eps: float

    def build(self):
        g = build_grid(self.grid)
        tau = 1.0
        if self.tau_file:
            tau = np.loadtxt(self.tau_file)
            if tau.shape != g.shape:
                raise ConfigError(
                    f"tau_file grid {tau.shape} does not match the "
                    f"storage shape {g.shape}")
        p = Params(kappa=self.kappa, sigma=self.sigma, dt=self.dt, tau=tau,
                   h_l=self.h_l, h_r=self.h_r, m=self.m)
        return g, p


_DEFAULTS = {
    ("physics", "kappa"): "16.0",
    ("physics", "sigma"): "1.0",
    ("physics", "h_l"): "0.5",
    ("physics", "h_r"): "0.5",
    ("integrator", "algorithm"): "IV",
    ("integrator", "m"): "1",
    ("integrator", "probe_horizon"): "50000",
    ("integrator", "divergence_psi_max"): "10.0",
    ("integrator", "interface_links"): "new",
    ("diagnostics", "sample_every"): "1000",
    ("diagnostics", "equilibrium_window"): "2",
    ("diagnostics", "drift_tol"): "1e-6",
    ("io", "snapshot_every"): "0",
    ("io", "checkpoint_every"): "0",
    ("io", "format"): "binary",
    ("run", "seed"): "0",
    ("run", "initial"): "field-cooled",
    ("run", "noise_eps"): "1e-3",
}


def load_config(path: str, overrides: Optional[dict] = None) -> RunConfig:
    cp = configparser.ConfigParser(interpolation=None)
    read = cp.read(path)
    if not read:
        raise ConfigError(f"cannot read config file {path}")

    def get(section, key, required=False):
        if cp.has_option(section, key):
            return cp.get(section, key)
        if required:
            raise ConfigError(f"missing required key [{section}] {key}")
        return _DEFAULTS.get((section, key))

    overrides = overrides or {}
    try:
        grid = GridConfig(
            domain_x_xi=float(get("grid", "domain_x_xi", True)),
            domain_y_xi=float(get("grid", "domain_y_xi", True)),
            blanket_xi=float(get("grid", "blanket_xi", True)),
            h_xi=float(get("grid", "h_xi", True)),
        )
        alg = AlgorithmId.parse(
            overrides.get("algorithm") or get("integrator", "algorithm"))
        interface = get("integrator", "interface_links")
        if interface not in ("new", "old"):
            raise ConfigError("interface_links must be 'new' or 'old'")
        initial = str(get("run", "initial"))
        if initial not in INITIAL_MODES:
            raise ConfigError(f"initial must be one of {INITIAL_MODES}")
        fmt = get("io", "format")
        if fmt not in ("binary", "text"):
            raise ConfigError("io format must be 'binary' or 'text'")
        cfg = RunConfig(
            grid=grid,
            kappa=float(get("physics", "kappa")),
            sigma=float(get("physics", "sigma")),
            h_l=float(get("physics", "h_l")),
            h_r=float(get("physics", "h_r")),
            tau_file=get("physics", "tau_file") or None,
            algorithm=alg,
            dt=float(overrides.get("dt") or get("integrator", "dt", True)),
            m=int(overrides.get("m") or get("integrator", "m")),
            max_steps=int(overrides.get("max_steps")
                          if overrides.get("max_steps") is not None
                          else get("integrator", "max_steps", True)),
            probe_horizon=int(get("integrator", "probe_horizon")),
            divergence_psi_max=float(get("integrator", "divergence_psi_max")),
            interface_links=interface,
            sample_every=int(get("diagnostics", "sample_every")),
            equilibrium_window=int(get("diagnostics", "equilibrium_window")),
            drift_tol=float(get("diagnostics", "drift_tol")),
            out_dir=str(overrides.get("out") or get("io", "out_dir", True)),
            snapshot_every=int(get("io", "snapshot_every")),
            checkpoint_every=int(get("io", "checkpoint_every")),
            snapshot_format=fmt,
            seed=int(overrides.get("seed") if overrides.get("seed") is not None
                     else get("run", "seed")),
            initial=initial,
            noise_eps=float(get("run", "noise_eps")),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    if cfg.m > 1 and cfg.algorithm is not AlgorithmId.FULLY_IMPLICIT:
        raise ConfigError("multirate (m > 1) requires algorithm IV")
    if cfg.sample_every < 1 or cfg.equilibrium_window < 2:
        raise ConfigError("need sample_every >= 1 and equilibrium_window >= 2")
    return cfg


def _stepper_for(cfg: RunConfig):
    alg = cfg.algorithm

    def step(s, p, g, cache, phase):
        if alg is AlgorithmId.EXPLICIT:
            return step_explicit(s, p, g, psi_max=cfg.divergence_psi_max)
        if alg is AlgorithmId.SEMI_IMPLICIT:
            return step_semi_implicit(s, p, g, cache,
                                      psi_max=cfg.divergence_psi_max)
        if alg is AlgorithmId.IMPLICIT:
            return step_implicit(s, p, g, cache,
                                 psi_max=cfg.divergence_psi_max)
        return step_multirate(s, p, g, cache, phase,
                              psi_max=cfg.divergence_psi_max)

    return step


def _sample(s: State, p: Params, g: GridSpec, prev_vortices) -> tuple:
    """One diagnostics record plus the vortex set it was computed from."""
    vs = detect_vortices(s, p, g)
    drift = float("nan")
    if prev_vortices is not None:
        d = match_drift(prev_vortices, vs, g)
        drift = d if d is not None else float("inf")
    length = angle = float("nan")
    if vs.count >= 3:
        stats = bond_statistics(vs, g)
        length, angle = stats.mean_bond_length, stats.mean_bond_angle
    rec = DiagnosticsRecord(
        t=s.t, step=s.step, energy=energy(s, p, g), vortex_count=vs.count,
        mean_bond_length=length, mean_bond_angle=angle,
        max_position_drift=drift,
    )
    return rec, vs


def _vortices_csv(path, vs):
    with open(path, "w") as fh:
        fh.write("x,y,winding\n")
        for v in vs.vortices:
            fh.write("%.17g,%.17g,%d\n" % (v.x, v.y, v.winding))


def run(cfg: RunConfig, resume_from: Optional[str] = None) -> int:
    """Integrate to equilibrium or max_steps; write diagnostics CSV,
    periodic snapshots/checkpoints, the final vortex set, and a summary.

    Returns the process exit status: 0 on completion (equilibrium or step
    budget), 2 on divergence (artifacts still written)."""
    g, p = cfg.build()
    os.makedirs(cfg.out_dir, exist_ok=True)
    phase = 0
    history: deque = deque(maxlen=cfg.equilibrium_window)
    prev_vs = None

    if resume_from:
        s, header, g_chk, seed, phase, samples = load_checkpoint(resume_from)
        if (g_chk.n_x, g_chk.n_y) != (g.n_x, g.n_y):
            raise ConfigError(
                f"checkpoint grid {g_chk.n_x}x{g_chk.n_y} does not match "
                f"config grid {g.n_x}x{g.n_y}")
        refresh_closures(s, p, g)
        for sample_step, vortices in samples[-cfg.equilibrium_window:]:
            vs = VortexSet([Vortex(x, y, w) for x, y, w in vortices])
            history.append((sample_step, vs))
            prev_vs = vs
    else:
        s = make_initial_state(g, p, cfg.seed, noise_eps=cfg.noise_eps,
                               mode=cfg.initial)

    step = _stepper_for(cfg)
    cache = StepperCache(p, g, interface_uses_new=cfg.interface_links == "new")
    csv_path = os.path.join(cfg.out_dir, "diagnostics.csv")
    csv_fh = open(csv_path, "a" if resume_from else "w")
    if not resume_from:
        csv_fh.write(CSV_HEADER + "\n")

    def emit_sample():
        nonlocal prev_vs
        rec, vs = _sample(s, p, g, prev_vs)
        csv_fh.write(record_to_csv_row(rec) + "\n")
        csv_fh.flush()
        history.append((s.step, vs))
        prev_vs = vs
        return rec, vs

    def write_checkpoint(path):
        recent = [(sample_step, [(v.x, v.y, v.winding) for v in vs_.vortices])
                  for sample_step, vs_ in history]
        save_checkpoint(path, s, p, g, cfg.seed, phase, recent,
                        fmt=cfg.snapshot_format)

    diverged = False
    equilibrium = False
    steps_done = 0
    wall_numerics = 0.0
    if not resume_from:
        emit_sample()

    # max_steps is the absolute step budget, so an interrupted run resumed
    # from a checkpoint stops at the same final step as an unbroken one
    while s.step < cfg.max_steps:
        rep = step(s, p, g, cache, phase)
        phase = (phase + 1) % p.m
        steps_done += 1
        wall_numerics += rep.wall_time
        if rep.diverged:
            diverged = True
            break
        if s.step % cfg.sample_every == 0:
            emit_sample()
            if (len(history) == cfg.equilibrium_window
                    and equilibrium_check([vs for _, vs in history], g,
                                          cfg.drift_tol)):
                equilibrium = True
        if cfg.snapshot_every and s.step % cfg.snapshot_every == 0:
            save_snapshot(os.path.join(cfg.out_dir, f"snap_{s.step:09d}.dat"),
                          s, p, g, fmt=cfg.snapshot_format)
        if cfg.checkpoint_every and s.step % cfg.checkpoint_every == 0:
            write_checkpoint(os.path.join(cfg.out_dir, "checkpoint.dat"))
        if equilibrium:
            break

    csv_fh.close()
    save_snapshot(os.path.join(cfg.out_dir, "final.dat"), s, p, g,
                  fmt=cfg.snapshot_format)
    final_vs = None
    if not diverged:
        final_vs = detect_vortices(s, p, g)
        _vortices_csv(os.path.join(cfg.out_dir, "vortices.csv"), final_vs)

    cost_per_step = wall_numerics / steps_done if steps_done else 0.0
    summary = {
        "algorithm": cfg.algorithm.label,
        "dt": cfg.dt,
        "m": cfg.m,
        "seed": cfg.seed,
        "initial": cfg.initial,
        "steps": steps_done,
        "final_step": s.step,
        "final_t": s.t,
        "equilibrium_reached": equilibrium,
        "diverged": diverged,
        "vortex_count": final_vs.count if final_vs is not None else None,
        "n_dt": steps_done * cfg.dt,
        "cost_seconds_per_step": cost_per_step,
        "wall_minutes": steps_done * cost_per_step / 60.0,
    }
    with open(os.path.join(cfg.out_dir, "summary.json"), "w") as fh:
        json.dump(summary, fh, indent=2)
        fh.write("\n")
    return 2 if diverged else 0


def stability_scan(cfg: RunConfig, algorithms, lo: float, hi: float,
                   out=sys.stdout) -> list:
    """Bisect the maximal stable step per algorithm on the configured
    scenario; emits one row per algorithm and returns the rows."""
    g, p = cfg.build()
    scen = Scenario(grid=g, params=p, seed=cfg.seed,
                    probe_horizon=cfg.probe_horizon,
                    psi_max=cfg.divergence_psi_max,
                    initial=cfg.initial, noise_eps=cfg.noise_eps)
    rows = []
    for alg in algorithms:
        try:
            limit = find_stability_limit(alg, scen, lo, hi)
            rows.append({"algorithm": alg.label, "dt_max": limit,
                         "bounded": True})
            out.write(f"{alg.label:>4s}  dt_max = {limit:.6g}\n")
        except UpperBoundStable as exc:
            rows.append({"algorithm": alg.label, "dt_max": exc.cap,
                         "bounded": False})
            out.write(f"{alg.label:>4s}  no finite limit <= {exc.cap:g}\n")
        except LowerBoundUnstable as exc:
            rows.append({"algorithm": alg.label, "dt_max": None,
                         "bounded": None, "error": str(exc)})
            out.write(f"{alg.label:>4s}  bracket failure: {exc}\n")
        out.flush()
    return rows


def render(snapshot_path: str, quantity: str, out_path: str,
           overlay_vortices: bool = False) -> None:
    """Rasterize |psi|, the phase, or B from a snapshot to a binary PGM.

    Linear gray scaling between the field minimum and maximum, which are
    recorded in a sidecar text file next to the image.
    """
    s, header, g = load_snapshot(snapshot_path)
    kappa = float(header.get("kappa", 1.0))
    sigma = float(header.get("sigma", 1.0))
    # snapshots store closure-fresh ghost values; re-closing would need
    # the applied field, which the header does not carry
    p = Params(kappa=kappa, sigma=sigma, dt=1.0, h_l=0.0, h_r=0.0)
    # psi/phase raster the superconducting block; B the whole cell grid
    col0 = g.n_sx
    if quantity == "psi":
        field_ = np.abs(s.psi[g.n_sx:g.n_ex + 1, 1:g.n_y + 1])
    elif quantity == "phase":
        field_ = np.angle(s.psi[g.n_sx:g.n_ex + 1, 1:g.n_y + 1])
    elif quantity == "B":
        field_ = magnetic_field(s, g)[:, 1:]
        col0 = 0
    else:
        raise ValueError(f"unknown quantity {quantity!r}; use psi, phase or B")

    lo, hi = float(field_.min()), float(field_.max())
    if hi > lo:
        gray = np.rint((field_ - lo) / (hi - lo) * 255.0).astype(np.uint8)
    else:
        gray = np.full(field_.shape, 128, dtype=np.uint8)
    img = gray.T[::-1, :].copy()  # rows top-to-bottom = decreasing y
    marks = []
    if overlay_vortices:
        vs = detect_vortices(s, p, g)
        for v in vs.vortices:
            ci = int(round((v.x - g.x_0) / g.h_x)) - col0
            cj = int(round((v.y - g.y_0) / g.h_y)) - 1
            marks.append((ci, cj))
            row = img.shape[0] - 1 - cj
            col = ci
            for dr, dc in ((0, 0), (1, 0), (-1, 0), (0, 1), (0, -1)):
                r, c = row + dr, col + dc
                if 0 <= r < img.shape[0] and 0 <= c < img.shape[1]:
                    img[r, c] = 255
    with open(out_path, "wb") as fh:
        fh.write(b"P5\n%d %d\n255\n" % (img.shape[1], img.shape[0]))
        fh.write(img.tobytes())
    with open(out_path + ".txt", "w") as fh:
        fh.write(f"source {snapshot_path}\nquantity {quantity}\n"
                 f"min {lo:.17g}\nmax {hi:.17g}\n"
                 f"vortex_marks {len(marks)}\n")


# ---------------------------------------------------------------------------
# verify: the oracle property suite
# ---------------------------------------------------------------------------


def _verify_operators(tol: float) -> tuple[bool, str]:
    from .oracles import dense_dxx, dense_dxy, dense_dyx, dense_dyy, dense_lxx, dense_lyy
    from .operators import (apply_dxx, apply_dxy, apply_dyx, apply_dyy,
                            apply_lxx, apply_lyy)
    g = build_grid(GridConfig(8, 6, 1, 1))
    p = Params(kappa=2.0, sigma=1.0, dt=0.1)
    rng = np.random.default_rng(2024)
    s = make_initial_state(g, p, seed=5)
    s.a_x[...] = rng.standard_normal(g.shape)
    s.a_y[...] = rng.standard_normal(g.shape)
    refresh_closures(s, p, g)
    links = link_variables(s, p, g)
    worst = 0.0

    for j in range(1, g.n_y + 1):
        m = dense_lxx(g, links.u_x[:, j])
        for k in range(g.n_sc):
            e = np.zeros(g.shape, complex)
            e[g.n_sx + k, j] = 1.0
            e[g.n_sx - 1, j] = links.u_x[g.n_sx - 1, j] * e[g.n_sx, j]
            e[g.n_ex + 1, j] = np.conj(links.u_x[g.n_ex, j]) * e[g.n_ex, j]
            got = apply_lxx(e, links.u_x, g)[:, j - 1]
            worst = max(worst, float(np.max(np.abs(got - m[:, k]))))
    for i in range(g.n_sx, g.n_ex + 1):
        m = dense_lyy(g, links.u_y[i, :])
        for k in range(g.n_y):
            e = np.zeros(g.shape, complex)
            e[i, 1 + k] = 1.0
            e[i, 0] = e[i, g.n_y]
            e[i, g.n_y + 1] = e[i, 1]
            got = apply_lyy(e, links.u_y, g)[i - g.n_sx, :]
            worst = max(worst, float(np.max(np.abs(got - m[:, k]))))

    m = dense_dyy(g)
    for k in range(g.n_y):
        e = np.zeros(g.shape)
        e[2, 1 + k] = 1.0
        e[2, 0] = e[2, g.n_y]
        e[2, g.n_y + 1] = e[2, 1]
        got = apply_dyy(e, g)[1, :]
        worst = max(worst, float(np.max(np.abs(got - m[:, k]))))
    m = dense_dxx(g)
    p0 = Params(kappa=2.0, sigma=1.0, dt=0.1, h_l=0.0, h_r=0.0)
    for k in range(g.n_x):
        st = State(psi=np.full(g.shape, np.nan + 0j), a_x=np.zeros(g.shape),
                   a_y=np.zeros(g.shape))
        st.a_y[1 + k, 1:g.n_y + 1] = 1.0
        refresh_closures(st, p0, g)
        got = apply_dxx(st.a_y, g)[:, 0]
        worst = max(worst, float(np.max(np.abs(got - m[:, k]))))
    md_yx = dense_dyx(g)
    md_xy = dense_dxy(g)
    for trial in range(4):
        a_y = np.zeros(g.shape)
        a_y[1:g.n_x + 1, 1:g.n_y + 1] = rng.standard_normal((g.n_x, g.n_y))
        a_y[:, 0] = a_y[:, g.n_y]
        a_y[:, g.n_y + 1] = a_y[:, 1]
        got = apply_dyx(a_y, g).reshape(-1)
        want = md_yx @ a_y[1:g.n_x + 1, 1:g.n_y + 1].reshape(-1)
        worst = max(worst, float(np.max(np.abs(got - want))))
        a_x = np.zeros(g.shape)
        a_x[0:g.n_x + 1, 1:g.n_y + 1] = rng.standard_normal((g.n_x + 1, g.n_y))
        a_x[:, 0] = a_x[:, g.n_y]
        a_x[:, g.n_y + 1] = a_x[:, 1]
        got = apply_dxy(a_x, g).reshape(-1)
        want = md_xy @ a_x[0:g.n_x + 1, 1:g.n_y + 1].reshape(-1)
        worst = max(worst, float(np.max(np.abs(got - want))))
    return worst <= tol, f"max deviation {worst:.2e} (tol {tol:g})"


def _verify_solvers(tol: float, trials: int) -> tuple[bool, str]:
    from .linalg import TridiagSystem, solve_cyclic_tridiag, solve_tridiag
    rng = np.random.default_rng(99)
    worst = 0.0
    for k in range(trials):
        n = int(rng.integers(3, 65))
        complex_ = bool(k % 2)
        periodic = bool((k // 2) % 2)

        def draw(z):
            a = rng.standard_normal(n)
            return a + 1j * rng.standard_normal(n) if z else a

        sub, diag, sup = draw(complex_), draw(complex_), draw(complex_)
        diag = diag + (4.0 + 0j if complex_ else 4.0) * np.sign(
            diag.real + (diag.real == 0))
        if not periodic:
            sub[0] = 0
            sup[-1] = 0
        sys_ = TridiagSystem(sub, diag, sup, periodic=periodic)
        b = draw(complex_)
        x = (solve_cyclic_tridiag(sys_, b) if periodic
             else solve_tridiag(sys_, b))
        r = sys_.dense() @ x - b
        worst = max(worst, float(np.max(np.abs(r)) / np.max(np.abs(b))))
    return worst <= tol, f"worst relative residual {worst:.2e} (tol {tol:g})"


def _verify_semigroup(tol: float) -> tuple[bool, str]:
    worst = 0.0
    for x0 in (0.04, 0.25, 0.81):
        for tau in (0.5, 1.0):
            for dt in (0.01, 0.1, 1.0):
                got = abs(semigroup_s(math.sqrt(x0) + 0j, tau, dt)) ** 2
                want, _ = reduced_ode_oracle(x0, 0.0, tau, 0.0, dt)
                worst = max(worst, abs(got - want))
    return worst <= tol, f"max |S^2 - ode| {worst:.2e} (tol {tol:g})"


def _verify_adi_order(lo: float, hi: float) -> tuple[bool, str]:
    rng = np.random.default_rng(12345)
    g = build_grid(GridConfig(64, 64, 4, 4))
    p = Params(kappa=3.0, sigma=1.0, dt=0.2)
    s = make_initial_state(g, p, seed=3)
    s.a_x[...] = rng.standard_normal(g.shape)
    s.a_y[...] = rng.standard_normal(g.shape)
    refresh_closures(s, p, g)
    links = link_variables(s, p, g)
    rhs = rng.standard_normal((g.n_sc, g.n_y)) \
        + 1j * rng.standard_normal((g.n_sc, g.n_y))
    errs = []
    for dt in (0.2, 0.1, 0.05):
        phi = adi_solve_psi(rhs, links, p, g, dt=dt)
        ref = oracles.unfactored_psi_solve(rhs, links, p, g, dt=dt)
        errs.append(float(np.max(np.abs(phi - ref))))
    ratios = [errs[i] / errs[i + 1] for i in range(len(errs) - 1)]
    ok = all(lo <= r <= hi for r in ratios)
    return ok, "ratios " + ", ".join(f"{r:.3f}" for r in ratios) + \
        f" (want {lo:g}..{hi:g})"


def _verify_gauge(tol: float, trials: int) -> tuple[bool, str]:
    g = build_grid(GridConfig(8, 6, 1, 1))
    p = Params(kappa=2.0, sigma=1.0, dt=0.01, h_l=0.3, h_r=0.2)
    rng = np.random.default_rng(4242)
    worst = 0.0
    for _ in range(trials):
        s = make_initial_state(g, p, seed=int(rng.integers(1 << 31)))
        blk = s.psi[g.n_sx - 1:g.n_ex + 2, 1:g.n_y + 1]
        blk[:] = rng.standard_normal(blk.shape) \
            + 1j * rng.standard_normal(blk.shape)
        s.a_x[...] = rng.standard_normal(g.shape)
        s.a_y[...] = rng.standard_normal(g.shape)
        refresh_closures(s, p, g)
        chi = rng.uniform(-math.pi, math.pi, g.shape)
        s2 = gauge_transform(s, chi, p, g)
        l1 = link_variables(s, p, g)
        l2 = link_variables(s2, p, g)
        d_abs = np.max(np.abs(np.abs(psi_valid_block(s2, g))
                              - np.abs(psi_valid_block(s, g))))
        d_b = np.max(np.abs(magnetic_field(s2, g) - magnetic_field(s, g)))
        j1 = supercurrent(s, l1, p, g)
        j2 = supercurrent(s2, l2, p, g)
        d_j = max(np.max(np.abs(j2[0] - j1[0])), np.max(np.abs(j2[1] - j1[1])))
        e1, e2 = energy(s, p, g, l1), energy(s2, p, g, l2)
        scale = max(1.0, abs(e1))
        worst = max(worst, float(d_abs), float(d_b), float(d_j),
                    abs(e2 - e1) / scale)
    return worst <= tol, f"max deviation {worst:.2e} (tol {tol:g})"


def verify(tolerances: Optional[dict] = None, out=sys.stdout) -> int:
    """Run the oracle suite; prints one pass/fail line per property and
    returns a nonzero status when any property fails."""
    tolerances = tolerances or {}
    checks = [
        ("operator-dense-equivalence",
         lambda: _verify_operators(tolerances.get("operators", 1e-13))),
        ("solver-residuals",
         lambda: _verify_solvers(tolerances.get("residual", 1e-11),
                                 int(tolerances.get("trials", 200)))),
        ("semigroup-vs-ode",
         lambda: _verify_semigroup(tolerances.get("semigroup", 1e-10))),
        ("adi-splitting-order",
         lambda: _verify_adi_order(tolerances.get("adi_lo", 3.4),
                                   tolerances.get("adi_hi", 4.6))),
        ("gauge-invariance",
         lambda: _verify_gauge(tolerances.get("gauge", 1e-12),
                               int(tolerances.get("gauge_trials", 20)))),
    ]
    failures = 0
    for name, fn in checks:
        ok, detail = fn()
        out.write(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}\n")
        out.flush()
        failures += 0 if ok else 1
    return 1 if failures else 0


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------


def _add_overrides(sp):
    sp.add_argument("--dt", type=float)
    sp.add_argument("--algorithm")
    sp.add_argument("--m", type=int)
    sp.add_argument("--max-steps", type=int, dest="max_steps")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--out")


def _overrides(args) -> dict:
    return {k: getattr(args, k) for k in
            ("dt", "algorithm", "m", "max_steps", "seed", "out")
            if getattr(args, k, None) is not None}


def main(argv=None) -> int:
    if os.environ.get("TDGL2D_THREADS"):
        n = os.environ["TDGL2D_THREADS"]
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS",
                    "MKL_NUM_THREADS"):
            os.environ.setdefault(var, n)

    ap = argparse.ArgumentParser(
        prog="tdgl2d",
        description="2D time-dependent Ginzburg-Landau vortex solver")
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("run", help="integrate a configuration")
    sp.add_argument("config")
    _add_overrides(sp)

    sp = sub.add_parser("resume", help="continue from a checkpoint")
    sp.add_argument("config")
    sp.add_argument("checkpoint")
    _add_overrides(sp)

    sp = sub.add_parser("stability-scan",
                        help="bisect the maximal stable dt per algorithm")
    sp.add_argument("config")
    sp.add_argument("--algorithms", default="I,II,III,IV")
    sp.add_argument("--lo", type=float, default=0.005)
    sp.add_argument("--hi", type=float, default=2.4)
    _add_overrides(sp)

    sp = sub.add_parser("render", help="rasterize a snapshot to PGM")
    sp.add_argument("snapshot")
    sp.add_argument("--quantity", choices=("psi", "phase", "B"),
                    default="psi")
    sp.add_argument("--out", required=True)
    sp.add_argument("--overlay-vortices", action="store_true")

    sp = sub.add_parser("verify", help="run the oracle property suite")
    sp.add_argument("--tol-operators", type=float)
    sp.add_argument("--tol-residual", type=float)
    sp.add_argument("--tol-semigroup", type=float)
    sp.add_argument("--tol-gauge", type=float)
    sp.add_argument("--trials", type=int)

    args = ap.parse_args(argv)

    if args.command == "run":
        cfg = load_config(args.config, _overrides(args))
        return run(cfg)
    if args.command == "resume":
        cfg = load_config(args.config, _overrides(args))
        return run(cfg, resume_from=args.checkpoint)
    if args.command == "stability-scan":
        cfg = load_config(args.config, _overrides(args))
        algs = [AlgorithmId.parse(tok) for tok in args.algorithms.split(",")]
        stability_scan(cfg, algs, args.lo, args.hi)
        return 0
    if args.command == "render":
        render(args.snapshot, args.quantity, args.out,
               overlay_vortices=args.overlay_vortices)
        return 0
    if args.command == "verify":
        tol = {}
        for key, arg in (("operators", "tol_operators"),
                         ("residual", "tol_residual"),
                         ("semigroup", "tol_semigroup"),
                         ("gauge", "tol_gauge"),
                         ("trials", "trials")):
            if getattr(args, arg, None) is not None:
                tol[key] = getattr(args, arg)
        return verify(tol)
    return 1


if __name__ == "__main__":
    sys.exit(main())
