"""Dynamical state, derived gauge quantities, closures, and snapshot I/O.

A State holds the complex order parameter on vertices and the two real
vector-potential components on edge midpoints, all in ghost-extended
storage arrays of shape ``grid.shape`` (see the grid module for the
index conventions).  The order parameter is stored only on the
superconducting columns plus one interface ghost column on each side;
everything else is NaN so that an out-of-region read fails loudly
instead of silently contributing zeros.

Between steps the state is kept closure-fresh: y ghost rows alias the
periodic images, the outermost A_y columns are set so the boundary-cell
curl equals the applied field, and the psi ghost columns carry the
link-transported interface values.  ``refresh_closures`` restores all of
these and is called by every integrator after it commits an update.

Derived-field computations (links, supercurrent, magnetic field, energy)
are pure functions of a state snapshot; their output does not depend on
evaluation order.
"""

from __future__ import annotations

import io
import os
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .grid import GridSpec

_FMT = "%.17g"  # exact round-trip for IEEE doubles


class SnapshotError(ValueError):
    """Malformed snapshot or checkpoint file."""


@dataclass
class Params:
    """Physical and stepping parameters.

    tau may be a scalar or a per-vertex array of storage shape; values
    must lie in (0, 1] (smaller than 1 wherever a defect sits).  Fields
    are in units of Hc*sqrt(2), times in units of xi^2/D.
    """

    kappa: float
    sigma: float
    dt: float
    tau: Union[float, np.ndarray] = 1.0
    h_l: float = 0.0
    h_r: float = 0.0
    m: int = 1

    def __post_init__(self):
        if self.kappa <= 0:
            raise ValueError("kappa must be positive")
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if int(self.m) != self.m or self.m < 1:
            raise ValueError("m must be an integer >= 1")
        self.m = int(self.m)
        tau = np.asarray(self.tau, dtype=float)
        if np.any(tau <= 0) or np.any(tau > 1):
            raise ValueError("tau values must lie in (0, 1]")
        self.tau = self.tau if np.ndim(self.tau) else float(self.tau)

    def tau_sc(self, g: GridSpec):
        """tau restricted to the superconducting block (broadcastable)."""
        if np.ndim(self.tau) == 0:
            return self.tau
        return np.asarray(self.tau)[g.n_sx:g.n_ex + 1, 1:g.n_y + 1]


@dataclass
class State:
    """Order parameter and vector potential with time bookkeeping."""

    psi: np.ndarray
    a_x: np.ndarray
    a_y: np.ndarray
    t: float = 0.0
    step: int = 0

    def copy(self) -> "State":
        return State(self.psi.copy(), self.a_x.copy(), self.a_y.copy(),
                     self.t, self.step)


@dataclass
class LinkField:
    """Unit-modulus link variables on x and y edges."""

    u_x: np.ndarray
    u_y: np.ndarray


INITIAL_MODES = ("meissner", "field-cooled")


def make_initial_state(g: GridSpec, p: Params, seed: int = 0,
                       noise_eps: float = 1e-3,
                       mode: str = "meissner") -> State:
    """Seeded initial state; the same seed reproduces it bit for bit.

    "meissner": psi = 1 + eps*(u + i v) with u, v independent uniform in
    [-1/2, 1/2] per superconducting vertex, A = 0.  The applied field
    then has to break in through the surface barrier, which it does not
    do for moderate fields, so this start relaxes to the flux-free state.

    "field-cooled": psi = eps*(u + i v) (normal state) with the mean
    applied field already penetrated, A_y = H (x - x_center), A_x = 0.
    Condensation then traps the flux and a vortex lattice forms; this is
    the start that actually reaches the mixed state at moderate fields.
    """
    if mode not in INITIAL_MODES:
        raise ValueError(f"unknown initial mode {mode!r}; use one of "
                         f"{INITIAL_MODES}")
    psi = np.full(g.shape, np.nan + 0j, dtype=np.complex128)
    rng = np.random.default_rng(seed)
    sc_shape = (g.n_sc, g.n_y)
    u = rng.random(sc_shape) - 0.5
    v = rng.random(sc_shape) - 0.5
    noise = noise_eps * (u + 1j * v)
    a_x = np.zeros(g.shape)
    a_y = np.zeros(g.shape)
    if mode == "meissner":
        psi[g.n_sx:g.n_ex + 1, 1:g.n_y + 1] = 1.0 + noise
    else:
        psi[g.n_sx:g.n_ex + 1, 1:g.n_y + 1] = noise
        h_bar = 0.5 * (p.h_l + p.h_r)
        x_c = 0.5 * (g.x_left_surface + g.x_right_surface)
        cols = g.x_0 + g.h_x * np.arange(g.shape[0]) - x_c
        a_y[:, :] = h_bar * cols[:, None]
    s = State(psi=psi, a_x=a_x, a_y=a_y, t=0.0, step=0)
    refresh_closures(s, p, g)
    return s


def refresh_ghost_rows(arr: np.ndarray, g: GridSpec) -> None:
    arr[:, 0] = arr[:, g.n_y]
    arr[:, g.n_y + 1] = arr[:, 1]


def apply_outer_boundary(s: State, p: Params, g: GridSpec) -> State:
    """Write the outermost A_y columns so boundary-cell B equals H.

    Solves the discrete curl constraint in the two boundary cell columns
    for the ghost A_y values, holding the adjacent interior values.
    Assumes y ghost rows of a_x are fresh; leaves the new columns
    row-aliased.
    """
    nx, ny = g.n_x, g.n_y
    hx, hy = g.h_x, g.h_y
    rows = slice(1, ny + 1)
    rows_up = slice(2, ny + 2)
    dax_l = (s.a_x[0, rows_up] - s.a_x[0, rows]) / hy
    s.a_y[0, rows] = s.a_y[1, rows] - hx * (p.h_l + dax_l)
    dax_r = (s.a_x[nx, rows_up] - s.a_x[nx, rows]) / hy
    s.a_y[nx + 1, rows] = s.a_y[nx, rows] + hx * (p.h_r + dax_r)
    for col in (0, nx + 1):
        s.a_y[col, 0] = s.a_y[col, ny]
        s.a_y[col, ny + 1] = s.a_y[col, 1]
    return s


def interface_link_columns(s: State, p: Params, g: GridSpec):
    """Link values on the two interface edge columns, all rows."""
    u_l = np.exp(-1j * (g.h_x / p.kappa) * s.a_x[g.n_sx - 1, :])
    u_r = np.exp(-1j * (g.h_x / p.kappa) * s.a_x[g.n_ex, :])
    return u_l, u_r


def apply_interface_conditions(s: State, links: LinkField, g: GridSpec) -> State:
    """Write the psi ghost columns from the interface closure.

    psi[n_sx-1] = U_x[n_sx-1] psi[n_sx] and
    psi[n_ex+1] = conj(U_x[n_ex]) psi[n_ex], every row.
    """
    s.psi[g.n_sx - 1, :] = links.u_x[g.n_sx - 1, :] * s.psi[g.n_sx, :]
    s.psi[g.n_ex + 1, :] = np.conj(links.u_x[g.n_ex, :]) * s.psi[g.n_ex, :]
    return s


def refresh_closures(s: State, p: Params, g: GridSpec) -> State:
    """Restore every ghost value: periodic rows, boundary and interface."""
    refresh_ghost_rows(s.psi, g)
    refresh_ghost_rows(s.a_x, g)
    refresh_ghost_rows(s.a_y, g)
    apply_outer_boundary(s, p, g)
    u_l, u_r = interface_link_columns(s, p, g)
    s.psi[g.n_sx - 1, :] = u_l * s.psi[g.n_sx, :]
    s.psi[g.n_ex + 1, :] = np.conj(u_r) * s.psi[g.n_ex, :]
    return s


def link_variables(s: State, p: Params, g: GridSpec) -> LinkField:
    """U_x = exp(-i hx A_x / kappa), U_y = exp(-i hy A_y / kappa)."""
    u_x = np.exp(-1j * (g.h_x / p.kappa) * s.a_x)
    u_y = np.exp(-1j * (g.h_y / p.kappa) * s.a_y)
    return LinkField(u_x=u_x, u_y=u_y)


def supercurrent(s: State, links: LinkField, p: Params, g: GridSpec):
    """Gauge-invariant supercurrent on edges; zero outside the core closure.

    J_x[i,j] = Im[conj(psi[i,j]) U_x[i,j] psi[i+1,j]] / (kappa hx) on
    x edges i = n_sx-1 .. n_ex (the interface closure makes the two
    interface columns vanish), and the analogous J_y on core y edges.
    Assumes ghost values are fresh.
    """
    jx = np.zeros(g.shape)
    jy = np.zeros(g.shape)
    i0, i1 = g.n_sx, g.n_ex
    ex = slice(i0 - 1, i1 + 1)        # x-edge columns n_sx-1 .. n_ex
    ex_up = slice(i0, i1 + 2)
    jx[ex, :] = np.imag(
        np.conj(s.psi[ex, :]) * (links.u_x[ex, :] * s.psi[ex_up, :])
    ) / (p.kappa * g.h_x)
    sc = slice(i0, i1 + 1)
    jy[sc, :g.n_y + 1] = np.imag(
        np.conj(s.psi[sc, :g.n_y + 1])
        * (links.u_y[sc, :g.n_y + 1] * s.psi[sc, 1:g.n_y + 2])
    ) / (p.kappa * g.h_y)
    return jx, jy


def magnetic_field(s: State, g: GridSpec) -> np.ndarray:
    """Cell-centered discrete curl of A.

    Returns an array of shape (n_x + 1, n_y + 1); entry [i, j] is the
    field in cell (i, j) for i = 0 .. n_x, j = 0 .. n_y (row 0 is the
    periodic alias of row n_y).  Assumes ghost rows of a_x are fresh.
    """
    nx, ny = g.n_x, g.n_y
    ay = s.a_y[:nx + 2, :ny + 1]
    ax = s.a_x[:nx + 1, :ny + 2]
    return (ay[1:, :] - ay[:-1, :]) / g.h_x - (ax[:, 1:] - ax[:, :-1]) / g.h_y


def gauge_transform(s: State, chi: np.ndarray, p: Params, g: GridSpec) -> State:
    """Apply the discrete gauge transformation, returning a new state.

    psi -> psi exp(i chi); A picks up kappa times the discrete gradient
    of chi on the corresponding edges.  chi must be a storage-shaped
    per-vertex field, periodic in y (its ghost rows are rewritten from
    the periodic images before use).
    """
    chi = np.array(chi, dtype=float, copy=True)
    if chi.shape != g.shape:
        raise ValueError(f"chi must have storage shape {g.shape}")
    refresh_ghost_rows(chi, g)
    out = s.copy()
    cols = slice(g.n_sx - 1, g.n_ex + 2)
    out.psi[cols, :] = out.psi[cols, :] * np.exp(1j * chi[cols, :])
    nx, ny = g.n_x, g.n_y
    out.a_x[:nx + 1, :] += p.kappa * (chi[1:nx + 2, :] - chi[:nx + 1, :]) / g.h_x
    out.a_y[:, :ny + 1] += p.kappa * (chi[:, 1:ny + 2] - chi[:, :ny + 1]) / g.h_y
    refresh_ghost_rows(out.a_y, g)
    return out


def psi_valid_block(s: State, g: GridSpec) -> np.ndarray:
    """The meaningful psi region: core plus interface ghosts, one period."""
    return s.psi[g.n_sx - 1:g.n_ex + 2, 1:g.n_y + 1]


def state_diverged(s: State, g: GridSpec, psi_max: float = 10.0) -> bool:
    """True on any non-finite entry or an order parameter above psi_max."""
    psi = psi_valid_block(s, g)
    if not np.all(np.isfinite(psi.view(float))):
        return True
    if np.max(np.abs(psi)) > psi_max:
        return True
    ax = s.a_x[:g.n_x + 1, 1:g.n_y + 1]
    ay = s.a_y[:g.n_x + 2, 1:g.n_y + 1]
    return not (np.all(np.isfinite(ax)) and np.all(np.isfinite(ay)))


# ---------------------------------------------------------------------------
# snapshot and checkpoint files
#
# A snapshot is a plain-text header (one "key value" pair per line,
# terminated by "end-header") followed by three row-major blocks over the
# full ghost-extended storage arrays: psi with Re/Im interleaved, then
# a_x, then a_y.  The "format" header key selects "text" blocks (decimal,
# exact round-trip) or "binary" blocks (IEEE-754 little-endian float64 /
# complex128).  A checkpoint is a snapshot plus the generator seed, the
# multirate phase counter, and the recent diagnostic samples needed to
# continue the equilibrium window without a gap.
# ---------------------------------------------------------------------------

_MAGIC = "tdgl2d-snapshot v1"
_HEADER_END = "end-header"


def _header_lines(s: State, p: Params, g: GridSpec, fmt: str) -> list[str]:
    return [
        _MAGIC,
        f"format {fmt}",
        f"nx {g.n_x}",
        f"ny {g.n_y}",
        f"hx {_FMT % g.h_x}",
        f"hy {_FMT % g.h_y}",
        f"nsx {g.n_sx}",
        f"nex {g.n_ex}",
        f"x0 {_FMT % g.x_0}",
        f"y0 {_FMT % g.y_0}",
        f"kappa {_FMT % p.kappa}",
        f"sigma {_FMT % p.sigma}",
        f"t {_FMT % s.t}",
        f"step {s.step}",
    ]


def _write_blocks(fh, s: State, fmt: str) -> None:
    if fmt == "binary":
        fh.write(s.psi.astype("<c16").tobytes())
        fh.write(s.a_x.astype("<f8").tobytes())
        fh.write(s.a_y.astype("<f8").tobytes())
        return
    buf = io.StringIO()
    interleaved = np.empty(s.psi.shape + (2,))
    interleaved[..., 0] = s.psi.real
    interleaved[..., 1] = s.psi.imag
    for row in interleaved.reshape(s.psi.shape[0], -1):
        buf.write(" ".join(_FMT % v for v in row) + "\n")
    for arr in (s.a_x, s.a_y):
        for row in arr:
            buf.write(" ".join(_FMT % v for v in row) + "\n")
    fh.write(buf.getvalue().encode("ascii"))


def save_snapshot(path, s: State, p: Params, g: GridSpec,
                  fmt: str = "binary", extra_lines: Optional[list] = None) -> None:
    if fmt not in ("binary", "text"):
        raise SnapshotError(f"unknown snapshot format {fmt!r}")
    lines = _header_lines(s, p, g, fmt)
    if extra_lines:
        lines.extend(extra_lines)
    lines.append(_HEADER_END)
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(("\n".join(lines) + "\n").encode("ascii"))
        _write_blocks(fh, s, fmt)
    os.replace(tmp, path)


def load_snapshot(path):
    """Read a snapshot; returns (State, header dict, GridSpec)."""
    with open(path, "rb") as fh:
        raw = fh.read()
    end_marker = (_HEADER_END + "\n").encode("ascii")
    cut = raw.find(end_marker)
    if cut < 0 or not raw.startswith(_MAGIC.encode("ascii")):
        raise SnapshotError(f"{path}: not a tdgl2d snapshot")
    header_text = raw[:cut].decode("ascii")
    body = raw[cut + len(end_marker):]
    header: dict = {}
    for line in header_text.splitlines()[1:]:
        line = line.strip()
        if not line:
            continue
        key, _, value = line.partition(" ")
        header.setdefault(key, []).append(value)
    single = {k: v[0] for k, v in header.items()}

    try:
        nx, ny = int(single["nx"]), int(single["ny"])
        g = GridSpec(
            n_x=nx, n_y=ny,
            h_x=float(single["hx"]), h_y=float(single["hy"]),
            n_sx=int(single["nsx"]), n_ex=int(single["nex"]),
            x_0=float(single.get("x0", 0.0)), y_0=float(single.get("y0", 0.0)),
        )
        fmt = single["format"]
        t = float(single["t"])
        step = int(single["step"])
    except KeyError as exc:
        raise SnapshotError(f"{path}: missing header key {exc}") from exc

    shape = (nx + 2, ny + 2)
    count = shape[0] * shape[1]
    if fmt == "binary":
        need = count * (16 + 8 + 8)
        if len(body) != need:
            raise SnapshotError(f"{path}: expected {need} data bytes, "
                                f"got {len(body)}")
        psi = np.frombuffer(body, dtype="<c16", count=count).reshape(shape)
        off = count * 16
        a_x = np.frombuffer(body, dtype="<f8", count=count,
                            offset=off).reshape(shape)
        a_y = np.frombuffer(body, dtype="<f8", count=count,
                            offset=off + count * 8).reshape(shape)
        psi = psi.astype(np.complex128)
        a_x = a_x.astype(np.float64)
        a_y = a_y.astype(np.float64)
    elif fmt == "text":
        rows = body.decode("ascii").split("\n")
        vals = [np.array(r.split(), dtype=float) for r in rows if r.strip()]
        if len(vals) != 3 * shape[0]:
            raise SnapshotError(f"{path}: expected {3 * shape[0]} data rows")
        ri = np.vstack(vals[:shape[0]]).reshape(shape[0], shape[1], 2)
        psi = (ri[..., 0] + 1j * ri[..., 1]).astype(np.complex128)
        a_x = np.vstack(vals[shape[0]:2 * shape[0]]).astype(np.float64)
        a_y = np.vstack(vals[2 * shape[0]:]).astype(np.float64)
        if a_x.shape != shape or a_y.shape != shape:
            raise SnapshotError(f"{path}: bad data row length")
    else:
        raise SnapshotError(f"{path}: unknown format {fmt!r}")

    state = State(psi=psi, a_x=a_x, a_y=a_y, t=t, step=step)
    return state, {k: (v if len(v) > 1 else v[0]) for k, v in header.items()}, g


def save_checkpoint(path, s: State, p: Params, g: GridSpec, seed: int,
                    phase: int, recent_samples=None, fmt: str = "binary") -> None:
    """Snapshot plus seed, multirate phase, and recent diagnostic samples."""
    extra = [f"seed {seed}", f"phase {phase}"]
    recent_samples = recent_samples or []
    extra.append(f"samples {len(recent_samples)}")
    for step, vortices in recent_samples:
        parts = [f"sample {step} {len(vortices)}"]
        for x, y, w in vortices:
            parts.append(f"{_FMT % x} {_FMT % y} {int(w)}")
        extra.append(" ".join(parts))
    save_snapshot(path, s, p, g, fmt=fmt, extra_lines=extra)


def load_checkpoint(path):
    """Read a checkpoint; returns (State, header, GridSpec, seed, phase,
    recent samples)."""
    state, header, g = load_snapshot(path)
    try:
        seed = int(header["seed"])
        phase = int(header["phase"])
    except KeyError as exc:
        raise SnapshotError(f"{path}: not a checkpoint (missing {exc})") from exc
    samples = []
    raw = header.get("sample", [])
    if isinstance(raw, str):
        raw = [raw]
    for entry in raw:
        toks = entry.split()
        step, count = int(toks[0]), int(toks[1])
        body = toks[2:]
        if len(body) != 3 * count:
            raise SnapshotError(f"{path}: malformed sample line")
        vortices = [(float(body[3 * k]), float(body[3 * k + 1]),
                     int(body[3 * k + 2])) for k in range(count)]
        samples.append((step, vortices))
    return state, header, g, seed, phase, samples
