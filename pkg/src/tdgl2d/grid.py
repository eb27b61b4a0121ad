"""Staggered computational grid for a superconducting strip in a blanket.

The domain is a rectangle, bounded in x and periodic in y, holding a
superconducting core flanked by two equally thick blanket (insulator)
layers.  A regular grid with mesh widths ``h_x``, ``h_y`` is laid over it,
with vertices at ``x_i = x_0 + i*h_x``, ``y_j = y_0 + j*h_y``.

Index conventions (identical to storage indices; every field array is
allocated with shape ``(n_x + 2, n_y + 2)`` so stencil code never
branches):

* ``i = 1 .. n_x`` are the physical vector-potential site columns;
  ``i = 0`` and ``i = n_x + 1`` exist only as closure columns for A_y.
* ``j = 1 .. n_y`` cover one period in y; rows ``j = 0`` and
  ``j = n_y + 1`` are ghost rows aliasing ``j = n_y`` and ``j = 1``.
* the order parameter lives on vertex columns ``n_sx .. n_ex`` plus one
  ghost column on each side for the interface closure.

Evaluation points within cell (i, j): psi at the vertex ``(x_i, y_j)``,
A_x at the x-edge midpoint ``(x_i + h_x/2, y_j)``, A_y at the y-edge
midpoint ``(x_i, y_j + h_y/2)``, and B at the cell center.

Geometric correspondences:

    left outer surface     x = x_0 + h_x/2         (cell column i = 0)
    left interface         x = x_{n_sx-1} + h_x/2
    right interface        x = x_{n_ex} + h_x/2
    right outer surface    x = x_{n_x} + h_x/2     (cell column i = n_x)

so the core spans ``n_ex - n_sx`` cells and each blanket layer
``n_sx - 1 = n_x - n_ex`` cells.
"""

from __future__ import annotations

from dataclasses import dataclass

SC = "Sc"
BL = "Bl"
GHOST = "ghost"

_REL_TOL = 1e-12


class GridError(ValueError):
    """Invalid grid configuration."""


@dataclass(frozen=True)
class GridConfig:
    """Grid section of a run configuration, all lengths in units of xi."""

    domain_x_xi: float
    domain_y_xi: float
    blanket_xi: float
    h_xi: float


@dataclass(frozen=True)
class GridSpec:
    """Immutable grid geometry; safe for unrestricted concurrent reads.

    Attributes:
        n_x: number of cells across the full domain (also the last
            physical site column index).
        n_y: number of rows in one y period (ghost rows not counted).
        h_x, h_y: mesh widths in units of xi.
        n_sx, n_ex: first and last superconducting vertex columns.
        x_0, y_0: origin offsets; vertex (i, j) sits at
            (x_0 + i*h_x, y_0 + j*h_y).
    """

    n_x: int
    n_y: int
    h_x: float
    h_y: float
    n_sx: int
    n_ex: int
    x_0: float = 0.0
    y_0: float = 0.0

    def __post_init__(self):
        if self.h_x <= 0 or self.h_y <= 0:
            raise GridError("mesh widths must be positive")
        if not (1 <= self.n_sx <= self.n_ex <= self.n_x - 1):
            raise GridError(
                f"need 1 <= n_sx <= n_ex <= n_x - 1, got "
                f"n_sx={self.n_sx}, n_ex={self.n_ex}, n_x={self.n_x}"
            )
        if self.n_sx < 2:
            raise GridError("blanket must be at least one cell thick on the left")
        if self.n_y < 2:
            raise GridError("need at least two rows per period")

    @property
    def shape(self) -> tuple[int, int]:
        """Storage shape of every field array, ghosts included."""
        return (self.n_x + 2, self.n_y + 2)

    @property
    def n_sc(self) -> int:
        """Number of superconducting vertex columns."""
        return self.n_ex - self.n_sx + 1

    @property
    def period_y(self) -> float:
        return self.n_y * self.h_y

    def x_vertex(self, i):
        return self.x_0 + i * self.h_x

    def y_vertex(self, j):
        return self.y_0 + j * self.h_y

    @property
    def x_left_surface(self) -> float:
        return self.x_vertex(0) + 0.5 * self.h_x

    @property
    def x_right_surface(self) -> float:
        return self.x_vertex(self.n_x) + 0.5 * self.h_x

    @property
    def x_left_interface(self) -> float:
        return self.x_vertex(self.n_sx - 1) + 0.5 * self.h_x

    @property
    def x_right_interface(self) -> float:
        return self.x_vertex(self.n_ex) + 0.5 * self.h_x


def build_grid(config: GridConfig) -> GridSpec:
    """Build a GridSpec from domain extents, blanket thickness and mesh width.

    The mesh width must tile the domain extents and the blanket thickness
    to within 1e-12 relative error, the blanket must be at least one cell
    thick on each side, and at least one superconducting column must
    remain.

    The origin is placed so that the left outer surface sits at x = 0 and
    the first row at y = 0; one period is y in [0, domain_y_xi).
    """
    if config.h_xi <= 0:
        raise GridError("mesh width h_xi must be positive")
    if config.domain_x_xi <= 0 or config.domain_y_xi <= 0:
        raise GridError("domain extents must be positive")
    if config.blanket_xi <= 0:
        raise GridError("blanket thickness must be positive")

    n_x = _exact_cells(config.domain_x_xi, config.h_xi, "domain_x_xi")
    n_y = _exact_cells(config.domain_y_xi, config.h_xi, "domain_y_xi")
    n_bl = _exact_cells(config.blanket_xi, config.h_xi, "blanket_xi")

    if n_x - 2 * n_bl < 1:
        raise GridError(
            f"blanket layers ({n_bl} cells each) leave no superconducting "
            f"column in a {n_x}-cell domain"
        )
    if n_y < 2:
        raise GridError("period must span at least two rows")

    h = config.h_xi
    return GridSpec(
        n_x=n_x,
        n_y=n_y,
        h_x=h,
        h_y=h,
        n_sx=n_bl + 1,
        n_ex=n_x - n_bl,
        x_0=-0.5 * h,
        y_0=-h,
    )


def _exact_cells(extent: float, h: float, name: str) -> int:
    n = extent / h
    n_int = round(n)
    if n_int < 1 or abs(n - n_int) > _REL_TOL * max(1.0, abs(n)):
        raise GridError(f"{name}={extent} is not an integer multiple of h={h}")
    return n_int


def classify(i: int, j: int, g: GridSpec) -> str:
    """Region tag of site (i, j): SC, BL or GHOST.

    Raises IndexError outside the ghost-extended bounds
    0 <= i <= n_x + 1, 0 <= j <= n_y + 1.
    """
    if not (0 <= i <= g.n_x + 1 and 0 <= j <= g.n_y + 1):
        raise IndexError(f"site ({i}, {j}) outside ghost-extended grid")
    if j == 0 or j == g.n_y + 1 or i == 0 or i == g.n_x + 1:
        return GHOST
    if g.n_sx <= i <= g.n_ex:
        return SC
    return BL
