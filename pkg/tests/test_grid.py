import dataclasses

import pytest

from tdgl2d.grid import (BL, GHOST, SC, GridConfig, GridError, GridSpec,
                         build_grid, classify)


def enumerate_columns(domain_x, blanket, h):
    """Independent index bookkeeping straight from the geometric
    correspondences: count cells off the x axis and read the column roles
    from the surface/interface positions."""
    n_x = round(domain_x / h)
    left_surface = 0.0
    left_interface = blanket
    right_interface = domain_x - blanket
    sc_cols = []
    bl_cols = []
    for i in range(1, n_x + 1):
        x = (i - 0.5) * h  # vertex i sits half a cell right of surface+ (i-1)h
        if left_interface < x < right_interface:
            sc_cols.append(i)
        else:
            bl_cols.append(i)
    return n_x, sc_cols, bl_cols


def test_benchmark_grid_indices():
    g = build_grid(GridConfig(132, 192, 2, 0.5))
    assert (g.n_x, g.n_y) == (264, 384)
    assert (g.n_sx, g.n_ex) == (5, 260)
    assert g.shape == (266, 386)


def test_desk_grid_against_enumeration():
    g = build_grid(GridConfig(34, 48, 2, 0.5))
    n_x, sc_cols, bl_cols = enumerate_columns(34, 2, 0.5)
    assert g.n_x == n_x == 68
    assert g.n_y == 96
    assert sc_cols == list(range(g.n_sx, g.n_ex + 1))
    assert bl_cols == [i for i in range(1, 69)
                       if i < g.n_sx or i > g.n_ex]
    assert (g.n_sx, g.n_ex) == (5, 64)


def test_minimal_grid_accepted():
    g = build_grid(GridConfig(3, 2, 1, 1))
    assert (g.n_x, g.n_y, g.n_sx, g.n_ex) == (3, 2, 2, 2)
    assert g.n_sc == 1


@pytest.mark.parametrize("cfg", [
    GridConfig(3, 2, 1.5, 1),      # blanket does not tile
    GridConfig(3.3, 2, 1, 1),      # domain does not tile
    GridConfig(2, 2, 1, 1),        # no core column left
    GridConfig(8, 6, 1, 0),        # non-positive width
    GridConfig(8, 6, 1, -0.5),
    GridConfig(-8, 6, 1, 1),
    GridConfig(8, 1, 1, 1),        # single-row period
])
def test_bad_configs_rejected(cfg):
    with pytest.raises(GridError):
        build_grid(cfg)


def test_surface_and_interface_positions():
    g = build_grid(GridConfig(132, 192, 2, 0.5))
    # origin puts the left outer surface at x = 0
    assert g.x_left_surface == 0.0
    assert g.x_right_surface == pytest.approx(132.0, abs=1e-12)
    assert g.x_left_interface == pytest.approx(2.0, abs=1e-12)
    assert g.x_right_interface == pytest.approx(130.0, abs=1e-12)
    # half-cell-offset correspondences against the vertex coordinates
    assert g.x_left_surface == g.x_vertex(0) + 0.5 * g.h_x
    assert g.x_left_interface == g.x_vertex(g.n_sx - 1) + 0.5 * g.h_x
    assert g.x_right_interface == g.x_vertex(g.n_ex) + 0.5 * g.h_x
    assert g.x_right_surface == g.x_vertex(g.n_x) + 0.5 * g.h_x


def test_classify_benchmark_cases():
    g = build_grid(GridConfig(132, 192, 2, 0.5))
    assert classify(5, 1, g) == SC
    assert classify(260, 384, g) == SC
    assert classify(1, 1, g) == BL
    assert classify(4, 10, g) == BL
    assert classify(261, 1, g) == BL
    assert classify(264, 1, g) == BL
    for i in range(0, g.n_x + 2):
        assert classify(i, 0, g) == GHOST
        assert classify(i, g.n_y + 1, g) == GHOST
    assert classify(0, 5, g) == GHOST
    assert classify(g.n_x + 1, 5, g) == GHOST


def test_classify_out_of_bounds():
    g = build_grid(GridConfig(8, 6, 1, 1))
    with pytest.raises(IndexError):
        classify(-1, 1, g)
    with pytest.raises(IndexError):
        classify(1, g.n_y + 2, g)


def test_partition_sc_bl(g_small):
    g = g_small
    for i in range(1, g.n_x + 1):
        for j in range(1, g.n_y + 1):
            tags = classify(i, j, g)
            assert tags in (SC, BL)
            assert (tags == SC) == (g.n_sx <= i <= g.n_ex)


def test_gridspec_immutable(g_small):
    with pytest.raises(dataclasses.FrozenInstanceError):
        g_small.n_x = 10


def test_gridspec_invariant_guard():
    with pytest.raises(GridError):
        GridSpec(n_x=8, n_y=6, h_x=1, h_y=1, n_sx=1, n_ex=7)  # no left blanket
    with pytest.raises(GridError):
        GridSpec(n_x=8, n_y=6, h_x=1, h_y=1, n_sx=3, n_ex=8)  # no right blanket
    with pytest.raises(GridError):
        GridSpec(n_x=8, n_y=6, h_x=-1, h_y=1, n_sx=2, n_ex=7)
