"""
Tests hepasim/grid.py
"""

import math
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from pydantic import ValidationError

from hepasim.exceptions import EmptyPortal, ParseError
from hepasim.grid import (
    Grid,
    PortalSpec,
    ScalarField,
    build_chi,
    laplacian_matrix,
    laplacian_neumann,
    laplacian_values,
    quadrature,
    read_snapshot,
    write_snapshot,
)
from tests.strategies import fields, grids


def test_grid_geometry():
    grid = Grid(nx=10, ny=5, lx=2.0, ly=0.5)

    assert grid.hx == pytest.approx(0.2)
    assert grid.hy == pytest.approx(0.1)
    assert grid.area == pytest.approx(1.0)
    assert grid.shape == (5, 10)

    xx, yy = grid.centers()
    assert xx[0, 0] == pytest.approx(0.1)
    assert yy[-1, 0] == pytest.approx(0.45)


def test_grid_rejects_tiny_or_degenerate_domains():
    with pytest.raises(ValidationError):
        Grid(nx=2, ny=8)

    with pytest.raises(ValidationError):
        Grid(lx=0.0)


def test_field_rejects_wrong_shape_and_non_finite_values():
    grid = Grid(nx=4, ny=6)

    with pytest.raises(ValidationError):
        ScalarField(grid=grid, values=np.zeros((4, 6)))

    values = np.zeros(grid.shape)
    values[0, 0] = np.nan
    with pytest.raises(ValidationError):
        ScalarField(grid=grid, values=values)


def test_field_values_are_read_only_copies():
    grid = Grid(nx=4, ny=4)
    values = np.ones(grid.shape)
    field = ScalarField(grid=grid, values=values)

    values[0, 0] = 5.0
    assert field.values[0, 0] == 1.0

    with pytest.raises(ValueError):
        field.values[0, 0] = 2.0


@given(grids(), st.floats(min_value=-10.0, max_value=10.0))
def test_quadrature_of_constant_is_value_times_area(grid: Grid, value: float):
    assert quadrature(ScalarField.constant(grid, value)) == pytest.approx(
        value * grid.area, abs=1e-12
    )


@given(fields(low=-5.0, high=5.0))
def test_laplacian_is_conservative(field: ScalarField):
    lap = laplacian_neumann(field)
    scale = max(1.0, float(np.max(np.abs(lap.values)))) * field.grid.area

    assert abs(quadrature(lap)) <= 1e-12 * scale


@given(grids(), st.data())
def test_laplacian_is_symmetric(grid: Grid, data: st.DataObject):
    a = data.draw(fields(grid, low=-1.0, high=1.0)).values
    b = data.draw(fields(grid, low=-1.0, high=1.0)).values

    left = float(np.vdot(a, laplacian_values(b, grid)))
    right = float(np.vdot(laplacian_values(a, grid), b))
    scale = 1.0 / min(grid.hx, grid.hy) ** 2 * a.size

    assert left == pytest.approx(right, abs=1e-12 * scale)


@given(fields(low=-5.0, high=5.0))
def test_laplacian_matrix_matches_the_stencil(field: ScalarField):
    grid = field.grid
    matrix = laplacian_matrix(grid)
    expected = laplacian_values(field.values, grid)

    assert matrix.shape == (grid.nx * grid.ny, grid.nx * grid.ny)
    assert (matrix @ field.values.ravel()).reshape(grid.shape) == pytest.approx(
        expected, abs=1e-9 * max(1.0, float(np.max(np.abs(expected))))
    )
    assert abs(matrix - matrix.T).max() == 0.0


def test_laplacian_of_constant_vanishes():
    grid = Grid(nx=7, ny=9)
    lap = laplacian_neumann(ScalarField.constant(grid, 4.2))

    assert lap.values == pytest.approx(0.0)


def test_laplacian_is_second_order_on_cosines():
    def error(n: int) -> float:
        grid = Grid(nx=n, ny=n)
        field = ScalarField.from_function(
            grid, lambda x, y: np.cos(np.pi * x) * np.cos(np.pi * y)
        )
        exact = -2.0 * np.pi**2 * field.values
        return float(np.max(np.abs(laplacian_neumann(field).values - exact)))

    coarse, fine = error(16), error(32)

    assert fine < 5e-2
    assert 3.5 <= coarse / fine <= 4.5


def test_chi_integrates_to_one_on_the_grid():
    grid = Grid(nx=64, ny=64)
    chi = build_chi(grid, PortalSpec())

    assert quadrature(chi) == pytest.approx(1.0, abs=1e-12)
    assert chi.values[~chi.mask] == pytest.approx(0.0)

    covered = int(np.count_nonzero(chi.mask))
    assert chi.max() == pytest.approx(1.0 / (covered * grid.cell_area))

    # The default portal is a quarter disc in the corner (1, 1)
    xx, yy = grid.centers()
    assert np.all((xx[chi.mask] - 1.0) ** 2 + (yy[chi.mask] - 1.0) ** 2 <= 0.04)
    assert chi.mask[-1, -1]
    assert not chi.mask[0, 0]


def test_chi_covering_the_domain_is_constant():
    grid = Grid(nx=8, ny=8)
    chi = build_chi(grid, PortalSpec(center_x=0.5, center_y=0.5, radius=1.0))

    assert chi.values == pytest.approx(1.0)


def test_empty_portal():
    with pytest.raises(EmptyPortal):
        build_chi(Grid(nx=4, ny=4), PortalSpec(center_x=0.5, center_y=0.5, radius=0.01))


def test_snapshot_round_trip_is_exact(tmp_path: Path):
    grid = Grid(nx=5, ny=4, lx=1.3, ly=0.7)
    field = ScalarField.from_function(
        grid, lambda x, y: np.exp(x) * np.sin(3.0 * y) / 7
    )

    path = tmp_path / "field.csv"
    write_snapshot(field, path)

    assert path.read_text(encoding="utf-8").startswith("x,y,value\n")
    assert np.array_equal(read_snapshot(path, grid).values, field.values)


def test_snapshot_on_the_wrong_grid(tmp_path: Path):
    path = tmp_path / "field.csv"
    write_snapshot(ScalarField.constant(Grid(nx=4, ny=4), 1.0), path)

    with pytest.raises(ParseError):
        read_snapshot(path, Grid(nx=8, ny=8))

    with pytest.raises(ParseError):
        read_snapshot(path, Grid(nx=4, ny=4, lx=2.0))


@pytest.mark.parametrize(
    "content",
    ["", "a,b,c\n", "x,y,value\n0.125,0.125,abc\n"],
)
def test_malformed_snapshot(tmp_path: Path, content: str):
    path = tmp_path / "bad.csv"
    path.write_text(content, encoding="utf-8")

    with pytest.raises(ParseError):
        read_snapshot(path, Grid(nx=4, ny=4))


def test_missing_snapshot(tmp_path: Path):
    with pytest.raises(ParseError):
        read_snapshot(tmp_path / "absent.csv", Grid(nx=4, ny=4))


def test_refine_keeps_the_domain():
    grid = Grid(nx=8, ny=4, lx=2.0)
    fine = grid.refine()

    assert (fine.nx, fine.ny) == (16, 8)
    assert math.isclose(fine.area, grid.area)
