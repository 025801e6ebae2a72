"""
Uniform cell-centred grids over a rectangle, scalar fields living on them, the
midpoint quadrature and the five-point Laplacian with zero-flux boundaries.

Values are stored with shape (ny, nx): row j holds the cells with centre
y = (j + 1/2) hy, column i those with centre x = (i + 1/2) hx.
"""

import csv
import math
from collections.abc import Callable
from pathlib import Path
from typing import Annotated, Any, Literal, Self

import numpy as np
import numpy.typing as npt
from pydantic import BaseModel, ConfigDict, Field, PlainValidator, model_validator
from scipy import sparse

from hepasim.exceptions import EmptyPortal, ParseError

type FloatArray = npt.NDArray[np.float64]
type BoolArray = npt.NDArray[np.bool_]


def _frozen_array(value: Any) -> FloatArray:
    array = np.array(value, dtype=np.float64)
    array.flags.writeable = False
    return array


def _frozen_mask(value: Any) -> BoolArray:
    array = np.array(value, dtype=np.bool_)
    array.flags.writeable = False
    return array


Values = Annotated[FloatArray, PlainValidator(_frozen_array)]
Mask = Annotated[BoolArray, PlainValidator(_frozen_mask)]


class Grid(BaseModel):
    """
    A uniform cell-centred grid over the rectangle [0, lx] x [0, ly].

    Example:
        >>> grid = Grid(nx=4, ny=8, lx=2.0, ly=1.0)
        >>> grid.hx, grid.hy
        (0.5, 0.125)
        >>> grid.area
        2.0
    """

    model_config = ConfigDict(frozen=True)

    nx: int = Field(default=64, ge=4)
    ny: int = Field(default=64, ge=4)
    lx: float = Field(default=1.0, gt=0.0, allow_inf_nan=False)
    ly: float = Field(default=1.0, gt=0.0, allow_inf_nan=False)

    @property
    def hx(self) -> float:
        return self.lx / self.nx

    @property
    def hy(self) -> float:
        return self.ly / self.ny

    @property
    def cell_area(self) -> float:
        return self.hx * self.hy

    @property
    def area(self) -> float:
        return self.lx * self.ly

    @property
    def shape(self) -> tuple[int, int]:
        return (self.ny, self.nx)

    def centers(self) -> tuple[FloatArray, FloatArray]:
        """Cell-centre coordinates as two (ny, nx) arrays."""
        x = (np.arange(self.nx) + 0.5) * self.hx
        y = (np.arange(self.ny) + 0.5) * self.hy
        xx, yy = np.meshgrid(x, y)
        return xx, yy

    def refine(self, factor: int = 2) -> Grid:
        return Grid(
            nx=self.nx * factor, ny=self.ny * factor, lx=self.lx, ly=self.ly
        )


class ScalarField(BaseModel):
    """
    The values of one species, or of a source profile, on a grid.

    Values are copied on construction and are read-only afterwards.
    """

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    grid: Grid
    values: Values

    @model_validator(mode="after")
    def _check_values(self) -> Self:
        if self.values.shape != self.grid.shape:
            raise ValueError(
                f"Field has shape {self.values.shape}, grid expects {self.grid.shape}."
            )

        if not np.all(np.isfinite(self.values)):
            raise ValueError("Field contains non-finite values.")

        return self

    @classmethod
    def constant(cls, grid: Grid, value: float) -> Self:
        return cls(grid=grid, values=np.full(grid.shape, value, dtype=np.float64))

    @classmethod
    def from_function(
        cls, grid: Grid, function: Callable[[FloatArray, FloatArray], FloatArray]
    ) -> Self:
        """Sample a function of the cell-centre coordinates (x, y)."""
        xx, yy = grid.centers()
        return cls(grid=grid, values=np.broadcast_to(function(xx, yy), grid.shape))

    def with_values(self, values: FloatArray) -> ScalarField:
        return ScalarField(grid=self.grid, values=values)

    def min(self) -> float:
        return float(self.values.min())

    def max(self) -> float:
        return float(self.values.max())


class PortalSpec(BaseModel):
    """
    The portal field through which T cells enter: a disc intersected with the
    domain. Only the normalised characteristic profile is supported.
    """

    model_config = ConfigDict(frozen=True)

    center_x: float = Field(default=1.0, allow_inf_nan=False)
    center_y: float = Field(default=1.0, allow_inf_nan=False)
    radius: float = Field(default=0.2, gt=0.0, allow_inf_nan=False)
    profile: Literal["characteristic"] = "characteristic"


class PortalField(ScalarField):
    """
    The inflow profile chi together with the mask of cells forming its support.
    """

    mask: Mask

    @model_validator(mode="after")
    def _check_mask(self) -> Self:
        if self.mask.shape != self.grid.shape:
            raise ValueError("Portal mask does not match the grid.")

        if np.any(self.values[~self.mask] != 0.0) or np.any(self.values < 0.0):
            raise ValueError("Portal profile must be non-negative and vanish off Θ.")

        return self


def quadrature(f: ScalarField) -> float:
    """
    Midpoint-rule integral of a field over the domain.

    Example:
        >>> grid = Grid(nx=4, ny=4)
        >>> quadrature(ScalarField.constant(grid, 1.0))
        1.0
    """
    return float(np.sum(f.values)) * f.grid.cell_area


def laplacian_values(values: FloatArray, grid: Grid) -> FloatArray:
    """
    Five-point Laplacian of a raw (ny, nx) array with mirrored ghost cells.

    Mirroring across each boundary face makes the boundary flux vanish, so the
    result always sums to zero.
    """
    padded = np.pad(values, 1, mode="edge")
    centre = padded[1:-1, 1:-1]

    d2x = (padded[1:-1, 2:] - 2.0 * centre + padded[1:-1, :-2]) / grid.hx**2
    d2y = (padded[2:, 1:-1] - 2.0 * centre + padded[:-2, 1:-1]) / grid.hy**2

    return d2x + d2y


def laplacian_neumann(f: ScalarField) -> ScalarField:
    """
    Discrete Laplacian with zero-flux boundary conditions.

    Example:
        >>> grid = Grid(nx=8, ny=8)
        >>> laplacian_neumann(ScalarField.constant(grid, 3.0)).max()
        0.0
    """
    return f.with_values(laplacian_values(f.values, f.grid))


def _second_difference(n: int, h: float) -> sparse.csr_array:
    main = np.full(n, -2.0)
    main[[0, -1]] = -1.0
    off = np.ones(n - 1)
    stencil = sparse.diags_array([off, main, off], offsets=[-1, 0, 1], format="csr")
    return stencil / h**2


def laplacian_matrix(grid: Grid) -> sparse.csr_array:
    """
    The zero-flux five-point Laplacian assembled as a sparse matrix acting on
    row-major raveled (ny, nx) values. Same stencil as `laplacian_values`.
    """
    dx = _second_difference(grid.nx, grid.hx)
    dy = _second_difference(grid.ny, grid.hy)

    return sparse.csr_array(
        sparse.kron(sparse.eye_array(grid.ny), dx)
        + sparse.kron(dy, sparse.eye_array(grid.nx))
    )


def build_chi(grid: Grid, spec: PortalSpec) -> PortalField:
    """
    Normalised characteristic function of the portal disc.

    Cells whose centres lie inside the disc form the support; each holds
    1 / (k hx hy) for k covered cells, so the quadrature equals one on the grid.

    Args:
        grid: The computational grid.
        spec: Centre and radius of the portal disc.

    Returns:
        The inflow profile and its support mask.

    Raises:
        EmptyPortal: If no cell centre falls inside the disc.
    """
    xx, yy = grid.centers()
    mask = (xx - spec.center_x) ** 2 + (yy - spec.center_y) ** 2 <= spec.radius**2

    covered = int(np.count_nonzero(mask))

    if covered == 0:
        raise EmptyPortal(
            f"No cell centre lies in the portal disc at "
            f"({spec.center_x}, {spec.center_y}) with radius {spec.radius}.",
            "portal normalisation",
        )

    values = np.where(mask, 1.0 / (covered * grid.cell_area), 0.0)

    return PortalField(grid=grid, values=values, mask=mask)


def write_snapshot(field: ScalarField, path: Path) -> None:
    """
    Write a field as CSV with header `x,y,value`, one row per cell, x fastest.
    """
    xx, yy = field.grid.centers()

    with path.open("w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["x", "y", "value"])

        for x, y, value in zip(
            xx.ravel(), yy.ravel(), field.values.ravel(), strict=True
        ):
            writer.writerow([f"{x:.17g}", f"{y:.17g}", f"{value:.17g}"])


def read_snapshot(path: Path, grid: Grid) -> ScalarField:
    """
    Read a field written by `write_snapshot` back onto `grid`.

    Raises:
        ParseError: If the file is malformed or does not match the grid.
    """
    try:
        with path.open(encoding="utf-8", newline="") as f:
            rows = list(csv.reader(f))
    except OSError as e:
        raise ParseError(f"Failed to read snapshot {path}: {e}") from e

    if not rows or rows[0] != ["x", "y", "value"]:
        raise ParseError(f"{path} does not have the header x,y,value.")

    body = rows[1:]
    if len(body) != grid.nx * grid.ny:
        raise ParseError(
            f"{path} holds {len(body)} cells, the grid has {grid.nx * grid.ny}."
        )

    xx, yy = grid.centers()
    values = np.empty(len(body), dtype=np.float64)

    for k, row in enumerate(body):
        try:
            x, y, value = (float(item) for item in row)
        except ValueError as e:
            raise ParseError(f"{path}, row {k + 2}: {e}") from e

        if not (
            math.isclose(x, xx.flat[k], abs_tol=1e-12)
            and math.isclose(y, yy.flat[k], abs_tol=1e-12)
        ):
            raise ParseError(f"{path}, row {k + 2}: cell centre does not match grid.")

        values[k] = value

    try:
        return ScalarField(grid=grid, values=values.reshape(grid.shape))
    except ValueError as e:
        raise ParseError(f"{path}: {e}") from e
