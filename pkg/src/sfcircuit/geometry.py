"""Dimensionless units, dumbbell trap geometry and potential construction.

All quantities are in oscillator units: hbar = m = omega_o = a_o = 1.  The
trap is two disks of radius ``R`` joined by a straight channel of length
``l`` and width ``d``, centred on the origin and mirror-symmetric in x and y.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


class GeometryError(ValueError):
    """Raised when a geometry is invalid or does not fit in the grid."""


@dataclass(frozen=True)
class UnitSystem:
    hbar: float = 1.0
    mass: float = 1.0
    omega_o: float = 1.0
    a_o: float = 1.0
    t_0: float = 1.0
    # conversion metadata only; never used in the numerics
    omega_o_hz: float = 2 * math.pi * 5.0
    a_o_um: float = 4.83


UNITS = UnitSystem()


@dataclass(frozen=True)
class TrapGeometry:
    R: float = 4.5
    l: float = 2.0
    d: float = 0.6
    wall_height: float = 1e5

    def __post_init__(self):
        if not self.R > 0:
            raise GeometryError(f"reservoir radius must be positive, got {self.R}")
        if not self.l > 0:
            raise GeometryError(f"channel length must be positive, got {self.l}")
        if not 0 < self.d < 2 * self.R:
            raise GeometryError(f"channel width must lie in (0, 2R), got {self.d}")
        if not self.wall_height > 0:
            raise GeometryError("wall height must be positive")

    @property
    def S_L(self) -> float:
        return math.pi * self.R**2

    @property
    def S_R(self) -> float:
        return math.pi * self.R**2

    @property
    def disk_center_offset(self) -> float:
        """|x| of the disk centres; each disk passes through the channel corners."""
        return self.l / 2 + math.sqrt(self.R**2 - (self.d / 2) ** 2)

    @property
    def half_extent(self) -> tuple[float, float]:
        """Half-widths (x, y) of the trap's bounding box."""
        return self.disk_center_offset + self.R, self.R

    def contains(self, x, y):
        """Boolean interior indicator; accepts scalars or broadcastable arrays."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        xc = self.disk_center_offset
        r2 = self.R**2
        in_left = (x + xc) ** 2 + y**2 <= r2
        in_right = (x - xc) ** 2 + y**2 <= r2
        in_channel = (np.abs(x) <= self.l / 2) & (np.abs(y) <= self.d / 2)
        return in_left | in_right | in_channel


@dataclass(frozen=True)
class Grid2D:
    """Uniform cell-centred grid, symmetric about the origin.

    Arrays on this grid have shape ``(nx, ny)``; x is the first axis, so the
    C-order layout is y-fastest.
    """

    nx: int = 800
    ny: int = 300
    dx: float = 0.05
    dy: float = 0.05
    origin: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        if self.nx < 4 or self.ny < 4:
            raise GeometryError("grid needs at least 4 cells per axis")
        if not (self.dx > 0 and self.dy > 0):
            raise GeometryError("grid spacings must be positive")
        if not math.isclose(self.dx, self.dy, rel_tol=1e-12):
            raise GeometryError(f"grid must be isotropic, got dx={self.dx}, dy={self.dy}")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.nx, self.ny)

    @property
    def cell_area(self) -> float:
        return self.dx * self.dy

    @property
    def x(self) -> np.ndarray:
        return self.origin[0] + (np.arange(self.nx) - (self.nx - 1) / 2) * self.dx

    @property
    def y(self) -> np.ndarray:
        return self.origin[1] + (np.arange(self.ny) - (self.ny - 1) / 2) * self.dy

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.x, self.y, indexing="ij")

    def wavenumbers(self) -> tuple[np.ndarray, np.ndarray]:
        kx = 2 * np.pi * np.fft.fftfreq(self.nx, d=self.dx)
        ky = 2 * np.pi * np.fft.fftfreq(self.ny, d=self.dy)
        return kx, ky

    def k_squared(self) -> np.ndarray:
        kx, ky = self.wavenumbers()
        return kx[:, None] ** 2 + ky[None, :] ** 2

    def margins(self, geom: TrapGeometry) -> tuple[float, float]:
        hx, hy = geom.half_extent
        return (
            self.nx * self.dx / 2 - (hx + abs(self.origin[0])),
            self.ny * self.dy / 2 - (hy + abs(self.origin[1])),
        )

    def check_encloses(self, geom: TrapGeometry, margin: float = 2.0) -> None:
        mx, my = self.margins(geom)
        if mx < margin or my < margin:
            raise GeometryError(
                f"grid {self.nx}x{self.ny} (dx={self.dx}) leaves margins "
                f"({mx:.3f}, {my:.3f}) around the trap; need >= {margin}"
            )

    @classmethod
    def enclosing(cls, geom: TrapGeometry, base: "Grid2D | None" = None,
                  margin: float = 2.0, step: int = 32) -> "Grid2D":
        """Return ``base`` (default 800x300) with nx grown in steps of ``step``
        until the trap fits with the required margin."""
        grid = base or cls()
        if grid.margins(geom)[1] < margin:
            raise GeometryError("trap does not fit in y; increase ny")
        while grid.margins(geom)[0] < margin:
            grid = cls(grid.nx + step, grid.ny, grid.dx, grid.dy, grid.origin)
        return grid


@dataclass(frozen=True)
class InteractionParams:
    """Mean-field coupling for a unit-norm wavefunction (g stands for g*N)."""

    g: float = 2.5e4
    N: float = 1.0

    def __post_init__(self):
        if not self.g > 0:
            raise ValueError(f"g must be positive, got {self.g}")
        if not self.N > 0:
            raise ValueError(f"N must be positive, got {self.N}")


def build_trap_potential(geom: TrapGeometry, grid: Grid2D) -> np.ndarray:
    """Zero inside the dumbbell, ``wall_height`` everywhere else."""
    grid.check_encloses(geom)
    X, Y = grid.mesh()
    return np.where(geom.contains(X, Y), 0.0, geom.wall_height)


def bias_profile(geom: TrapGeometry, V: float, x):
    """Pointwise bias: 0 left of the channel, linear ramp inside, V to the right."""
    x = np.asarray(x, dtype=float)
    return np.clip(V / 2 + x * V / geom.l, 0.0, V)


def build_bias_potential(geom: TrapGeometry, grid: Grid2D, V: float) -> np.ndarray:
    """Initial bias field, zero outside the trap (the wall dominates there)."""
    if V < 0:
        raise ValueError(f"bias must be non-negative, got {V}")
    X, Y = grid.mesh()
    return np.where(geom.contains(X, Y), bias_profile(geom, V, X), 0.0)


@dataclass(frozen=True)
class ReservoirMasks:
    left: np.ndarray = field(repr=False)
    right: np.ndarray = field(repr=False)

    def __iter__(self):
        return iter((self.left, self.right))


def reservoir_masks(geom: TrapGeometry, grid: Grid2D) -> ReservoirMasks:
    """Split the interior at x = 0 so N_L + N_R is the full norm."""
    X, Y = grid.mesh()
    inside = geom.contains(X, Y)
    return ReservoirMasks(left=inside & (X < 0), right=inside & (X >= 0))
