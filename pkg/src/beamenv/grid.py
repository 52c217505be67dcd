"""Ground grid, oriented virtual obstacle map, and TX/RX links.

The ground area of interest is partitioned into m1 x m2 square cells of
spacing ``spacing_d``. Each cell carries a virtual obstacle with a height
(meters) and a ground-normal angle (radians); together these form the
learnable environment description shared by every link.
"""

from __future__ import annotations

import dataclasses
from pathlib import Path

import numpy as np

__all__ = [
    "BeamEnvError",
    "OutOfBoundsError",
    "DegenerateGeometryError",
    "DataValidationError",
    "NumericalError",
    "GridSpec",
    "EnvironmentMap",
    "Link",
]


class BeamEnvError(Exception):
    """Base class for errors raised by this package."""


class OutOfBoundsError(BeamEnvError):
    """A position falls outside the grid bounding box."""


class DegenerateGeometryError(BeamEnvError):
    """A geometric construction is undefined for the given configuration."""


class DataValidationError(BeamEnvError):
    """A file or dataset failed validation (bad header, hash mismatch, ...)."""


class NumericalError(BeamEnvError):
    """Training or prediction produced non-finite values."""


@dataclasses.dataclass(frozen=True)
class GridSpec:
    """Ground grid: ``m1`` cells along x, ``m2`` along y, ``spacing_d`` meters each.

    ``origin`` is the world coordinate of the corner of cell (0, 0). Cell
    (ix, iy) owns the half-open square
    ``[origin + ix*D, origin + (ix+1)*D) x [...)``.
    """

    m1: int
    m2: int
    spacing_d: float
    origin: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        if self.m1 < 1 or self.m2 < 1:
            raise DataValidationError(f"grid needs at least one cell, got {self.m1}x{self.m2}")
        if not self.spacing_d > 0:
            raise DataValidationError(f"grid spacing must be positive, got {self.spacing_d}")

    @property
    def n_cells(self) -> int:
        return self.m1 * self.m2

    def cell_center(self, ix, iy) -> np.ndarray:
        """World coordinates of the center of cell (ix, iy); accepts arrays."""
        ox, oy = self.origin
        d = self.spacing_d
        return np.stack(
            [ox + (np.asarray(ix) + 0.5) * d, oy + (np.asarray(iy) + 0.5) * d], axis=-1
        )

    def all_centers(self) -> np.ndarray:
        """(m1*m2, 2) array of cell centers in row-major (ix-major) order."""
        ix, iy = np.meshgrid(np.arange(self.m1), np.arange(self.m2), indexing="ij")
        return self.cell_center(ix.ravel(), iy.ravel())

    def world_to_cell(self, p) -> tuple[int, int]:
        """Cell index owning ground point ``p``; raises if outside the grid."""
        p = np.asarray(p, dtype=float)
        d = self.spacing_d
        fx = (p[0] - self.origin[0]) / d
        fy = (p[1] - self.origin[1]) / d
        if not (0 <= fx <= self.m1 and 0 <= fy <= self.m2):
            raise OutOfBoundsError(f"point {p[:2]} outside grid bounding box")
        ix = min(int(np.floor(fx)), self.m1 - 1)
        iy = min(int(np.floor(fy)), self.m2 - 1)
        return ix, iy

    def contains(self, p) -> bool:
        p = np.asarray(p, dtype=float)
        fx = (p[0] - self.origin[0]) / self.spacing_d
        fy = (p[1] - self.origin[1]) / self.spacing_d
        return bool(0 <= fx <= self.m1 and 0 <= fy <= self.m2)

    def flat_index(self, ix, iy):
        return np.asarray(ix) * self.m2 + np.asarray(iy)

    def unflatten(self, m):
        m = np.asarray(m)
        return m // self.m2, m % self.m2


@dataclasses.dataclass
class EnvironmentMap:
    """Oriented virtual obstacle map: per-cell heights and normal angles.

    ``heights`` (m1, m2) holds obstacle heights in meters, ``normal_angles``
    (m1, m2) the ground-normal angle of each board in radians. ``eta`` is the
    constant third component of the 3D normal (cos phi, sin phi, eta).
    """

    grid: GridSpec
    heights: np.ndarray
    normal_angles: np.ndarray
    eta: float = 0.1

    def __post_init__(self):
        self.heights = np.asarray(self.heights, dtype=float)
        self.normal_angles = np.asarray(self.normal_angles, dtype=float)
        shape = (self.grid.m1, self.grid.m2)
        if self.heights.shape != shape or self.normal_angles.shape != shape:
            raise DataValidationError(
                f"environment arrays must be {shape}, got {self.heights.shape} / "
                f"{self.normal_angles.shape}"
            )
        if np.any(self.heights < 0):
            raise DataValidationError("obstacle heights must be non-negative")
        self.normal_angles = np.mod(self.normal_angles, 2 * np.pi)

    @classmethod
    def flat(cls, grid: GridSpec, eta: float = 0.1) -> "EnvironmentMap":
        """All-zero heights (no obstacles), zero normal angles."""
        z = np.zeros((grid.m1, grid.m2))
        return cls(grid, z, z.copy(), eta=eta)

    def normal_vector(self, ix, iy) -> np.ndarray:
        """3D normal l_m = (cos phi, sin phi, eta) of cell (ix, iy)."""
        phi = self.normal_angles[ix, iy]
        return np.array([np.cos(phi), np.sin(phi), self.eta])

    # -- serialization: heights.csv / angles.csv + a small header file --------

    def save(self, directory) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        fmt = "%.17g"
        np.savetxt(directory / "heights.csv", self.heights, fmt=fmt, delimiter=",")
        np.savetxt(directory / "angles.csv", self.normal_angles, fmt=fmt, delimiter=",")
        header = {
            "m1": self.grid.m1,
            "m2": self.grid.m2,
            "spacing_d": repr(self.grid.spacing_d),
            "origin_x": repr(self.grid.origin[0]),
            "origin_y": repr(self.grid.origin[1]),
            "eta": repr(self.eta),
        }
        lines = [f"{k}={v}\n" for k, v in header.items()]
        (directory / "envmap.txt").write_text("".join(lines))

    @classmethod
    def load(cls, directory) -> "EnvironmentMap":
        directory = Path(directory)
        kv = {}
        for line in (directory / "envmap.txt").read_text().splitlines():
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            k, _, v = line.partition("=")
            kv[k.strip()] = v.strip()
        try:
            grid = GridSpec(
                m1=int(kv["m1"]),
                m2=int(kv["m2"]),
                spacing_d=float(kv["spacing_d"]),
                origin=(float(kv["origin_x"]), float(kv["origin_y"])),
            )
            eta = float(kv["eta"])
        except KeyError as exc:
            raise DataValidationError(f"envmap header missing key: {exc}") from exc
        heights = np.loadtxt(directory / "heights.csv", delimiter=",", ndmin=2)
        angles = np.loadtxt(directory / "angles.csv", delimiter=",", ndmin=2)
        return cls(grid, heights, angles, eta=eta)


@dataclasses.dataclass(frozen=True)
class Link:
    """A TX/RX position pair in 3D world coordinates."""

    p_t: tuple[float, float, float]
    p_r: tuple[float, float, float]

    def __post_init__(self):
        pt = np.asarray(self.p_t, dtype=float)
        pr = np.asarray(self.p_r, dtype=float)
        if pt.shape != (3,) or pr.shape != (3,):
            raise DataValidationError("link endpoints must be 3D points")
        if np.allclose(pt, pr):
            raise DegenerateGeometryError("TX and RX positions coincide")
        object.__setattr__(self, "p_t", tuple(float(x) for x in pt))
        object.__setattr__(self, "p_r", tuple(float(x) for x in pr))

    @property
    def tx(self) -> np.ndarray:
        return np.asarray(self.p_t)

    @property
    def rx(self) -> np.ndarray:
        return np.asarray(self.p_r)

    @property
    def tx_ground(self) -> np.ndarray:
        return np.asarray(self.p_t[:2])

    @property
    def rx_ground(self) -> np.ndarray:
        return np.asarray(self.p_r[:2])

    @property
    def tx_height(self) -> float:
        return self.p_t[2]

    @property
    def rx_height(self) -> float:
        return self.p_r[2]

    @property
    def distance(self) -> float:
        return float(np.linalg.norm(self.tx - self.rx))

    def check_in_grid(self, grid: GridSpec) -> None:
        for p in (self.tx_ground, self.rx_ground):
            if not grid.contains(p):
                raise OutOfBoundsError(f"link endpoint {p} outside grid bounding box")
