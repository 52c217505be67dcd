"""True scenes for the synthetic channel generator.

A scene is a grid plus a set of axis-aligned box obstacles (footprint given
as cell-index ranges), TX sites, and a common RX height. Scenes are the
ground truth that datasets are synthesized from; the learned environment
map is a per-cell approximation of them.
"""

from __future__ import annotations

import dataclasses
import hashlib
from pathlib import Path

import numpy as np

from .grid import DataValidationError, EnvironmentMap, GridSpec

# outward facet normals, angle convention: 0 = +x, pi/2 = +y
_FACET_ANGLES = {"west": np.pi, "east": 0.0, "south": 1.5 * np.pi, "north": 0.5 * np.pi}


@dataclasses.dataclass(frozen=True)
class Obstacle:
    """Axis-aligned box obstacle over cell range [x0, x1) x [y0, y1)."""

    x0: int
    x1: int
    y0: int
    y1: int
    height: float
    loss_db: float = 6.0

    def __post_init__(self):
        if not (self.x0 < self.x1 and self.y0 < self.y1):
            raise DataValidationError("obstacle footprint must be a nonempty cell range")
        if not self.height > 0:
            raise DataValidationError("obstacle height must be positive")
        if self.loss_db < 0:
            raise DataValidationError("reflection loss must be >= 0 dB")

    def world_box(self, grid: GridSpec) -> np.ndarray:
        """[[x_lo, y_lo, 0], [x_hi, y_hi, height]] in world coordinates."""
        ox, oy = grid.origin
        d = grid.spacing_d
        return np.array([
            [ox + self.x0 * d, oy + self.y0 * d, 0.0],
            [ox + self.x1 * d, oy + self.y1 * d, self.height],
        ])

    def facets(self, grid: GridSpec):
        """The four exposed vertical rectangles as (name, angle, plane_axis,
        plane_coord, (lo, hi) extent along the other ground axis)."""
        box = self.world_box(grid)
        return [
            ("west", _FACET_ANGLES["west"], 0, box[0, 0], (box[0, 1], box[1, 1])),
            ("east", _FACET_ANGLES["east"], 0, box[1, 0], (box[0, 1], box[1, 1])),
            ("south", _FACET_ANGLES["south"], 1, box[0, 1], (box[0, 0], box[1, 0])),
            ("north", _FACET_ANGLES["north"], 1, box[1, 1], (box[0, 0], box[1, 0])),
        ]


@dataclasses.dataclass
class Scene:
    """Grid, obstacles, TX sites, and the common RX measurement height."""

    grid: GridSpec
    obstacles: list[Obstacle]
    tx_sites: list[tuple[float, float, float]]
    rx_height: float = 2.0

    def __post_init__(self):
        if not self.tx_sites:
            raise DataValidationError("scene needs at least one TX site")
        if not self.rx_height > 0:
            raise DataValidationError("RX height must be positive")
        taken = np.zeros((self.grid.m1, self.grid.m2), dtype=bool)
        for ob in self.obstacles:
            if ob.x1 > self.grid.m1 or ob.y1 > self.grid.m2 or ob.x0 < 0 or ob.y0 < 0:
                raise DataValidationError("obstacle footprint outside grid")
            patch = taken[ob.x0:ob.x1, ob.y0:ob.y1]
            if patch.any():
                raise DataValidationError("obstacle footprints must be disjoint")
            patch[...] = True
        self.tx_sites = [tuple(float(v) for v in t) for t in self.tx_sites]

    def occupied_mask(self) -> np.ndarray:
        mask = np.zeros((self.grid.m1, self.grid.m2), dtype=bool)
        for ob in self.obstacles:
            mask[ob.x0:ob.x1, ob.y0:ob.y1] = True
        return mask

    def free_cells(self) -> np.ndarray:
        """(n, 2) cell indices of unoccupied cells in ix-major order."""
        free = ~self.occupied_mask()
        ix, iy = np.nonzero(free)
        return np.stack([ix, iy], axis=1)

    def true_environment(self) -> EnvironmentMap:
        """Ground-truth environment map: obstacle heights, outward facet
        normals on boundary cells (interior cells keep the west normal)."""
        heights = np.zeros((self.grid.m1, self.grid.m2))
        angles = np.zeros((self.grid.m1, self.grid.m2))
        for ob in self.obstacles:
            heights[ob.x0:ob.x1, ob.y0:ob.y1] = ob.height
            for ix in range(ob.x0, ob.x1):
                for iy in range(ob.y0, ob.y1):
                    # nearest facet wins; tie order west/east/south/north
                    dists = {
                        "west": ix - ob.x0,
                        "east": ob.x1 - 1 - ix,
                        "south": iy - ob.y0,
                        "north": ob.y1 - 1 - iy,
                    }
                    side = min(dists, key=lambda k: (dists[k], k))
                    angles[ix, iy] = _FACET_ANGLES[side]
        return EnvironmentMap(self.grid, heights, angles)

    # -- serialization --------------------------------------------------------

    def _canonical_lines(self) -> list[str]:
        lines = [
            f"grid_m1={self.grid.m1}\n",
            f"grid_m2={self.grid.m2}\n",
            f"spacing={self.grid.spacing_d!r}\n",
            f"origin_x={self.grid.origin[0]!r}\n",
            f"origin_y={self.grid.origin[1]!r}\n",
            f"rx_height={self.rx_height!r}\n",
        ]
        for t in self.tx_sites:
            lines.append(f"tx={t[0]!r},{t[1]!r},{t[2]!r}\n")
        for ob in self.obstacles:
            lines.append(
                f"obstacle={ob.x0}:{ob.x1},{ob.y0}:{ob.y1},{ob.height!r},{ob.loss_db!r}\n"
            )
        return lines

    def save(self, path) -> None:
        Path(path).write_text("".join(self._canonical_lines()))

    def content_hash(self) -> str:
        h = hashlib.sha256("".join(self._canonical_lines()).encode())
        return h.hexdigest()[:16]

    @classmethod
    def load(cls, path) -> "Scene":
        kv = {}
        txs = []
        obstacles = []
        for raw in Path(path).read_text().splitlines():
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            key, sep, val = line.partition("=")
            if not sep:
                raise DataValidationError(f"bad scene line: {raw!r}")
            key = key.strip()
            val = val.strip()
            try:
                if key == "tx":
                    txs.append(tuple(float(v) for v in val.split(",")))
                elif key == "obstacle":
                    xr, yr, height, loss = val.split(",")
                    x0, x1 = (int(v) for v in xr.split(":"))
                    y0, y1 = (int(v) for v in yr.split(":"))
                    obstacles.append(Obstacle(x0, x1, y0, y1, float(height), float(loss)))
                else:
                    kv[key] = val
            except (ValueError, DataValidationError) as exc:
                raise DataValidationError(f"bad scene line: {raw!r} ({exc})") from exc
        try:
            grid = GridSpec(
                m1=int(kv["grid_m1"]),
                m2=int(kv["grid_m2"]),
                spacing_d=float(kv["spacing"]),
                origin=(float(kv["origin_x"]), float(kv["origin_y"])),
            )
            rx_height = float(kv["rx_height"])
        except KeyError as exc:
            raise DataValidationError(f"scene file missing key: {exc}") from exc
        return cls(grid, obstacles, txs, rx_height=rx_height)
