"""Synthetic channel generator: specular path tracing and RSS datasets.

Direct and single-bounce (optionally double-bounce) paths are enumerated by
the mirror-image method against the true scene, with exact segment-vs-box
occlusion. Per-beam RSS follows the independent-path expectation
E|h w|^2 = sum_l sigma_l^2 B(phi_l, w_j), in linear power, then dB.
"""

from __future__ import annotations

import dataclasses
import hashlib
from pathlib import Path

import numpy as np

from .beams import Codebook, azimuth, beam_pattern
from .grid import DataValidationError, GridSpec, Link
from .scene import Scene

FLOOR_DB = -300.0
_EPS = 1e-9


@dataclasses.dataclass(frozen=True)
class PathGainConfig:
    """Log-distance path-gain model: f(d) = -(PL0 + 10 gamma log10(d/d0))."""

    pl0_db: float = 40.0
    gamma_los: float = 2.0
    gamma_nlos: float = 3.5
    d0: float = 1.0
    include_nlos_direct: bool = False  # blocked-direct residual path

    def gain_db(self, d: float, gamma: float) -> float:
        d = max(float(d), self.d0)
        return -(self.pl0_db + 10.0 * gamma * np.log10(d / self.d0))


@dataclasses.dataclass(frozen=True)
class PathRecord:
    """One propagation path: kind, bounce cells/points, length, AoD, gain."""

    kind: str                 # "direct" | "reflect" | "reflect2"
    bounce_cells: tuple       # cell indices of bounce points, TX-side first
    bounce_points: tuple      # 3D bounce coordinates, TX-side first
    length: float             # total 3D path length (d or d')
    aod: float                # departure azimuth at the TX, radians
    gain_db: float            # sigma_l^2 in dB

    def __post_init__(self):
        if not self.length > 0:
            raise DataValidationError("path length must be positive")


def _segment_box_overlap(p, q, box) -> float:
    """Length (in segment parameter t) of the segment's interior overlap
    with the 3D box [[lo], [hi]]."""
    d = q - p
    t0, t1 = 0.0, 1.0
    for k in range(3):
        if abs(d[k]) < 1e-15:
            if not (box[0, k] <= p[k] <= box[1, k]):
                return 0.0
            continue
        ta = (box[0, k] - p[k]) / d[k]
        tb = (box[1, k] - p[k]) / d[k]
        if ta > tb:
            ta, tb = tb, ta
        t0, t1 = max(t0, ta), min(t1, tb)
        if t0 >= t1:
            return 0.0
    return max(t1 - t0, 0.0)


def segment_blocked(scene: Scene, p, q) -> bool:
    """True iff the open 3D segment p->q passes through any obstacle box.

    Endpoints lying exactly on a facet (bounce points) produce zero-measure
    overlap and do not count as blockage.
    """
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    seg_len = np.linalg.norm(q - p)
    if seg_len < 1e-15:
        return False
    for ob in scene.obstacles:
        if _segment_box_overlap(p, q, ob.world_box(scene.grid)) * seg_len > 1e-9:
            return True
    return False


def _facet_bounce(scene, facet, p_t, p_r):
    """Specular bounce of p_t -> facet -> p_r, or None if invalid.

    Returns (bounce_point, mirrored_tx). The facet is a vertical rectangle
    on plane axis=coord with ground extent (lo, hi) and z in [0, height].
    """
    _, angle, axis, coord, extent = facet
    n = np.array([np.cos(angle), np.sin(angle)])
    # both endpoints strictly on the outward side of the facet plane
    side_t = (p_t[axis] - coord) * n[axis]
    side_r = (p_r[axis] - coord) * n[axis]
    if side_t <= _EPS or side_r <= _EPS:
        return None
    p_tm = p_t.copy()
    p_tm[axis] = 2.0 * coord - p_t[axis]
    denom = p_tm[axis] - p_r[axis]
    if abs(denom) < 1e-15:
        return None
    t = (coord - p_r[axis]) / denom
    if not (_EPS < t < 1.0 - _EPS):
        return None
    bounce = p_r + t * (p_tm - p_r)
    other = 1 - axis
    lo, hi = extent
    if not (lo + _EPS <= bounce[other] <= hi - _EPS):
        return None
    return bounce, p_tm


def _bounce_cell(grid: GridSpec, bounce, facet):
    """Cell owning a bounce point, nudged inward so facet-plane points map
    to the obstacle's own boundary cell rather than the free neighbor."""
    _, angle, _, _, _ = facet
    n = np.array([np.cos(angle), np.sin(angle)])
    return grid.world_to_cell(bounce[:2] - 1e-6 * grid.spacing_d * n)


def trace_paths(scene: Scene, link: Link, max_bounces: int = 1,
                cfg: PathGainConfig | None = None) -> list[PathRecord]:
    """Enumerate direct and specular bounce paths for one link."""
    if max_bounces not in (0, 1, 2):
        raise DataValidationError("max_bounces must be 0, 1, or 2")
    cfg = cfg or PathGainConfig()
    p_t, p_r = link.tx, link.rx
    paths: list[PathRecord] = []

    direct_clear = not segment_blocked(scene, p_t, p_r)
    if direct_clear:
        paths.append(PathRecord(
            "direct", (), (), link.distance,
            float(azimuth(p_r, p_t)), cfg.gain_db(link.distance, cfg.gamma_los)))
    elif cfg.include_nlos_direct:
        paths.append(PathRecord(
            "direct", (), (), link.distance,
            float(azimuth(p_r, p_t)), cfg.gain_db(link.distance, cfg.gamma_nlos)))

    if max_bounces == 0:
        return paths

    facets = [(ob, f) for ob in scene.obstacles for f in ob.facets(scene.grid)]

    for ob, facet in facets:
        hit = _facet_bounce(scene, facet, p_t, p_r)
        if hit is None:
            continue
        bounce, _ = hit
        if not (0.0 <= bounce[2] <= ob.height):
            continue
        if segment_blocked(scene, p_t, bounce) or segment_blocked(scene, bounce, p_r):
            continue
        length = float(np.linalg.norm(bounce - p_t) + np.linalg.norm(p_r - bounce))
        cell = _bounce_cell(scene.grid, bounce, facet)
        paths.append(PathRecord(
            "reflect", (cell,), (tuple(bounce),), length,
            float(azimuth(bounce, p_t)),
            cfg.gain_db(length, cfg.gamma_los) - ob.loss_db))

    if max_bounces == 2:
        for ob1, f1 in facets:
            for ob2, f2 in facets:
                if ob1 is ob2 and f1[0] == f2[0]:
                    continue
                rec = _double_bounce(scene, link, ob1, f1, ob2, f2, cfg)
                if rec is not None:
                    paths.append(rec)
    return paths


def _double_bounce(scene, link, ob1, f1, ob2, f2, cfg):
    """TX -> facet1 -> facet2 -> RX via two mirror reflections."""
    p_t, p_r = link.tx, link.rx
    _, _, ax1, coord1, ext1 = f1
    _, _, ax2, coord2, ext2 = f2
    # mirror TX across facet 1, then across facet 2
    t1 = p_t.copy()
    t1[ax1] = 2.0 * coord1 - p_t[ax1]
    t2 = t1.copy()
    t2[ax2] = 2.0 * coord2 - t1[ax2]
    # last bounce: RX -> t2 crossing facet-2 plane
    hit2 = _facet_bounce(scene, f2, t1, p_r)
    if hit2 is None:
        return None
    b2, _ = hit2
    if not (0.0 <= b2[2] <= ob2.height):
        return None
    # first bounce: b2 -> t1 crossing facet-1 plane (emergent leg toward b2)
    hit1 = _facet_bounce(scene, f1, p_t, b2)
    if hit1 is None:
        return None
    b1, _ = hit1
    if not (0.0 <= b1[2] <= ob1.height):
        return None
    if (segment_blocked(scene, p_t, b1) or segment_blocked(scene, b1, b2)
            or segment_blocked(scene, b2, p_r)):
        return None
    length = float(np.linalg.norm(b1 - p_t) + np.linalg.norm(b2 - b1)
                   + np.linalg.norm(p_r - b2))
    c1 = _bounce_cell(scene.grid, b1, f1)
    c2 = _bounce_cell(scene.grid, b2, f2)
    return PathRecord(
        "reflect2", (c1, c2), (tuple(b1), tuple(b2)), length,
        float(azimuth(b1, p_t)),
        cfg.gain_db(length, cfg.gamma_los) - ob1.loss_db - ob2.loss_db)


def synth_channel(scene: Scene, link: Link, codebook: Codebook,
                  cfg: PathGainConfig | None = None, max_bounces: int = 1,
                  paths: list[PathRecord] | None = None) -> np.ndarray:
    """Expected per-beam RSS in dB: sum_l sigma_l^2 B(phi_l, w_j)."""
    if paths is None:
        paths = trace_paths(scene, link, max_bounces=max_bounces, cfg=cfg)
    out = np.full(len(codebook), FLOOR_DB)
    if not paths:
        return out
    linear = np.zeros(len(codebook))
    for path in paths:
        sigma2 = 10.0 ** (path.gain_db / 10.0)
        for j in range(len(codebook)):
            linear[j] += sigma2 * beam_pattern(path.aod, codebook.beams[j], codebook.array)
    pos = linear > 0
    out[pos] = 10.0 * np.log10(linear[pos])
    return out


# ---------------------------------------------------------------------------
# measurement sets
# ---------------------------------------------------------------------------

_CSV_HEADER = "tx_id,rx_x,rx_y,rx_z,beam,rss_db"


@dataclasses.dataclass
class MeasurementSet:
    """Per-(TX, RX, beam) RSS records plus provenance metadata."""

    tx_id: np.ndarray    # (n,) int
    rx: np.ndarray       # (n, 3) float
    beam: np.ndarray     # (n,) int
    rss_db: np.ndarray   # (n,) float
    metadata: dict

    def __post_init__(self):
        n = len(self.tx_id)
        self.tx_id = np.asarray(self.tx_id, dtype=int)
        self.beam = np.asarray(self.beam, dtype=int)
        self.rx = np.asarray(self.rx, dtype=float)
        self.rss_db = np.asarray(self.rss_db, dtype=float)
        if not (len(self.rx) == len(self.beam) == len(self.rss_db) == n):
            raise DataValidationError("measurement arrays must share length")
        if n and self.rx.shape[1] != 3:
            raise DataValidationError("rx positions must be 3D")
        if not np.all(np.isfinite(self.rss_db)):
            raise DataValidationError("non-finite rss values")

    def __len__(self) -> int:
        return len(self.tx_id)

    def filter_tx(self, tx_ids) -> "MeasurementSet":
        keep = np.isin(self.tx_id, list(tx_ids))
        return MeasurementSet(self.tx_id[keep], self.rx[keep], self.beam[keep],
                              self.rss_db[keep], dict(self.metadata))

    def save(self, path) -> None:
        path = Path(path)
        lines = [_CSV_HEADER + "\n"]
        for i in range(len(self)):
            lines.append(
                f"{self.tx_id[i]},{self.rx[i, 0]:.17g},{self.rx[i, 1]:.17g},"
                f"{self.rx[i, 2]:.17g},{self.beam[i]},{self.rss_db[i]:.17g}\n")
        path.write_text("".join(lines))
        meta_lines = [f"{k}={self.metadata[k]}\n" for k in sorted(self.metadata)]
        path.with_suffix(path.suffix + ".meta").write_text("".join(meta_lines))

    @classmethod
    def load(cls, path) -> "MeasurementSet":
        path = Path(path)
        text = path.read_text().splitlines()
        if not text or text[0].strip() != _CSV_HEADER:
            raise DataValidationError(f"bad measurement header in {path}")
        tx_id, rx, beam, rss = [], [], [], []
        for line in text[1:]:
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 6:
                raise DataValidationError(f"bad measurement row: {line!r}")
            tx_id.append(int(parts[0]))
            rx.append([float(parts[1]), float(parts[2]), float(parts[3])])
            beam.append(int(parts[4]))
            rss.append(float(parts[5]))
        meta = {}
        meta_path = path.with_suffix(path.suffix + ".meta")
        if meta_path.exists():
            for line in meta_path.read_text().splitlines():
                line = line.strip()
                if line and not line.startswith("#"):
                    k, _, v = line.partition("=")
                    meta[k.strip()] = v.strip()
        return cls(np.array(tx_id, dtype=int),
                   np.array(rx, dtype=float).reshape(-1, 3),
                   np.array(beam, dtype=int), np.array(rss, dtype=float), meta)


def generate_dataset(scene: Scene, codebook: Codebook, sample_ratio: float,
                     noise_sigma_db: float = 0.5, seed: int = 0,
                     cfg: PathGainConfig | None = None,
                     max_bounces: int = 1) -> MeasurementSet:
    """Sample RX cells uniformly over free cells and measure all beams."""
    if not 0.0 < sample_ratio <= 1.0:
        raise DataValidationError(f"sample_ratio must be in (0, 1], got {sample_ratio}")
    cfg = cfg or PathGainConfig()
    free = scene.free_cells()
    n_pick = int(round(sample_ratio * len(free)))
    if n_pick < 1:
        raise DataValidationError("sample_ratio too small: zero RX cells selected")
    rng = np.random.default_rng(seed)
    n_beams = len(codebook)

    tx_col, rx_col, beam_col, rss_col = [], [], [], []
    for t, site in enumerate(scene.tx_sites):
        chosen = free[np.sort(rng.choice(len(free), size=n_pick, replace=False))]
        for ix, iy in chosen:
            center = scene.grid.cell_center(int(ix), int(iy))
            p_r = (float(center[0]), float(center[1]), scene.rx_height)
            link = Link(scene.tx_sites[t], p_r)
            rss = synth_channel(scene, link, codebook, cfg=cfg, max_bounces=max_bounces)
            if noise_sigma_db > 0:
                rss = rss + rng.normal(0.0, noise_sigma_db, size=n_beams)
            tx_col.extend([t] * n_beams)
            rx_col.extend([p_r] * n_beams)
            beam_col.extend(range(n_beams))
            rss_col.extend(rss.tolist())

    metadata = {
        "seed": seed,
        "noise_sigma_db": repr(float(noise_sigma_db)),
        "sample_ratio": repr(float(sample_ratio)),
        "max_bounces": max_bounces,
        "scene_hash": scene.content_hash(),
        "codebook_hash": codebook.content_hash(),
        "rx_height": repr(float(scene.rx_height)),
        "n_tx": len(scene.tx_sites),
    }
    return MeasurementSet(np.array(tx_col), np.array(rx_col), np.array(beam_col),
                          np.array(rss_col), metadata)
