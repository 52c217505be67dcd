"""Deterministic link/obstacle geometry.

Everything here is a pure function of positions and the grid: line-of-sight
traversal, the mirror-image construction for specular reflection, and the
reflective-zone tests in both their brute-force form and the simplified
precomputed form used during training. The two zone tests are deliberately
implemented through different routes (reflection-point sweep vs precomputed
dot products) so they can cross-check each other.
"""

from __future__ import annotations

import dataclasses

import numpy as np

from .grid import (
    DegenerateGeometryError,
    EnvironmentMap,
    GridSpec,
    Link,
    OutOfBoundsError,
)

_EPS = 1e-12


def _unit(v, axis=-1):
    n = np.linalg.norm(v, axis=axis, keepdims=True)
    return v / n


def angle_between(x, y) -> float:
    """Angle between two 2D vectors via atan2 (well conditioned near 0 and pi)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    nx, ny = np.linalg.norm(x), np.linalg.norm(y)
    if nx < _EPS or ny < _EPS:
        raise DegenerateGeometryError("angle of zero vector is undefined")
    cross = x[0] * y[1] - x[1] * y[0]
    dot = x[0] * y[0] + x[1] * y[1]
    return float(np.abs(np.arctan2(cross, dot)))


# ---------------------------------------------------------------------------
# segment traversal and blockage
# ---------------------------------------------------------------------------


def cells_on_segment(link: Link, grid: GridSpec, endpoint_exclusion: bool = False):
    """Ordered list of cell indices (ix, iy) covered by the ground segment.

    Cells are collected with half-open floor ownership: a cell is included
    iff it owns at least one point of the projected segment, which matches a
    dense-sampling traversal. Endpoint cells are included unless
    ``endpoint_exclusion`` is set.
    """
    link.check_in_grid(grid)
    d = grid.spacing_d
    a = (link.tx_ground - np.asarray(grid.origin)) / d
    b = (link.rx_ground - np.asarray(grid.origin)) / d

    ts = [0.0, 1.0]
    for axis in range(2):
        lo, hi = sorted((a[axis], b[axis]))
        denom = b[axis] - a[axis]
        if abs(denom) < _EPS:
            continue
        for k in range(int(np.ceil(lo)), int(np.floor(hi)) + 1):
            t = (k - a[axis]) / denom
            if 0.0 < t < 1.0:
                ts.append(t)
    ts = np.unique(np.asarray(ts))

    cells: list[tuple[int, int]] = []
    seen = set()
    # midpoints of consecutive crossing intervals pin down the owning cell;
    # the exact endpoints are kept too for segments starting on a grid line
    probe = np.concatenate([[0.0], (ts[:-1] + ts[1:]) / 2.0, [1.0]])
    for t in probe:
        p = a + t * (b - a)
        ix = min(int(np.floor(p[0])), grid.m1 - 1)
        iy = min(int(np.floor(p[1])), grid.m2 - 1)
        ix, iy = max(ix, 0), max(iy, 0)
        if (ix, iy) not in seen:
            seen.add((ix, iy))
            cells.append((ix, iy))

    if endpoint_exclusion:
        ends = set()
        for p in (a, b):
            ix = min(max(int(np.floor(p[0])), 0), grid.m1 - 1)
            iy = min(max(int(np.floor(p[1])), 0), grid.m2 - 1)
            ends.add((ix, iy))
        cells = [c for c in cells if c not in ends]
    return cells


def segment_height_at_cell(link: Link, cell, grid: GridSpec) -> float:
    """Altitude of the link segment over the center of ``cell``.

    Uses the closed form (p_t3 - p_r3) * |c - p_r| / |p_t - p_r| + p_r3.
    """
    if tuple(cell) not in set(cells_on_segment(link, grid)):
        raise DegenerateGeometryError(f"cell {cell} is not on the link segment")
    c = grid.cell_center(*cell)
    base = np.linalg.norm(link.tx_ground - link.rx_ground)
    frac = np.linalg.norm(c - link.rx_ground) / base
    return float((link.tx_height - link.rx_height) * frac + link.rx_height)


def segment_cells_heights(link: Link, grid: GridSpec):
    """Flat cell indices on the segment plus the segment altitude over each.

    Vectorized companion of cells_on_segment/segment_height_at_cell used to
    assemble blockage feature maps.
    """
    cells = cells_on_segment(link, grid)
    if not cells:
        return np.empty(0, dtype=np.int64), np.empty(0)
    arr = np.asarray(cells)
    centers = grid.cell_center(arr[:, 0], arr[:, 1])
    base = np.linalg.norm(link.tx_ground - link.rx_ground)
    frac = np.linalg.norm(centers - link.rx_ground, axis=1) / base
    z = (link.tx_height - link.rx_height) * frac + link.rx_height
    return grid.flat_index(arr[:, 0], arr[:, 1]), z


def is_los(link: Link, env: EnvironmentMap) -> bool:
    """True iff no obstacle on the segment reaches the segment altitude."""
    idx, z = segment_cells_heights(link, env.grid)
    v = env.heights.ravel()[idx]
    return bool(np.all(v < z))


# ---------------------------------------------------------------------------
# mirror / reflection point
# ---------------------------------------------------------------------------


def mirror_tx(p_t, cell, normal_angle: float, grid: GridSpec) -> np.ndarray:
    """Mirror of ``p_t`` across the vertical board plane of ``cell``.

    The board is perpendicular to the ground, so only the ground-projected
    normal (cos phi, sin phi) enters and the z coordinate is preserved.
    """
    p_t = np.asarray(p_t, dtype=float)
    n = np.array([np.cos(normal_angle), np.sin(normal_angle)])
    c = grid.cell_center(*cell)
    out = p_t.copy()
    out[:2] = p_t[:2] - 2.0 * np.dot(p_t[:2] - c, n) * n
    return out


def reflection_point(link: Link, cell, normal_angle: float, env: EnvironmentMap) -> np.ndarray:
    """Intersection of the RX -> mirror-TX line with the board plane.

    Raises DegenerateGeometryError when the line is parallel to the board.
    """
    grid = env.grid
    n = np.array([np.cos(normal_angle), np.sin(normal_angle)])
    c = grid.cell_center(*cell)
    p_tm = mirror_tx(link.tx, cell, normal_angle, grid)
    denom = np.dot(n, p_tm[:2] - link.rx_ground)
    if abs(denom) < _EPS:
        raise DegenerateGeometryError("virtual direct path parallel to board plane")
    scale = np.dot(n, c - link.rx_ground) / denom
    return link.rx + scale * (p_tm - link.rx)


def reflection_scale(link: Link, cell, normal_angle: float, grid: GridSpec) -> float:
    """Scale factor of the RX -> mirror-TX line at the board plane."""
    n = np.array([np.cos(normal_angle), np.sin(normal_angle)])
    c = grid.cell_center(*cell)
    p_tm = mirror_tx(link.tx, cell, normal_angle, grid)
    denom = np.dot(n, p_tm[:2] - link.rx_ground)
    if abs(denom) < _EPS:
        raise DegenerateGeometryError("virtual direct path parallel to board plane")
    return float(np.dot(n, c - link.rx_ground) / denom)


# ---------------------------------------------------------------------------
# precomputed reflective-zone constants
# ---------------------------------------------------------------------------


def height_threshold(link: Link, cell, grid: GridSpec) -> float:
    """Minimum obstacle height for ``cell`` to reflect the link."""
    c = grid.cell_center(*cell)
    d_r = np.linalg.norm(c - link.rx_ground)
    d_t = np.linalg.norm(c - link.tx_ground)
    if d_r + d_t < _EPS:
        raise DegenerateGeometryError("TX and RX both project onto the cell center")
    return float((link.tx_height - link.rx_height) * d_r / (d_r + d_t) + link.rx_height)


def boundary_normals(link: Link, cell, grid: GridSpec):
    """Boundary normals (b1, b2) and their bisector for the cell's board.

    Board endpoints sit at the cell center +/- D/2 along the tangent of the
    nominal specular normal, which makes both vectors constants of the link
    and cell geometry only.
    """
    c = grid.cell_center(*cell)
    vt = link.tx_ground - c
    vr = link.rx_ground - c
    nt, nr = np.linalg.norm(vt), np.linalg.norm(vr)
    if nt < _EPS or nr < _EPS:
        raise DegenerateGeometryError("link endpoint projects onto the cell center")
    n_nom = vt / nt + vr / nr
    nn = np.linalg.norm(n_nom)
    if nn < 1e-9:
        raise DegenerateGeometryError("cell lies on the TX-RX line; nominal normal undefined")
    n_hat = n_nom / nn
    t_hat = np.array([-n_hat[1], n_hat[0]])
    half = grid.spacing_d / 2.0

    def _boundary(endpoint):
        wt = link.tx_ground - endpoint
        wr = link.rx_ground - endpoint
        at, ar = np.linalg.norm(wt), np.linalg.norm(wr)
        if at < _EPS or ar < _EPS:
            raise DegenerateGeometryError("link endpoint coincides with a board endpoint")
        b = wr / ar + wt / at
        nb = np.linalg.norm(b)
        if nb < 1e-9:
            raise DegenerateGeometryError("degenerate boundary normal")
        return b / nb

    b1 = _boundary(c + half * t_hat)
    b2 = _boundary(c - half * t_hat)
    return b1, b2, (b1 + b2) / 2.0


@dataclasses.dataclass
class ReflectionPrecompute:
    """Per-link, per-cell reflective-zone constants.

    All fields depend only on the link and cell geometry; none depend on the
    trainable heights or orientations, so a precompute is built once per link
    and reused for every zone query and training step.
    """

    link: Link
    grid: GridSpec
    v_hat: np.ndarray          # (M,) height thresholds; +inf where degenerate
    b1: np.ndarray             # (M, 2) boundary normal at endpoint c'
    b2: np.ndarray             # (M, 2) boundary normal at endpoint c''
    b_hat: np.ndarray          # (M, 2) bisector
    d_refl: np.ndarray         # (M,) reflected path length via the cell
    valid: np.ndarray          # (M,) bool, False where the geometry degenerates
    orient_threshold: np.ndarray  # (M,) b1 . b_hat

    @classmethod
    def build(cls, link: Link, grid: GridSpec) -> "ReflectionPrecompute":
        centers = grid.all_centers()
        pt, pr = link.tx_ground, link.rx_ground
        vt = pt - centers
        vr = pr - centers
        nt = np.linalg.norm(vt, axis=1)
        nr = np.linalg.norm(vr, axis=1)
        valid = (nt > _EPS) & (nr > _EPS)
        nt_s = np.where(valid, nt, 1.0)
        nr_s = np.where(valid, nr, 1.0)

        v_hat = np.where(
            nt + nr > _EPS,
            (link.tx_height - link.rx_height) * nr / np.maximum(nt + nr, _EPS)
            + link.rx_height,
            np.inf,
        )

        n_nom = vt / nt_s[:, None] + vr / nr_s[:, None]
        nn = np.linalg.norm(n_nom, axis=1)
        valid &= nn > 1e-9
        nn_s = np.where(valid, nn, 1.0)
        n_hat = n_nom / nn_s[:, None]
        t_hat = np.stack([-n_hat[:, 1], n_hat[:, 0]], axis=1)
        half = grid.spacing_d / 2.0

        def _boundary(endpoints):
            wt = pt - endpoints
            wr = pr - endpoints
            at = np.linalg.norm(wt, axis=1)
            ar = np.linalg.norm(wr, axis=1)
            ok = (at > _EPS) & (ar > _EPS)
            b = wt / np.where(ok, at, 1.0)[:, None] + wr / np.where(ok, ar, 1.0)[:, None]
            nb = np.linalg.norm(b, axis=1)
            ok &= nb > 1e-9
            return b / np.where(ok, nb, 1.0)[:, None], ok

        b1, ok1 = _boundary(centers + half * t_hat)
        b2, ok2 = _boundary(centers - half * t_hat)
        valid &= ok1 & ok2
        b_hat = (b1 + b2) / 2.0

        d_refl = np.sqrt(nt**2 + link.tx_height**2) + np.sqrt(nr**2 + link.rx_height**2)
        v_hat = np.where(valid, v_hat, np.inf)
        orient_threshold = np.einsum("ij,ij->i", b1, b_hat)
        return cls(link, grid, v_hat, b1, b2, b_hat, d_refl, valid, orient_threshold)


# ---------------------------------------------------------------------------
# reflective-zone tests
# ---------------------------------------------------------------------------


def in_reflective_zone_fast(link: Link, cell, env: EnvironmentMap,
                            pre: ReflectionPrecompute) -> bool:
    """Simplified zone test: orientation via precomputed dot products, height
    via the precomputed threshold."""
    m = int(env.grid.flat_index(*cell))
    if not pre.valid[m]:
        return False
    phi = env.normal_angles[tuple(cell)]
    l_bar = np.array([np.cos(phi), np.sin(phi)])
    orient = np.dot(l_bar, pre.b_hat[m]) >= pre.orient_threshold[m]
    height = env.heights[tuple(cell)] >= pre.v_hat[m]
    return bool(orient and height)


def fast_zone_mask(env: EnvironmentMap, pre: ReflectionPrecompute) -> np.ndarray:
    """Vectorized fast zone test over every cell; (M,) bool."""
    phi = env.normal_angles.ravel()
    l_bar = np.stack([np.cos(phi), np.sin(phi)], axis=1)
    orient = np.einsum("ij,ij->i", l_bar, pre.b_hat) >= pre.orient_threshold
    height = env.heights.ravel() >= pre.v_hat
    return orient & height & pre.valid


@dataclasses.dataclass
class ZoneDecision:
    in_zone: bool
    degenerate: bool = False
    orientation_ok: bool = False
    ratio_ok: bool = False
    height_ok: bool = False

    def __bool__(self) -> bool:
        return self.in_zone


def in_reflective_zone_full(link: Link, cell, env: EnvironmentMap,
                            sweep_samples: int = 257) -> ZoneDecision:
    """Brute-force reflective-zone oracle.

    Checks, through routes independent of the precomputed test:
      * orientation: a specular reflection point for the cell's actual normal
        exists on the board segment between the two endpoints, found by
        sweeping the specular-normal field along the segment;
      * scale ratio: the RX -> mirror-TX line meets the board plane with a
        scale factor in [0, 1] (front-side condition);
      * height: the obstacle is at least as tall as the bounce altitude,
        obtained by mirroring the TX across the nominal-normal plane and
        interpolating the 3D segment altitude over the cell center.
    """
    grid = env.grid
    c = grid.cell_center(*cell)
    phi = env.normal_angles[tuple(cell)]
    l_bar = np.array([np.cos(phi), np.sin(phi)])

    vt = link.tx_ground - c
    vr = link.rx_ground - c
    nt, nr = np.linalg.norm(vt), np.linalg.norm(vr)
    if nt < _EPS or nr < _EPS:
        return ZoneDecision(False, degenerate=True)
    n_nom = vt / nt + vr / nr
    nn = np.linalg.norm(n_nom)
    if nn < 1e-9:
        return ZoneDecision(False, degenerate=True)
    n_hat = n_nom / nn
    t_hat = np.array([-n_hat[1], n_hat[0]])
    half = grid.spacing_d / 2.0
    e1 = c + half * t_hat
    e2 = c - half * t_hat

    def specular_normal(x):
        wt = link.tx_ground - x
        wr = link.rx_ground - x
        at, ar = np.linalg.norm(wt), np.linalg.norm(wr)
        if at < _EPS or ar < _EPS:
            return None
        return wt / at + wr / ar

    def cross_with_l(x):
        b = specular_normal(x)
        if b is None:
            return None
        return b[0] * l_bar[1] - b[1] * l_bar[0]

    ts = np.linspace(0.0, 1.0, sweep_samples)
    vals = []
    for t in ts:
        s = cross_with_l(e1 + t * (e2 - e1))
        if s is None:
            return ZoneDecision(False, degenerate=True)
        vals.append(s)
    vals = np.asarray(vals)

    root_t = None
    for i in range(len(ts) - 1):
        if vals[i] == 0.0:
            root_t = ts[i]
            break
        if vals[i] * vals[i + 1] < 0.0:
            lo, hi = ts[i], ts[i + 1]
            flo = vals[i]
            for _ in range(80):
                mid = 0.5 * (lo + hi)
                fm = cross_with_l(e1 + mid * (e2 - e1))
                if fm == 0.0:
                    break
                if flo * fm < 0.0:
                    hi = mid
                else:
                    lo, flo = mid, fm
            root_t = 0.5 * (lo + hi)
            break
    if root_t is None and vals[-1] == 0.0:
        root_t = ts[-1]

    orientation_ok = False
    bounce = None
    if root_t is not None:
        bounce = e1 + root_t * (e2 - e1)
        b_root = specular_normal(bounce)
        orientation_ok = b_root is not None and float(np.dot(b_root, l_bar)) > 0.0

    # scale-ratio condition: mirror the TX across the vertical plane with
    # normal l_bar through the bounce point (falling back to the cell center
    # when no bounce exists) and require the RX -> mirror-TX line to meet the
    # plane with a scale factor in [0, 1].
    anchor = bounce if bounce is not None else c
    p_tm = link.tx.copy()
    p_tm[:2] = link.tx_ground - 2.0 * np.dot(link.tx_ground - anchor, l_bar) * l_bar
    denom = np.dot(l_bar, p_tm[:2] - link.rx_ground)
    if abs(denom) < _EPS:
        return ZoneDecision(False, degenerate=True)
    ratio = float(np.dot(l_bar, anchor - link.rx_ground) / denom)
    ratio_ok = 0.0 <= ratio <= 1.0

    # height via the nominal mirror: the mirrored TX is collinear with the
    # cell center and the RX on the ground, so plain segment interpolation
    # recovers the bounce altitude.
    phi_nom = float(np.arctan2(n_hat[1], n_hat[0]))
    p_tm = mirror_tx(link.tx, cell, phi_nom, grid)
    d_r = np.linalg.norm(link.rx_ground - c)
    d_m = np.linalg.norm(p_tm[:2] - c)
    if d_r + d_m < _EPS:
        return ZoneDecision(False, degenerate=True)
    bounce_z = link.rx_height + (p_tm[2] - link.rx_height) * d_r / (d_r + d_m)
    height_ok = bool(bounce_z <= env.heights[tuple(cell)])

    return ZoneDecision(
        in_zone=bool(orientation_ok and ratio_ok and height_ok),
        orientation_ok=orientation_ok,
        ratio_ok=ratio_ok,
        height_ok=height_ok,
    )


def lemma1_angle_check(b1, b2, l_bar, tol: float = 1e-9) -> bool:
    """Angle-sum identity: l_bar lies in the cone spanned by b1 and b2."""
    total = angle_between(b1, l_bar) + angle_between(b2, l_bar)
    return bool(abs(total - angle_between(b1, b2)) <= tol)
