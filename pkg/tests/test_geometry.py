"""Tests for link/obstacle geometry: traversal, mirrors, reflective zones."""

import numpy as np
import pytest

from beamenv.geometry import (
    ReflectionPrecompute,
    angle_between,
    boundary_normals,
    cells_on_segment,
    height_threshold,
    in_reflective_zone_fast,
    in_reflective_zone_full,
    is_los,
    lemma1_angle_check,
    mirror_tx,
    reflection_point,
    segment_height_at_cell,
)
from beamenv.grid import (
    DegenerateGeometryError,
    EnvironmentMap,
    GridSpec,
    Link,
    OutOfBoundsError,
)

GRID10 = GridSpec(10, 10, 1.0)
GRID20 = GridSpec(20, 20, 1.0)


def dense_sampling_cells(link, grid, step_frac=0.01):
    """Independent supercover oracle: walk the segment at step D*step_frac."""
    a = link.tx_ground
    b = link.rx_ground
    length = np.linalg.norm(b - a)
    n = max(int(np.ceil(length / (grid.spacing_d * step_frac))), 1)
    seen = set()
    for t in np.linspace(0.0, 1.0, n + 1):
        p = a + t * (b - a)
        fx = (p[0] - grid.origin[0]) / grid.spacing_d
        fy = (p[1] - grid.origin[1]) / grid.spacing_d
        ix = min(max(int(np.floor(fx)), 0), grid.m1 - 1)
        iy = min(max(int(np.floor(fy)), 0), grid.m2 - 1)
        seen.add((ix, iy))
    return seen


def clipping_oracle_cells(link, grid):
    """Exact supercover oracle: clip the segment against every cell square.

    A cell is traversed iff the segment's parameter interval inside the
    half-open square [x0, x1) x [y0, y1) has positive length (or the segment
    starts/ends strictly inside it). Implemented by slab clipping, entirely
    independently of the crossing-midpoint traversal under test.
    """
    a = link.tx_ground
    b = link.rx_ground
    d = b - a
    seen = set()
    for ix in range(grid.m1):
        for iy in range(grid.m2):
            lo = np.array(grid.origin) + np.array([ix, iy]) * grid.spacing_d
            hi = lo + grid.spacing_d
            t0, t1 = 0.0, 1.0
            ok = True
            for k in range(2):
                if d[k] == 0.0:
                    if not (lo[k] <= a[k] < hi[k]):
                        ok = False
                        break
                else:
                    ta = (lo[k] - a[k]) / d[k]
                    tb = (hi[k] - a[k]) / d[k]
                    if d[k] > 0:
                        t0, t1 = max(t0, ta), min(t1, tb)
                    else:
                        # entering from the open upper face, leaving at lower
                        t0, t1 = max(t0, tb), min(t1, ta)
            if ok and t1 - t0 > 1e-13:
                seen.add((ix, iy))
    # half-open ownership: make sure the exact endpoints' cells are present
    for p in (a, b):
        seen.add(grid.world_to_cell(p))
    return seen


class TestCellsOnSegment:
    def test_axis_aligned_row(self):
        link = Link((0.5, 0.5, 10.0), (5.5, 0.5, 2.0))
        cells = cells_on_segment(link, GRID10)
        assert cells == [(i, 0) for i in range(6)]

    def test_degenerate_single_cell(self):
        link = Link((3.2, 3.3, 10.0), (3.7, 3.6, 2.0))
        assert cells_on_segment(link, GRID10) == [(3, 3)]

    def test_diagonal_matches_dense_oracle(self):
        link = Link((0.5, 0.5, 10.0), (3.5, 3.5, 2.0))
        assert set(cells_on_segment(link, GRID10)) == dense_sampling_cells(link, GRID10)

    def test_random_segments_match_clipping_oracle(self):
        rng = np.random.default_rng(7)
        for _ in range(300):
            a = rng.uniform(0.05, 19.95, size=2)
            b = rng.uniform(0.05, 19.95, size=2)
            if np.linalg.norm(a - b) < 1e-6:
                continue
            link = Link((*a, 30.0), (*b, 2.0))
            got = set(cells_on_segment(link, GRID20))
            want = clipping_oracle_cells(link, GRID20)
            assert got == want, (a, b)

    def test_out_of_bounds_raises(self):
        link = Link((-1.0, 0.5, 10.0), (5.5, 0.5, 2.0))
        with pytest.raises(OutOfBoundsError):
            cells_on_segment(link, GRID10)

    def test_endpoint_exclusion_flag(self):
        link = Link((0.5, 0.5, 10.0), (5.5, 0.5, 2.0))
        cells = cells_on_segment(link, GRID10, endpoint_exclusion=True)
        assert cells == [(i, 0) for i in range(1, 5)]

    def test_ordering_follows_segment(self):
        link = Link((9.5, 9.5, 10.0), (0.5, 0.5, 2.0))
        cells = cells_on_segment(link, GRID10)
        assert cells[0] == (9, 9) and cells[-1] == (0, 0)


class TestSegmentHeight:
    GRID = GridSpec(21, 3, 1.0)

    def _link(self):
        return Link((0.0, 0.5, 50.0), (20.0, 0.5, 2.0))

    def test_midpoint(self):
        # cell center x=10.5 -> 50 - 48*10.5/20
        z = segment_height_at_cell(self._link(), (10, 0), self.GRID)
        assert z == pytest.approx(50.0 - 48.0 * 10.5 / 20.0)

    def test_rx_end(self):
        z = segment_height_at_cell(self._link(), (19, 0), self.GRID)
        assert z == pytest.approx(50.0 - 48.0 * 19.5 / 20.0)

    def test_quarter(self):
        z = segment_height_at_cell(self._link(), (4, 0), self.GRID)
        assert z == pytest.approx(50.0 - 48.0 * 4.5 / 20.0)

    def test_cell_off_segment_raises(self):
        with pytest.raises(DegenerateGeometryError):
            segment_height_at_cell(self._link(), (10, 2), self.GRID)


class TestIsLos:
    def test_empty_environment(self):
        env = EnvironmentMap.flat(GRID10)
        assert is_los(Link((0.5, 0.5, 10.0), (9.5, 0.5, 2.0)), env)

    def test_single_blocking_cell(self):
        env = EnvironmentMap.flat(GridSpec(21, 3, 1.0))
        link = Link((0.0, 0.5, 50.0), (20.0, 0.5, 2.0))
        z_mid = segment_height_at_cell(link, (10, 0), env.grid)
        env.heights[10, 0] = z_mid + 1.0
        assert not is_los(link, env)
        env.heights[10, 0] = z_mid - 1.0
        assert is_los(link, env)


class TestMirrorAndReflection:
    def test_mirror_across_plane(self):
        out = mirror_tx((0.0, 3.0, 50.0), (4, 2), 0.0, GRID10)  # plane x=4.5
        np.testing.assert_allclose(out, [9.0, 3.0, 50.0])

    def test_point_on_plane_fixed(self):
        out = mirror_tx((4.5, 3.0, 50.0), (4, 2), 0.0, GRID10)
        np.testing.assert_allclose(out, [4.5, 3.0, 50.0], atol=1e-12)

    def test_involution(self):
        rng = np.random.default_rng(3)
        for _ in range(200):
            p = rng.uniform(0, 10, size=3)
            cell = tuple(rng.integers(0, 10, size=2))
            phi = rng.uniform(0, 2 * np.pi)
            once = mirror_tx(p, cell, phi, GRID10)
            twice = mirror_tx(once, cell, phi, GRID10)
            np.testing.assert_allclose(twice, p, atol=1e-12)

    def test_reflection_point_symmetric_case(self):
        # board plane x=10.5 (cell (10,2) of a 21x5 grid), normal along +x
        grid = GridSpec(21, 6, 1.0)
        env = EnvironmentMap.flat(grid)
        env.normal_angles[10, 2] = np.pi  # normal (-1, 0): plane x=10.5
        link = Link((0.0, 2.0, 50.0), (0.0, 3.0, 2.0))
        o = reflection_point(link, (10, 2), np.pi, env)
        np.testing.assert_allclose(o, [10.5, 2.5, 26.0], atol=1e-9)

    def test_reflection_point_on_plane(self):
        rng = np.random.default_rng(11)
        grid = GRID20
        env = EnvironmentMap.flat(grid)
        for _ in range(200):
            link = Link(tuple(rng.uniform(1, 19, 3)), tuple(rng.uniform(1, 19, 3)))
            cell = tuple(rng.integers(0, 20, size=2))
            phi = rng.uniform(0, 2 * np.pi)
            try:
                o = reflection_point(link, cell, phi, env)
            except DegenerateGeometryError:
                continue
            n = np.array([np.cos(phi), np.sin(phi)])
            c = grid.cell_center(*cell)
            assert abs(np.dot(n, o[:2] - c)) < 1e-9 * max(1.0, np.linalg.norm(o))

    def test_equal_angles_at_reflection_point(self):
        # ground-projected incident/emergent directions obey the specular law
        rng = np.random.default_rng(13)
        grid = GRID20
        env = EnvironmentMap.flat(grid)
        checked = 0
        while checked < 100:
            tx = np.append(rng.uniform(1, 19, 2), rng.uniform(5, 40))
            rx = np.append(rng.uniform(1, 19, 2), 2.0)
            cell = tuple(rng.integers(0, 20, size=2))
            phi = rng.uniform(0, 2 * np.pi)
            link = Link(tuple(tx), tuple(rx))
            try:
                o = reflection_point(link, cell, phi, env)
            except DegenerateGeometryError:
                continue
            n = np.array([np.cos(phi), np.sin(phi)])
            vi = tx[:2] - o[:2]
            ve = rx[:2] - o[:2]
            if np.linalg.norm(vi) < 1e-6 or np.linalg.norm(ve) < 1e-6:
                continue
            # both endpoints must sit on the same (front) side for a bounce
            if np.dot(vi, n) <= 1e-9 or np.dot(ve, n) <= 1e-9:
                continue
            assert abs(angle_between(vi, n) - angle_between(ve, n)) < 1e-9
            checked += 1


class TestHeightThreshold:
    def test_equidistant(self):
        grid = GridSpec(11, 11, 1.0)
        link = Link((0.5, 5.5, 50.0), (10.5, 5.5, 2.0))
        assert height_threshold(link, (5, 5), grid) == pytest.approx(26.0)

    def test_rx_below_cell(self):
        grid = GridSpec(11, 11, 1.0)
        link = Link((0.5, 5.5, 50.0), (5.5, 5.5, 2.0))
        assert height_threshold(link, (5, 5), grid) == pytest.approx(2.0)

    def test_tx_above_cell(self):
        grid = GridSpec(11, 11, 1.0)
        link = Link((5.5, 5.5, 50.0), (0.5, 5.5, 2.0))
        assert height_threshold(link, (5, 5), grid) == pytest.approx(50.0)

    def test_degenerate_raises(self):
        grid = GridSpec(11, 11, 1.0)
        link = Link((5.5, 5.5, 50.0), (5.5, 5.5, 2.0))
        with pytest.raises(DegenerateGeometryError):
            height_threshold(link, (5, 5), grid)

    def test_monotone_in_tx_height(self):
        grid = GridSpec(11, 11, 1.0)
        prev = -np.inf
        for h in [5.0, 10.0, 25.0, 50.0, 80.0]:
            link = Link((0.5, 4.5, h), (10.5, 6.5, 2.0))
            cur = height_threshold(link, (5, 5), grid)
            assert cur > prev
            prev = cur

    def test_sign_matches_reflection_point_height(self):
        # threshold crossing coincides with the bounce altitude at the
        # nominal specular orientation
        rng = np.random.default_rng(5)
        grid = GRID20
        env = EnvironmentMap.flat(grid)
        checked = 0
        while checked < 200:
            tx = np.append(rng.uniform(1, 19, 2), rng.uniform(5, 60))
            rx = np.append(rng.uniform(1, 19, 2), rng.uniform(1, 3))
            cell = tuple(rng.integers(0, 20, size=2))
            link = Link(tuple(tx), tuple(rx))
            c = grid.cell_center(*cell)
            vt, vr = tx[:2] - c, rx[:2] - c
            if min(np.linalg.norm(vt), np.linalg.norm(vr)) < 0.3:
                continue
            n_nom = vt / np.linalg.norm(vt) + vr / np.linalg.norm(vr)
            if np.linalg.norm(n_nom) < 1e-3:
                continue
            phi_nom = np.arctan2(n_nom[1], n_nom[0])
            o = reflection_point(link, cell, phi_nom, env)
            v_hat = height_threshold(link, cell, grid)
            assert abs(o[2] - v_hat) < 1e-8
            checked += 1


class TestBoundaryNormals:
    GRID = GridSpec(21, 21, 1.0)

    def test_symmetric_config_mirrors(self):
        link = Link((8.5, 2.5, 30.0), (12.5, 2.5, 2.0))  # symmetric about x=10.5
        b1, b2, bh = boundary_normals(link, (10, 10), self.GRID)
        assert angle_between(b1, bh) == pytest.approx(angle_between(b2, bh), abs=1e-12)

    def test_zero_width_collapses(self):
        grid = GridSpec(2001, 2001, 0.01)
        link = Link((8.5, 2.5, 30.0), (12.5, 2.5, 2.0))
        b1, b2, bh = boundary_normals(link, (1050, 1050), grid)
        assert angle_between(b1, b2) < 2e-3

    def test_bisector_property_random(self):
        rng = np.random.default_rng(23)
        done = 0
        while done < 300:
            link = Link(
                (*rng.uniform(1, 20, 2), rng.uniform(5, 50)),
                (*rng.uniform(1, 20, 2), 2.0),
            )
            cell = tuple(rng.integers(0, 21, size=2))
            try:
                b1, b2, bh = boundary_normals(link, cell, self.GRID)
            except DegenerateGeometryError:
                continue
            assert angle_between(b1, bh) == pytest.approx(angle_between(b2, bh), abs=1e-9)
            assert np.linalg.norm(b1) == pytest.approx(1.0, abs=1e-12)
            assert np.linalg.norm(b2) == pytest.approx(1.0, abs=1e-12)
            done += 1


class TestLemma1:
    GRID = GridSpec(21, 21, 1.0)

    def _setup(self, rng):
        link = Link(
            (*rng.uniform(1, 20, 2), rng.uniform(5, 50)),
            (*rng.uniform(1, 20, 2), 2.0),
        )
        cell = tuple(rng.integers(0, 21, size=2))
        return link, cell

    def test_bisector_and_edges_inside(self):
        rng = np.random.default_rng(31)
        done = 0
        while done < 100:
            link, cell = self._setup(rng)
            try:
                b1, b2, bh = boundary_normals(link, cell, self.GRID)
            except DegenerateGeometryError:
                continue
            assert lemma1_angle_check(b1, b2, bh)
            assert lemma1_angle_check(b1, b2, b1)
            assert lemma1_angle_check(b1, b2, b2)
            done += 1

    def test_outside_cone_fails(self):
        rng = np.random.default_rng(37)
        done = 0
        while done < 100:
            link, cell = self._setup(rng)
            try:
                b1, b2, bh = boundary_normals(link, cell, self.GRID)
            except DegenerateGeometryError:
                continue
            cone = angle_between(b1, b2)
            rot = cone / 2.0 + rng.uniform(1e-6, 0.5)
            c, s = np.cos(rot), np.sin(rot)
            outside = np.array([c * bh[0] - s * bh[1], s * bh[0] + c * bh[1]])
            assert not lemma1_angle_check(b1, b2, outside)
            done += 1

    def test_zero_vector_raises(self):
        with pytest.raises(DegenerateGeometryError):
            lemma1_angle_check((1.0, 0.0), (0.0, 0.0), (1.0, 0.0))


def random_zone_samples(n, seed, grid=None):
    """Random (link, cell, height, orientation) configurations."""
    grid = grid or GridSpec(21, 21, 1.0)
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < n:
        tx = (*rng.uniform(1, 20, 2), rng.uniform(5, 60))
        rx = (*rng.uniform(1, 20, 2), rng.uniform(1, 3))
        cell = tuple(rng.integers(0, 21, size=2))
        phi = rng.uniform(0, 2 * np.pi)
        v = rng.uniform(0, 70)
        try:
            link = Link(tx, rx)
        except DegenerateGeometryError:
            continue
        out.append((link, cell, phi, v))
    return grid, out


class TestReflectiveZone:
    def test_fast_true_at_bisector(self):
        grid, samples = random_zone_samples(50, 41)
        hits = 0
        for link, cell, _, _ in samples:
            pre = ReflectionPrecompute.build(link, grid)
            m = int(grid.flat_index(*cell))
            if not pre.valid[m] or not np.isfinite(pre.v_hat[m]):
                continue
            env = EnvironmentMap.flat(grid)
            env.normal_angles[cell] = np.arctan2(pre.b_hat[m][1], pre.b_hat[m][0])
            env.heights[cell] = pre.v_hat[m] + 1.0
            assert in_reflective_zone_fast(link, cell, env, pre)
            hits += 1
        assert hits > 20

    def test_fast_false_below_height_threshold(self):
        grid, samples = random_zone_samples(50, 43)
        for link, cell, phi, _ in samples:
            pre = ReflectionPrecompute.build(link, grid)
            m = int(grid.flat_index(*cell))
            if not pre.valid[m] or not np.isfinite(pre.v_hat[m]):
                continue
            env = EnvironmentMap.flat(grid)
            env.normal_angles[cell] = phi
            env.heights[cell] = max(pre.v_hat[m] - 1.0, 0.0)
            if pre.v_hat[m] <= 0:
                continue
            assert not in_reflective_zone_fast(link, cell, env, pre)

    def test_full_height_gate(self):
        # symmetric configuration with bounce altitude 26 at the cell center
        grid = GridSpec(21, 6, 1.0)
        env = EnvironmentMap.flat(grid)
        link = Link((0.0, 2.0, 50.0), (0.0, 3.0, 2.0))
        cell = (10, 2)
        pre = ReflectionPrecompute.build(link, grid)
        m = int(grid.flat_index(*cell))
        env.normal_angles[cell] = np.arctan2(pre.b_hat[m][1], pre.b_hat[m][0])
        env.heights[cell] = 30.0
        assert in_reflective_zone_full(link, cell, env).in_zone
        env.heights[cell] = 20.0
        dec = in_reflective_zone_full(link, cell, env)
        assert not dec.in_zone and not dec.height_ok

    def test_full_orientation_gate(self):
        grid = GridSpec(21, 6, 1.0)
        env = EnvironmentMap.flat(grid)
        link = Link((0.0, 2.0, 50.0), (0.0, 3.0, 2.0))
        cell = (10, 2)
        env.heights[cell] = 40.0
        pre = ReflectionPrecompute.build(link, grid)
        m = int(grid.flat_index(*cell))
        phi_hat = np.arctan2(pre.b_hat[m][1], pre.b_hat[m][0])
        cone = angle_between(pre.b1[m], pre.b2[m])
        env.normal_angles[cell] = phi_hat + cone  # well outside the cone
        dec = in_reflective_zone_full(link, cell, env)
        assert not dec.in_zone and not dec.orientation_ok

    def test_equivalence_sweep(self):
        # Prop-1 style agreement outside the decision-margin band
        grid, samples = random_zone_samples(10_000, 47)
        checked = disagreements = 0
        for link, cell, phi, v in samples:
            pre = ReflectionPrecompute.build(link, grid)
            m = int(grid.flat_index(*cell))
            if not pre.valid[m] or not np.isfinite(pre.v_hat[m]):
                continue
            l_bar = np.array([np.cos(phi), np.sin(phi)])
            margin_o = np.dot(l_bar, pre.b_hat[m]) - pre.orient_threshold[m]
            margin_h = v - pre.v_hat[m]
            if abs(margin_o) <= 1e-6 or abs(margin_h) <= 1e-6:
                continue
            env = EnvironmentMap.flat(grid)
            env.normal_angles[cell] = phi
            env.heights[cell] = v
            fast = in_reflective_zone_fast(link, cell, env, pre)
            full = in_reflective_zone_full(link, cell, env)
            if full.degenerate:
                continue
            checked += 1
            if fast != full.in_zone:
                disagreements += 1
        assert checked > 9000
        assert disagreements == 0

    def test_lemma1_necessary_for_full(self):
        grid, samples = random_zone_samples(3000, 53)
        hits = 0
        for link, cell, phi, _ in samples:
            env = EnvironmentMap.flat(grid)
            env.normal_angles[cell] = phi
            env.heights[cell] = 100.0  # height never binds
            dec = in_reflective_zone_full(link, cell, env)
            if not dec.in_zone:
                continue
            b1, b2, _ = boundary_normals(link, cell, grid)
            assert lemma1_angle_check(b1, b2, (np.cos(phi), np.sin(phi)), tol=1e-9)
            hits += 1
        assert hits > 20
