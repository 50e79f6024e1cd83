import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from searchplan.geometry import (
    Cuboid,
    FaceRect,
    FaceSpec,
    box_faces,
    contains,
    decompose_face,
    footprint_side,
    generate_coverage_cuboids,
    generate_waypoint,
)

FOV_60 = math.radians(60.0)


def unit_cube():
    return Cuboid.from_center_half_extents([0.0, 0.0, 0.0], [0.5, 0.5, 0.5])


class TestContains:
    def test_center_of_box(self):
        assert contains(unit_cube(), [0.0, 0.0, 0.0])

    def test_outside_along_one_axis(self):
        assert not contains(unit_cube(), [2.0, 0.0, 0.0])

    def test_sixty_cube_all_inequalities_by_hand(self):
        # 60x60x60 box centered at (30,30,30): rows are +-x<=60/0, +-y, +-z.
        box = Cuboid.from_center_half_extents([30.0, 30.0, 30.0], [30.0, 30.0, 30.0])
        point = np.array([30.0, 30.0, 61.0])
        residuals = box.a_rows @ point - box.b
        # Five inequalities hold, the +z one fails by exactly 1 m.
        assert sorted(np.round(residuals, 9))[-1] == pytest.approx(1.0)
        assert not contains(box, point)
        assert contains(box, [30.0, 30.0, 60.0])  # boundary counts as inside

    def test_boundary_slack(self):
        assert contains(unit_cube(), [0.5 + 1e-10, 0.0, 0.0])
        assert not contains(unit_cube(), [0.5 + 1e-8, 0.0, 0.0])

    @settings(max_examples=50, deadline=None)
    @given(
        st.tuples(*[st.floats(-50, 50) for _ in range(3)]),
        st.tuples(*[st.floats(-200, 200) for _ in range(3)]),
    )
    def test_membership_invariant_under_translation(self, point, shift):
        box = Cuboid.from_center_half_extents([1.0, -2.0, 3.0], [4.0, 5.0, 6.0])
        p = np.array(point)
        d = np.array(shift)
        assert contains(box, p) == contains(box.translate(d), p + d)


class TestCuboidConstruction:
    def test_rows_are_normalized(self):
        cub = Cuboid(2.0 * np.vstack([np.eye(3), -np.eye(3)]), 2.0 * np.array([1.0] * 6))
        assert np.allclose(np.linalg.norm(cub.a_rows, axis=1), 1.0)
        assert np.allclose(cub.b, 1.0)

    def test_unbounded_system_rejected(self):
        rows = np.vstack([np.eye(3), [-1.0, 0.0, 0.0], [0.0, -1.0, 0.0]])
        with pytest.raises(ValueError, match="unbounded"):
            Cuboid(rows, np.ones(5))

    def test_center_membership_and_double_extent_exclusion(self):
        center = np.array([3.0, -1.0, 7.0])
        half = np.array([2.0, 4.0, 1.5])
        box = Cuboid.from_center_half_extents(center, half)
        assert contains(box, center)
        for axis in range(3):
            offset = np.zeros(3)
            offset[axis] = 2.0 * half[axis]
            assert not contains(box, center + offset)

    def test_box_bounds_roundtrip(self):
        box = Cuboid.from_center_half_extents([1.0, 2.0, 3.0], [0.5, 1.5, 2.5])
        lo, hi = box.box_bounds()
        assert np.allclose(lo, [0.5, 0.5, 0.5])
        assert np.allclose(hi, [1.5, 3.5, 5.5])
        assert np.allclose(box.centroid(), [1.0, 2.0, 3.0])

    def test_non_axis_aligned_box_bounds_rejected(self):
        rows = np.vstack([
            [1.0, 1.0, 0.0], [-1.0, -1.0, 0.0], [1.0, -1.0, 0.0], [-1.0, 1.0, 0.0],
            [0.0, 0.0, 1.0], [0.0, 0.0, -1.0],
        ])
        diamond = Cuboid(rows, np.ones(6))
        with pytest.raises(ValueError, match="axis-aligned"):
            diamond.box_bounds()


class TestFootprint:
    def test_zero_distance(self):
        assert footprint_side(0.0, 1.0) == 0.0

    def test_direct_evaluation_27m(self):
        expected = 2.0 * 27.0 * math.tan(FOV_60 / 2.0)
        assert footprint_side(27.0, FOV_60) == pytest.approx(expected, abs=1e-12)
        assert round(footprint_side(27.0, FOV_60), 3) == 31.177

    def test_direct_evaluation_53m(self):
        expected = 2.0 * 53.0 * math.tan(FOV_60 / 2.0)
        assert footprint_side(53.0, FOV_60) == pytest.approx(expected, abs=1e-12)
        assert round(footprint_side(53.0, FOV_60), 3) == 61.199

    @pytest.mark.parametrize("angle", [0.0, -0.1, math.pi, 4.0])
    def test_rejects_bad_fov(self, angle):
        with pytest.raises(ValueError):
            footprint_side(1.0, angle)

    def test_rejects_negative_distance(self):
        with pytest.raises(ValueError):
            footprint_side(-1.0, 1.0)


def _face(length_u=60.0, length_v=60.0):
    return FaceSpec(
        "obj", 1, np.array([1.0, 0.0, 0.0]),
        FaceRect(np.zeros(3), [0.0, length_u, 0.0], [0.0, 0.0, length_v]),
    )


class TestDecomposeFace:
    def test_sixty_by_sixty_with_27m_footprint(self):
        cells = decompose_face(_face(), footprint_side(27.0, FOV_60))
        assert len(cells) == 4
        for cell in cells:
            assert cell.len_u == pytest.approx(30.0)
            assert cell.len_v == pytest.approx(30.0)

    def test_sixty_by_sixty_with_53m_footprint(self):
        cells = decompose_face(_face(), footprint_side(53.0, FOV_60))
        assert len(cells) == 1

    def test_exact_fit_single_cell(self):
        cells = decompose_face(_face(10.0, 10.0), 10.0)
        assert len(cells) == 1
        assert cells[0].len_u == pytest.approx(10.0)
        assert cells[0].len_v == pytest.approx(10.0)

    def test_cells_never_exceed_r(self):
        cells = decompose_face(_face(61.0, 45.0), 10.0)
        assert len(cells) == 7 * 5
        assert all(c.len_u <= 10.0 + 1e-12 and c.len_v <= 10.0 + 1e-12 for c in cells)

    @settings(max_examples=60, deadline=None)
    @given(st.floats(0.5, 120.0), st.floats(0.5, 120.0), st.floats(0.2, 80.0))
    def test_cells_tile_face_area_exactly(self, lu, lv, r):
        face = _face(lu, lv)
        cells = decompose_face(face, r)
        total = sum(c.area for c in cells)
        assert total == pytest.approx(face.rectangle.area, rel=1e-9)
        assert len(cells) == math.ceil(lu / r - 1e-9) * math.ceil(lv / r - 1e-9)

    def test_cells_do_not_overlap(self):
        cells = decompose_face(_face(60.0, 60.0), 31.0)
        centers = [tuple(np.round(c.center, 9)) for c in cells]
        assert len(set(centers)) == len(cells)


class TestCoverageCuboids:
    def test_sixteen_for_60_cube_at_27m(self):
        obj = Cuboid.from_center_half_extents([30.0, 30.0, 30.0], [30.0] * 3)
        cubs = generate_coverage_cuboids(obj, [1, 2, 3, 4], 27.0, FOV_60, 5.4, "obj")
        assert len(cubs) == 16
        per_face = {f: sum(1 for c in cubs if c.face_index == f) for f in (1, 2, 3, 4)}
        assert per_face == {1: 4, 2: 4, 3: 4, 4: 4}

    def test_four_for_60_cube_at_53m(self):
        obj = Cuboid.from_center_half_extents([30.0, 30.0, 30.0], [30.0] * 3)
        cubs = generate_coverage_cuboids(obj, [1, 2, 3, 4], 53.0, FOV_60, 10.6, "obj")
        assert len(cubs) == 4

    def test_single_cell_above_top_face(self):
        obj = Cuboid.from_center_half_extents([0.0, 0.0, 5.0], [5.0, 5.0, 5.0])
        cubs = generate_coverage_cuboids(obj, [5], 20.0, FOV_60, 4.0, "obj")
        assert len(cubs) == 1
        assert np.allclose(cubs[0].centroid, [0.0, 0.0, 30.0])

    def test_count_matches_decomposition_formula(self):
        obj = Cuboid.from_center_half_extents([0.0, 0.0, 0.0], [20.0, 14.0, 9.0])
        d, depth = 6.0, 1.2
        r = footprint_side(d, FOV_60)
        faces = box_faces(obj, "obj")
        expected = 0
        for f in (1, 2, 3, 4, 5, 6):
            rect = faces[f].rectangle
            expected += math.ceil(rect.len_u / r - 1e-9) * math.ceil(rect.len_v / r - 1e-9)
        cubs = generate_coverage_cuboids(obj, [1, 2, 3, 4, 5, 6], d, FOV_60, depth, "obj")
        assert len(cubs) == expected

    def test_standoff_and_separation_from_object(self):
        obj = Cuboid.from_center_half_extents([30.0, 30.0, 30.0], [30.0] * 3)
        d, depth = 27.0, 5.4
        for cc in generate_coverage_cuboids(obj, [1, 2, 3, 4], d, FOV_60, depth, "obj"):
            normal = cc.cuboid.a_rows[0] * 0.0  # placeholder, recompute below
            face_normal = {1: [1, 0, 0], 2: [-1, 0, 0], 3: [0, 1, 0], 4: [0, -1, 0]}[cc.face_index]
            face_normal = np.array(face_normal, dtype=float)
            # Signed distance of the coverage box's span from the face plane.
            plane_point = cc.cell_rect.origin
            lo, hi = cc.cuboid.box_bounds()
            corners = [np.array([x, y, z]) for x in (lo[0], hi[0])
                       for y in (lo[1], hi[1]) for z in (lo[2], hi[2])]
            dists = [float(face_normal @ (corner - plane_point)) for corner in corners]
            assert min(dists) == pytest.approx(d - depth / 2.0, abs=1e-9)
            assert max(dists) == pytest.approx(d + depth / 2.0, abs=1e-9)
            # Never intersects the parent object.
            assert not contains(obj, cc.centroid)

    def test_footprint_large_enough_everywhere_beyond_standoff(self):
        # At any interior point whose face distance is >= d, the footprint
        # spans the full cell, so a center-aligned camera covers it.
        obj = Cuboid.from_center_half_extents([30.0, 30.0, 30.0], [30.0] * 3)
        d, depth = 27.0, 5.4
        rng = np.random.default_rng(7)
        for cc in generate_coverage_cuboids(obj, [1, 2, 3, 4], d, FOV_60, depth, "obj"):
            lo, hi = cc.cuboid.box_bounds()
            cell = max(cc.cell_rect.len_u, cc.cell_rect.len_v)
            normal_axis = int(np.argmax(np.abs(np.array(
                {1: [1, 0, 0], 2: [-1, 0, 0], 3: [0, 1, 0], 4: [0, -1, 0]}[cc.face_index]))))
            plane = cc.cell_rect.origin[normal_axis]
            for _ in range(20):
                p = rng.uniform(lo, hi)
                dist = abs(p[normal_axis] - plane)
                if dist >= d:
                    assert footprint_side(dist, FOV_60) >= cell - 1e-9

    def test_intersecting_depth_rejected(self):
        obj = unit_cube()
        with pytest.raises(ValueError, match="intersect"):
            generate_coverage_cuboids(obj, [1], 1.0, FOV_60, 2.5, "obj")

    def test_empty_faces_rejected(self):
        with pytest.raises(ValueError):
            generate_coverage_cuboids(unit_cube(), [], 1.0, FOV_60, 0.5, "obj")


class TestWaypoint:
    def test_60_cube_clearance_10(self):
        obj = Cuboid.from_center_half_extents([30.0, 30.0, 30.0], [30.0] * 3)
        wp = generate_waypoint(obj, 10.0, "obj")
        assert np.allclose(wp.position, [30.0, 30.0, 70.0])

    def test_unit_cube_clearance_half(self):
        obj = Cuboid.from_center_half_extents([0.5, 0.5, 0.5], [0.5] * 3)
        wp = generate_waypoint(obj, 0.5)
        assert np.allclose(wp.position, [0.5, 0.5, 1.5])

    def test_clearance_monotonicity(self):
        obj = Cuboid.from_center_half_extents([3.0, 4.0, 5.0], [1.0, 2.0, 3.0])
        w1 = generate_waypoint(obj, 2.0)
        w2 = generate_waypoint(obj, 5.0)
        assert np.allclose(w1.position[:2], w2.position[:2])
        assert w2.position[2] - w1.position[2] == pytest.approx(3.0)

    def test_rejects_nonpositive_clearance(self):
        with pytest.raises(ValueError):
            generate_waypoint(unit_cube(), 0.0)


class TestFaceSpecs:
    def test_box_faces_have_outward_normals_and_orthogonal_edges(self):
        obj = Cuboid.from_center_half_extents([1.0, 2.0, 3.0], [1.0, 2.0, 3.0])
        faces = box_faces(obj, "obj")
        assert set(faces) == {1, 2, 3, 4, 5, 6}
        for face in faces.values():
            r = face.rectangle
            assert abs(float(r.edge_u @ r.edge_v)) < 1e-12
            assert abs(float(face.outward_normal @ r.edge_u)) < 1e-12
            assert abs(float(face.outward_normal @ r.edge_v)) < 1e-12
            # Rectangle centroid plus a nudge along the normal leaves the box.
            outside = r.center + 1e-3 * face.outward_normal
            assert not contains(obj, outside, slack=1e-12)
