"""Target-pose generation and singularity-check tests."""

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.spatial.transform import Rotation

from calibguide.geometry import IntrinsicParams, distortion_magnitude_map
from calibguide.poses import (
    MapExhaustedError,
    PoseConfig,
    TargetGroup,
    VisitedMask,
    _pose_from_rotation,
    check_singularities,
    distortion_target,
    init_targets,
    pinhole_target,
    subdivision_fraction,
)

IMAGE_SIZE = (1280, 720)


def board_normal_angle_deg(pose):
    """Angle between the board normal and the optical axis."""
    n = pose.rotation_matrix()[:, 2]
    return np.degrees(np.arccos(abs(n[2])))


class TestSubdivisionFraction:
    def test_first_four_values(self):
        assert [subdivision_fraction(i) for i in range(4)] == [0.25, 0.75, 0.125, 0.375]

    def test_depth_three_completion(self):
        assert subdivision_fraction(4) == 0.625
        assert subdivision_fraction(5) == 0.875

    def test_first_depth_four_value(self):
        assert subdivision_fraction(6) == 0.0625

    def test_negative_step_rejected(self):
        with pytest.raises(ValueError):
            subdivision_fraction(-1)

    @given(st.integers(0, 500), st.integers(0, 500))
    def test_injective(self, a, b):
        if a != b:
            assert subdivision_fraction(a) != subdivision_fraction(b)

    def test_dense_coverage(self):
        """Values fill (0, 1) increasingly finely as the sequence advances."""
        values = sorted(subdivision_fraction(i) for i in range(62))
        gaps = np.diff([0.0] + values + [1.0])
        assert gaps.max() <= 1.0 / 16


class TestPinholeTarget:
    def test_first_fy_target_geometry(self, board, pinhole_params):
        target = pinhole_target(1, 0, board, pinhole_params, IMAGE_SIZE)
        assert target.group is TargetGroup.PINHOLE
        assert target.targeted_parameter == 1
        # lerp(-70, 70) at fraction 0.25 = -35 degrees about x
        assert np.isclose(board_normal_angle_deg(target.pose), 35.0, atol=1e-6)

    def test_overlay_inside_image(self, board, pinhole_params):
        for param in range(4):
            for step in range(6):
                target = pinhole_target(param, step, board, pinhole_params, IMAGE_SIZE)
                poly = target.overlay_polygon
                assert (poly[:, 0] >= 0).all() and (poly[:, 0] <= IMAGE_SIZE[0]).all()
                assert (poly[:, 1] >= 0).all() and (poly[:, 1] <= IMAGE_SIZE[1]).all()

    def test_principal_point_shift(self, board, pinhole_params):
        """The cx target's overlay sits 5% of the width right of its
        unshifted counterpart."""
        cfg = PoseConfig()
        target = pinhole_target(2, 0, board, pinhole_params, IMAGE_SIZE, cfg)
        tz = (target.pose.rotation_matrix() @ board.center() + target.pose.tvec)[2]
        shift = cfg.principal_shift_fraction * IMAGE_SIZE[0] * tz / pinhole_params.fx
        unshifted = _pose_from_rotation(
            target.pose.rotation_matrix(),
            board,
            target.pose.rotation_matrix() @ board.center()
            + target.pose.tvec
            - np.array([shift, 0.0, 0.0]),
        )
        from calibguide.poses import _overlay_polygon

        base_poly = _overlay_polygon(unshifted, board, pinhole_params)
        dx = target.overlay_polygon[:, 0].mean() - base_poly[:, 0].mean()
        assert np.isclose(dx, 64.0, atol=2.0)

    def test_passes_singularity_checks(self, board, pinhole_params):
        prior = []
        for step in range(8):
            for param in range(4):
                target = pinhole_target(param, step, board, pinhole_params, IMAGE_SIZE)
                report = check_singularities(target.pose, prior, board, pinhole_params)
                assert not report.any_violation
                prior.append(target.pose)

    def test_rejects_distortion_parameter_index(self, board, pinhole_params):
        with pytest.raises(ValueError):
            pinhole_target(4, 0, board, pinhole_params, IMAGE_SIZE)


class TestDistortionTarget:
    def test_barrel_peak_in_corner(self, board, pinhole_params):
        params = IntrinsicParams(1000, 1000, 640, 360, k1=0.08)
        dist_map = distortion_magnitude_map(params, *IMAGE_SIZE)
        visited = VisitedMask.empty_for(dist_map)
        target, new_visited = distortion_target(
            dist_map, visited, board, params, IMAGE_SIZE
        )
        assert target.group is TargetGroup.DISTORTION
        rows, cols = np.nonzero(new_visited.grid)
        touches_border = (
            rows.min() == 0
            or cols.min() == 0
            or rows.max() == dist_map.grid_shape[0] - 1
            or cols.max() == dist_map.grid_shape[1] - 1
        )
        assert touches_border

    def test_successive_regions_disjoint(self, board, pinhole_params):
        params = IntrinsicParams(1000, 1000, 640, 360, k1=0.08, p1=0.003)
        dist_map = distortion_magnitude_map(params, *IMAGE_SIZE)
        visited = VisitedMask.empty_for(dist_map)
        _, v1 = distortion_target(dist_map, visited, board, params, IMAGE_SIZE)
        _, v2 = distortion_target(dist_map, v1, board, params, IMAGE_SIZE)
        second_region = v2.grid & ~v1.grid
        assert second_region.any()
        assert not (second_region & v1.grid).any()
        # the union only grows
        assert (v2.grid | v1.grid).sum() == v2.grid.sum()

    def test_zero_map_exhausts_after_one_call(self, board, pinhole_params):
        dist_map = distortion_magnitude_map(pinhole_params, *IMAGE_SIZE)
        visited = VisitedMask.empty_for(dist_map)
        _, v1 = distortion_target(dist_map, visited, board, pinhole_params, IMAGE_SIZE)
        assert v1.all_visited
        with pytest.raises(MapExhaustedError):
            distortion_target(dist_map, v1, board, pinhole_params, IMAGE_SIZE)

    def test_fronto_parallel_width_fraction(self, board, pinhole_params):
        params = IntrinsicParams(1000, 1000, 640, 360, k1=0.08)
        dist_map = distortion_magnitude_map(params, *IMAGE_SIZE)
        visited = VisitedMask.empty_for(dist_map)
        target, _ = distortion_target(dist_map, visited, board, params, IMAGE_SIZE)
        assert np.allclose(target.pose.rvec, 0.0)
        poly = target.overlay_polygon
        width = poly[1, 0] - poly[0, 0]
        assert np.isclose(width, 0.33 * IMAGE_SIZE[0], rtol=0.05)


class TestInitTargets:
    def test_first_pose_tilt(self, board, pinhole_params):
        targets = init_targets(board, IMAGE_SIZE, pinhole_params)
        assert len(targets) == 2
        assert np.isclose(board_normal_angle_deg(targets[0].pose), 45.0, atol=1e-6)

    def test_second_pose_covers_view(self, board, pinhole_params):
        from calibguide.session import polygon_intersection_area

        targets = init_targets(board, IMAGE_SIZE, pinhole_params)
        pose2 = targets[1].pose
        assert np.allclose(pose2.rvec, 0.0)
        w, h = IMAGE_SIZE
        image_rect = np.array([[0, 0], [w, 0], [w, h], [0, h]], dtype=float)
        covered = polygon_intersection_area(
            np.asarray(targets[1].overlay_polygon, dtype=float), image_rect
        )
        assert covered >= 0.9 * w * h

    def test_pair_satisfies_reflection_constraint(self, board, pinhole_params):
        targets = init_targets(board, IMAGE_SIZE, pinhole_params)
        report = check_singularities(
            targets[0].pose, [targets[1].pose], board, pinhole_params
        )
        assert not report.reflection_violation


class TestCheckSingularities:
    def test_fronto_parallel_flagged(self, board, pinhole_params):
        pose = _pose_from_rotation(np.eye(3), board, np.array([0.0, 0.0, 15.0]))
        report = check_singularities(pose, [], board, pinhole_params)
        assert report.parallel_to_image_plane

    def test_unrotated_tilt_is_axis_aligned(self, board, pinhole_params):
        R = Rotation.from_euler("x", 45, degrees=True).as_matrix()
        pose = _pose_from_rotation(R, board, np.array([0.0, 0.0, 15.0]))
        report = check_singularities(pose, [], board, pinhole_params)
        assert report.axis_aligned

    def test_mirror_tilt_violates_reflection(self, board, pinhole_params):
        R_pos = Rotation.from_euler("x", 45, degrees=True).as_matrix()
        R_neg = Rotation.from_euler("x", -45, degrees=True).as_matrix()
        pose_pos = _pose_from_rotation(R_pos, board, np.array([0.0, 0.0, 15.0]))
        pose_neg = _pose_from_rotation(R_neg, board, np.array([0.0, 0.0, 15.0]))
        report = check_singularities(pose_neg, [pose_pos], board, pinhole_params)
        assert report.reflection_violation

    def test_serialization(self, board, pinhole_params):
        target = pinhole_target(0, 0, board, pinhole_params, IMAGE_SIZE)
        payload = target.to_dict()
        assert payload["group"] == "pinhole"
        assert payload["targeted_parameter"] == "fx"
        assert len(payload["pose"]) == 6
        assert np.asarray(payload["overlay_polygon"]).shape == (4, 2)
