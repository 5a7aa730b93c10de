import math

import numpy as np
import pytest

from demoscale.errors import ConfigError, ValidationError
from demoscale.keypose import (
    KeyPoseConfig,
    KeyPoseReport,
    compute_angle,
    compute_density,
    detect_key_poses,
    grasp_release_indices,
    read_report,
    write_report,
)
from demoscale.simenv import OracleProfile, oracle_demonstration, oracle_stop_indices
from demoscale.trajectory import Demonstration


def demo_from_positions(positions, grippers=None, demo_id="kp"):
    positions = np.asarray(positions, dtype=float)
    n = len(positions)
    grippers = np.ones(n, dtype=int) if grippers is None else np.asarray(grippers)
    return Demonstration(
        positions=positions,
        headings=np.zeros(n),
        joints=np.zeros((n, 3)),
        grippers=grippers,
        demo_id=demo_id,
        source="generated",
        seed=0,
    )


def straight_demo(n=60, speed=0.05):
    return demo_from_positions([[i * speed, 0.0] for i in range(n)])


class TestGraspRelease:
    def test_constant_gripper_gives_empty(self):
        assert grasp_release_indices(straight_demo()) == []

    def test_transition_targets(self):
        demo = demo_from_positions([[i, 0.0] for i in range(5)], grippers=[1, 1, 0, 0, 1])
        assert grasp_release_indices(demo) == [2, 4]

    def test_pick_demo_has_exactly_two(self, pick_demo):
        assert len(grasp_release_indices(pick_demo)) == 2


class TestComputeAngle:
    def test_straight_line_zero_everywhere(self):
        points = np.array([[i * 0.1, 0.0] for i in range(21)])
        for idx in range(5, 16):
            assert compute_angle(points, idx, 11) == pytest.approx(0.0, abs=1e-12)

    def test_right_angle_corner(self):
        # L path: along +x then along +y, corner at index 10.
        leg1 = [[i * 0.1, 0.0] for i in range(11)]
        leg2 = [[1.0, (i + 1) * 0.1] for i in range(10)]
        points = np.array(leg1 + leg2)
        assert compute_angle(points, 10, 11) == pytest.approx(math.pi / 2, abs=1e-12)

    def test_v_path_interior_120_degrees(self):
        # Interior angle 120 deg means the direction turns by 60 deg = pi/3.
        direction_in = np.array([1.0, 0.0])
        direction_out = np.array([math.cos(math.pi / 3), math.sin(math.pi / 3)])
        apex = np.array([2.0, 0.5])
        points = [apex - (10 - i) * 0.1 * direction_in for i in range(10)]
        points.append(apex)
        points += [apex + (i + 1) * 0.1 * direction_out for i in range(10)]
        assert compute_angle(np.array(points), 10, 11) == pytest.approx(math.pi / 3, abs=1e-9)

    def test_stationary_guard_returns_zero(self):
        points = np.zeros((11, 2))
        assert compute_angle(points, 5, 11) == 0.0

    def test_out_of_window_index_rejected(self):
        points = np.zeros((11, 2))
        with pytest.raises(ValidationError):
            compute_angle(points, 2, 11)


class TestComputeDensity:
    def test_identical_points_hit_epsilon_ceiling(self):
        points = np.ones((11, 2))
        assert compute_density(points, 5, 11) == pytest.approx(1e6)

    def test_uniform_triangle(self):
        # Three points at mutual distance 1: mean pairwise distance 1.
        side = np.array([[0.0, 0.0], [1.0, 0.0], [0.5, math.sqrt(3) / 2]])
        assert compute_density(side, 1, 3) == pytest.approx(1.0 / (1.0 + 1e-6))

    def test_dwell_beats_moving_segment_by_10x(self, reach_demo, reach_task, arm, oracle_profile):
        stops = oracle_stop_indices(reach_task, arm, oracle_profile)
        positions = reach_demo.positions
        dwell_score = compute_density(positions, stops[0], 11)
        moving_idx = (stops[0] + stops[1]) // 2  # mid-flight between stops
        moving_score = compute_density(positions, moving_idx, 11)
        assert dwell_score >= 10 * moving_score


class TestDetect:
    def test_straight_constant_speed_demo_empty(self):
        report = detect_key_poses(straight_demo())
        assert report.sharp_turn_indices == ()
        assert report.key_poses_indices == ()

    def test_oracle_corners_detected_within_half_window(self, reach_demo, reach_task, arm, oracle_profile):
        config = KeyPoseConfig()
        report = detect_key_poses(reach_demo, config)
        for stop in oracle_stop_indices(reach_task, arm, oracle_profile):
            assert any(
                abs(k - stop) <= config.half_window for k in report.key_poses_indices
            ), f"no key pose within half window of corner at {stop}"

    def test_fast_turn_without_dwell_excluded(self):
        # Sharp corner at full speed: angle triggers, density stays low,
        # so the intersection rule drops it.
        leg1 = [[i * 0.1, 0.0] for i in range(15)]
        leg2 = [[1.4, (i + 1) * 0.1] for i in range(15)]
        report = detect_key_poses(demo_from_positions(leg1 + leg2))
        assert 14 in report.sharp_turn_indices
        assert 14 not in report.dense_region_indices
        assert report.key_poses_indices == ()

    def test_set_identity(self, reach_demo, pick_demo):
        for demo in (reach_demo, pick_demo):
            report = detect_key_poses(demo)
            expected = sorted(
                set(report.grasp_release_indices)
                | (set(report.sharp_turn_indices) & set(report.dense_region_indices))
            )
            assert list(report.key_poses_indices) == expected

    def test_rigid_motion_invariance(self, reach_demo):
        rng = np.random.default_rng(31)
        theta = rng.uniform(0, 2 * math.pi)
        rot = np.array([[math.cos(theta), -math.sin(theta)], [math.sin(theta), math.cos(theta)]])
        shift = rng.uniform(-5, 5, size=2)
        moved = demo_from_positions(reach_demo.positions @ rot.T + shift,
                                    grippers=reach_demo.grippers)
        assert detect_key_poses(moved) == detect_key_poses(
            demo_from_positions(reach_demo.positions, grippers=reach_demo.grippers)
        )

    def test_scaling_keeps_turns_and_shrinks_density(self, reach_demo):
        base = demo_from_positions(reach_demo.positions)
        scaled = demo_from_positions(reach_demo.positions * 3.0)
        report_base = detect_key_poses(base)
        report_scaled = detect_key_poses(scaled)
        assert report_scaled.sharp_turn_indices == report_base.sharp_turn_indices
        assert set(report_scaled.dense_region_indices) <= set(report_base.dense_region_indices)

    def test_demo_shorter_than_window_rejected(self):
        with pytest.raises(ConfigError):
            detect_key_poses(straight_demo(n=5))

    def test_grasp_release_kept_at_boundary(self):
        demo = demo_from_positions(
            [[i * 0.1, 0.0] for i in range(20)],
            grippers=[1] + [0] * 19,  # grasp at index 1, inside the boundary band
        )
        report = detect_key_poses(demo)
        assert 1 in report.key_poses_indices


class TestReportModel:
    def test_mismatched_key_list_rejected(self):
        with pytest.raises(ValidationError):
            KeyPoseReport(
                grasp_release_indices=(1,),
                sharp_turn_indices=(2,),
                dense_region_indices=(2,),
                key_poses_indices=(9,),
            )

    def test_round_trip(self, tmp_path, reach_demo):
        report = detect_key_poses(reach_demo)
        path = tmp_path / "report.txt"
        write_report(report, path, demo_id=reach_demo.demo_id)
        assert read_report(path) == report

    def test_config_rejects_even_window(self):
        with pytest.raises(ConfigError):
            KeyPoseConfig(window_length=10)
