"""Tests for thrust mapping, the closed-form allocators and the envelope."""

import numpy as np
import pytest

from tiltauv.allocation import (
    AllocationError,
    EnvelopePlane,
    SaturationError,
    ThrusterCommand,
    ThrusterGeometry,
    allocate_depth_orientation,
    allocate_scalar,
    circularity,
    circularity_report,
    convex_hull,
    point_in_hull,
    sample_envelope,
    thruster_direction,
    thruster_wrench,
    total_wrench,
)

GEO = ThrusterGeometry.canonical()
D = 0.57
L = 0.665


class TestDirections:
    def test_zero_tilt_is_vertical(self):
        for i in range(4):
            np.testing.assert_allclose(thruster_direction(GEO, i, 0.0), [0, 0, 1],
                                       atol=1e-15)

    def test_left_right_pair_tilts_in_xz(self):
        # rotation of +z about +y: e = (sin t, 0, cos t); at 90 deg -> +x
        np.testing.assert_allclose(thruster_direction(GEO, 0, np.pi / 2), [1, 0, 0],
                                   atol=1e-12)
        t = 0.7
        np.testing.assert_allclose(thruster_direction(GEO, 1, t),
                                   [np.sin(t), 0.0, np.cos(t)], atol=1e-12)

    def test_front_rear_pair_tilts_in_yz(self):
        t = -0.4
        for i in (2, 3):
            np.testing.assert_allclose(thruster_direction(GEO, i, t),
                                       [0.0, np.sin(t), np.cos(t)], atol=1e-12)

    def test_unit_norm(self):
        rng = np.random.default_rng(5)
        for _ in range(40):
            i = rng.integers(0, 4)
            t = rng.uniform(-np.pi / 2, np.pi / 2)
            assert np.linalg.norm(thruster_direction(GEO, i, t)) == pytest.approx(1.0, abs=1e-12)

    def test_tilt_limit_enforced(self):
        with pytest.raises(AllocationError):
            thruster_direction(GEO, 0, np.pi / 2 + 0.01)


class TestThrusterWrench:
    def test_zero_lever_arm_pure_force(self):
        geo = ThrusterGeometry(
            positions=np.zeros((4, 3)),
            tilt_axes=GEO.tilt_axes, zero_directions=GEO.zero_directions)
        w = thruster_wrench(geo, 0, 5.0, 0.0)
        np.testing.assert_allclose(w.as_array(), [0, 0, 5, 0, 0, 0], atol=1e-12)

    def test_roll_moment_of_side_thruster(self):
        # lever (0, d/2, 0) x (0, 0, 1) * 5 N -> 1.425 N*m of roll
        w = thruster_wrench(GEO, 0, 5.0, 0.0)
        np.testing.assert_allclose(w.as_array(), [0, 0, 5.0, 5.0 * D / 2, 0, 0],
                                   atol=1e-12)

    def test_zero_force_zero_wrench(self):
        w = thruster_wrench(GEO, 2, 0.0, 0.5)
        np.testing.assert_array_equal(w.as_array(), np.zeros(6))

    def test_linear_in_force(self):
        w1 = thruster_wrench(GEO, 3, 2.0, 0.3).as_array()
        w2 = thruster_wrench(GEO, 3, 4.0, 0.3).as_array()
        np.testing.assert_allclose(w2, 2.0 * w1, atol=1e-12)

    def test_force_limit(self):
        with pytest.raises(AllocationError):
            thruster_wrench(GEO, 0, 5.1, 0.0)


class TestTotalWrench:
    def test_all_zero(self):
        w = total_wrench(GEO, ThrusterCommand.zero())
        np.testing.assert_array_equal(w.as_array(), np.zeros(6))

    def test_vertical_pair_heave(self):
        cmd = ThrusterCommand(forces=[5, 5, 0, 0], tilts=[0, 0, 0, 0])
        w = total_wrench(GEO, cmd)
        np.testing.assert_allclose(w.as_array(), [0, 0, 10, 0, 0, 0], atol=1e-12)

    def test_opposed_pair_pure_roll(self):
        cmd = ThrusterCommand(forces=[5, -5, 0, 0], tilts=[0, 0, 0, 0])
        w = total_wrench(GEO, cmd)
        np.testing.assert_allclose(w.as_array(), [0, 0, 0, 2 * 1.425, 0, 0], atol=1e-12)

    def test_limit_violation_names_thruster(self):
        cmd = ThrusterCommand(forces=[0, 0, 7.0, 0], tilts=[0, 0, 0, 0])
        with pytest.raises(AllocationError, match="thruster 3"):
            total_wrench(GEO, cmd)


class TestDepthOrientationAllocator:
    def test_zero_target(self):
        cmd = allocate_depth_orientation([0, 0, 0, 0], GEO)
        np.testing.assert_array_equal(cmd.forces, np.zeros(4))
        np.testing.assert_array_equal(cmd.tilts, np.zeros(4))

    def test_pure_heave(self):
        cmd = allocate_depth_orientation([10, 0, 0, 0], GEO)
        np.testing.assert_allclose(cmd.forces, [5, 5, 0, 0], atol=1e-12)
        w = total_wrench(GEO, cmd)
        np.testing.assert_allclose(w.as_array(), [0, 0, 10, 0, 0, 0], atol=1e-12)

    def test_pure_pitch(self):
        tau_m = 1.2
        cmd = allocate_depth_orientation([0, 0, tau_m, 0], GEO)
        assert cmd.tilts[2] == pytest.approx(0.0)
        assert cmd.forces[2] == pytest.approx(tau_m / L)
        assert cmd.forces[3] == pytest.approx(-tau_m / L)
        w = total_wrench(GEO, cmd)
        np.testing.assert_allclose(w.as_array(), [0, 0, 0, 0, tau_m, 0], atol=1e-9)

    def test_round_trip_random_targets(self):
        rng = np.random.default_rng(11)
        for _ in range(200):
            # |f1|,|f2| <= 3 + 1/0.57 < 5 and |f3| <= sqrt(8)/0.665 < 5
            target = rng.uniform(-1, 1, 4) * [6.0, 1.0, 2.0, 2.0]
            cmd = allocate_depth_orientation(target, GEO)
            w = total_wrench(GEO, cmd).as_array()
            np.testing.assert_allclose(w[2:], target, atol=1e-9)
            np.testing.assert_allclose(w[:2], [0.0, 0.0], atol=1e-12)
            assert cmd.forces[3] == pytest.approx(-cmd.forces[2], abs=1e-12)
            assert cmd.tilts[2] == cmd.tilts[3]

    def test_saturation_preserves_direction(self):
        target = np.array([40.0, 1.0, 2.0, -1.0])
        with pytest.raises(SaturationError) as exc:
            allocate_depth_orientation(target, GEO)
        err = exc.value
        assert 0.0 < err.scale < 1.0
        w = total_wrench(GEO, err.commands).as_array()
        np.testing.assert_allclose(w[2:], err.scale * target, atol=1e-9)
        assert np.max(np.abs(err.commands.forces)) == pytest.approx(GEO.f_max)


class TestScalarAllocator:
    @pytest.mark.parametrize("mode,axis", [
        ("surge", 0), ("sway", 1), ("heave", 2),
        ("roll", 3), ("pitch", 4), ("yaw", 5),
    ])
    def test_round_trip_each_mode(self, mode, axis):
        target = 1.1 if axis >= 3 else 4.0
        cmd = allocate_scalar(target, GEO, mode)
        w = total_wrench(GEO, cmd).as_array()
        expected = np.zeros(6)
        expected[axis] = target
        np.testing.assert_allclose(w, expected, atol=1e-9)

    def test_zero_target(self):
        cmd = allocate_scalar(0.0, GEO, "yaw")
        np.testing.assert_array_equal(cmd.forces, np.zeros(4))

    def test_max_yaw_on_force_boundary(self):
        cmd = allocate_scalar(D * GEO.f_max, GEO, "yaw")
        np.testing.assert_allclose(np.abs(cmd.forces[:2]), [GEO.f_max, GEO.f_max])
        assert cmd.forces[0] == pytest.approx(-cmd.forces[1])  # opposed pair

    def test_saturation(self):
        with pytest.raises(SaturationError) as exc:
            allocate_scalar(100.0, GEO, "yaw")
        err = exc.value
        w = total_wrench(GEO, err.commands).as_array()
        assert w[5] == pytest.approx(100.0 * err.scale, abs=1e-9)

    def test_unknown_mode(self):
        with pytest.raises(ValueError):
            allocate_scalar(1.0, GEO, "warp")


class TestEnvelope:
    def test_origin_included(self):
        pts = sample_envelope(GEO, EnvelopePlane.parse("fx-fy", 9))
        assert np.any(np.all(np.abs(pts) < 1e-12, axis=1))

    def test_square_corner_reachable(self):
        # max Fx while Fy is also large: the square-versus-diamond contrast
        pts = sample_envelope(GEO, EnvelopePlane.parse("fx-fy", 33))
        fx_max, fy_max = pts[:, 0].max(), pts[:, 1].max()
        near_max = pts[np.abs(pts[:, 0] - fx_max) <= 0.01 * fx_max]
        assert np.any(np.abs(near_max[:, 1]) >= 0.5 * fy_max)

    def test_symmetric_under_force_flip(self):
        pts = sample_envelope(GEO, EnvelopePlane.parse("my-mz", 17))
        flipped = np.unique(-pts, axis=0)
        np.testing.assert_allclose(flipped, pts, atol=1e-12)

    def test_deterministic(self):
        p1 = sample_envelope(GEO, EnvelopePlane.parse("mx-mz", 17))
        p2 = sample_envelope(GEO, EnvelopePlane.parse("mx-mz", 17))
        np.testing.assert_array_equal(p1, p2)

    def test_resolution_floor(self):
        with pytest.raises(ValueError):
            EnvelopePlane.parse("fx-fy", 8)

    def test_axes_must_differ(self):
        with pytest.raises(ValueError):
            EnvelopePlane.parse("fx-fx")

    def test_allocator_outputs_inside_hull(self):
        rng = np.random.default_rng(13)
        planes = {name: convex_hull(sample_envelope(GEO, EnvelopePlane.parse(name, 33)))
                  for name in ("fz-mx", "my-mz", "fz-my")}
        from tiltauv.allocation import WRENCH_AXES
        for _ in range(50):
            # strictly interior targets: 80% of a conservative feasible box
            target = 0.8 * rng.uniform(-1, 1, 4) * [6.0, 1.0, 2.0, 2.0]
            w = total_wrench(GEO, allocate_depth_orientation(target, GEO)).as_array()
            for name, hull in planes.items():
                ia, ib = (WRENCH_AXES.index(a) for a in name.split("-"))
                assert point_in_hull([w[ia], w[ib]], hull, tol=1e-9), name


class TestCircularity:
    def test_regular_256_gon(self):
        t = np.linspace(0.0, 2.0 * np.pi, 257)[:-1]
        pts = np.column_stack([np.cos(t), np.sin(t)])
        assert circularity(pts) >= 0.999

    def test_unit_square(self):
        edge = np.linspace(0.0, 1.0, 5)
        pts = [(x, y) for x in edge for y in edge if x in (0.0, 1.0) or y in (0.0, 1.0)]
        assert circularity(pts) == pytest.approx(np.pi / 4.0, abs=1e-12)

    def test_collinear_raises(self):
        with pytest.raises(ValueError):
            circularity([(0, 0), (1, 1), (2, 2), (3, 3)])

    def test_too_few_points(self):
        with pytest.raises(ValueError):
            circularity([(0, 0), (1, 1)])

    def test_canonical_planes_above_threshold(self):
        report = circularity_report(GEO, resolution=17)
        assert set(report) == {"fx-fy", "fy-fz", "fx-fz", "mx-my", "my-mz", "mx-mz"}
        for name, value in report.items():
            assert value >= 0.75, name


class TestGeometryInvariants:
    def test_axis_orthogonality_enforced(self):
        with pytest.raises(ValueError, match="orthogonal"):
            ThrusterGeometry(
                positions=GEO.positions,
                tilt_axes=np.array([[0, 0, 1.0]] * 4),
                zero_directions=GEO.zero_directions)

    def test_unit_norm_enforced(self):
        with pytest.raises(ValueError, match="unit"):
            ThrusterGeometry(
                positions=GEO.positions,
                tilt_axes=GEO.tilt_axes * 2.0,
                zero_directions=GEO.zero_directions)

    def test_hull_keeps_grid_points_exact(self):
        # no epsilon collapse: distinct near-identical points both survive
        pts = np.array([[0, 0], [1, 0], [1, 1], [0, 1], [0.5, 1.0 + 1e-13]])
        hull = convex_hull(pts)
        assert len(hull) == 5
