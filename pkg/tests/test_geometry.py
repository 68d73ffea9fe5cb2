from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lamelab import Domain
from lamelab.fields import CallableField, ConstantField
from lamelab.geometry import (
    ConformalMetric,
    NoBranchError,
    NonPositiveSpeedError,
    TravelTimeTable,
    boundary_distance,
    conjugate_point_scan,
    convexity_check_function,
    default_convex_function,
    diameter,
    distance_table,
    exit_time_and_point,
    geodesic_shoot,
    is_strictly_convex_boundary,
    second_fundamental_form,
    simplicity_check,
)

DISK = Domain.disk()
HALF = Domain.disk(0.5)
EUC = ConformalMetric.euclidean(1.0)
HYP = ConformalMetric.hyperbolic()
SPH = ConformalMetric.spherical()


def hyperbolic_distance(z, w):
    z, w = np.asarray(z), np.asarray(w)
    num = 2.0 * np.sum((z - w) ** 2, axis=-1)
    den = (1.0 - np.sum(z * z, -1)) * (1.0 - np.sum(w * w, -1))
    return np.arccosh(1.0 + num / den)


class TestShooting:
    def test_straight_line(self):
        p = geodesic_shoot(EUC, np.zeros(2), np.array([1.0, 0.0]), 1.0)
        assert np.allclose(p.endpoint, [1.0, 0.0], atol=1e-13)

    def test_speed_two(self):
        m = ConformalMetric.euclidean(2.0)
        p = geodesic_shoot(m, np.zeros(2), np.array([1.0, 0.0]), 1.0)
        assert np.allclose(p.endpoint, [2.0, 0.0], atol=1e-13)

    def test_hyperbolic_radial(self):
        p = geodesic_shoot(HYP, np.zeros(2), np.array([1.0, 0.0]), np.log(3.0))
        assert np.allclose(p.endpoint, [0.5, 0.0], atol=1e-10)

    @settings(max_examples=15, deadline=None)
    @given(st.floats(-0.5, 0.5), st.floats(-0.5, 0.5), st.floats(0, 2 * np.pi))
    def test_unit_speed_conserved(self, x, y, a):
        p = geodesic_shoot(HYP, np.array([x, y]), np.array([np.cos(a), np.sin(a)]), 0.5, domain=Domain.disk(0.9))
        assert p.speed_defect(HYP) <= 1e-8

    def test_rejects_non_positive_speed(self):
        bad = ConformalMetric(CallableField(lambda x: 1.0 - 2.0 * x[..., 0]))
        with pytest.raises(NonPositiveSpeedError):
            geodesic_shoot(bad, np.array([1.0, 0.0]), np.array([1.0, 0.0]), 1.0)


class TestExit:
    def test_chord(self):
        e = exit_time_and_point(EUC, DISK, np.array([-2.0, 0.0]), np.array([1.0, 0.0]))
        assert e.entered
        assert e.offset == pytest.approx(1.0, abs=1e-10)
        assert e.tau == pytest.approx(3.0, abs=1e-10)
        assert np.allclose(e.exit_point, [1.0, 0.0], atol=1e-10)

    def test_miss(self):
        e = exit_time_and_point(EUC, DISK, np.array([-2.0, 5.0]), np.array([1.0, 0.0]))
        assert not e.entered

    def test_scaled_chord(self):
        e = exit_time_and_point(ConformalMetric.euclidean(2.0), DISK, np.array([-2.0, 0.0]), np.array([1.0, 0.0]))
        assert e.tau - e.offset == pytest.approx(1.0, abs=1e-10)
        assert e.tau >= e.offset

    def test_requires_exterior_start(self):
        with pytest.raises(ValueError):
            exit_time_and_point(EUC, DISK, np.zeros(2), np.array([1.0, 0.0]))


class TestDistances:
    def test_diametric(self):
        r = boundary_distance(EUC, DISK, np.array([1.0, 0.0]), np.array([-1.0, 0.0]))
        assert r.distance == pytest.approx(2.0, abs=1e-10)
        assert not r.multiple

    def test_scaled(self):
        r = boundary_distance(ConformalMetric.euclidean(2.0), DISK, np.array([1.0, 0.0]), np.array([-1.0, 0.0]))
        assert r.distance == pytest.approx(1.0, abs=1e-10)

    def test_hyperbolic_closed_form(self):
        r = boundary_distance(HYP, HALF, np.array([-0.5, 0.0]), np.array([0.5, 0.0]))
        assert r.distance == pytest.approx(2.0 * np.log(3.0), rel=1e-6)

    def test_same_point_rejected(self):
        with pytest.raises(ValueError):
            boundary_distance(EUC, DISK, np.array([1.0, 0.0]), np.array([1.0, 0.0]))

    def test_chord_table(self):
        t = distance_table(EUC, DISK, 4)
        s2 = np.sqrt(2.0)
        expected = np.array([[0, s2, 2, s2], [s2, 0, s2, 2], [2, s2, 0, s2], [s2, 2, s2, 0]])
        assert np.allclose(t.d, expected, atol=1e-10)
        assert np.all(np.diag(t.d) == 0.0)

    def test_too_few_samples(self):
        with pytest.raises(ValueError):
            distance_table(EUC, DISK, 2)

    def test_hyperbolic_table_properties(self):
        t = distance_table(HYP, HALF, 8)
        exact = hyperbolic_distance(t.points[:, None], t.points[None])
        off = ~np.eye(8, dtype=bool)
        assert np.max(np.abs(t.d[off] - exact[off]) / exact[off]) < 1e-6
        assert t.asymmetry <= 1e-6
        assert t.triangle_defect() <= 1e-6
        assert not t.any_multiple()

    def test_speed_squeeze(self):
        c = CallableField(lambda x: 1.0 + 0.2 * x[..., 0] ** 2)
        m = ConformalMetric(c)
        t = distance_table(m, DISK, 6)
        chord = np.linalg.norm(t.points[:, None] - t.points[None], axis=-1)
        off = ~np.eye(6, dtype=bool)
        assert np.all(t.d[off] >= chord[off] / 1.2 - 1e-9)
        assert np.all(t.d[off] <= chord[off] / 1.0 + 1e-9)

    def test_scaling_law(self):
        rng = np.random.default_rng(5)
        a = 1.7
        scaled = HYP.scaled(a)
        th = rng.uniform(0, 2 * np.pi, (4, 2))
        for t1, t2 in th:
            z, w = HALF.boundary_point(np.array(t1)), HALF.boundary_point(np.array(t2))
            d1 = boundary_distance(HYP, HALF, z, w, estimate_error=False).distance
            d2 = boundary_distance(scaled, HALF, z, w, estimate_error=False).distance
            assert d2 == pytest.approx(d1 / a, rel=1e-10)

    def test_table_roundtrip(self, tmp_path):
        t = distance_table(EUC, DISK, 5, mode="s")
        p = t.save(tmp_path / "t.csv")
        u = TravelTimeTable.load(p)
        assert np.array_equal(u.d, t.d) and np.array_equal(u.params, t.params) and u.mode == "s"

    def test_diameters(self):
        assert diameter(EUC, DISK, m=7)[0] == pytest.approx(2.0, abs=1e-8)
        assert diameter(ConformalMetric.euclidean(2.0), DISK, m=7)[0] == pytest.approx(1.0, abs=1e-8)
        d, info = diameter(HYP, HALF, m=7)
        assert d == pytest.approx(2.0 * np.log(3.0), abs=1e-6)
        assert info["longest_geodesic"] >= d - 1e-9


class TestSecondFundamentalForm:
    def test_circles(self):
        for R in (1.0, 0.5, 3.0):
            f = second_fundamental_form(EUC, Domain.disk(R), np.array([R, 0.0]))
            assert f.matrix.shape == (1, 1)
            assert f.matrix[0, 0] == pytest.approx(1.0 / R, rel=1e-12)

    def test_frame_is_g_orthonormal(self):
        m = ConformalMetric(CallableField(lambda x: 1.0 + 0.3 * x[..., 1]))
        _, pts = DISK.sample_boundary(16)
        for f in second_fundamental_form(m, DISK, pts):
            c = m.c(f.point[None])[0]
            assert np.allclose(f.frame @ f.frame.T / c**2, np.eye(1), atol=1e-12)

    def test_unit_disk_convex(self):
        r = is_strictly_convex_boundary(EUC, DISK)
        assert r.passed and r.min_eigenvalue == pytest.approx(1.0, rel=1e-12)

    def test_ellipse_flat_point(self):
        r = is_strictly_convex_boundary(EUC, Domain.ellipse(2.0, 1.0))
        assert r.passed and r.min_eigenvalue == pytest.approx(0.25, rel=1e-10)

    def test_hemisphere_boundary_totally_geodesic(self):
        r = is_strictly_convex_boundary(SPH, DISK)
        assert not r.passed
        assert abs(r.min_eigenvalue) < 1e-12

    @settings(max_examples=10, deadline=None)
    @given(st.floats(-2.0, 2.0), st.floats(-1.0, 1.0), st.floats(-1.0, 1.0))
    def test_vanishing_jet_perturbation(self, a, bx, by):
        def q(x):
            r2 = np.sum(x * x, -1)
            return a * (1.0 - r2) ** 2 * (1.0 + bx * x[..., 0] + by * x[..., 1]) ** 2 * 0.1

        m = ConformalMetric(CallableField(lambda x: 1.0 + q(x)))
        _, pts = DISK.sample_boundary(24)
        for f, g in zip(second_fundamental_form(m, DISK, pts), second_fundamental_form(EUC, DISK, pts)):
            assert np.allclose(f.matrix, g.matrix, atol=1e-8)

    def test_ball_sff(self):
        f = second_fundamental_form(ConformalMetric.euclidean(1.0), Domain.ball(2.0), np.array([0.0, 0.0, 2.0]))
        assert np.allclose(f.matrix, 0.5 * np.eye(2), atol=1e-12)


class TestConjugatePoints:
    def test_euclidean_none(self):
        p = geodesic_shoot(EUC, np.array([-1.0, 0.0]), np.array([1.0, 0.2]), 10.0)
        assert conjugate_point_scan(EUC, p) is None

    def test_sphere_at_pi(self):
        x0 = np.array([-1.0, 0.0])
        p = geodesic_shoot(SPH, x0, np.array([1.0, 0.0]), 4.0)
        t = conjugate_point_scan(SPH, p)
        assert t == pytest.approx(np.pi, abs=1e-4)

    def test_hyperbolic_none(self):
        x0 = np.array([-0.5, 0.0])
        p = geodesic_shoot(HYP, x0, np.array([1.0, 0.0]), 2.0 * np.log(3.0))
        assert conjugate_point_scan(HYP, p) is None


@pytest.mark.slow
class TestSimplicityAndConvexFunctions:
    def test_unit_disk_simple(self):
        v = simplicity_check(EUC, DISK, m=6, n_dirs=5)
        assert v.simple and v.label == "heuristic-numerical"

    def test_hyperbolic_simple(self):
        v = simplicity_check(HYP, Domain.disk(0.9), m=6, n_dirs=5)
        assert v.simple

    def test_large_spherical_cap_not_simple(self):
        v = simplicity_check(SPH, Domain.disk(2.0), m=6, n_dirs=5)
        assert not v.simple
        assert not v.conjugate_free

    def test_convex_function_euclidean(self):
        f = lambda x: 0.5 * np.sum(x * x, -1)  # noqa: E731
        r = convexity_check_function(EUC, DISK, f)
        assert r.passed
        assert r.min_second_derivative == pytest.approx(1.0, rel=1e-6)

    def test_convex_function_hyperbolic(self):
        # cosh of the hyperbolic distance to the origin is convex along every geodesic
        f = lambda x: (1.0 + np.sum(x * x, -1)) / (1.0 - np.sum(x * x, -1))  # noqa: E731
        assert convexity_check_function(HYP, Domain.disk(0.9), f).passed

    def test_squared_radius_hyperbolic_limit(self):
        # along radial geodesics |x|^2 = tanh^2(s/2), convex only while |x| < 1/sqrt(3)
        f = lambda x: 0.5 * np.sum(x * x, -1)  # noqa: E731
        assert convexity_check_function(HYP, Domain.disk(0.5), f).passed
        r = convexity_check_function(HYP, Domain.disk(0.9), f)
        assert not r.passed
        assert np.linalg.norm(r.argmin) > 1.0 / np.sqrt(3.0) - 0.05

    def test_convex_function_spherical_cap(self):
        f = lambda x: 0.5 * np.sum(x * x, -1)  # noqa: E731
        r = convexity_check_function(SPH, Domain.disk(2.0), f)
        assert not r.passed

    def test_default_function(self):
        f = default_convex_function(Domain.disk(1.0, (0.3, 0.0)))
        assert f(np.array([[0.3, 0.0]]))[0] == 0.0
        assert convexity_check_function(EUC, Domain.disk(1.0, (0.3, 0.0)), f).passed
