from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lamelab import Domain, LameField, PositivityError, check_positivity, wave_speeds
from lamelab.elasticity import (
    assemble_stiffness,
    boundary_jet_compare,
    christoffel_matrix,
    extend_lame_field,
    lame_from_speeds,
    quadratic_form,
    symmetry_defect,
)
from lamelab.fields import BumpField, ConstantField, RadialQuadraticField

DISK = Domain.disk()
BALL = Domain.ball()


def _brute_stiffness(lam, mu, n):
    c = np.zeros((n, n, n, n))
    d = np.eye(n)
    for i in range(n):
        for j in range(n):
            for k in range(n):
                for l in range(n):
                    c[i, j, k, l] = lam * d[i, j] * d[k, l] + mu * (d[i, k] * d[j, l] + d[i, l] * d[j, k])
    return c


def _brute_form(c, A):
    n = A.shape[0]
    return sum(A[i, j] * c[i, j, k, l] * A[k, l]
               for i in range(n) for j in range(n) for k in range(n) for l in range(n))


class TestStiffness:
    def test_lambda_term_vanishes(self):
        c = assemble_stiffness(0.0, 1.0, 3)
        d = np.eye(3)
        expected = np.einsum("ik,jl->ijkl", d, d) + np.einsum("il,jk->ijkl", d, d)
        assert np.array_equal(c, expected)
        assert c[0, 1, 0, 1] == 1.0

    def test_unit_entries(self):
        c = assemble_stiffness(1.0, 1.0, 3)
        assert c[0, 0, 0, 0] == 3.0
        assert c[0, 0, 1, 1] == 1.0
        assert c[0, 1, 0, 1] == 1.0

    def test_identity_form_brute_force(self):
        c = assemble_stiffness(1.0, 1.0, 3)
        A = np.eye(3)
        assert _brute_form(_brute_stiffness(1.0, 1.0, 3), A) == pytest.approx(15.0, abs=1e-14)
        assert quadratic_form(c, A) == pytest.approx(15.0, abs=1e-14)

    def test_invalid_dimension(self):
        with pytest.raises(ValueError):
            assemble_stiffness(1.0, 1.0, 4)

    @settings(max_examples=50, deadline=None)
    @given(st.floats(-0.6, 5.0), st.floats(0.05, 5.0), st.sampled_from([2, 3]))
    def test_matches_index_loops(self, lam, mu, n):
        assert np.array_equal(assemble_stiffness(lam, mu, n), _brute_stiffness(lam, mu, n))

    @settings(max_examples=50, deadline=None)
    @given(st.floats(-0.6, 5.0), st.floats(0.05, 5.0), st.sampled_from([2, 3]))
    def test_symmetries_exact(self, lam, mu, n):
        assert symmetry_defect(assemble_stiffness(lam, mu, n)) == 0.0

    def test_strong_convexity_bound(self):
        rng = np.random.default_rng(1)
        N = 10_000
        for n in (2, 3):
            mu = rng.uniform(0.1, 3.0, N)
            lam = -2.0 * mu / n + rng.uniform(1e-3, 3.0, N)
            A = rng.normal(size=(N, n, n))
            A = 0.5 * (A + np.swapaxes(A, 1, 2))
            c = assemble_stiffness(lam, mu, n)
            q = quadratic_form(c, A)
            a2 = np.einsum("kij,kij->k", A, A)
            lower = (n * lam + 2 * mu) * a2
            # (n lam + 2 mu)|A|^2 bounds c(A, A) from below only when lam <= 0
            neg = lam <= 0
            assert np.all(q[neg] >= lower[neg] - 1e-12 * a2[neg])
            assert np.all(q >= np.minimum(lower, 2 * mu * a2) - 1e-12 * a2)
            I = np.eye(n)[None] * rng.uniform(0.1, 2.0, N)[:, None, None]
            qi = quadratic_form(c, I)
            bi = (n * lam + 2 * mu) * np.einsum("kij,kij->k", I, I)
            assert np.max(np.abs(qi - bi) / np.abs(bi)) <= 1e-12


class TestPositivity:
    def test_unit_passes(self):
        assert check_positivity(LameField.constant(1, 1, 1, BALL)).passed

    def test_negative_lambda_fails(self):
        rep = check_positivity(LameField.constant(-1, 1, 1, BALL))
        assert not rep.passed
        assert any(v["condition"].startswith("3*lambda") and v["value"] == pytest.approx(-1.0)
                   for v in rep.violations)

    def test_mild_negative_lambda_passes(self):
        assert check_positivity(LameField.constant(-0.4, 1, 1, BALL)).passed

    def test_empty_samples(self):
        with pytest.raises(ValueError):
            check_positivity(LameField.constant(1, 1, 1, DISK), np.zeros((0, 2)))

    def test_strict_at_zero(self):
        # n*lambda + 2*mu = 0 exactly is not accepted
        assert not check_positivity(LameField.constant(-1, 1, 1, DISK)).passed

    def test_reports_violating_points(self):
        mu = RadialQuadraticField(0.5, -1.0)
        rep = check_positivity(LameField(ConstantField(1.0), mu, ConstantField(1.0), DISK))
        assert not rep.passed
        pts = np.array([v["point"] for v in rep.violations if v["condition"] == "mu>0"])
        assert np.all(np.linalg.norm(pts, axis=1) >= np.sqrt(0.5) - 1e-12)


class TestChristoffel:
    def test_unit_e1(self):
        G = christoffel_matrix(LameField.constant(1, 1, 1, BALL), np.zeros(3), np.array([1.0, 0, 0]))
        assert np.allclose(G, np.diag([3.0, 1.0, 1.0]), atol=1e-14)
        w, V = np.linalg.eigh(G)
        k = int(np.argmax(w))
        assert w[k] == pytest.approx(3.0)
        assert abs(abs(V[0, k]) - 1.0) < 1e-14

    def test_zero_covector(self):
        with pytest.raises(ValueError):
            christoffel_matrix(LameField.constant(1, 1, 1, DISK), np.zeros(2), np.zeros(2))

    @settings(max_examples=100, deadline=None)
    @given(st.floats(0.05, 5.0), st.floats(0.0, 5.0), st.floats(0.1, 5.0), st.sampled_from([2, 3]),
           st.lists(st.floats(-3, 3), min_size=3, max_size=3).filter(lambda v: np.linalg.norm(v) > 1e-2))
    def test_eigenvectors(self, mu, lam_shift, rho, n, xi):
        dom = DISK if n == 2 else BALL
        lam = -2.0 * mu / n + 0.01 + lam_shift
        xi = np.asarray(xi[:n])
        if np.linalg.norm(xi) < 1e-2:
            return
        G = christoffel_matrix(LameField.constant(lam, mu, rho, dom), np.zeros(n), xi)
        cp2 = (lam + 2 * mu) / rho
        assert np.allclose(G @ xi, cp2 * xi * (xi @ xi), rtol=1e-11, atol=1e-12)


class TestWaveSpeeds:
    def test_unit(self):
        ws = wave_speeds(LameField.constant(1, 1, 1, DISK))
        x = np.zeros((1, 2))
        assert ws.c_p(x)[0] == pytest.approx(np.sqrt(3.0), rel=1e-15)
        assert ws.c_s(x)[0] == 1.0

    def test_second_example(self):
        ws = wave_speeds(LameField.constant(0.5, 2, 2, DISK))
        x = np.zeros((1, 2))
        assert ws.c_p(x)[0] == pytest.approx(1.5, rel=1e-15)
        assert ws.c_s(x)[0] == pytest.approx(1.0, rel=1e-15)

    def test_invalid_raises(self):
        with pytest.raises(PositivityError):
            wave_speeds(LameField.constant(-1, 1, 1, DISK))

    @settings(max_examples=40, deadline=None)
    @given(st.floats(-0.9, 3.0), st.floats(0.1, 3.0), st.floats(0.2, 3.0), st.floats(-0.3, 0.3))
    def test_speed_identity_on_fields(self, lam, mu, rho, amp):
        if 2 * lam + 2 * mu <= 0.05:
            return
        mu_f = BumpField(mu, amp * mu, (0.1, -0.2), 0.6)
        field = LameField(ConstantField(lam), mu_f, ConstantField(rho), DISK)
        if not check_positivity(field).passed:
            return
        ws = wave_speeds(field)
        pts = np.random.default_rng(0).uniform(-0.7, 0.7, (200, 2))
        cp, cs = ws.c_p(pts), ws.c_s(pts)
        assert np.all(cs - cp < 0)
        lv, mv, rv = field.values(pts)
        assert np.max(np.abs(cp**2 - cs**2 - (lv + mv) / rv)) <= 1e-12 * max(1.0, np.max(cp**2))

    def test_lame_from_speeds_inverts(self):
        lam, mu = lame_from_speeds(np.sqrt(3.0), 1.0, 1.0)
        assert lam == pytest.approx(1.0) and mu == pytest.approx(1.0)


class TestJetsAndExtension:
    def test_identical_fields(self):
        f = LameField(ConstantField(1.0), BumpField(1.0, 0.1, (0, 0), 0.8), ConstantField(1.0), DISK)
        for k in range(4):
            assert boundary_jet_compare(f, f, k).max_discrepancy == 0.0

    def test_interior_bump_below_noise(self):
        f1 = LameField.constant(1.0, 1.0, 1.0, DISK)
        f2 = LameField(ConstantField(1.0), BumpField(1.0, 0.1, (0, 0), 1.0, power=4), ConstantField(1.0), DISK)
        # (1 - r^2)^4 has zero value, first, second and third normal derivative at r = 1
        assert boundary_jet_compare(f1, f2, 2).max_discrepancy < 1e-6

    def test_shift_order_zero(self):
        f1 = LameField.constant(1.0, 1.0, 1.0, DISK)
        f2 = LameField.constant(1.1, 1.1, 1.1, DISK)
        assert boundary_jet_compare(f1, f2, 0).max_discrepancy == pytest.approx(0.1, abs=1e-12)

    def test_negative_order(self):
        f = LameField.constant(1.0, 1.0, 1.0, DISK)
        with pytest.raises(ValueError):
            boundary_jet_compare(f, f, -1)

    def test_extension_constant(self):
        ext = extend_lame_field(LameField.constant(2.0, 1.5, 0.5, DISK), 0.4)
        pts = np.random.default_rng(3).uniform(-1.4, 1.4, (300, 2))
        lam, mu, rho = ext.values(pts)
        assert np.all(lam == 2.0) and np.all(mu == 1.5) and np.all(rho == 0.5)

    def test_extension_agrees_inside(self):
        mu = BumpField(1.0, 0.3, (0.3, 0.0), 0.9, power=3)
        f = LameField(RadialQuadraticField(1.0, 0.2), mu, ConstantField(1.0), DISK)
        ext = extend_lame_field(f, 0.4)
        g = np.linspace(-1, 1, 41)
        pts = np.stack(np.meshgrid(g, g), -1).reshape(-1, 2)
        pts = pts[DISK.contains(pts)]
        for a, b in zip(f.values(pts), ext.values(pts)):
            assert np.array_equal(a, b)

    def test_extension_positive_on_box(self):
        mu = RadialQuadraticField(1.0, -0.5)
        f = LameField(ConstantField(0.0), mu, ConstantField(1.0), DISK)
        ext = extend_lame_field(f, 0.5)
        lo, hi = DISK.bounding_box(0.5)
        g = np.linspace(lo[0], hi[0], 61)
        pts = np.stack(np.meshgrid(g, g), -1).reshape(-1, 2)
        assert check_positivity(ext, pts).passed

    def test_extension_bad_margin(self):
        with pytest.raises(ValueError):
            extend_lame_field(LameField.constant(1, 1, 1, DISK), 0.0)


def test_lame_roundtrip():
    f = LameField(RadialQuadraticField(1.0, 0.2), BumpField(1.0, 0.1, (0, 0), 0.8), ConstantField(2.0), DISK)
    g = LameField.from_dict(f.to_dict())
    assert g.to_dict() == f.to_dict()
    pts = np.random.default_rng(0).uniform(-0.7, 0.7, (20, 2))
    for a, b in zip(f.values(pts), g.values(pts)):
        assert np.array_equal(a, b)
