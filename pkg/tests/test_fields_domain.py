from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lamelab import Domain
from lamelab.fields import (
    BumpField,
    CallableField,
    ConstantField,
    ExtendedField,
    GridField,
    RadialPolynomialField,
    RadialQuadraticField,
    ScaledField,
    field_from_dict,
    smooth_step,
)

RNG = np.random.default_rng(7)
PTS = RNG.uniform(-0.8, 0.8, (50, 2))

SERIALISABLE = [
    ConstantField(1.5),
    RadialQuadraticField(0.5, -0.5),
    RadialPolynomialField([1.0, 0.3, -0.1], center=(0.1, 0.0)),
    BumpField(1.0, 0.1, (0.0, 0.2), 0.7, power=4),
    ScaledField(RadialQuadraticField(1.0, 0.2), 2.0),
    GridField((-1.0, -1.0), 0.1, np.add.outer(np.arange(21.0), np.arange(21.0)) * 0.01),
    ExtendedField(RadialQuadraticField(1.0, 0.2), Domain.disk(), 0.1),
]


@pytest.mark.parametrize("f", SERIALISABLE, ids=lambda f: f.kind)
def test_field_roundtrip(f):
    g = field_from_dict(f.to_dict())
    assert g.to_dict() == f.to_dict()
    assert np.array_equal(f(PTS), g(PTS))


@pytest.mark.parametrize("f", SERIALISABLE[1:5], ids=lambda f: f.kind)
def test_analytic_gradient_matches_differences(f):
    fd = CallableField(f)
    assert np.allclose(f.grad(PTS), fd.grad(PTS), atol=1e-8)
    assert np.allclose(f.hess(PTS), fd.hess(PTS), atol=1e-6)


def test_unknown_kind():
    with pytest.raises(ValueError):
        field_from_dict({"kind": "nope"})


def test_callable_not_serialisable():
    with pytest.raises(TypeError):
        CallableField(lambda x: x[..., 0]).to_dict()


def test_bump_vanishes_outside_support():
    b = BumpField(2.0, 0.5, (0.0, 0.0), 0.5)
    far = np.array([[0.6, 0.0], [0.0, -0.9]])
    assert np.array_equal(b(far), [2.0, 2.0])
    assert b(np.zeros((1, 2)))[0] == 2.5


def test_grid_field_reproduces_linear_data():
    g = GridField((-1.0, -1.0), 0.1, np.add.outer(np.arange(21.0), 2 * np.arange(21.0)) * 0.1)
    # away from the clamped edges the cubic spline reproduces linear data
    x = 0.5 * PTS
    exact = (x[:, 0] + 1.0) + 2 * (x[:, 1] + 1.0)
    assert np.allclose(g(x), exact, atol=1e-6)


def test_smooth_step_limits():
    u = np.array([-1.0, 0.0, 0.5, 1.0, 2.0])
    s = smooth_step(u)
    assert s[0] == 1.0 and s[1] == 1.0 and s[3] == 0.0 and s[4] == 0.0
    assert s[2] == pytest.approx(0.5)


class TestDomain:
    def test_disk_basics(self):
        d = Domain.disk(2.0, (1.0, 0.0))
        assert d.dim == 2 and d.is_round and d.euclidean_diameter == 4.0
        assert np.allclose(d.boundary_point(0.0), [3.0, 0.0])
        assert np.allclose(d.outward_normal(np.array([3.0, 0.0])), [1.0, 0.0])

    def test_invalid(self):
        with pytest.raises(ValueError):
            Domain(np.zeros(2), np.array([1.0, -1.0]))
        with pytest.raises(ValueError):
            Domain(np.zeros(4), np.ones(4))

    @settings(max_examples=30, deadline=None)
    @given(st.floats(0.3, 3.0), st.floats(0.3, 3.0), st.floats(-np.pi, np.pi))
    def test_ellipse_param_roundtrip(self, a, b, t):
        d = Domain.ellipse(a, b)
        x = d.boundary_point(t)
        assert abs(d.level(x)) < 1e-12
        assert np.allclose(d.boundary_point(d.boundary_param(x)), x, atol=1e-12)

    @settings(max_examples=30, deadline=None)
    @given(st.floats(0.5, 2.5), st.floats(0.5, 2.5), st.floats(-np.pi, np.pi))
    def test_ellipse_curvature(self, a, b, t):
        d = Domain.ellipse(a, b)
        S = d.euclidean_shape_operator(d.boundary_point(t))
        assert S[0, 0] == pytest.approx(d.euclidean_curvature_2d(t), rel=1e-10)

    def test_project_and_signed_distance(self):
        d = Domain.ellipse(2.0, 1.0)
        x = RNG.uniform(-3, 3, (40, 2))
        p = d.project(x)
        assert np.max(np.abs(d.level(p))) < 1e-10
        sd = d.signed_distance(x)
        assert np.all((sd < 0) == (d.level(x) < 0))
        # brute-force closest point over a fine boundary sample
        _, bp = d.sample_boundary(20000)
        brute = np.min(np.linalg.norm(x[:, None] - bp[None], axis=-1), axis=1)
        assert np.all(brute >= np.abs(sd) - 1e-12)
        assert np.max(brute - np.abs(sd)) < 5e-5

    def test_ball_tangent_frame_orthonormal(self):
        d = Domain.ball()
        _, pts = d.sample_boundary(50)
        fr = d.tangent_frame(pts)
        nu = d.outward_normal(pts)
        gram = np.einsum("kia,kja->kij", fr, fr)
        assert np.allclose(gram, np.eye(2), atol=1e-12)
        assert np.allclose(np.einsum("kia,ka->ki", fr, nu), 0.0, atol=1e-12)

    def test_roundtrip(self):
        for d in (Domain.disk(0.5), Domain.ellipse(2.0, 1.0), Domain.ball(), Domain.ellipsoid(1, 2, 3)):
            assert Domain.from_dict(d.to_dict()) == d
