"""Conformally Euclidean metrics ``g = c^-2 * delta`` and their geodesic flow.

With ``l = log c`` the geodesic equation of ``g`` reads

    x'' = 2 (grad l . x') x' - |x'|^2 grad l,

and unit ``g``-speed means ``|x'| = c(x)``.  All integrators here are
classical fixed-step RK4, vectorised over a batch of rays.
"""
from __future__ import annotations

import numpy as np

from ..fields import ConstantField, RadialQuadraticField, ScaledField, ScalarField, as_field


class NonPositiveSpeedError(ValueError):
    pass


class ConformalMetric:
    """Metric ``c(x)^-2 * delta`` defined by a positive speed field ``c``."""

    def __init__(self, speed, name=""):
        self.speed = as_field(speed)
        self.name = name

    # presets used throughout the tests and the CLI
    @classmethod
    def euclidean(cls, c=1.0):
        return cls(ConstantField(c), name=f"constant-{c:g}")

    @classmethod
    def hyperbolic(cls):
        """Poincare disk: ``c = (1 - |x|^2) / 2``, curvature -1 for ``|x| < 1``."""
        return cls(RadialQuadraticField(0.5, -0.5), name="hyperbolic")

    @classmethod
    def spherical(cls):
        """Stereographic unit sphere: ``c = (1 + |x|^2) / 2``, curvature +1."""
        return cls(RadialQuadraticField(0.5, 0.5), name="spherical")

    @classmethod
    def from_lame(cls, lame, mode):
        from ..elasticity import SpeedField

        return cls(SpeedField(lame, mode), name=f"g_{mode}")

    def scaled(self, a):
        """Metric of the speed ``a * c``; all distances shrink by ``1/a``."""
        return ConformalMetric(ScaledField(self.speed, a), name=f"{a:g}*{self.name}")

    # ------------------------------------------------------------------
    def c(self, x):
        return self.speed(x)

    def grad_log(self, x):
        c = self.speed(x)
        if np.any(~(c > 0.0)):
            raise NonPositiveSpeedError("speed field is not positive along the path")
        return self.speed.grad(x) / c[..., None]

    def hess_log(self, x):
        c = self.speed(x)
        g = self.speed.grad(x)
        h = self.speed.hess(x)
        return h / c[..., None, None] - g[..., :, None] * g[..., None, :] / (c**2)[..., None, None]

    def norm(self, x, v):
        """``g``-length of vectors ``v`` based at ``x``."""
        return np.linalg.norm(v, axis=-1) / self.speed(x)

    def unit(self, x, d):
        """Rescale directions ``d`` to unit ``g``-length."""
        d = np.asarray(d, float)
        return d / np.linalg.norm(d, axis=-1, keepdims=True) * self.speed(x)[..., None]

    def speed_bounds(self, domain, n=65):
        """Sampled ``(min c, max c)`` over the closed domain."""
        lo, hi = domain.bounding_box()
        axes = [np.linspace(lo[i], hi[i], n if domain.dim == 2 else max(n // 2, 17)) for i in range(domain.dim)]
        pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, domain.dim)
        pts = pts[domain.level(pts) <= 0.0]
        _, b = domain.sample_boundary(256 if domain.dim == 2 else 400)
        vals = self.speed(np.concatenate([pts, b]))
        return float(vals.min()), float(vals.max())

    def to_dict(self):
        return {"name": self.name, "speed": self.speed.to_dict()}

    @classmethod
    def from_dict(cls, d):
        from ..fields import field_from_dict

        return cls(field_from_dict(d["speed"]), d.get("name", ""))


def default_step(metric, domain):
    """RK4 step in ``g``-time: one Euclidean step is at most ``diam / 4000``."""
    return domain.euclidean_diameter / (4000.0 * metric.speed_bounds(domain)[1])


def trapping_cap(metric, domain):
    """Integration cap after which an entered ray counts as possibly trapped."""
    return 20.0 * domain.euclidean_diameter / metric.speed_bounds(domain)[0]


# ----------------------------------------------------------------------
# geodesic flow

def geodesic_rhs(metric, x, v):
    gl = metric.grad_log(x)
    gv = np.sum(gl * v, axis=-1, keepdims=True)
    vv = np.sum(v * v, axis=-1, keepdims=True)
    return v, 2.0 * gv * v - vv * gl


def rk4_step(metric, x, v, dt):
    """One RK4 step; ``dt`` may be a scalar or an array over the batch."""
    dt = np.asarray(dt, float)
    if dt.ndim:
        dt = dt[..., None]
    k1x, k1v = geodesic_rhs(metric, x, v)
    k2x, k2v = geodesic_rhs(metric, x + 0.5 * dt * k1x, v + 0.5 * dt * k1v)
    k3x, k3v = geodesic_rhs(metric, x + 0.5 * dt * k2x, v + 0.5 * dt * k2v)
    k4x, k4v = geodesic_rhs(metric, x + dt * k3x, v + dt * k3v)
    xn = x + dt / 6.0 * (k1x + 2 * k2x + 2 * k3x + k4x)
    vn = v + dt / 6.0 * (k1v + 2 * k2v + 2 * k3v + k4v)
    return xn, vn


# ----------------------------------------------------------------------
# linearised flow (Jacobi fields in coordinates)

def _jacobi_rhs(metric, x, v, J, Jd):
    """Right-hand side for ``(x, v, J, J')``; ``J`` has shape ``(N, k, n)``."""
    gl = metric.grad_log(x)
    H = metric.hess_log(x)
    gv = np.sum(gl * v, axis=-1)
    vv = np.sum(v * v, axis=-1)
    acc = 2.0 * gv[:, None] * v - vv[:, None] * gl
    HJ = np.einsum("nij,nkj->nki", H, J)
    dgv = np.einsum("nki,ni->nk", HJ, v) + np.einsum("ni,nki->nk", gl, Jd)
    vdJ = np.einsum("ni,nki->nk", v, Jd)
    Jdd = (
        2.0 * dgv[..., None] * v[:, None, :]
        + 2.0 * gv[:, None, None] * Jd
        - 2.0 * vdJ[..., None] * gl[:, None, :]
        - vv[:, None, None] * HJ
    )
    return v, acc, Jd, Jdd


def jacobi_step(metric, x, v, J, Jd, dt):
    dt = np.asarray(dt, float)
    d1 = dt[..., None] if dt.ndim else dt
    d2 = dt[..., None, None] if dt.ndim else dt
    k1 = _jacobi_rhs(metric, x, v, J, Jd)
    k2 = _jacobi_rhs(metric, x + 0.5 * d1 * k1[0], v + 0.5 * d1 * k1[1], J + 0.5 * d2 * k1[2], Jd + 0.5 * d2 * k1[3])
    k3 = _jacobi_rhs(metric, x + 0.5 * d1 * k2[0], v + 0.5 * d1 * k2[1], J + 0.5 * d2 * k2[2], Jd + 0.5 * d2 * k2[3])
    k4 = _jacobi_rhs(metric, x + d1 * k3[0], v + d1 * k3[1], J + d2 * k3[2], Jd + d2 * k3[3])
    xn = x + d1 / 6.0 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
    vn = v + d1 / 6.0 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
    Jn = J + d2 / 6.0 * (k1[2] + 2 * k2[2] + 2 * k3[2] + k4[2])
    Jdn = Jd + d2 / 6.0 * (k1[3] + 2 * k2[3] + 2 * k3[3] + k4[3])
    return xn, vn, Jn, Jdn


def jacobi_determinant(v, J):
    """``det[J_1, ..., J_{n-1}, v]``; vanishes exactly at conjugate points."""
    M = np.concatenate([J, v[:, None, :]], axis=1)
    return np.linalg.det(M)


def normal_basis(v):
    """Euclidean orthonormal basis of ``v``-perpendicular directions, ``(N, n-1, n)``."""
    v = np.asarray(v, float)
    u = v / np.linalg.norm(v, axis=-1, keepdims=True)
    if v.shape[-1] == 2:
        return np.stack([-u[:, 1], u[:, 0]], axis=-1)[:, None, :]
    ref = np.zeros_like(u)
    ref[:, 2] = 1.0
    ref[np.abs(u[:, 2]) > 0.9] = np.array([1.0, 0.0, 0.0])
    a = np.cross(ref, u)
    a /= np.linalg.norm(a, axis=-1, keepdims=True)
    b = np.cross(u, a)
    return np.stack([a, b], axis=1)
