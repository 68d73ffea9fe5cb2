"""Strictly convex reference domains: disks, balls, ellipses and ellipsoids.

All shapes are axis-aligned ellipsoids ``sum(((x - c) / a) ** 2) = 1``; the
disk and the ball are the equal-axis special cases.  Points are arrays whose
last axis is the spatial dimension.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

_SHAPES = {2: ("disk", "ellipse"), 3: ("ball", "ellipsoid")}


@dataclass(frozen=True, eq=False)
class Domain:
    """Axis-aligned ellipsoidal domain in two or three dimensions.

    Parameters
    ----------
    center : array_like, shape (n,)
    semi_axes : array_like, shape (n,)
        Positive semi-axis lengths.  Equal entries give a disk (n=2) or a
        ball (n=3).
    """

    center: np.ndarray
    semi_axes: np.ndarray
    name: str = field(default="", compare=False)

    def __post_init__(self):
        c = np.asarray(self.center, dtype=float).reshape(-1)
        a = np.asarray(self.semi_axes, dtype=float).reshape(-1)
        if c.shape != a.shape or c.size not in (2, 3):
            raise ValueError("center and semi_axes must both have length 2 or 3")
        if np.any(a <= 0):
            raise ValueError("semi-axes must be positive")
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "semi_axes", a)

    def __eq__(self, other):
        if not isinstance(other, Domain):
            return NotImplemented
        return np.array_equal(self.center, other.center) and np.array_equal(self.semi_axes, other.semi_axes)

    def __hash__(self):
        return hash((tuple(self.center), tuple(self.semi_axes)))

    # ------------------------------------------------------------------
    # constructors
    @classmethod
    def disk(cls, radius=1.0, center=(0.0, 0.0)):
        return cls(np.asarray(center, float), np.full(2, float(radius)))

    @classmethod
    def ball(cls, radius=1.0, center=(0.0, 0.0, 0.0)):
        return cls(np.asarray(center, float), np.full(3, float(radius)))

    @classmethod
    def ellipse(cls, a, b, center=(0.0, 0.0)):
        return cls(np.asarray(center, float), np.array([a, b], float))

    @classmethod
    def ellipsoid(cls, a, b, c, center=(0.0, 0.0, 0.0)):
        return cls(np.asarray(center, float), np.array([a, b, c], float))

    # ------------------------------------------------------------------
    @property
    def dim(self) -> int:
        return self.center.size

    @property
    def is_round(self) -> bool:
        return bool(np.all(self.semi_axes == self.semi_axes[0]))

    @property
    def shape_name(self) -> str:
        return _SHAPES[self.dim][0 if self.is_round else 1]

    @property
    def euclidean_diameter(self) -> float:
        return 2.0 * float(self.semi_axes.max())

    def bounding_box(self, margin=0.0):
        """Return ``(lo, hi)`` corners of the axis box enlarged by ``margin``."""
        return self.center - self.semi_axes - margin, self.center + self.semi_axes + margin

    # ------------------------------------------------------------------
    # implicit description
    def level(self, x):
        """Implicit function, negative inside and zero on the boundary."""
        y = (np.asarray(x, float) - self.center) / self.semi_axes
        return np.sum(y * y, axis=-1) - 1.0

    def level_grad(self, x):
        return 2.0 * (np.asarray(x, float) - self.center) / self.semi_axes**2

    def contains(self, x, tol=0.0):
        return self.level(x) <= tol

    def outward_normal(self, xb):
        g = self.level_grad(xb)
        return g / np.linalg.norm(g, axis=-1, keepdims=True)

    def inward_normal(self, xb):
        return -self.outward_normal(xb)

    # ------------------------------------------------------------------
    # boundary parameterisation
    def boundary_point(self, params):
        """Map boundary parameters to points.

        In 2D ``params`` is the angle ``theta`` (any shape).  In 3D it has a
        trailing axis of length 2 holding (polar, azimuth).
        """
        p = np.asarray(params, float)
        if self.dim == 2:
            u = np.stack([np.cos(p), np.sin(p)], axis=-1)
        else:
            th, ph = p[..., 0], p[..., 1]
            u = np.stack([np.sin(th) * np.cos(ph), np.sin(th) * np.sin(ph), np.cos(th)], axis=-1)
        return self.center + self.semi_axes * u

    def boundary_param(self, xb):
        """Inverse of :meth:`boundary_point` (2D angles in ``(-pi, pi]``)."""
        y = (np.asarray(xb, float) - self.center) / self.semi_axes
        if self.dim == 2:
            return np.arctan2(y[..., 1], y[..., 0])
        r = np.linalg.norm(y, axis=-1)
        th = np.arccos(np.clip(y[..., 2] / r, -1.0, 1.0))
        ph = np.arctan2(y[..., 1], y[..., 0])
        return np.stack([th, ph], axis=-1)

    def sample_boundary(self, m):
        """Return ``(params, points)`` for ``m`` boundary samples.

        2D samples are equispaced in angle starting at 0; 3D samples follow
        a Fibonacci lattice on the unit sphere.
        """
        if m < 1:
            raise ValueError("need at least one boundary sample")
        if self.dim == 2:
            params = 2.0 * np.pi * np.arange(m) / m
        else:
            k = np.arange(m) + 0.5
            th = np.arccos(1.0 - 2.0 * k / m)
            ph = np.mod(np.pi * (1.0 + 5.0**0.5) * k, 2.0 * np.pi)
            params = np.stack([th, ph], axis=-1)
        return params, self.boundary_point(params)

    def tangent_frame(self, xb):
        """Orthonormal Euclidean tangent vectors at boundary points.

        Returns an array of shape ``(..., n - 1, n)``.
        """
        nu = self.outward_normal(xb)
        if self.dim == 2:
            t = np.stack([-nu[..., 1], nu[..., 0]], axis=-1)
            return t[..., None, :]
        ref = np.zeros_like(nu)
        ref[..., 2] = 1.0
        near_pole = np.abs(nu[..., 2]) > 0.9
        ref[near_pole] = np.array([1.0, 0.0, 0.0])
        t1 = np.cross(ref, nu)
        t1 /= np.linalg.norm(t1, axis=-1, keepdims=True)
        t2 = np.cross(nu, t1)
        return np.stack([t1, t2], axis=-2)

    def euclidean_shape_operator(self, xb):
        """Euclidean shape operator ``S V = -d(nu_in)(V)`` in the tangent frame.

        Positive definite for these convex shapes; for a circle of radius R
        the single entry is ``1/R``.  Returns ``(..., n-1, n-1)``.
        """
        g = self.level_grad(xb)
        gn = np.linalg.norm(g, axis=-1)
        frame = self.tangent_frame(xb)
        hdiag = 2.0 / self.semi_axes**2
        # d(outward normal)(V) = P H V / |grad F|, P the tangential projector
        hv = frame * hdiag
        return np.einsum("...ik,...jk->...ij", frame, hv) / gn[..., None, None]

    def euclidean_curvature_2d(self, theta):
        """Closed-form curvature of an ellipse at parameter angle ``theta``."""
        a, b = self.semi_axes
        return a * b / (a**2 * np.sin(theta) ** 2 + b**2 * np.cos(theta) ** 2) ** 1.5

    # ------------------------------------------------------------------
    # closest-point projection
    def project(self, x):
        """Closest boundary point to each ``x`` (Euclidean)."""
        x = np.asarray(x, float)
        y = x - self.center
        if self.is_round:
            r = np.linalg.norm(y, axis=-1, keepdims=True)
            e1 = np.zeros(self.dim)
            e1[0] = 1.0
            u = np.where(r > 0.0, y / np.where(r > 0.0, r, 1.0), e1)
            return self.center + self.semi_axes[0] * u
        return self.center + _ellipsoid_closest(y, self.semi_axes)

    def signed_distance(self, x):
        """Euclidean signed distance to the boundary (negative inside)."""
        x = np.asarray(x, float)
        d = np.linalg.norm(x - self.project(x), axis=-1)
        return np.where(self.level(x) < 0.0, -d, d)

    # ------------------------------------------------------------------
    def to_dict(self):
        return {
            "shape": self.shape_name,
            "center": [float(v) for v in self.center],
            "semi_axes": [float(v) for v in self.semi_axes],
            "name": self.name,
        }

    @classmethod
    def from_dict(cls, d):
        if "semi_axes" in d:
            axes = d["semi_axes"]
        else:
            dim = len(d["center"])
            axes = [d["radius"]] * dim
        return cls(np.asarray(d["center"], float), np.asarray(axes, float), name=d.get("name", ""))


def _ellipsoid_closest(y, a, iters=60):
    """Closest point on ``sum((p/a)^2)=1`` to ``y`` by Newton on the multiplier.

    The closest point is ``p = a^2 y / (a^2 + t)`` with ``t`` the root of
    ``F(t) = sum((a y / (a^2 + t))^2) - 1``, which is monotone for
    ``t > -min(a^2)``.
    """
    a2 = a**2
    shape = y.shape[:-1]
    yf = y.reshape(-1, y.shape[-1])
    # points exactly at the centre: pick the nearest vertex
    t = np.zeros(yf.shape[0])
    lo = np.full(yf.shape[0], -a2.min())
    hi = np.full(yf.shape[0], 0.0)
    # bracket: F(lo+) = +inf (unless y_min-axis component vanishes), F(hi) -> -1
    r = np.linalg.norm(yf * a, axis=-1)
    hi = np.maximum(r, 1.0) + a2.max()
    lo = lo + 1e-300
    for _ in range(iters):
        q = a * yf / (a2 + t[:, None])
        f = np.sum(q * q, axis=-1) - 1.0
        df = -2.0 * np.sum(q * q / (a2 + t[:, None]), axis=-1)
        lo = np.where(f > 0, t, lo)
        hi = np.where(f <= 0, t, hi)
        with np.errstate(divide="ignore", invalid="ignore"):
            tn = t - f / df
        bad = ~np.isfinite(tn) | (tn <= lo) | (tn >= hi)
        t = np.where(bad, 0.5 * (lo + hi), tn)
    p = a2 * yf / (a2 + t[:, None])
    # degenerate interior points along the minor axis fall back to normalising
    p_norm = np.sqrt(np.sum((p / a) ** 2, axis=-1, keepdims=True))
    p = np.where(np.isfinite(p) & (p_norm > 0), p / np.where(p_norm > 0, p_norm, 1.0), 0.0)
    zero = np.all(yf == 0.0, axis=-1)
    if np.any(zero):
        k = int(np.argmin(a))
        v = np.zeros(yf.shape[-1])
        v[k] = a[k]
        p[zero] = v
    return p.reshape(shape + (y.shape[-1],))
