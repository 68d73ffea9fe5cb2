"""Smooth scalar fields evaluable at arbitrary points.

Fields are closures over a handful of parameters.  Derivatives are analytic
where the closed form is cheap and fall back to fourth-order central
differences otherwise.  Every serialisable field round-trips through
:func:`field_from_dict`.
"""
from __future__ import annotations

import numpy as np
from scipy import ndimage

_REGISTRY = {}


def _register(cls):
    _REGISTRY[cls.kind] = cls
    return cls


def field_from_dict(d):
    """Rebuild a field from its ``to_dict`` record."""
    try:
        cls = _REGISTRY[d["kind"]]
    except KeyError:
        raise ValueError(f"unknown scalar field kind {d.get('kind')!r}") from None
    return cls.from_dict(d)


def as_field(value):
    if isinstance(value, ScalarField):
        return value
    return ConstantField(float(value))


class ScalarField:
    """Base class.  Subclasses implement ``__call__`` and optionally derivatives.

    ``x`` has shape ``(..., n)``; values come back with shape ``(...)``.
    """

    kind = "abstract"
    #: step used by the finite-difference fallbacks
    fd_step = 1e-3

    def __call__(self, x):
        raise NotImplementedError

    def grad(self, x):
        x = np.asarray(x, float)
        h = self.fd_step
        out = np.empty(x.shape)
        for i in range(x.shape[-1]):
            e = np.zeros(x.shape[-1])
            e[i] = h
            out[..., i] = (
                -self(x + 2 * e) + 8 * self(x + e) - 8 * self(x - e) + self(x - 2 * e)
            ) / (12 * h)
        return out

    def hess(self, x):
        x = np.asarray(x, float)
        n = x.shape[-1]
        h = self.fd_step
        out = np.empty(x.shape + (n,))
        for i in range(n):
            e = np.zeros(n)
            e[i] = h
            out[..., i, :] = (
                -self.grad(x + 2 * e) + 8 * self.grad(x + e) - 8 * self.grad(x - e) + self.grad(x - 2 * e)
            ) / (12 * h)
        return 0.5 * (out + np.swapaxes(out, -1, -2))

    def to_dict(self):
        raise TypeError(f"{type(self).__name__} is not serialisable")

    def is_constant(self):
        return False


@_register
class ConstantField(ScalarField):
    kind = "constant"

    def __init__(self, value):
        self.value = float(value)

    def __call__(self, x):
        x = np.asarray(x, float)
        return np.full(x.shape[:-1], self.value)

    def grad(self, x):
        return np.zeros(np.shape(x))

    def hess(self, x):
        s = np.shape(x)
        return np.zeros(s + (s[-1],))

    def is_constant(self):
        return True

    def to_dict(self):
        return {"kind": self.kind, "value": self.value}

    @classmethod
    def from_dict(cls, d):
        return cls(d["value"])

    def __repr__(self):
        return f"ConstantField({self.value!r})"


@_register
class RadialQuadraticField(ScalarField):
    """``a + b * |x - center|^2``.

    ``a=1/2, b=-1/2`` is the Poincare-disk speed (curvature -1) and
    ``a=1/2, b=1/2`` the stereographic round-sphere speed (curvature +1).
    """

    kind = "radial"

    def __init__(self, a, b, center=None):
        self.a = float(a)
        self.b = float(b)
        self.center = None if center is None else np.asarray(center, float)

    def _y(self, x):
        x = np.asarray(x, float)
        return x if self.center is None else x - self.center

    def __call__(self, x):
        y = self._y(x)
        return self.a + self.b * np.sum(y * y, axis=-1)

    def grad(self, x):
        return 2.0 * self.b * self._y(x)

    def hess(self, x):
        s = np.shape(x)
        return np.broadcast_to(2.0 * self.b * np.eye(s[-1]), s + (s[-1],)).copy()

    def to_dict(self):
        d = {"kind": self.kind, "a": self.a, "b": self.b}
        if self.center is not None:
            d["center"] = [float(v) for v in self.center]
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(d["a"], d["b"], d.get("center"))


@_register
class RadialPolynomialField(ScalarField):
    """``sum_k coeffs[k] * |x - center|^(2k)``, a polynomial in the squared radius."""

    kind = "radial_poly"

    def __init__(self, coeffs, center=None):
        self.coeffs = np.asarray(coeffs, float).reshape(-1)
        self.center = None if center is None else np.asarray(center, float)

    def _y(self, x):
        x = np.asarray(x, float)
        return x if self.center is None else x - self.center

    def _poly(self, s, deriv=0):
        c = self.coeffs
        for _ in range(deriv):
            c = c[1:] * np.arange(1, c.size)
        out = np.zeros_like(s)
        for a in c[::-1]:
            out = out * s + a
        return out

    def __call__(self, x):
        y = self._y(x)
        return self._poly(np.sum(y * y, axis=-1))

    def grad(self, x):
        y = self._y(x)
        s = np.sum(y * y, axis=-1)
        return 2.0 * self._poly(s, 1)[..., None] * y

    def hess(self, x):
        y = self._y(x)
        s = np.sum(y * y, axis=-1)
        n = y.shape[-1]
        p1 = self._poly(s, 1)
        p2 = self._poly(s, 2)
        return 2.0 * p1[..., None, None] * np.eye(n) + 4.0 * p2[..., None, None] * y[..., :, None] * y[..., None, :]

    def is_constant(self):
        return bool(np.all(self.coeffs[1:] == 0.0))

    def to_dict(self):
        d = {"kind": self.kind, "coeffs": [float(v) for v in self.coeffs]}
        if self.center is not None:
            d["center"] = [float(v) for v in self.center]
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(d["coeffs"], d.get("center"))


@_register
class BumpField(ScalarField):
    """``base(x) + amplitude * max(0, 1 - |x - c|^2 / R^2) ** power``.

    With ``power = p`` the bump is ``C^(p-1)`` across its support edge and
    vanishes to order ``p - 1`` there.
    """

    kind = "bump"

    def __init__(self, base, amplitude, center, radius, power=4):
        self.base = as_field(base)
        self.amplitude = float(amplitude)
        self.center = np.asarray(center, float)
        self.radius = float(radius)
        self.power = int(power)
        if self.radius <= 0:
            raise ValueError("bump radius must be positive")

    def _shape(self, x):
        y = np.asarray(x, float) - self.center
        w = np.maximum(0.0, 1.0 - np.sum(y * y, axis=-1) / self.radius**2)
        return y, w

    def __call__(self, x):
        _, w = self._shape(x)
        return self.base(x) + self.amplitude * w**self.power

    def grad(self, x):
        y, w = self._shape(x)
        p = self.power
        coef = self.amplitude * p * w ** (p - 1) * (-2.0 / self.radius**2)
        return self.base.grad(x) + coef[..., None] * y

    def hess(self, x):
        y, w = self._shape(x)
        p = self.power
        R2 = self.radius**2
        n = y.shape[-1]
        c1 = self.amplitude * p * w ** (p - 1) * (-2.0 / R2)
        c2 = self.amplitude * p * (p - 1) * w ** max(p - 2, 0) * (4.0 / R2**2)
        if p < 2:
            c2 = np.zeros_like(c2)
        h = c1[..., None, None] * np.eye(n) + c2[..., None, None] * y[..., :, None] * y[..., None, :]
        return self.base.hess(x) + h

    def is_constant(self):
        return self.amplitude == 0.0 and self.base.is_constant()

    def to_dict(self):
        return {
            "kind": self.kind,
            "base": self.base.to_dict(),
            "amplitude": self.amplitude,
            "center": [float(v) for v in self.center],
            "radius": self.radius,
            "power": self.power,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(field_from_dict(d["base"]), d["amplitude"], d["center"], d["radius"], d.get("power", 4))


@_register
class GridField(ScalarField):
    """Samples on a regular grid, evaluated with cubic-spline interpolation.

    ``values`` is indexed ``[i0, i1, ...]`` along the coordinate axes, with
    node ``k`` at ``origin + k * spacing``.  Outside the grid values are
    continued by clamping to the nearest node.
    """

    kind = "grid"

    def __init__(self, origin, spacing, values, order=3):
        self.origin = np.asarray(origin, float)
        self.spacing = float(spacing)
        self.values = np.ascontiguousarray(values, dtype=float)
        self.order = int(order)
        if self.values.ndim != self.origin.size:
            raise ValueError("grid dimensionality does not match origin")
        self._coef = (
            ndimage.spline_filter(self.values, order=self.order, mode="nearest")
            if self.order > 1
            else self.values
        )
        self.fd_step = 0.25 * self.spacing

    def __call__(self, x):
        x = np.asarray(x, float)
        idx = (x - self.origin) / self.spacing
        coords = np.moveaxis(idx, -1, 0).reshape(x.shape[-1], -1)
        v = ndimage.map_coordinates(self._coef, coords, order=self.order, mode="nearest", prefilter=False)
        return v.reshape(x.shape[:-1])

    def is_constant(self):
        return bool(np.all(self.values == self.values.flat[0]))

    def to_dict(self):
        return {
            "kind": self.kind,
            "origin": [float(v) for v in self.origin],
            "spacing": self.spacing,
            "shape": list(self.values.shape),
            "order": self.order,
            # row-major samples
            "values": [float(v) for v in self.values.ravel(order="C")],
        }

    @classmethod
    def from_dict(cls, d):
        vals = np.asarray(d["values"], float).reshape(d["shape"], order="C")
        return cls(d["origin"], d["spacing"], vals, d.get("order", 3))


@_register
class ScaledField(ScalarField):
    """``factor * inner(x)``."""

    kind = "scaled"

    def __init__(self, inner, factor):
        self.inner = as_field(inner)
        self.factor = float(factor)

    def __call__(self, x):
        return self.factor * self.inner(x)

    def grad(self, x):
        return self.factor * self.inner.grad(x)

    def hess(self, x):
        return self.factor * self.inner.hess(x)

    def is_constant(self):
        return self.inner.is_constant()

    def to_dict(self):
        return {"kind": self.kind, "inner": self.inner.to_dict(), "factor": self.factor}

    @classmethod
    def from_dict(cls, d):
        return cls(field_from_dict(d["inner"]), d["factor"])


class CallableField(ScalarField):
    """Wrap plain callables; derivatives fall back to finite differences."""

    kind = "callable"

    def __init__(self, fn, grad=None, hess=None, fd_step=1e-3):
        self._fn = fn
        self._grad = grad
        self._hess = hess
        self.fd_step = fd_step

    def __call__(self, x):
        return np.asarray(self._fn(np.asarray(x, float)), float)

    def grad(self, x):
        if self._grad is not None:
            return np.asarray(self._grad(np.asarray(x, float)), float)
        return super().grad(x)

    def hess(self, x):
        if self._hess is not None:
            return np.asarray(self._hess(np.asarray(x, float)), float)
        return super().hess(x)


def smooth_step(u):
    """C-infinity step: 1 for ``u <= 0``, 0 for ``u >= 1``."""
    u = np.clip(np.asarray(u, float), 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore"):
        a = np.where(u < 1.0, np.exp(-1.0 / np.maximum(1.0 - u, 1e-300)), 0.0)
        b = np.where(u > 0.0, np.exp(-1.0 / np.maximum(u, 1e-300)), 0.0)
    return a / (a + b)


@_register
class ExtendedField(ScalarField):
    """Extension of a field beyond a domain.

    Inside the closed domain the inner field is returned unchanged.  Outside,
    the inner closure is blended (by a smooth step over a collar of width
    ``collar``) into the constant-in-normal continuation ``q(pi(x))``, where
    ``pi`` is the closest-boundary projection.
    """

    kind = "extended"

    def __init__(self, inner, domain, collar):
        from .domain import Domain

        self.inner = as_field(inner)
        self.domain = domain if isinstance(domain, Domain) else Domain.from_dict(domain)
        self.collar = float(collar)
        if self.collar <= 0:
            raise ValueError("collar width must be positive")

    def __call__(self, x):
        x = np.asarray(x, float)
        inside = self.domain.level(x) <= 0.0
        out = self.inner(x)
        if np.all(inside):
            return out
        xo = x[~inside]
        d = self.domain.signed_distance(xo)
        chi = smooth_step(d / self.collar)
        proj = self.domain.project(xo)
        out = np.array(out, dtype=float, copy=True)
        far = self.inner(proj)
        near = np.zeros_like(far)
        blend = chi > 0.0
        if np.any(blend):
            near[blend] = self.inner(xo[blend])
        out[~inside] = far + chi * (near - far)
        return out

    def is_constant(self):
        return self.inner.is_constant()

    def to_dict(self):
        return {
            "kind": self.kind,
            "inner": self.inner.to_dict(),
            "domain": self.domain.to_dict(),
            "collar": self.collar,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(field_from_dict(d["inner"]), d["domain"], d["collar"])
