"""Isotropic elasticity: Lame triplets, stiffness tensors and wave speeds."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .domain import Domain
from .fields import (
    ConstantField,
    ExtendedField,
    ScalarField,
    as_field,
    field_from_dict,
)


class PositivityError(ValueError):
    """Raised when a Lame triplet violates rho > 0, mu > 0, n*lambda + 2*mu > 0."""

    def __init__(self, report):
        self.report = report
        super().__init__(report.summary())


@dataclass(frozen=True)
class LameField:
    """A Lame triplet ``(lambda, mu, rho)`` of smooth fields on a domain."""

    lam: ScalarField
    mu: ScalarField
    rho: ScalarField
    domain: Domain

    def __post_init__(self):
        object.__setattr__(self, "lam", as_field(self.lam))
        object.__setattr__(self, "mu", as_field(self.mu))
        object.__setattr__(self, "rho", as_field(self.rho))
        if self.domain.dim not in (2, 3):
            raise ValueError("only n = 2 and n = 3 are supported")

    @classmethod
    def constant(cls, lam, mu, rho, domain):
        return cls(ConstantField(lam), ConstantField(mu), ConstantField(rho), domain)

    @property
    def dim(self) -> int:
        return self.domain.dim

    @property
    def kind(self) -> str:
        kinds = {f.kind for f in (self.lam, self.mu, self.rho)}
        if kinds == {"constant"}:
            return "constant"
        if "grid" in kinds:
            return "grid"
        return "bump" if "bump" in kinds else "mixed"

    def is_constant(self):
        return self.lam.is_constant() and self.mu.is_constant() and self.rho.is_constant()

    def values(self, x):
        return self.lam(x), self.mu(x), self.rho(x)

    def constants(self):
        """``(lambda, mu, rho)`` of a constant triplet as floats."""
        x0 = self.domain.center[None, :]
        return tuple(float(f(x0)[0]) for f in (self.lam, self.mu, self.rho))

    def to_dict(self):
        return {
            "kind": self.kind,
            "dim": self.dim,
            "domain_ref": self.domain.to_dict(),
            "lambda": self.lam.to_dict(),
            "mu": self.mu.to_dict(),
            "rho": self.rho.to_dict(),
        }

    @classmethod
    def from_dict(cls, d):
        dom = Domain.from_dict(d["domain_ref"])
        if d.get("dim", dom.dim) != dom.dim:
            raise ValueError("dim does not match the domain")
        return cls(field_from_dict(d["lambda"]), field_from_dict(d["mu"]), field_from_dict(d["rho"]), dom)


# ----------------------------------------------------------------------
# stiffness tensor

def assemble_stiffness(lam, mu, n):
    """Isotropic stiffness ``c_ijkl = lam d_ij d_kl + mu (d_ik d_jl + d_il d_jk)``.

    ``lam`` and ``mu`` may be arrays; the tensor indices are appended as the
    last four axes.
    """
    if n not in (2, 3):
        raise ValueError(f"dimension must be 2 or 3, got {n!r}")
    lam = np.asarray(lam, float)
    mu = np.asarray(mu, float)
    d = np.eye(n)
    t_lam = np.einsum("ij,kl->ijkl", d, d)
    t_mu = np.einsum("ik,jl->ijkl", d, d) + np.einsum("il,jk->ijkl", d, d)
    return lam[..., None, None, None, None] * t_lam + mu[..., None, None, None, None] * t_mu


def quadratic_form(c, A):
    """``c(A, A) = A_ij c_ijkl A_kl``."""
    return np.einsum("...ij,...ijkl,...kl->...", A, c, A)


def symmetry_defect(c):
    """Largest violation of the minor and major symmetries of ``c``."""
    return max(
        float(np.max(np.abs(c - np.swapaxes(c, -4, -3)))),
        float(np.max(np.abs(c - np.swapaxes(c, -2, -1)))),
        float(np.max(np.abs(c - np.moveaxis(c, (-4, -3), (-2, -1))))),
    )


# ----------------------------------------------------------------------
# positivity

@dataclass
class PositivityReport:
    passed: bool
    n_samples: int
    violations: list = field(default_factory=list)

    def summary(self):
        if self.passed:
            return f"positivity holds at all {self.n_samples} samples"
        head = ", ".join(
            f"{v['condition']} at {np.round(v['point'], 6).tolist()} (value {v['value']:.6g})"
            for v in self.violations[:5]
        )
        more = "" if len(self.violations) <= 5 else f" (+{len(self.violations) - 5} more)"
        return f"positivity violated at {len(self.violations)} points: {head}{more}"


def domain_samples(domain, n_per_axis=41, n_boundary=64):
    """Grid nodes inside the closed domain plus boundary points."""
    lo, hi = domain.bounding_box()
    axes = [np.linspace(lo[i], hi[i], n_per_axis) for i in range(domain.dim)]
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, domain.dim)
    pts = pts[domain.level(pts) <= 0.0]
    _, bpts = domain.sample_boundary(n_boundary)
    return np.concatenate([pts, bpts], axis=0)


def check_positivity(field_, samples=None):
    """Strictly check ``rho > 0``, ``mu > 0`` and ``n*lambda + 2*mu > 0`` at samples."""
    if samples is None:
        samples = domain_samples(field_.domain)
    samples = np.atleast_2d(np.asarray(samples, float))
    if samples.shape[0] == 0:
        raise ValueError("empty sample set")
    n = field_.dim
    lam, mu, rho = field_.values(samples)
    violations = []
    for name, vals in (("rho>0", rho), ("mu>0", mu), (f"{n}*lambda+2*mu>0", n * lam + 2 * mu)):
        bad = ~(vals > 0.0)
        for k in np.flatnonzero(bad):
            violations.append({"condition": name, "point": samples[k].copy(), "value": float(vals[k])})
    return PositivityReport(not violations, samples.shape[0], violations)


# ----------------------------------------------------------------------
# Christoffel matrix and wave speeds

def christoffel_matrix(field_, x, xi):
    """``Gamma_il = rho^-1 c_ijkl xi_j xi_k`` at points ``x`` for covectors ``xi``."""
    xi = np.asarray(xi, float)
    if np.any(np.linalg.norm(np.atleast_2d(xi), axis=-1) == 0.0):
        raise ValueError("covector xi must be nonzero")
    x = np.asarray(x, float)
    lam, mu, rho = field_.values(x)
    c = assemble_stiffness(lam, mu, field_.dim)
    return np.einsum("...ijkl,...j,...k->...il", c, xi, xi) / np.asarray(rho)[..., None, None]


class SpeedField(ScalarField):
    """Pointwise p- or s-wave speed of a Lame triplet."""

    kind = "speed"

    def __init__(self, lame, mode):
        if mode not in ("p", "s"):
            raise ValueError("mode must be 'p' or 's'")
        self.lame = lame
        self.mode = mode

    def _numerator(self, x):
        if self.mode == "p":
            return self.lame.lam(x) + 2.0 * self.lame.mu(x)
        return self.lame.mu(x)

    def _numerator_grad(self, x):
        if self.mode == "p":
            return self.lame.lam.grad(x) + 2.0 * self.lame.mu.grad(x)
        return self.lame.mu.grad(x)

    def __call__(self, x):
        return np.sqrt(self._numerator(x) / self.lame.rho(x))

    def grad(self, x):
        N = self._numerator(x)
        rho = self.lame.rho(x)
        c = np.sqrt(N / rho)
        dN = self._numerator_grad(x)
        drho = self.lame.rho.grad(x)
        return (dN / rho[..., None] - (N / rho**2)[..., None] * drho) / (2.0 * c[..., None])

    def is_constant(self):
        return self.lame.is_constant()

    def to_dict(self):
        return {"kind": self.kind, "mode": self.mode, "lame": self.lame.to_dict()}

    @classmethod
    def from_dict(cls, d):
        return cls(LameField.from_dict(d["lame"]), d["mode"])


# registered late: SpeedField needs LameField
from . import fields as _fields  # noqa: E402

_fields._REGISTRY[SpeedField.kind] = SpeedField


@dataclass(frozen=True)
class WaveSpeeds:
    c_p: ScalarField
    c_s: ScalarField


def wave_speeds(field_, samples=None):
    """p- and s-wave speed fields; raises :class:`PositivityError` on invalid input."""
    report = check_positivity(field_, samples)
    if not report.passed:
        raise PositivityError(report)
    return WaveSpeeds(SpeedField(field_, "p"), SpeedField(field_, "s"))


def lame_from_speeds(c_p, c_s, rho):
    """Invert the speed formulas: ``mu = rho c_s^2``, ``lambda = rho (c_p^2 - 2 c_s^2)``."""
    mu = rho * c_s**2
    return rho * (c_p**2 - 2.0 * c_s**2), mu


# ----------------------------------------------------------------------
# boundary jets and extension

def fd_weights(z, x, m):
    """Fornberg weights for derivatives up to order ``m`` at ``z`` on nodes ``x``."""
    x = np.asarray(x, float)
    n = x.size
    c = np.zeros((n, m + 1))
    c1 = 1.0
    c4 = x[0] - z
    c[0, 0] = 1.0
    for i in range(1, n):
        mn = min(i, m)
        c2 = 1.0
        c5 = c4
        c4 = x[i] - z
        for j in range(i):
            c3 = x[i] - x[j]
            c2 *= c3
            if j == i - 1:
                for k in range(mn, 0, -1):
                    c[i, k] = c1 * (k * c[i - 1, k - 1] - c5 * c[i - 1, k]) / c2
                c[i, 0] = -c1 * c5 * c[i - 1, 0] / c2
            for k in range(mn, 0, -1):
                c[j, k] = (c4 * c[j, k] - k * c[j, k - 1]) / c3
            c[j, 0] = c4 * c[j, 0] / c3
        c1 = c2
    return c


def normal_derivatives(q, points, normals, order, h):
    """Derivatives ``d^j q / d nu^j`` for ``j = 0..order`` by centred differences.

    The stencil has ``order + 4`` (or ``order + 5``) symmetric nodes, which
    is fourth-order accurate for every derivative order.
    """
    half = (order + 4) // 2 + (1 if order % 2 else 0)
    half = max(half, 2)
    offs = np.arange(-half, half + 1, dtype=float)
    w = fd_weights(0.0, offs, order)
    vals = np.stack([q(points + (s * h) * normals) for s in offs], axis=0)
    return np.einsum("sk,s...->k...", w, vals) / h ** np.arange(order + 1).reshape((-1,) + (1,) * (vals.ndim - 1))


@dataclass
class JetComparison:
    max_discrepancy: float
    per_quantity: dict
    per_order: np.ndarray
    step: float


def boundary_jet_compare(f1, f2, order, boundary_points=None, h=None):
    """Largest difference of normal jets of ``lambda, mu, rho`` along the boundary.

    Normal derivatives are taken along the inward normal with centred
    fourth-order finite differences of step ``h`` (default ``1e-3`` of the
    domain diameter).
    """
    if order < 0:
        raise ValueError("jet order must be non-negative")
    dom = f1.domain
    if f2.domain != dom:
        raise ValueError("fields must share a domain")
    if boundary_points is None:
        _, boundary_points = dom.sample_boundary(64 if dom.dim == 2 else 128)
    if h is None:
        h = 1e-3 * dom.euclidean_diameter
    nu = dom.inward_normal(boundary_points)
    per_q = {}
    per_order = np.zeros(order + 1)
    for name in ("lam", "mu", "rho"):
        a = normal_derivatives(getattr(f1, name), boundary_points, nu, order, h)
        b = normal_derivatives(getattr(f2, name), boundary_points, nu, order, h)
        diff = np.abs(a - b).reshape(order + 1, -1).max(axis=1)
        per_q[name] = diff
        per_order = np.maximum(per_order, diff)
    return JetComparison(float(per_order.max()), per_q, per_order, h)


def extend_lame_field(field_, margin, check_grid=41):
    """Smooth positive extension of a triplet to the box enlarged by ``margin``.

    The inner closures are kept on the closed domain and in a collar of width
    ``margin / 4``, beyond which the values are continued constant along
    normals with a smooth blend in between.
    """
    if margin <= 0:
        raise ValueError("margin must be positive")
    collar = margin / 4.0
    dom = field_.domain
    ext = LameField(
        ExtendedField(field_.lam, dom, collar),
        ExtendedField(field_.mu, dom, collar),
        ExtendedField(field_.rho, dom, collar),
        dom,
    )
    lo, hi = dom.bounding_box(margin)
    axes = [np.linspace(lo[i], hi[i], check_grid) for i in range(dom.dim)]
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, dom.dim)
    report = check_positivity(ext, pts)
    if not report.passed:
        raise PositivityError(report)
    return ext
