"""Boundary convexity, conjugate points, simplicity and convex-function checks."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .metric import default_step, jacobi_determinant, jacobi_step, normal_basis, rk4_step


@dataclass
class SecondFundamentalForm:
    """Second fundamental form of the boundary w.r.t. the inward ``g``-normal.

    ``matrix[a, b] = g(S E_a, E_b)`` in the ``g``-orthonormal frame
    ``E_a = c * T_a``; positive definite at strictly convex points.
    """

    point: np.ndarray
    matrix: np.ndarray
    frame: np.ndarray

    def eigenvalues(self):
        return np.linalg.eigvalsh(self.matrix)


def second_fundamental_form(metric, domain, point):
    """Shape operator of ``g`` at a boundary point, from the conformal connection.

    With ``phi = -log c`` the connection is
    ``D_V X = dX(V) + (dphi.V) X + (dphi.X) V - (V.X) grad phi`` and the
    ``g``-unit inward normal is ``nu_g = c * nu_in``; the shape operator is
    ``S V = -D_V nu_g``.
    """
    x = np.atleast_2d(np.asarray(point, float))
    single = np.ndim(point) == 1
    c = metric.c(x)
    gc = metric.speed.grad(x)
    dphi = -gc / c[:, None]
    nu = domain.inward_normal(x)
    T = domain.tangent_frame(x)  # Euclidean orthonormal tangents, (N, k, n)
    k = T.shape[1]
    # Euclidean derivative of the inward normal along T_a is -S_e T_a
    Se = domain.euclidean_shape_operator(x)  # (N, k, k)
    dnu = -np.einsum("nab,nbi->nai", Se, T)
    mats = np.empty((x.shape[0], k, k))
    for a in range(k):
        V = c[:, None] * T[:, a]
        # derivative of c * nu along V
        dV_c = np.sum(gc * V, axis=-1)
        dnug = dV_c[:, None] * nu + c[:, None] * (c[:, None] * dnu[:, a])
        nug = c[:, None] * nu
        conn = (
            np.sum(dphi * V, -1)[:, None] * nug
            + np.sum(dphi * nug, -1)[:, None] * V
            - np.sum(V * nug, -1)[:, None] * dphi
        )
        SV = -(dnug + conn)
        for b in range(k):
            E_b = c[:, None] * T[:, b]
            mats[:, a, b] = np.sum(SV * E_b, -1) / c**2
    mats = 0.5 * (mats + np.swapaxes(mats, 1, 2))
    frames = c[:, None, None] * T
    if single:
        return SecondFundamentalForm(x[0], mats[0], frames[0])
    return [SecondFundamentalForm(x[i], mats[i], frames[i]) for i in range(x.shape[0])]


@dataclass
class ConvexityResult:
    passed: bool
    min_eigenvalue: float
    argmin: np.ndarray

    def __bool__(self):
        return self.passed


def is_strictly_convex_boundary(metric, domain, samples=256, tol=0.0):
    """Pass iff the smallest SFF eigenvalue over the boundary samples exceeds ``tol``."""
    if np.ndim(samples) == 0:
        _, pts = domain.sample_boundary(int(samples))
    else:
        pts = np.atleast_2d(np.asarray(samples, float))
    forms = second_fundamental_form(metric, domain, pts)
    ev = np.array([f.eigenvalues().min() for f in forms])
    i = int(np.argmin(ev))
    return ConvexityResult(bool(ev.min() > tol), float(ev.min()), pts[i])


# ----------------------------------------------------------------------
# conjugate points

def _jacobi_along(metric, x0, v0, dt, n_steps):
    """Integrate geodesic and normal Jacobi fields ``J(0)=0, J'(0)=w_a``."""
    x = np.asarray(x0, float)[None]
    v = np.asarray(v0, float)[None]
    W = normal_basis(v)
    J = np.zeros_like(W)
    Jd = W.copy()
    states = [(x, v, J, Jd)]
    dets = [0.0]
    for _ in range(n_steps):
        x, v, J, Jd = jacobi_step(metric, x, v, J, Jd, dt)
        states.append((x, v, J, Jd))
        dets.append(float(jacobi_determinant(v, J)[0]))
    return states, np.array(dets)


def conjugate_point_scan(metric, geodesic, tol=1e-6):
    """First conjugate ``g``-time along ``geodesic`` from its starting point, or ``None``.

    The Jacobi determinant ``det[J_1..J_{n-1}, v]`` is tracked along the
    path's own step grid; the first sign change is bisected to ``tol``.
    """
    h = geodesic.step
    n = len(geodesic.t) - 1
    t_end = float(geodesic.t[-1])
    states, dets = _jacobi_along(metric, geodesic.x[0], geodesic.v[0], h, n)
    return _first_sign_change(metric, states, dets, h, tol, t_end)


def _first_sign_change(metric, states, dets, h, tol, t_end):
    if len(dets) < 3:
        return None
    ref = np.sign(dets[1])
    for k in range(2, len(dets)):
        if np.sign(dets[k]) != ref:
            x, v, J, Jd = states[k - 1]
            lo, hi = 0.0, min(h, t_end - (k - 1) * h)
            while hi - lo > tol:
                mid = 0.5 * (lo + hi)
                xm, vm, Jm, _ = jacobi_step(metric, x, v, J, Jd, mid)
                if np.sign(jacobi_determinant(vm, Jm)[0]) == ref:
                    lo = mid
                else:
                    hi = mid
            return (k - 1) * h + 0.5 * (lo + hi)
    return None


def conjugate_times_to_exit(metric, domain, x0, v0, dt=None, t_cap=None, tol=1e-6):
    """First conjugate time before exit for a batch of rays from boundary points.

    Returns an array with ``nan`` where no conjugate point precedes the exit.
    """
    from .metric import trapping_cap

    dt = default_step(metric, domain) if dt is None else dt
    t_cap = trapping_cap(metric, domain) if t_cap is None else t_cap
    x = np.atleast_2d(np.asarray(x0, float))
    v = metric.unit(x, np.atleast_2d(np.asarray(v0, float)))
    N = x.shape[0]
    W = normal_basis(v)
    J = np.zeros_like(W)
    Jd = W.copy()
    out = np.full(N, np.nan)
    ref = np.zeros(N)
    active = np.arange(N)
    k = 0
    while active.size and k * dt < t_cap:
        xn, vn, Jn, Jdn = jacobi_step(metric, x, v, J, Jd, dt)
        det = jacobi_determinant(vn, Jn)
        if k == 0:
            ref[active] = np.sign(det)
        inside = domain.level(xn) <= 0.0
        flip = inside & (np.sign(det) != ref[active]) & (k > 0)
        for j in np.flatnonzero(flip):
            lo, hi = 0.0, dt
            s = (x[j : j + 1], v[j : j + 1], J[j : j + 1], Jd[j : j + 1])
            while hi - lo > tol:
                mid = 0.5 * (lo + hi)
                _, vm, Jm, _ = jacobi_step(metric, *s, mid)
                if np.sign(jacobi_determinant(vm, Jm)[0]) == ref[active[j]]:
                    lo = mid
                else:
                    hi = mid
            out[active[j]] = k * dt + 0.5 * (lo + hi)
        keep = inside & ~flip
        active = active[keep]
        x, v, J, Jd = xn[keep], vn[keep], Jn[keep], Jdn[keep]
        k += 1
    return out


def conjugate_time_to_exit(metric, domain, x0, v0, dt=None, t_cap=None, tol=1e-6):
    """First conjugate time before the geodesic from boundary ``x0`` exits, or ``None``."""
    t = conjugate_times_to_exit(metric, domain, np.asarray(x0)[None], np.asarray(v0)[None], dt, t_cap, tol)[0]
    return None if np.isnan(t) else float(t)


# ----------------------------------------------------------------------
# simplicity

@dataclass
class SimplicityVerdict:
    """Numerical surrogate for simplicity; heuristic by construction."""

    simple: bool
    convex_boundary: bool
    min_sff_eigenvalue: float
    conjugate_free: bool
    first_conjugate: dict | None
    multiplicity_free: bool
    n_geodesics: int
    label: str = "heuristic-numerical"
    notes: list = field(default_factory=list)

    def to_dict(self):
        return {
            "simple": self.simple,
            "label": self.label,
            "convex_boundary": self.convex_boundary,
            "min_sff_eigenvalue": self.min_sff_eigenvalue,
            "conjugate_free": self.conjugate_free,
            "first_conjugate": self.first_conjugate,
            "multiplicity_free": self.multiplicity_free,
            "n_geodesics": self.n_geodesics,
            "notes": list(self.notes),
        }


def _fan_directions(domain, zb, n_dirs):
    nu = domain.inward_normal(zb[None])[0]
    T = domain.tangent_frame(zb[None])[0]
    out = []
    if domain.dim == 2:
        for a in -0.5 * np.pi + (np.arange(n_dirs) + 0.5) * np.pi / n_dirs:
            out.append(np.cos(a) * nu + np.sin(a) * T[0])
    else:
        k = max(int(round(np.sqrt(n_dirs))), 2)
        for a in (np.arange(k) + 0.5) * 0.5 * np.pi / k:
            for b in 2 * np.pi * np.arange(k) / k:
                out.append(np.cos(a) * nu + np.sin(a) * (np.cos(b) * T[0] + np.sin(b) * T[1]))
    return np.array(out)


def simplicity_check(metric, domain, m=12, n_dirs=9, table=None, dt=None, n_fan=None):
    """Heuristic simplicity verdict.

    Passes iff (a) the boundary is strictly convex, (b) none of the sampled
    boundary-to-boundary geodesics (``m`` points times ``n_dirs`` inward
    directions) carries a conjugate point before exiting, and (c) the
    distance table at ``m`` points has no multiplicity flags.
    """
    from .geodesics import NoBranchError, distance_table

    conv = is_strictly_convex_boundary(metric, domain)
    dt = default_step(metric, domain) if dt is None else dt
    _, pts = domain.sample_boundary(m)
    dirs = [_fan_directions(domain, zb, n_dirs) for zb in pts]
    starts = np.concatenate([np.repeat(zb[None], len(d), 0) for zb, d in zip(pts, dirs)])
    dirs = np.concatenate(dirs)
    n_geo = dirs.shape[0]
    tc = conjugate_times_to_exit(metric, domain, starts, dirs, dt=dt)
    first = None
    if np.any(np.isfinite(tc)):
        i = int(np.nanargmin(tc))
        first = {"time": float(tc[i]), "start": starts[i].tolist(), "direction": dirs[i].tolist()}
    notes = []
    if table is None:
        try:
            table = distance_table(metric, domain, m, dt=dt, n_fan=n_fan)
        except NoBranchError as exc:
            notes.append(f"distance table incomplete: {exc}")
    mult_free = bool(table is not None and not table.any_multiple())
    simple = bool(conv.passed and first is None and mult_free)
    return SimplicityVerdict(simple, conv.passed, conv.min_eigenvalue, first is None, first, mult_free, n_geo, notes=notes)


# ----------------------------------------------------------------------
# strictly convex functions

@dataclass
class FoliationCandidate:
    """Candidate strictly convex function ``f`` (``f(x)`` over ``(..., n)`` arrays)."""

    f: object
    grad: object = None
    description: str = ""

    def __call__(self, x):
        return np.asarray(self.f(np.asarray(x, float)), float)


@dataclass
class ConvexityReport:
    passed: bool
    min_second_derivative: float
    argmin: list
    eps: float
    n_samples: int

    def to_dict(self):
        return {
            "passed": self.passed,
            "min_second_derivative": self.min_second_derivative,
            "argmin": self.argmin,
            "eps": self.eps,
            "n_samples": self.n_samples,
        }


def sample_geodesics(metric, domain, m=12, n_dirs=9, dt=None):
    """Boundary-to-boundary geodesics as sampled states ``(x, v)``, interior points only."""
    from .geodesics import shoot_to_exit

    dt = default_step(metric, domain) if dt is None else dt
    _, pts = domain.sample_boundary(m)
    xs, vs = [], []
    for zb in pts:
        dirs = _fan_directions(domain, zb, n_dirs)
        r = shoot_to_exit(metric, domain, np.repeat(zb[None], len(dirs), 0), dirs, dt=dt, record=True)
        for p, q in zip(r["paths"], r["vpaths"]):
            xs.append(p[1:-1])
            vs.append(q[1:-1])
    return np.concatenate(xs), np.concatenate(vs)


def convexity_check_function(metric, domain, f, samples=None, eps=1e-6, step=1e-3, stride=10):
    """Check ``d^2/dt^2 f(gamma(t)) >= eps`` along sampled unit-speed geodesics.

    Second differences use ``gamma(t +- step)``, obtained by one RK4 step
    each way from every sampled state.  ``samples`` is a pair ``(x, v)`` of
    arrays; by default boundary-to-boundary geodesics are generated.
    """
    if not isinstance(f, FoliationCandidate):
        f = FoliationCandidate(f)
    if samples is None:
        x, v = sample_geodesics(metric, domain)
    else:
        x, v = samples
        x = np.asarray(x, float)
        v = metric.unit(x, np.asarray(v, float))
    x, v = x[::stride], v[::stride]
    xp, _ = rk4_step(metric, x, v, step)
    xm, _ = rk4_step(metric, x, v, -step)
    d2 = (f(xp) - 2.0 * f(x) + f(xm)) / step**2
    i = int(np.argmin(d2))
    mn = float(d2[i])
    return ConvexityReport(bool(mn >= eps), mn, x[i].tolist(), eps, int(x.shape[0]))


def default_convex_function(domain):
    """``|x - center|^2``, strictly convex along the geodesics of nearly Euclidean metrics."""
    center = np.asarray(domain.center, float)

    def f(x):
        return np.sum((np.asarray(x, float) - center) ** 2, axis=-1)

    return FoliationCandidate(f, lambda x: 2.0 * (np.asarray(x, float) - center), "squared distance to the domain center")
