"""Geodesic shooting, exit times and boundary distances in a convex domain."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .metric import NonPositiveSpeedError, default_step, rk4_step, trapping_cap
from .tables import TravelTimeTable

log = logging.getLogger(__name__)


class StepUnderflowError(RuntimeError):
    pass


class PossiblyTrappedError(RuntimeError):
    """An entered geodesic did not exit before the integration cap."""


class NoBranchError(RuntimeError):
    """No geodesic from ``z`` was found to exit at ``w``."""


@dataclass
class GeodesicPath:
    t: np.ndarray
    x: np.ndarray
    v: np.ndarray
    step: float
    error_estimate: float = float("nan")

    @property
    def endpoint(self):
        return self.x[-1]

    def speed_defect(self, metric):
        """``max | |v|_e / c - 1 |`` along the samples."""
        return float(np.max(np.abs(metric.norm(self.x, self.v) - 1.0)))


@dataclass
class ExitRecord:
    tau: float
    exit_point: np.ndarray | None
    offset: float
    entered: bool
    trapped: bool = False
    exit_velocity: np.ndarray | None = None


def _check_speed(metric, x):
    if np.any(~(metric.c(x) > 0.0)):
        raise NonPositiveSpeedError("speed field is not positive along the path")


def geodesic_shoot(metric, x0, v0, t_max, step=None, domain=None, estimate_error=False):
    """Integrate the unit-speed geodesic from ``x0`` in direction ``v0`` up to ``t_max``.

    ``v0`` is rescaled to unit ``g``-length.  The default step is
    ``diam / (4000 max c)`` when a domain is given, else ``t_max / 4000``.
    """
    x0 = np.asarray(x0, float)
    _check_speed(metric, x0[None])
    v0 = metric.unit(x0[None], np.asarray(v0, float)[None])[0]
    if step is None:
        step = default_step(metric, domain) if domain is not None else t_max / 4000.0
    if t_max <= 0:
        raise ValueError("t_max must be positive")
    n = int(np.ceil(t_max / step - 1e-9))
    if n == 0 or t_max / n < 1e-14 * max(t_max, 1.0):
        raise StepUnderflowError("integration step underflow")
    h = t_max / n
    ts = np.linspace(0.0, t_max, n + 1)
    xs = np.empty((n + 1, x0.size))
    vs = np.empty_like(xs)
    x, v = x0[None], v0[None]
    xs[0], vs[0] = x0, v0
    for k in range(n):
        x, v = rk4_step(metric, x, v, h)
        xs[k + 1], vs[k + 1] = x[0], v[0]
    err = float("nan")
    if estimate_error and n >= 2:
        coarse = geodesic_shoot(metric, x0, v0, t_max, step=2 * h)
        err = float(np.linalg.norm(coarse.endpoint - xs[-1]) / 15.0)
    return GeodesicPath(ts, xs, vs, h, err)


# ----------------------------------------------------------------------
# batched integration to the first boundary exit

def _refine_crossing(metric, domain, x, v, s_lo, s_hi, iters=60):
    """Root of ``s -> level(x(s))`` on ``[s_lo, s_hi]`` (negative to positive)."""
    f_lo = domain.level(rk4_step(metric, x, v, s_lo)[0])
    f_hi = domain.level(rk4_step(metric, x, v, s_hi)[0])
    side = np.zeros(x.shape[0], dtype=int)
    for _ in range(iters):
        s = s_hi - f_hi * (s_hi - s_lo) / (f_hi - f_lo)
        bad = ~np.isfinite(s) | (s <= np.minimum(s_lo, s_hi)) | (s >= np.maximum(s_lo, s_hi))
        s = np.where(bad, 0.5 * (s_lo + s_hi), s)
        f = domain.level(rk4_step(metric, x, v, s)[0])
        neg = f < 0.0
        # Illinois modification keeps both ends moving
        s_lo = np.where(neg, s, s_lo)
        f_lo = np.where(neg, f, np.where(side == 1, 0.5 * f_lo, f_lo))
        s_hi = np.where(~neg, s, s_hi)
        f_hi = np.where(~neg, f, np.where(side == -1, 0.5 * f_hi, f_hi))
        side = np.where(neg, -1, 1)
        if np.all(np.abs(s_hi - s_lo) < 1e-15 * np.maximum(1.0, s_hi)) or np.all(np.abs(f) < 1e-15):
            break
    s = np.where(np.abs(f_lo) < np.abs(f_hi), s_lo, s_hi)
    xe, ve = rk4_step(metric, x, v, s)
    return s, xe, ve


def shoot_to_exit(metric, domain, x0, v0, dt=None, t_cap=None, record=False):
    """Integrate rays starting on the boundary (moving inward) until they exit.

    Returns a dict with ``tau`` (inf when trapped), ``exit_x``, ``exit_v``,
    ``trapped`` and, if ``record`` is set, per-ray sample lists.
    """
    x0 = np.atleast_2d(np.asarray(x0, float))
    v0 = metric.unit(x0, np.atleast_2d(np.asarray(v0, float)))
    N = x0.shape[0]
    if dt is None:
        dt = default_step(metric, domain)
    if t_cap is None:
        t_cap = trapping_cap(metric, domain)
    tau = np.full(N, np.inf)
    ex = np.full_like(x0, np.nan)
    ev = np.full_like(x0, np.nan)
    trapped = np.zeros(N, dtype=bool)
    paths = [[x0[i].copy()] for i in range(N)] if record else None
    vpaths = [[v0[i].copy()] for i in range(N)] if record else None

    x, v = x0.copy(), v0.copy()
    active = np.arange(N)
    k = 0
    while active.size:
        if k * dt >= t_cap:
            trapped[active] = True
            break
        xn, vn = rk4_step(metric, x, v, dt)
        out = domain.level(xn) > 0.0
        if not np.all(np.isfinite(xn)):
            raise NonPositiveSpeedError("non-finite geodesic state (speed field degenerate?)")
        if np.any(out):
            xa, va = x[out], v[out]
            if k == 0:
                s_lo = np.full(xa.shape[0], 0.5 * dt)
                for _ in range(60):
                    still = domain.level(rk4_step(metric, xa, va, s_lo)[0]) >= 0.0
                    if not np.any(still):
                        break
                    s_lo = np.where(still, 0.5 * s_lo, s_lo)
            else:
                s_lo = np.zeros(xa.shape[0])
            s, xe, ve = _refine_crossing(metric, domain, xa, va, s_lo, np.full(xa.shape[0], dt))
            ids = active[out]
            tau[ids] = k * dt + s
            ex[ids] = xe
            ev[ids] = ve
            if record:
                for j, i in enumerate(ids):
                    paths[i].append(xe[j].copy())
                    vpaths[i].append(ve[j].copy())
        keep = ~out
        if record:
            for j, i in enumerate(active[keep]):
                paths[i].append(xn[keep][j].copy())
                vpaths[i].append(vn[keep][j].copy())
        active = active[keep]
        x, v = xn[keep], vn[keep]
        k += 1
    res = {"tau": tau, "exit_x": ex, "exit_v": ev, "trapped": trapped, "step": dt}
    if record:
        res["paths"] = [np.array(p) for p in paths]
        res["vpaths"] = [np.array(p) for p in vpaths]
    return res


def exit_time_and_point(metric, domain, z_hat, direction, dt=None, t_cap=None):
    """Follow the ray from an exterior point: entry offset ``delta``, then exit ``tau``.

    Raises :class:`PossiblyTrappedError` when the ray enters but does not exit
    before the cap.
    """
    z_hat = np.asarray(z_hat, float)
    if domain.level(z_hat) <= 0.0:
        raise ValueError("z_hat must lie outside the closed domain")
    if dt is None:
        dt = default_step(metric, domain)
    if t_cap is None:
        t_cap = trapping_cap(metric, domain)
    x = z_hat[None]
    v = metric.unit(x, np.asarray(direction, float)[None])
    far = 3.0 * max(np.linalg.norm(z_hat - domain.center), domain.semi_axes.max())
    k = 0
    while True:
        if k * dt > t_cap or np.linalg.norm(x[0] - domain.center) > far:
            return ExitRecord(np.inf, None, np.inf, entered=False)
        xn, vn = rk4_step(metric, x, v, dt)
        if domain.level(xn)[0] <= 0.0:
            break
        x, v = xn, vn
        k += 1
    # entry: root of level from positive to non-positive
    s_lo, s_hi = np.zeros(1), np.full(1, dt)
    for _ in range(80):
        s = 0.5 * (s_lo + s_hi)
        f = domain.level(rk4_step(metric, x, v, s)[0])
        s_lo = np.where(f > 0.0, s, s_lo)
        s_hi = np.where(f > 0.0, s_hi, s)
        if s_hi[0] - s_lo[0] < 1e-16 * max(1.0, dt):
            break
    xb, vb = rk4_step(metric, x, v, s_hi)
    delta = k * dt + float(s_hi[0])
    inner = shoot_to_exit(metric, domain, xb, vb, dt=dt, t_cap=t_cap)
    if inner["trapped"][0]:
        raise PossiblyTrappedError(f"geodesic from {z_hat.tolist()} entered but did not exit before t = {t_cap:g}")
    tau = delta + float(inner["tau"][0])
    return ExitRecord(tau, inner["exit_x"][0], delta, entered=True, exit_velocity=inner["exit_v"][0])


# ----------------------------------------------------------------------
# fans of inward directions

def _fan_2d(domain, zb, n):
    """Inward unit directions at angles ``(k + 1/2) pi / n - pi/2`` from the inward normal."""
    nu = domain.inward_normal(zb)
    t = domain.tangent_frame(zb)[..., 0, :]
    a = -0.5 * np.pi + (np.arange(n) + 0.5) * np.pi / n
    dirs = np.cos(a)[None, :, None] * nu[:, None, :] + np.sin(a)[None, :, None] * t[:, None, :]
    return a, dirs


def _dir_2d(domain, zb, a):
    nu = domain.inward_normal(zb)
    t = domain.tangent_frame(zb)[..., 0, :]
    return np.cos(a)[:, None] * nu + np.sin(a)[:, None] * t


def icosphere(level):
    """Vertices of a subdivided icosahedron projected to the unit sphere."""
    p = (1.0 + 5.0**0.5) / 2.0
    verts = [(-1, p, 0), (1, p, 0), (-1, -p, 0), (1, -p, 0), (0, -1, p), (0, 1, p),
             (0, -1, -p), (0, 1, -p), (p, 0, -1), (p, 0, 1), (-p, 0, -1), (-p, 0, 1)]
    faces = [(0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11), (1, 5, 9), (5, 11, 4),
             (11, 10, 2), (10, 7, 6), (7, 1, 8), (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8),
             (3, 8, 9), (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1)]
    v = [np.array(q, float) / np.linalg.norm(q) for q in verts]
    for _ in range(level):
        cache = {}
        new_faces = []

        def mid(i, j):
            key = (min(i, j), max(i, j))
            if key not in cache:
                m = v[i] + v[j]
                v.append(m / np.linalg.norm(m))
                cache[key] = len(v) - 1
            return cache[key]

        for a, b, c in faces:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            new_faces += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = new_faces
    return np.array(v)


def _fan_3d_params(level=4, min_cos=0.02):
    """Tangent-plane coordinates ``p`` (|p| < 1) of inward icosphere directions."""
    s = icosphere(level)
    s = s[s[:, 2] > min_cos]
    return s[:, :2]


def _dir_3d(domain, zb, p):
    nu = domain.inward_normal(zb)
    T = domain.tangent_frame(zb)
    p = np.asarray(p, float)
    r2 = np.sum(p * p, axis=-1)
    w = np.sqrt(np.clip(1.0 - r2, 1e-12, None))
    return w[:, None] * nu + p[:, :1] * T[:, 0] + p[:, 1:2] * T[:, 1]


# ----------------------------------------------------------------------
# boundary distance

@dataclass
class DistanceResult:
    distance: float
    multiple: bool
    branches: list = field(default_factory=list)  # (direction parameter, length)
    error_estimate: float = float("nan")


def _rel_param_2d(domain, xe, theta_z):
    return np.mod(domain.boundary_param(xe) - theta_z, 2.0 * np.pi)


class _Shooter:
    """Shared state for distance computations on one metric/domain pair."""

    def __init__(self, metric, domain, dt=None, t_cap=None, n_fan=None):
        self.metric = metric
        self.domain = domain
        self.dt = default_step(metric, domain) if dt is None else dt
        self.t_cap = trapping_cap(metric, domain) if t_cap is None else t_cap
        self.n_fan = n_fan if n_fan is not None else 720
        self.longest = 0.0

    def exits(self, zb, dirs, dt=None):
        r = shoot_to_exit(self.metric, self.domain, zb, dirs, dt=dt or self.dt, t_cap=self.t_cap)
        finite = np.isfinite(r["tau"])
        if np.any(finite):
            self.longest = max(self.longest, float(r["tau"][finite].max()))
        return r

    # -------------------------------------------------------------- 2D
    def fan_2d(self, zbs):
        a, dirs = _fan_2d(self.domain, zbs, self.n_fan)
        m = zbs.shape[0]
        r = self.exits(np.repeat(zbs, self.n_fan, axis=0), dirs.reshape(-1, self.domain.dim))
        tz = self.domain.boundary_param(zbs)
        u = _rel_param_2d(self.domain, r["exit_x"], np.repeat(tz, self.n_fan))
        u = u.reshape(m, self.n_fan)
        u[~np.isfinite(r["tau"].reshape(m, self.n_fan))] = np.nan
        return a, u, r["tau"].reshape(m, self.n_fan)

    def brackets_2d(self, a, u_row, u_target):
        mis = u_row - u_target
        s = np.sign(mis)
        ok = np.isfinite(mis[:-1]) & np.isfinite(mis[1:])
        jump = np.abs(u_row[1:] - u_row[:-1]) < 0.5 * np.pi
        idx = np.flatnonzero(ok & jump & (s[:-1] * s[1:] <= 0))
        # exact hits on a fan node generate two brackets; keep one
        out = []
        for k in idx:
            if out and out[-1] == k - 1 and mis[k] == 0.0:
                continue
            out.append(k)
        return [(a[k], a[k + 1], mis[k], mis[k + 1]) for k in out]

    def refine_2d(self, zbs, tzs, targets, brackets, tol=1e-10, iters=60):
        """Illinois iteration on the exit-parameter mismatch for many brackets at once."""
        if not brackets:
            return np.zeros(0), np.zeros(0), np.zeros(0, bool)
        zb = np.array([zbs[i] for i, _ in brackets])
        tz = np.array([tzs[i] for i, _ in brackets])
        ut = np.array([targets[j] for j in range(len(brackets))])
        a_lo = np.array([b[1][0] for b in brackets])
        a_hi = np.array([b[1][1] for b in brackets])
        f_lo = np.array([b[1][2] for b in brackets])
        f_hi = np.array([b[1][3] for b in brackets])
        side = np.zeros(len(brackets), int)
        best_a = np.where(np.abs(f_lo) < np.abs(f_hi), a_lo, a_hi)
        best_f = np.minimum(np.abs(f_lo), np.abs(f_hi))
        best_tau = np.full(len(brackets), np.nan)
        active = np.ones(len(brackets), bool)
        for _ in range(iters):
            idx = np.flatnonzero(active)
            if idx.size == 0:
                break
            lo, hi, flo, fhi = a_lo[idx], a_hi[idx], f_lo[idx], f_hi[idx]
            a = hi - fhi * (hi - lo) / (fhi - flo)
            bad = ~np.isfinite(a) | (a <= np.minimum(lo, hi)) | (a >= np.maximum(lo, hi))
            a = np.where(bad, 0.5 * (lo + hi), a)
            r = self.exits(zb[idx], _dir_2d(self.domain, zb[idx], a))
            f = _rel_param_2d(self.domain, r["exit_x"], tz[idx]) - ut[idx]
            f = np.where(np.isfinite(r["tau"]), f, np.nan)
            better = np.abs(f) < best_f[idx]
            best_a[idx] = np.where(better, a, best_a[idx])
            best_tau[idx] = np.where(better | np.isnan(best_tau[idx]), r["tau"], best_tau[idx])
            best_f[idx] = np.where(better, np.abs(f), best_f[idx])
            same = np.sign(f) == np.sign(flo)
            a_lo[idx] = np.where(same, a, lo)
            f_lo[idx] = np.where(same, f, np.where(side[idx] == 1, 0.5 * flo, flo))
            a_hi[idx] = np.where(~same, a, hi)
            f_hi[idx] = np.where(~same, f, np.where(side[idx] == -1, 0.5 * fhi, fhi))
            side[idx] = np.where(same, -1, 1)
            done = (best_f[idx] < tol) | (np.abs(a_hi[idx] - a_lo[idx]) < 1e-15) | np.isnan(f)
            active[idx[done]] = False
        # the tau stored belongs to the best direction only when it was the final evaluation
        r = self.exits(zb, _dir_2d(self.domain, zb, best_a))
        f = np.abs(_rel_param_2d(self.domain, r["exit_x"], tz) - ut)
        return best_a, r["tau"], f < max(tol * 100, 1e-8)

    # -------------------------------------------------------------- 3D
    def fan_3d(self, zb, level=4):
        p = _fan_3d_params(level)
        r = self.exits(np.repeat(zb[None], p.shape[0], axis=0), _dir_3d(self.domain, np.repeat(zb[None], p.shape[0], 0), p))
        return p, r

    def refine_3d(self, zb, w, p0, tol=1e-10, iters=40):
        """Newton iteration (finite-difference Jacobian) for the exit point ``w``."""
        Tw = self.domain.tangent_frame(w[None])[0]
        p = np.array(p0, float)
        k = p.shape[0]
        zrep = np.repeat(zb[None], k, axis=0)
        h = 1e-7
        ok = np.ones(k, bool)
        for _ in range(iters):
            trial = np.concatenate([p, p + [h, 0.0], p + [0.0, h]])
            r = self.exits(np.concatenate([zrep] * 3), _dir_3d(self.domain, np.concatenate([zrep] * 3), trial))
            e = r["exit_x"]
            F = (e - w) @ Tw.T
            F0, Fx, Fy = F[:k], F[k:2 * k], F[2 * k:]
            if np.all(np.linalg.norm(F0, axis=1) < tol):
                break
            Jm = np.stack([(Fx - F0) / h, (Fy - F0) / h], axis=-1)
            with np.errstate(all="ignore"):
                dp = np.linalg.solve(Jm, -F0[..., None])[..., 0]
            dp = np.where(np.isfinite(dp), dp, 0.0)
            nrm = np.linalg.norm(dp, axis=1, keepdims=True)
            dp = np.where(nrm > 0.1, dp * 0.1 / np.maximum(nrm, 1e-300), dp)
            p = p + dp
            rad = np.linalg.norm(p, axis=1, keepdims=True)
            p = np.where(rad > 0.999, p * 0.999 / rad, p)
        r = self.exits(zrep, _dir_3d(self.domain, zrep, p))
        res = np.linalg.norm(r["exit_x"] - w, axis=1)
        ok = res < max(100 * tol, 1e-8)
        return p, r["tau"], ok


def _dedupe(branches, tol=1e-7):
    out = []
    for a, L in sorted(branches, key=lambda b: b[1]):
        if any(np.linalg.norm(np.atleast_1d(a) - np.atleast_1d(b)) < tol for b, _ in out):
            continue
        out.append((a, L))
    return out


def boundary_distance(metric, domain, z, w, dt=None, n_fan=None, estimate_error=True):
    """In-domain ``g``-distance between boundary points ``z != w``.

    The minimum of ``tau - delta`` (zero exterior offset) over inward
    directions at ``z`` whose first exit is ``w``, found by a fan scan and
    root refinement of the exit-point mismatch.
    """
    z = np.asarray(z, float)
    w = np.asarray(w, float)
    if np.linalg.norm(z - w) == 0.0:
        raise ValueError("z and w must differ")
    sh = _Shooter(metric, domain, dt=dt, n_fan=n_fan)
    if domain.dim == 2:
        res = _distances_from_2d(sh, z[None], [np.array([domain.boundary_param(w)])])[0][0]
    else:
        res = _distances_from_3d(sh, z, w[None])[0]
    if estimate_error:
        res.error_estimate = _richardson(sh, z, res)
    return res


def boundary_distances_from(metric, domain, z, ws, dt=None, n_fan=None):
    """In-domain ``g``-distances from the boundary point ``z`` to each of ``ws``.

    Shares one fan of geodesics from ``z`` across all targets, which is much
    cheaper than repeated :func:`boundary_distance` calls.
    """
    z = np.asarray(z, float)
    ws = np.atleast_2d(np.asarray(ws, float))
    if np.any(np.linalg.norm(ws - z, axis=1) == 0.0):
        raise ValueError("targets must differ from z")
    sh = _Shooter(metric, domain, dt=dt, n_fan=n_fan)
    if domain.dim == 2:
        return _distances_from_2d(sh, z[None], [domain.boundary_param(ws)])[0]
    return _distances_from_3d(sh, z, ws)


def _richardson(sh, z, res):
    if not res.branches:
        return float("nan")
    a, L = res.branches[0]
    if sh.domain.dim == 2:
        d = _dir_2d(sh.domain, z[None], np.array([a]))
    else:
        d = _dir_3d(sh.domain, z[None], np.atleast_2d(a))
    coarse = sh.exits(z[None], d, dt=2.0 * sh.dt)["tau"][0]
    return float(abs(coarse - L) / 15.0)


def _distances_from_2d(sh, zbs, targets_per_source):
    """Distances from each ``zbs[i]`` to boundary parameters ``targets_per_source[i]``."""
    dom = sh.domain
    tz = dom.boundary_param(zbs)
    a, u, _tau = sh.fan_2d(zbs)
    jobs = []  # (source index, bracket), with target relative parameter
    jt = []
    owners = []
    for i, targets in enumerate(targets_per_source):
        for j, th in enumerate(np.atleast_1d(targets)):
            ut = np.mod(th - tz[i], 2.0 * np.pi)
            for br in sh.brackets_2d(a, u[i], ut):
                jobs.append((i, br))
                jt.append(ut)
                owners.append((i, j))
    best_a, taus, ok = sh.refine_2d(zbs, tz, jt, jobs)
    results = [[DistanceResult(np.nan, False) for _ in np.atleast_1d(t)] for t in targets_per_source]
    groups = {}
    for k, key in enumerate(owners):
        if ok[k] and np.isfinite(taus[k]):
            groups.setdefault(key, []).append((float(best_a[k]), float(taus[k])))
    for i, targets in enumerate(targets_per_source):
        for j in range(len(np.atleast_1d(targets))):
            br = _dedupe(groups.get((i, j), []))
            if not br:
                raise NoBranchError(f"no geodesic from source {i} reached target {j}")
            results[i][j] = DistanceResult(br[0][1], len(br) >= 2, br)
    return results


def _distances_from_3d(sh, zb, ws, max_candidates=4):
    dom = sh.domain
    p, r = sh.fan_3d(zb)
    ex = r["exit_x"]
    finite = np.isfinite(r["tau"])
    out = []
    for w in ws:
        d = np.linalg.norm(ex - w, axis=1)
        d[~finite] = np.inf
        order = np.argsort(d)
        cand = []
        for k in order[: 12 * max_candidates]:
            if not np.isfinite(d[k]):
                break
            if all(np.linalg.norm(p[k] - p[c]) > 0.15 for c in cand):
                cand.append(k)
            if len(cand) >= max_candidates:
                break
        cand = [c for c in cand if d[c] < 4 * d[order[0]] + 0.05 * dom.euclidean_diameter]
        pp, taus, ok = sh.refine_3d(zb, w, p[cand])
        br = _dedupe([(pp[k].copy(), float(taus[k])) for k in range(len(cand)) if ok[k]], tol=1e-6)
        if not br:
            raise NoBranchError(f"no geodesic from {zb.tolist()} reached {w.tolist()}")
        out.append(DistanceResult(br[0][1], len(br) >= 2, br))
    return out


def distance_table(metric, domain, m, mode="", dt=None, n_fan=None, metric_id=None):
    """Pairwise boundary distances over ``m`` equispaced boundary samples."""
    if m < 3:
        raise ValueError("need at least 3 boundary samples")
    params, pts = domain.sample_boundary(m)
    sh = _Shooter(metric, domain, dt=dt, n_fan=n_fan)
    D = np.zeros((m, m))
    mult = np.zeros((m, m), dtype=bool)
    if domain.dim == 2:
        targets = [np.delete(params, i) for i in range(m)]
        res = _distances_from_2d(sh, pts, targets)
        for i in range(m):
            cols = np.delete(np.arange(m), i)
            for j, r in zip(cols, res[i]):
                D[i, j] = r.distance
                mult[i, j] = r.multiple
    else:
        for i in range(m):
            cols = np.delete(np.arange(m), i)
            res = _distances_from_3d(sh, pts[i], pts[cols])
            for j, r in zip(cols, res):
                D[i, j] = r.distance
                mult[i, j] = r.multiple
    asym = float(np.max(np.abs(D - D.T)))
    Ds = 0.5 * (D + D.T)
    mult = mult | mult.T
    return TravelTimeTable(
        params=params,
        points=pts,
        d=Ds,
        mode=mode,
        multiple=mult,
        asymmetry=asym,
        metadata={
            "metric_id": metric_id or metric.name,
            "m": m,
            "step": sh.dt,
            "fan": sh.n_fan,
            "trapping_cap": sh.t_cap,
            "longest_geodesic": sh.longest,
            "refine_tol": 1e-10,
        },
    )


def diameter(metric, domain, m=16, dt=None, n_fan=None, table=None, rounds=6):
    """Largest boundary distance, refined by coordinate ascent over both endpoints (2D domains).

    Returns ``(diameter, info)`` where ``info`` also carries the longest
    geodesic length encountered during the fan scans.
    """
    if table is None:
        table = distance_table(metric, domain, m, dt=dt, n_fan=n_fan)
    i, j = np.unravel_index(np.argmax(table.d), table.d.shape)
    best = float(table.d[i, j])
    info = {"table_max": best, "pair": (int(i), int(j)), "longest_geodesic": table.metadata["longest_geodesic"]}
    if domain.dim != 2:
        return best, info
    sh = _Shooter(metric, domain, dt=dt, n_fan=n_fan if n_fan else 180)
    a, b = float(table.params[i]), float(table.params[j])
    width = 2.0 * np.pi / len(table.params)
    refined = best
    # coordinate ascent; d(z, w) = d(w, z) lets the endpoints swap roles
    for _ in range(rounds):
        tb = b + np.linspace(-width, width, 9)
        try:
            res = _distances_from_2d(sh, domain.boundary_point(np.array([a])), [tb])[0]
        except NoBranchError:
            break
        d = np.array([r.distance for r in res])
        k = int(np.argmax(d))
        b_new = tb[k]
        if 0 < k < tb.size - 1:
            den = d[k - 1] - 2.0 * d[k] + d[k + 1]
            if den < 0.0:
                b_new = tb[k] + 0.5 * (d[k - 1] - d[k + 1]) / den * (tb[1] - tb[0])
        refined = max(refined, float(d[k]))
        a, b = b_new, a
        width *= 0.5
    try:
        r = _distances_from_2d(sh, domain.boundary_point(np.array([a])), [np.array([b])])[0][0]
        refined = max(refined, r.distance)
    except NoBranchError:
        pass
    best = max(best, refined)
    info["refined"] = refined
    info["longest_geodesic"] = max(info["longest_geodesic"], sh.longest)
    return best, info
