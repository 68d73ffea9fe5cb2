"""Velocity-stress staggered finite differences with an embedded Dirichlet boundary."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numba
import numpy as np

from ..elasticity import check_positivity, extend_lame_field, wave_speeds
from .config import CFLViolationError, SimulationConfig
from .grid import StaggeredGrid

log = logging.getLogger(__name__)

C1 = 9.0 / 8.0
C2 = -1.0 / 24.0


class SolverDivergenceError(RuntimeError):
    pass


@dataclass
class Medium:
    """Lame parameters sampled on the staggered component grids."""

    bvx: np.ndarray  # 1 / rho at vx nodes
    bvy: np.ndarray
    lam: np.ndarray  # at normal-stress nodes
    l2m: np.ndarray
    mu_xy: np.ndarray
    c_max: float
    lam_r: np.ndarray | None = None
    mu_r: np.ndarray | None = None


def sample_medium(lame, grid, receivers=None):
    hi = grid.origin + (np.array(grid.shape) - 1) * grid.h
    margin = float(np.max(np.maximum(hi - grid.domain.center, grid.domain.center - grid.origin)
                          - grid.domain.semi_axes)) + grid.h
    ext = extend_lame_field(lame, margin)
    pos_sn = grid.positions("sn")
    lam = ext.lam(pos_sn)
    mu = ext.mu(pos_sn)
    med = Medium(
        1.0 / ext.rho(grid.positions("vx")),
        1.0 / ext.rho(grid.positions("vy")),
        lam,
        lam + 2.0 * mu,
        ext.mu(grid.positions("sxy")),
        float(np.sqrt(np.max((lam + 2.0 * mu) / ext.rho(pos_sn)))),
    )
    if receivers is not None:
        med.lam_r = lame.lam(receivers)
        med.mu_r = lame.mu(receivers)
    return med


@dataclass
class WaveField:
    """Solution record of one run.

    Attributes
    ----------
    times : ndarray
        Output times (multiples of ``config.dt_out``).
    traces : ndarray, shape (n_out, R, 2)
        Boundary traction at the receivers, if requested.
    snapshots : dict
        ``time index -> (ux, uy)`` displacement arrays on the staggered grids.
    probes : ndarray, shape (n_out, P, 2)
        Displacement at interior probe points (bilinear interpolation).
    energy : ndarray
        Discrete energy at output times: kinetic at the preceding half step plus
        strain as the product of the stress levels around it (the quantity the
        leapfrog scheme conserves away from the boundary).
    """

    config: SimulationConfig
    grid: StaggeredGrid
    source: object
    dt: float
    times: np.ndarray
    traces: np.ndarray | None = None
    snapshots: dict = field(default_factory=dict)
    probes: np.ndarray | None = None
    energy: np.ndarray | None = None

    def shutoff_time(self):
        return 2.0 * self.source.t0 if self.source is not None else 0.0


# ----------------------------------------------------------------------
# kernels

# The bulk kernels apply the 4th-order stencil on the row spans where the
# (masked) coefficients are nonzero; the few nodes whose stencil must drop to
# 2nd order near the boundary are then corrected from a sparse list.

@numba.njit(cache=True, fastmath=True)
def _bulk_velocity(vx, vy, sxx, syy, sxy, bvx, bvy, lo, hi):
    for i in range(lo.size):
        for j in range(lo[i], hi[i]):
            dxx = C1 * (sxx[i + 1, j] - sxx[i, j]) + C2 * (sxx[i + 2, j] - sxx[i - 1, j])
            dxy = C1 * (sxy[i, j] - sxy[i, j - 1]) + C2 * (sxy[i, j + 1] - sxy[i, j - 2])
            vx[i, j] += bvx[i, j] * (dxx + dxy)
            dyx = C1 * (sxy[i, j] - sxy[i - 1, j]) + C2 * (sxy[i + 1, j] - sxy[i - 2, j])
            dyy = C1 * (syy[i, j + 1] - syy[i, j]) + C2 * (syy[i, j + 2] - syy[i, j - 1])
            vy[i, j] += bvy[i, j] * (dyx + dyy)


@numba.njit(cache=True, fastmath=True)
def _bulk_stress(vx, vy, sxx, syy, sxy, lam, l2m, mu, lo, hi):
    for i in range(lo.size):
        for j in range(lo[i], hi[i]):
            ex = C1 * (vx[i, j] - vx[i - 1, j]) + C2 * (vx[i + 1, j] - vx[i - 2, j])
            ey = C1 * (vy[i, j] - vy[i, j - 1]) + C2 * (vy[i, j + 1] - vy[i, j - 2])
            sxx[i, j] += l2m[i, j] * ex + lam[i, j] * ey
            syy[i, j] += lam[i, j] * ex + l2m[i, j] * ey
            gy = C1 * (vx[i, j + 1] - vx[i, j]) + C2 * (vx[i, j + 2] - vx[i, j - 1])
            gx = C1 * (vy[i + 1, j] - vy[i, j]) + C2 * (vy[i + 2, j] - vy[i - 1, j])
            sxy[i, j] += mu[i, j] * (gx + gy)


# In the corrections ``(d2 - d4) = (1 - C1) d2 - C2 d3`` with ``d3`` the wide difference.
@numba.njit(cache=True)
def _fix_velocity(vx, vy, sxx, syy, sxy, bvx, bvy, cx, cy):
    for q in range(cx.shape[0]):
        i, j, fx, fy = cx[q, 0], cx[q, 1], cx[q, 2], cx[q, 3]
        r = 0.0
        if fx:
            r += (1.0 - C1) * (sxx[i + 1, j] - sxx[i, j]) - C2 * (sxx[i + 2, j] - sxx[i - 1, j])
        if fy:
            r += (1.0 - C1) * (sxy[i, j] - sxy[i, j - 1]) - C2 * (sxy[i, j + 1] - sxy[i, j - 2])
        vx[i, j] += bvx[i, j] * r
    for q in range(cy.shape[0]):
        i, j, fx, fy = cy[q, 0], cy[q, 1], cy[q, 2], cy[q, 3]
        r = 0.0
        if fx:
            r += (1.0 - C1) * (sxy[i, j] - sxy[i - 1, j]) - C2 * (sxy[i + 1, j] - sxy[i - 2, j])
        if fy:
            r += (1.0 - C1) * (syy[i, j + 1] - syy[i, j]) - C2 * (syy[i, j + 2] - syy[i, j - 1])
        vy[i, j] += bvy[i, j] * r


@numba.njit(cache=True)
def _fix_stress(vx, vy, sxx, syy, sxy, lam, l2m, mu, cn, cs):
    for q in range(cn.shape[0]):
        i, j, fx, fy = cn[q, 0], cn[q, 1], cn[q, 2], cn[q, 3]
        ex = 0.0
        ey = 0.0
        if fx:
            ex = (1.0 - C1) * (vx[i, j] - vx[i - 1, j]) - C2 * (vx[i + 1, j] - vx[i - 2, j])
        if fy:
            ey = (1.0 - C1) * (vy[i, j] - vy[i, j - 1]) - C2 * (vy[i, j + 1] - vy[i, j - 2])
        sxx[i, j] += l2m[i, j] * ex + lam[i, j] * ey
        syy[i, j] += lam[i, j] * ex + l2m[i, j] * ey
    for q in range(cs.shape[0]):
        i, j, fx, fy = cs[q, 0], cs[q, 1], cs[q, 2], cs[q, 3]
        r = 0.0
        if fy:
            r += (1.0 - C1) * (vx[i, j + 1] - vx[i, j]) - C2 * (vx[i, j + 2] - vx[i, j - 1])
        if fx:
            r += (1.0 - C1) * (vy[i + 1, j] - vy[i, j]) - C2 * (vy[i + 2, j] - vy[i - 1, j])
        sxy[i, j] += mu[i, j] * r


def _row_spans(*coefs):
    """Per-row ``[lo, hi)`` column span covering every nonzero coefficient."""
    nz = np.zeros(coefs[0].shape, bool)
    for c in coefs:
        nz |= c != 0.0
    nx, ny = nz.shape
    lo = np.full(nx, 2, np.int64)
    hi = np.full(nx, 2, np.int64)
    for i in range(2, nx - 2):
        cols = np.nonzero(nz[i, 2 : ny - 2])[0]
        if cols.size:
            lo[i] = cols[0] + 2
            hi[i] = cols[-1] + 3
    return lo, hi


def _low_order_list(coef, o4x, o4y):
    """``(i, j, needs_x_fix, needs_y_fix)`` rows for nodes using a 2nd-order stencil."""
    act = coef != 0.0
    fx = act & ~o4x.astype(bool)
    fy = act & ~o4y.astype(bool)
    i, j = np.nonzero(fx | fy)
    return np.stack([i, j, fx[i, j], fy[i, j]], axis=1).astype(np.int64).reshape(-1, 4)


@numba.njit(cache=True)
def _fill_ghosts(a, gidx, gbf, i1, w1, i2, w2, tf):
    flat = a.reshape(-1)
    for g in range(gidx.size):
        flat[gidx[g]] = gbf[g] * tf + w1[g] * flat[i1[g]] + w2[g] * flat[i2[g]]


@numba.njit(cache=True)
def _axpy_active(u, v, act, dt):
    nx, ny = u.shape
    for i in range(nx):
        for j in range(ny):
            u[i, j] += act[i, j] * v[i, j]


@numba.njit(cache=True)
def _traction(ux, uy, ptr, idx, w, bconst, dtau, nu, tau, lam_r, mu_r, tf, out):
    fx = ux.reshape(-1)
    fy = uy.reshape(-1)
    R = nu.shape[0]
    for r in range(R):
        dn0 = 0.0
        for q in range(ptr[2 * r], ptr[2 * r + 1]):
            dn0 += w[q] * fx[idx[q]]
        dn1 = 0.0
        for q in range(ptr[2 * r + 1], ptr[2 * r + 2]):
            dn1 += w[q] * fy[idx[q]]
        dn0 += bconst[r, 0] * tf
        dn1 += bconst[r, 1] * tf
        dt0 = dtau[r, 0] * tf
        dt1 = dtau[r, 1] * tf
        # grad[k][l] = d u_k / d x_l
        g00 = nu[r, 0] * dn0 + tau[r, 0] * dt0
        g01 = nu[r, 1] * dn0 + tau[r, 1] * dt0
        g10 = nu[r, 0] * dn1 + tau[r, 0] * dt1
        g11 = nu[r, 1] * dn1 + tau[r, 1] * dt1
        div = g00 + g11
        # traction w.r.t. the outward normal
        n0 = -nu[r, 0]
        n1 = -nu[r, 1]
        s00 = lam_r[r] * div + 2.0 * mu_r[r] * g00
        s11 = lam_r[r] * div + 2.0 * mu_r[r] * g11
        s01 = mu_r[r] * (g01 + g10)
        out[r, 0] = s00 * n0 + s01 * n1
        out[r, 1] = s01 * n0 + s11 * n1


@numba.njit(cache=True)
def _energy(vx, vy, sxx, syy, sxy, pxx, pyy, pxy, bvx, bvy, lam, l2m, mu, ax, ay, insn, inxy, h2):
    """Leapfrog energy: kinetic at the half step, strain as the product of two stress levels."""
    nx, ny = vx.shape
    e = 0.0
    for i in range(nx):
        for j in range(ny):
            if ax[i, j] > 0.0:
                e += 0.5 * vx[i, j] ** 2 / bvx[i, j]
            if ay[i, j] > 0.0:
                e += 0.5 * vy[i, j] ** 2 / bvy[i, j]
            if insn[i, j] > 0.0:
                det = l2m[i, j] ** 2 - lam[i, j] ** 2
                exx = (l2m[i, j] * sxx[i, j] - lam[i, j] * syy[i, j]) / det
                eyy = (l2m[i, j] * syy[i, j] - lam[i, j] * sxx[i, j]) / det
                e += 0.5 * (pxx[i, j] * exx + pyy[i, j] * eyy)
            if inxy[i, j] > 0.0:
                e += 0.5 * sxy[i, j] * pxy[i, j] / mu[i, j]
    return e * h2


@numba.njit(cache=True)
def _max_abs(a):
    m = 0.0
    for v in a.ravel():
        av = abs(v)
        if not av <= 1e300:
            return np.inf
        if av > m:
            m = av
    return m


@numba.njit(cache=True)
def _run(n_steps, stride, dt, h, vx, vy, ux, uy, sxx, syy, sxy,
         bvx, bvy, lam, l2m, mu, ax, ay, vlo, vhi, slo, shi, cvx, cvy, csn, csxy,
         gx_idx, gx_bf, gx_i1, gx_w1, gx_i2, gx_w2,
         gy_idx, gy_bf, gy_i1, gy_w1, gy_i2, gy_w2,
         rf, rdot_half,
         do_trace, ptr, tidx, tw, bconst, dtau, nu, tau, lam_r, mu_r, traces,
         do_probe, px_idx, px_w, py_idx, py_w, probes,
         ck_steps, snaps, do_energy, insn, inxy, energy, check_every):
    dt_h = dt / h
    axdt = ax * dt
    aydt = ay * dt
    tbuf = np.zeros((nu.shape[0], 2))
    pxx = np.zeros_like(sxx)
    pyy = np.zeros_like(syy)
    pxy = np.zeros_like(sxy)
    n_ck = 0
    for n in range(n_steps):
        if do_energy and (n + 1) % stride == 0:
            pxx[:] = sxx
            pyy[:] = syy
            pxy[:] = sxy
        _bulk_velocity(vx, vy, sxx, syy, sxy, bvx, bvy, vlo, vhi)
        _fix_velocity(vx, vy, sxx, syy, sxy, bvx, bvy, cvx, cvy)
        _fill_ghosts(vx, gx_idx, gx_bf, gx_i1, gx_w1, gx_i2, gx_w2, rdot_half[n])
        _fill_ghosts(vy, gy_idx, gy_bf, gy_i1, gy_w1, gy_i2, gy_w2, rdot_half[n])
        _bulk_stress(vx, vy, sxx, syy, sxy, lam, l2m, mu, slo, shi)
        _fix_stress(vx, vy, sxx, syy, sxy, lam, l2m, mu, csn, csxy)
        _axpy_active(ux, vx, axdt, dt)
        _axpy_active(uy, vy, aydt, dt)
        _fill_ghosts(ux, gx_idx, gx_bf, gx_i1, gx_w1, gx_i2, gx_w2, rf[n + 1])
        _fill_ghosts(uy, gy_idx, gy_bf, gy_i1, gy_w1, gy_i2, gy_w2, rf[n + 1])
        if (n + 1) % check_every == 0:
            if _max_abs(vx) == np.inf or _max_abs(vy) == np.inf:
                return n + 1
        if (n + 1) % stride == 0:
            m = (n + 1) // stride
            if do_trace:
                _traction(ux, uy, ptr, tidx, tw, bconst, dtau, nu, tau, lam_r, mu_r, rf[n + 1], tbuf)
                traces[m] = tbuf
            if do_probe:
                fx = ux.reshape(-1)
                fy = uy.reshape(-1)
                for p in range(px_idx.shape[0]):
                    a = 0.0
                    b = 0.0
                    for q in range(4):
                        a += px_w[p, q] * fx[px_idx[p, q]]
                        b += py_w[p, q] * fy[py_idx[p, q]]
                    probes[m, p, 0] = a
                    probes[m, p, 1] = b
            if do_energy:
                energy[m] = _energy(vx, vy, sxx, syy, sxy, pxx, pyy, pxy, bvx, bvy, lam, l2m, mu, ax, ay, insn, inxy, h * h * dt_h)
            if n_ck < ck_steps.size and ck_steps[n_ck] == m:
                snaps[n_ck, 0] = ux
                snaps[n_ck, 1] = uy
                n_ck += 1
    return -1


# ----------------------------------------------------------------------

class _Prepared:
    """Grid, medium and stencils shared by all sources of one configuration."""

    def __init__(self, lame, config, with_traces=True):
        rep = check_positivity(lame)
        if not rep.passed:
            from ..elasticity import PositivityError

            raise PositivityError(rep)
        self.config = config
        self.grid = StaggeredGrid.from_config(config)
        pts = config.receiver_points() if (with_traces and config.receivers) else None
        self.medium = sample_medium(lame, self.grid, pts)
        c_max = config.c_max if config.c_max is not None else self.medium.c_max
        if c_max < self.medium.c_max * (1 - 1e-12):
            raise CFLViolationError(
                f"configured c_max={c_max:g} below the medium maximum {self.medium.c_max:g}"
            )
        self.dt, self.stride = config.time_step(c_max)
        if self.dt * self.medium.c_max / config.h > config.cfl * (1 + 1e-12):
            raise CFLViolationError("time step violates the CFL bound")
        self._kernel_args = None
        self.stencil = None
        if pts is not None:
            self.stencil = self.grid.trace_stencil(pts, degree=config.trace_degree, radius=config.trace_radius)

    def kernel_args(self):
        """Pre-scaled coefficients, row spans and low-order correction lists."""
        if self._kernel_args is None:
            g, med = self.grid, self.medium
            dt_h = self.dt / g.h
            bvx = med.bvx * dt_h * g.active_vx
            bvy = med.bvy * dt_h * g.active_vy
            lam = med.lam * dt_h * g.comp_sn
            l2m = med.l2m * dt_h * g.comp_sn
            mu = med.mu_xy * dt_h * g.comp_sxy
            vlo, vhi = _row_spans(bvx, bvy)
            slo, shi = _row_spans(l2m, mu)
            self._kernel_args = (
                bvx, bvy, lam, l2m, mu,
                g.active_vx.astype(np.float64), g.active_vy.astype(np.float64),
                vlo, vhi, slo, shi,
                _low_order_list(bvx, g.o4_vx_x, g.o4_vx_y),
                _low_order_list(bvy, g.o4_vy_x, g.o4_vy_y),
                _low_order_list(l2m, g.o4_sn_x, g.o4_sn_y),
                _low_order_list(mu, g.o4_sxy_x, g.o4_sxy_y),
            )
        return self._kernel_args


def solve_ibvp(lame, config, source, probes=None, checkpoints=(), traces=True, energy=False,
               check_every=50, prepared=None):
    """Integrate the elastic wave equation with Dirichlet datum ``source``.

    Parameters
    ----------
    lame : LameField
    config : SimulationConfig
    source : BoundarySource or None
        ``None`` runs with zero boundary data.
    probes : (P, 2) array, optional
        Interior points where displacement histories are recorded.
    checkpoints : sequence of float
        Output times at which displacement snapshots are stored.
    traces : bool
        Record boundary traction at ``config.receivers``.
    energy : bool
        Record the discrete energy at output times.
    """
    prep = prepared if prepared is not None else _Prepared(lame, config, with_traces=traces)
    g, med = prep.grid, prep.medium
    dt, stride = prep.dt, prep.stride
    n_out = config.n_out
    n_steps = (n_out - 1) * stride
    shape = g.shape
    vx, vy, ux, uy, sxx, syy, sxy = (np.zeros(shape) for _ in range(7))
    t_full = np.arange(n_steps + 1) * dt
    if source is not None:
        rf = source.time(t_full)
        rdot = source.time_dot(t_full[:-1] + 0.5 * dt)
    else:
        rf = np.zeros(n_steps + 1)
        rdot = np.zeros(n_steps)
    gt = {}
    for comp, k in (("vx", 0), ("vy", 1)):
        tab = g.ghosts[comp]
        if source is not None and tab.index.size:
            bf = source.spatial(config.domain, tab.boundary_point)[:, k] * tab.wb
        else:
            bf = np.zeros(tab.index.size)
        gt[comp] = (tab.index, bf, tab.i1, tab.w1, tab.i2, tab.w2)

    do_trace = bool(traces and prep.stencil is not None)
    R = len(config.receivers) if do_trace else 1
    tr = np.zeros((n_out, R, 2))
    if do_trace:
        st = prep.stencil
        if source is not None:
            B = st.bpts.shape[1]
            fb = source.spatial(config.domain, st.bpts.reshape(-1, 2)).reshape(R, B, 2)
            bconst = np.einsum("rkb,rbk->rk", st.bw, fb)
            dtau = source.spatial_tangential_derivative(config.domain, st.points)
        else:
            bconst = np.zeros((R, 2))
            dtau = np.zeros((R, 2))
        targs = (st.ptr, st.idx, st.w, bconst, dtau, st.nu, st.tau, med.lam_r, med.mu_r)
    else:
        z2 = np.zeros((1, 2))
        targs = (np.zeros(3, np.int64), np.zeros(0, np.int64), np.zeros(0), z2, z2, z2, z2,
                 np.ones(1), np.ones(1))

    do_probe = probes is not None and len(probes) > 0
    if do_probe:
        px_idx, px_w = g.probe_weights(probes, "vx")
        py_idx, py_w = g.probe_weights(probes, "vy")
        pr = np.zeros((n_out, len(probes), 2))
    else:
        px_idx = py_idx = np.zeros((0, 4), np.int64)
        px_w = py_w = np.zeros((0, 4))
        pr = np.zeros((1, 1, 2))
    ck = np.array(sorted(int(round(t / config.dt_out)) for t in checkpoints), np.int64)
    snaps = np.zeros((ck.size, 2) + shape)
    en = np.zeros(n_out)
    f = lambda m: np.ascontiguousarray(m, dtype=np.float64)
    k = prep.kernel_args()
    stop = _run(
        n_steps, stride, dt, g.h, vx, vy, ux, uy, sxx, syy, sxy,
        *k,
        *gt["vx"], *gt["vy"], rf, rdot,
        do_trace, *targs, tr,
        do_probe, px_idx, px_w, py_idx, py_w, pr,
        ck, snaps, bool(energy), f(g.inside("sn") & g.comp_sn), f(g.inside("sxy") & g.comp_sxy), en, check_every,
    )
    if stop >= 0:
        raise SolverDivergenceError(
            f"non-finite velocity after step {stop} (t = {stop * dt:.6g}); "
            f"dt = {dt:.4g}, h = {g.h:.4g}, c_max = {med.c_max:.4g}"
        )
    wf = WaveField(config, g, source, dt, config.times)
    if do_trace:
        wf.traces = tr
    if do_probe:
        wf.probes = pr
    if energy:
        wf.energy = en
    wf.snapshots = {int(m): (snaps[q, 0], snaps[q, 1]) for q, m in enumerate(ck)}
    return wf


def neumann_trace(wavefield, lame, receivers, datum=None, t_index=None):
    """Boundary traction ``sigma(u) nu`` at ``receivers`` from stored displacement snapshots.

    Normal derivatives come from one-sided least-squares stencils over
    interior nodes plus the Dirichlet datum; tangential derivatives are
    those of the datum.  ``datum`` defaults to the run's source and must
    provide ``spatial``, ``spatial_tangential_derivative`` and ``time``.

    Returns ``{time index: (R, 2) traction}``.
    """
    g = wavefield.grid
    config = wavefield.config
    dom = config.domain
    pts = np.atleast_2d(np.asarray(receivers, float))
    st = g.trace_stencil(pts, degree=config.trace_degree, radius=config.trace_radius)
    datum = wavefield.source if datum is None else datum
    R, B = st.bpts.shape[:2]
    if datum is not None:
        fb = datum.spatial(dom, st.bpts.reshape(-1, 2)).reshape(R, B, 2)
        bconst = np.einsum("rkb,rbk->rk", st.bw, fb)
        dtau = datum.spatial_tangential_derivative(dom, st.points)
    else:
        bconst = np.zeros((R, 2))
        dtau = np.zeros((R, 2))
    lam_r = np.asarray(lame.lam(pts), float)
    mu_r = np.asarray(lame.mu(pts), float)
    out = {}
    keys = wavefield.snapshots.keys() if t_index is None else [t_index]
    for m in keys:
        ux, uy = wavefield.snapshots[m]
        tf = float(datum.time(np.array(m * config.dt_out))) if datum is not None else 0.0
        buf = np.zeros((R, 2))
        _traction(np.ascontiguousarray(ux), np.ascontiguousarray(uy), st.ptr, st.idx, st.w, bconst, dtau,
                  st.nu, st.tau, lam_r, mu_r, tf, buf)
        out[m] = buf
    return out


def energy_increase(wavefield, crossing_time, average_periods=1.0):
    """Largest relative energy rise within one crossing time after source shutoff.

    The energy is first averaged over ``average_periods`` wavelet periods:
    energy held in cut cells next to the embedded boundary is not part of the
    interior sum and is exchanged at the wave period as fronts reflect.

    Returns ``max over t1 < t2 <= t1 + crossing_time of E(t2) / E(t1) - 1``.
    """
    if wavefield.energy is None:
        raise ValueError("the run did not record energy")
    src = wavefield.source
    dt_out = wavefield.config.dt_out
    after = wavefield.times >= wavefield.shutoff_time()
    E = wavefield.energy[after]
    t = wavefield.times[after]
    if src is not None and average_periods > 0:
        w = max(int(round(average_periods / (src.f0 * dt_out))), 1)
        E = np.convolve(E, np.ones(w) / w, mode="valid")
        t = t[: E.size]
    worst = 0.0
    for i in range(E.size - 1):
        j = np.searchsorted(t, t[i] + crossing_time, side="right")
        if j > i + 1 and E[i] > 0:
            worst = max(worst, float(E[i + 1 : j].max() / E[i] - 1.0))
    return worst
