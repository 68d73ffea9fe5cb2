"""Fast-marching eikonal solver with a discrete adjoint.

The solver works on a 2D Cartesian grid with nodal slowness ``s = 1 / c``.
Each node's final value is produced by one local update from already
accepted neighbours; the update is recorded (neighbour indices and partial
derivatives) so that the exact derivative of any linear functional of the
arrival times with respect to the nodal slowness can be back-propagated in
reverse acceptance order.
"""
from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np

from ..fields import GridField


class NonPositiveSpeedError(ValueError):
    pass


@dataclass(frozen=True)
class EikonalGrid:
    """Regular node grid; node ``(i, j)`` sits at ``origin + h * (i, j)``."""

    origin: np.ndarray
    h: float
    shape: tuple

    @classmethod
    def covering(cls, domain, n, margin_cells=3):
        """``n`` nodes across the widest axis of ``domain`` plus ``margin_cells`` on each side."""
        if domain.dim != 2:
            raise NotImplementedError("the eikonal solver supports 2D domains only")
        a = domain.semi_axes
        h = 2.0 * float(a.max()) / (n - 1)
        counts = [int(np.ceil(2.0 * ai / h - 1e-9)) + 1 + 2 * margin_cells for ai in a]
        origin = domain.center - 0.5 * h * (np.array(counts) - 1)
        return cls(origin, h, tuple(counts))

    @classmethod
    def box(cls, lo, hi, n):
        lo = np.asarray(lo, float)
        hi = np.asarray(hi, float)
        h = float(np.max(hi - lo)) / (n - 1)
        counts = [int(round((b - a) / h)) + 1 for a, b in zip(lo, hi)]
        return cls(lo, h, tuple(counts))

    @property
    def size(self):
        return self.shape[0] * self.shape[1]

    def nodes(self):
        i, j = np.meshgrid(np.arange(self.shape[0]), np.arange(self.shape[1]), indexing="ij")
        return self.origin + self.h * np.stack([i, j], axis=-1)

    def interp_weights(self, points):
        """Bilinear weights: flat node indices and weights, each of shape ``(P, 4)``."""
        p = np.atleast_2d(np.asarray(points, float))
        u = (p - self.origin) / self.h
        base = np.floor(u).astype(np.int64)
        base[:, 0] = np.clip(base[:, 0], 0, self.shape[0] - 2)
        base[:, 1] = np.clip(base[:, 1], 0, self.shape[1] - 2)
        f = u - base
        idx = np.empty((p.shape[0], 4), np.int64)
        w = np.empty((p.shape[0], 4))
        ny = self.shape[1]
        for q, (di, dj) in enumerate(((0, 0), (1, 0), (0, 1), (1, 1))):
            idx[:, q] = (base[:, 0] + di) * ny + base[:, 1] + dj
            wi = f[:, 0] if di else 1.0 - f[:, 0]
            wj = f[:, 1] if dj else 1.0 - f[:, 1]
            w[:, q] = wi * wj
        return idx, w

    def field(self, values, order=1):
        """Wrap nodal ``values`` as an interpolating scalar field."""
        return GridField(self.origin, self.h, np.asarray(values, float).reshape(self.shape), order=order)


# ----------------------------------------------------------------------
# heap of (key, node) pairs with lazy deletion

@numba.njit(cache=True)
def _heap_push(keys, vals, n, key, val):
    k = n
    keys[k] = key
    vals[k] = val
    while k > 0:
        p = (k - 1) // 2
        if keys[p] <= keys[k]:
            break
        keys[p], keys[k] = keys[k], keys[p]
        vals[p], vals[k] = vals[k], vals[p]
        k = p
    return n + 1


@numba.njit(cache=True)
def _heap_pop(keys, vals, n):
    key = keys[0]
    val = vals[0]
    n -= 1
    keys[0] = keys[n]
    vals[0] = vals[n]
    k = 0
    while True:
        l = 2 * k + 1
        if l >= n:
            break
        c = l
        if l + 1 < n and keys[l + 1] < keys[l]:
            c = l + 1
        if keys[k] <= keys[c]:
            break
        keys[c], keys[k] = keys[k], keys[c]
        vals[c], vals[k] = vals[k], vals[c]
        k = c
    return key, val, n


@numba.njit(cache=True)
def _axis_term(t, state, idx, step, lim_ok1, lim_ok2, second_order):
    """Upwind reference value along one axis direction.

    Returns ``(alpha, beta, n1, n2)``; ``alpha = 0`` when the neighbour is
    not accepted.  ``beta = t1`` at first order and ``(4 t1 - t2) / 3`` at
    second order.
    """
    if not lim_ok1:
        return 0.0, 0.0, -1, -1
    n1 = idx + step
    if state[n1] != 2:
        return 0.0, 0.0, -1, -1
    t1 = t[n1]
    if second_order and lim_ok2:
        n2 = idx + 2 * step
        if state[n2] == 2 and t[n2] <= t1:
            return 1.5, (4.0 * t1 - t[n2]) / 3.0, n1, n2
    return 1.0, t1, n1, -1


@numba.njit(cache=True)
def _local_update(t, state, s, idx, nx, ny, h, second_order, nb, dw):
    """Candidate value at ``idx`` from accepted neighbours; fills ``nb``/``dw``, returns ``(t, dt/ds)``."""
    i = idx // ny
    j = idx - i * ny
    # x axis: pick the smaller upwind side
    a1, b1, p1, q1 = _axis_term(t, state, idx, -ny, i >= 1, i >= 2, second_order)
    a2, b2, p2, q2 = _axis_term(t, state, idx, ny, i + 1 < nx, i + 2 < nx, second_order)
    if a1 > 0.0 and (a2 == 0.0 or t[p1] <= t[p2]):
        ax, bx, px, qx = a1, b1, p1, q1
    else:
        ax, bx, px, qx = a2, b2, p2, q2
    a1, b1, p1, q1 = _axis_term(t, state, idx, -1, j >= 1, j >= 2, second_order)
    a2, b2, p2, q2 = _axis_term(t, state, idx, 1, j + 1 < ny, j + 2 < ny, second_order)
    if a1 > 0.0 and (a2 == 0.0 or t[p1] <= t[p2]):
        ay, by, py, qy = a1, b1, p1, q1
    else:
        ay, by, py, qy = a2, b2, p2, q2
    sh = s[idx] * h
    best = np.inf
    dtx = 0.0
    dty = 0.0
    dts = 0.0
    if ax > 0.0 and ay > 0.0:
        A = ax * ax + ay * ay
        B = ax * ax * bx + ay * ay * by
        C = ax * ax * bx * bx + ay * ay * by * by - sh * sh
        disc = B * B - A * C
        if disc >= 0.0:
            tt = (B + np.sqrt(disc)) / A
            if tt >= bx and tt >= by:
                D = ax * ax * (tt - bx) + ay * ay * (tt - by)
                best = tt
                dtx = ax * ax * (tt - bx) / D
                dty = ay * ay * (tt - by) / D
                dts = s[idx] * h * h / D
    if best == np.inf:
        if ax > 0.0:
            tt = bx + sh / ax
            if tt < best:
                best = tt
                dtx, dty, dts = 1.0, 0.0, h / ax
        if ay > 0.0:
            tt = by + sh / ay
            if tt < best:
                best = tt
                dtx, dty, dts = 0.0, 1.0, h / ay
    for q in range(4):
        nb[q] = -1
        dw[q] = 0.0
    if dtx != 0.0:
        if qx >= 0:
            nb[0], dw[0] = px, dtx * 4.0 / 3.0
            nb[1], dw[1] = qx, -dtx / 3.0
        else:
            nb[0], dw[0] = px, dtx
    if dty != 0.0:
        if qy >= 0:
            nb[2], dw[2] = py, dty * 4.0 / 3.0
            nb[3], dw[3] = qy, -dty / 3.0
        else:
            nb[2], dw[2] = py, dty
    return best, dts


@numba.njit(cache=True)
def _fmm(s, mask, nx, ny, h, init_idx, init_t, init_ds, second_order, t, order, NB, DW, DS):
    N = nx * ny
    state = np.zeros(N, np.int8)  # 0 far, 1 trial, 2 accepted
    for k in range(N):
        t[k] = np.inf
        DS[k] = 0.0
        for q in range(4):
            NB[k, q] = -1
            DW[k, q] = 0.0
    cap = 8 * N + 16
    keys = np.empty(cap)
    vals = np.empty(cap, np.int64)
    n_heap = 0
    n_acc = 0
    for k in range(init_idx.size):
        idx = init_idx[k]
        t[idx] = init_t[k]
        DS[idx] = init_ds[k]
        state[idx] = 2
        order[n_acc] = idx
        n_acc += 1
    nb = np.empty(4, np.int64)
    dw = np.empty(4)
    # seed the trial band around the initial set
    for k in range(init_idx.size):
        idx = init_idx[k]
        i = idx // ny
        j = idx - i * ny
        for di, dj in ((-1, 0), (1, 0), (0, -1), (0, 1)):
            ii = i + di
            jj = j + dj
            if ii < 0 or jj < 0 or ii >= nx or jj >= ny:
                continue
            m = ii * ny + jj
            if not mask[m] or state[m] == 2:
                continue
            tt, dts = _local_update(t, state, s, m, nx, ny, h, second_order, nb, dw)
            if tt < t[m]:
                t[m] = tt
                DS[m] = dts
                for q in range(4):
                    NB[m, q] = nb[q]
                    DW[m, q] = dw[q]
                state[m] = 1
                n_heap = _heap_push(keys, vals, n_heap, tt, m)
    while n_heap > 0:
        key, idx, n_heap = _heap_pop(keys, vals, n_heap)
        if state[idx] == 2 or key > t[idx]:
            continue
        state[idx] = 2
        order[n_acc] = idx
        n_acc += 1
        i = idx // ny
        j = idx - i * ny
        for di, dj in ((-1, 0), (1, 0), (0, -1), (0, 1)):
            ii = i + di
            jj = j + dj
            if ii < 0 or jj < 0 or ii >= nx or jj >= ny:
                continue
            m = ii * ny + jj
            if not mask[m] or state[m] == 2:
                continue
            tt, dts = _local_update(t, state, s, m, nx, ny, h, second_order, nb, dw)
            if tt < t[m]:
                t[m] = tt
                DS[m] = dts
                for q in range(4):
                    NB[m, q] = nb[q]
                    DW[m, q] = dw[q]
                state[m] = 1
                if n_heap >= cap:
                    return -1
                n_heap = _heap_push(keys, vals, n_heap, tt, m)
    return n_acc


@numba.njit(cache=True)
def _adjoint(order, n_acc, NB, DW, DS, lam):
    """Back-propagate seeds ``lam`` of shape ``(N, K)``; returns ``d/ds`` of shape ``(N, K)``."""
    N, K = lam.shape
    g = np.zeros((N, K))
    for a in range(n_acc - 1, -1, -1):
        idx = order[a]
        for k in range(K):
            li = lam[idx, k]
            if li == 0.0:
                continue
            g[idx, k] += li * DS[idx]
            for q in range(4):
                nbq = NB[idx, q]
                if nbq >= 0:
                    lam[nbq, k] += li * DW[idx, q]
    return g


# ----------------------------------------------------------------------

@dataclass
class EikonalField:
    """First-arrival times on an :class:`EikonalGrid` from one source point.

    ``t`` is ``inf`` at nodes outside the computational mask.  The
    remaining attributes record the update stencils used by
    :meth:`gradient`.
    """

    grid: EikonalGrid
    source: np.ndarray
    t: np.ndarray
    order: np.ndarray
    n_accepted: int
    nb: np.ndarray
    dw: np.ndarray
    ds: np.ndarray

    def at(self, points):
        idx, w = self.grid.interp_weights(points)
        return np.sum(self.t.ravel()[idx] * w, axis=1)

    def gradient(self, points, weights=None):
        """Derivatives of the interpolated times at ``points`` w.r.t. nodal slowness.

        Returns ``(P, N)``, or ``(N,)`` contracted with ``weights`` of shape
        ``(P,)`` when given.
        """
        idx, w = self.grid.interp_weights(points)
        N = self.grid.size
        if weights is None:
            lam = np.zeros((N, idx.shape[0]))
            for p in range(idx.shape[0]):
                np.add.at(lam[:, p], idx[p], w[p])
        else:
            lam = np.zeros((N, 1))
            np.add.at(lam[:, 0], idx.ravel(), (w * np.asarray(weights, float)[:, None]).ravel())
        g = _adjoint(self.order, self.n_accepted, self.nb, self.dw, self.ds, lam)
        return g[:, 0] if weights is not None else g.T


def nodal_slowness(speed, grid):
    """Slowness ``1 / c`` at the grid nodes from a field, a constant or nodal speeds."""
    if np.isscalar(speed):
        c = np.full(grid.shape, float(speed))
    elif isinstance(speed, np.ndarray):
        c = np.asarray(speed, float).reshape(grid.shape)
    else:
        c = np.asarray(speed(grid.nodes().reshape(-1, 2)), float).reshape(grid.shape)
    if not np.all(c > 0.0):
        raise NonPositiveSpeedError("speed must be positive at every node")
    return 1.0 / c


def eikonal_solve(speed, source, grid=None, domain=None, n=201, band_cells=2.0, init_radius_cells=6.0,
                  second_order=True, slowness=None, mask=None):
    """First-arrival times ``t`` with ``|grad t| = 1 / c`` and ``t(source) = 0``.

    Parameters
    ----------
    speed : float, ndarray or scalar field
        Speed ``c``; ignored when nodal ``slowness`` is given.
    source : (2,) array
    grid : EikonalGrid, optional
        Defaults to :meth:`EikonalGrid.covering` of ``domain`` with ``n`` nodes.
    domain : Domain, optional
        Restricts marching to nodes with signed distance below
        ``band_cells * h``; without it the whole grid is used.
    init_radius_cells : float
        Nodes within this radius of the source are initialised with
        ``|x - source| * s(x)``.
    second_order : bool
        Use second-order one-sided differences where two accepted upwind
        nodes allow it.
    mask : ndarray of bool, optional
        Precomputed computational region (overrides ``domain``/``band_cells``).
    """
    if grid is None:
        if domain is None:
            raise ValueError("either a grid or a domain is required")
        grid = EikonalGrid.covering(domain, n)
    s = nodal_slowness(speed, grid) if slowness is None else np.asarray(slowness, float).reshape(grid.shape)
    if not np.all(np.isfinite(s)) or not np.all(s > 0.0):
        raise NonPositiveSpeedError("slowness must be positive and finite")
    X = grid.nodes().reshape(-1, 2)
    if mask is not None:
        mask = np.asarray(mask, bool).ravel()
    elif domain is not None:
        mask = domain.signed_distance(X) <= band_cells * grid.h
    else:
        mask = np.ones(X.shape[0], bool)
    source = np.asarray(source, float)
    r = np.linalg.norm(X - source, axis=1)
    init = np.nonzero(mask & (r <= init_radius_cells * grid.h))[0]
    if init.size == 0:
        raise ValueError("source lies outside the computational region")
    sf = s.ravel()
    nx, ny = grid.shape
    N = nx * ny
    t = np.empty(N)
    order = np.empty(N, np.int64)
    NB = np.empty((N, 4), np.int64)
    DW = np.empty((N, 4))
    DS = np.empty(N)
    n_acc = _fmm(sf, mask, nx, ny, grid.h, init.astype(np.int64), r[init] * sf[init], r[init].copy(),
                 bool(second_order), t, order, NB, DW, DS)
    if n_acc < 0:
        raise RuntimeError("fast-marching heap overflow")
    return EikonalField(grid, source, t.reshape(grid.shape), order, n_acc, NB, DW, DS)
