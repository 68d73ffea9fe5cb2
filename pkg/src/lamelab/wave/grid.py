"""Staggered grid geometry for the embedded-boundary elastic solver (2D).

Component layout, with node ``(i, j)`` at ``origin + (i, j) * h``::

    sxx, syy : (i,       j      )
    vx,  ux  : (i + 1/2, j      )
    vy,  uy  : (i,       j + 1/2)
    sxy      : (i + 1/2, j + 1/2)

Velocity nodes deeper than ``small_cell * h`` inside the domain are
*active* and updated by the scheme.  Stress derivatives at active velocity
nodes use fourth-order stencils when every stress node involved lies inside
the domain, second order otherwise; stress nodes use fourth order when all
velocity nodes involved are active.  Every inactive velocity node touched
by a stress stencil is a *ghost*, filled each step by quadratic
extrapolation along the grid axis closest to the inward normal through the
Dirichlet value at the boundary crossing and the first two active nodes.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

OFFSETS = {"sn": (0.0, 0.0), "vx": (0.5, 0.0), "vy": (0.0, 0.5), "sxy": (0.5, 0.5)}


@dataclass
class GhostTable:
    """Extrapolation rule ``u_g = wb * f(pb) + w1 * u[i1] + w2 * u[i2]`` per ghost."""

    index: np.ndarray  # flat index of the ghost node
    boundary_point: np.ndarray  # (G, 2)
    wb: np.ndarray
    i1: np.ndarray
    w1: np.ndarray
    i2: np.ndarray
    w2: np.ndarray


@dataclass
class TraceStencil:
    """Linear functionals for the normal derivative of ``ux``/``uy`` at receivers.

    For receiver ``r`` and component ``k`` the normal derivative is
    ``sum(w[ptr[2r+k]:ptr[2r+k+1]] * u_k.flat[idx[...]]) + boundary part``; the
    boundary part is ``sum(bw[r, k, :] * f_k(bpts[r, :]))``.
    """

    points: np.ndarray  # (R, 2)
    nu: np.ndarray  # inward normals (R, 2)
    tau: np.ndarray  # tangents (R, 2)
    ptr: np.ndarray
    idx: np.ndarray
    w: np.ndarray
    bpts: np.ndarray  # (R, B, 2) boundary pseudo-nodes
    bw: np.ndarray  # (R, B)


class StaggeredGrid:
    def __init__(self, domain, origin, h, shape, small_cell=0.5):
        self.domain = domain
        self.origin = np.asarray(origin, float)
        self.h = float(h)
        self.shape = tuple(int(s) for s in shape)
        self.small_cell = float(small_cell)
        self._build()

    @classmethod
    def from_config(cls, config):
        return cls(config.domain, config.origin, config.h, config.shape, config.small_cell)

    def positions(self, comp):
        ox, oy = OFFSETS[comp]
        i = np.arange(self.shape[0])
        j = np.arange(self.shape[1])
        X = self.origin[0] + (i[:, None] + ox) * self.h
        Y = self.origin[1] + (j[None, :] + oy) * self.h
        return np.stack(np.broadcast_arrays(X, Y), axis=-1)

    def inside(self, comp):
        return self.domain.level(self.positions(comp)) < 0.0

    # ------------------------------------------------------------------
    def _build(self):
        nx, ny = self.shape
        dom = self.domain
        h = self.h
        ins = {c: self.inside(c) for c in OFFSETS}
        edge = np.zeros(self.shape, bool)
        edge[3:-3, 3:-3] = True
        act = {}
        for c in ("vx", "vy"):
            sd = dom.signed_distance(self.positions(c).reshape(-1, 2)).reshape(self.shape)
            act[c] = (sd < -self.small_cell * h) & edge
        self.active_vx, self.active_vy = act["vx"], act["vy"]

        def shifted(a, di, dj, fill=False):
            out = np.full(a.shape, fill)
            xs = slice(max(di, 0), nx + min(di, 0))
            xd = slice(max(-di, 0), nx + min(-di, 0))
            ys = slice(max(dj, 0), ny + min(dj, 0))
            yd = slice(max(-dj, 0), ny + min(-dj, 0))
            out[xd, yd] = a[xs, ys]
            return out

        # velocity stencil orders: vx needs sxx (i-1..i+2, j) and sxy (i, j-2..j+1)
        sn, sxy = ins["sn"], ins["sxy"]
        self.o4_vx_x = shifted(sn, -1, 0) & sn & shifted(sn, 1, 0) & shifted(sn, 2, 0) & act["vx"]
        self.o4_vx_y = shifted(sxy, 0, -2) & shifted(sxy, 0, -1) & sxy & shifted(sxy, 0, 1) & act["vx"]
        # vy needs sxy (i-2..i+1, j) and syy (i, j-1..j+2)
        self.o4_vy_x = shifted(sxy, -2, 0) & shifted(sxy, -1, 0) & sxy & shifted(sxy, 1, 0) & act["vy"]
        self.o4_vy_y = shifted(sn, 0, -1) & sn & shifted(sn, 0, 1) & shifted(sn, 0, 2) & act["vy"]

        # stress nodes referenced by active velocity updates
        ax, ay = act["vx"], act["vy"]
        q4 = lambda m, di, dj: shifted(m, di, dj)
        need_sn = ax | shifted(ax, -1, 0) | ay | shifted(ay, 0, -1)
        need_sn |= shifted(self.o4_vx_x, 1, 0) | shifted(self.o4_vx_x, -2, 0)
        need_sn |= shifted(self.o4_vy_y, 0, 1) | shifted(self.o4_vy_y, 0, -2)
        need_sxy = ax | shifted(ax, 0, 1) | ay | shifted(ay, 1, 0)
        need_sxy |= shifted(self.o4_vx_y, 0, -1) | shifted(self.o4_vx_y, 0, 2)
        need_sxy |= shifted(self.o4_vy_x, -1, 0) | shifted(self.o4_vy_x, 2, 0)
        self.comp_sn = need_sn & edge
        self.comp_sxy = need_sxy & edge
        # stress orders: sn needs vx (i-2..i+1, j), vy (i, j-2..j+1)
        self.o4_sn_x = q4(ax, -2, 0) & q4(ax, -1, 0) & ax & q4(ax, 1, 0) & self.comp_sn
        self.o4_sn_y = q4(ay, 0, -2) & q4(ay, 0, -1) & ay & q4(ay, 0, 1) & self.comp_sn
        # sxy needs vx (i, j-1..j+2), vy (i-1..i+2, j)
        self.o4_sxy_y = q4(ax, 0, -1) & ax & q4(ax, 0, 1) & q4(ax, 0, 2) & self.comp_sxy
        self.o4_sxy_x = q4(ay, -1, 0) & ay & q4(ay, 1, 0) & q4(ay, 2, 0) & self.comp_sxy

        # velocity nodes read by the stress stencils
        s2, s4 = self.comp_sn, self.o4_sn_x
        read_vx = s2 | shifted(s2, 1, 0) | shifted(s4, 2, 0) | shifted(s4, -1, 0)
        s2 = self.comp_sxy
        read_vx |= s2 | shifted(s2, 0, -1) | shifted(self.o4_sxy_y, 0, 1) | shifted(self.o4_sxy_y, 0, -2)
        read_vy = self.comp_sn | shifted(self.comp_sn, 0, 1) | shifted(self.o4_sn_y, 0, 2) | shifted(self.o4_sn_y, 0, -1)
        read_vy |= self.comp_sxy | shifted(self.comp_sxy, -1, 0)
        read_vy |= shifted(self.o4_sxy_x, 1, 0) | shifted(self.o4_sxy_x, -2, 0)
        self.ghost_vx = read_vx & ~act["vx"]
        self.ghost_vy = read_vy & ~act["vy"]
        self.ghosts = {"vx": self._ghost_table("vx", self.ghost_vx, act["vx"]),
                       "vy": self._ghost_table("vy", self.ghost_vy, act["vy"])}

    def _ghost_table(self, comp, ghost, active):
        dom = self.domain
        h = self.h
        pos = self.positions(comp)
        gi, gj = np.nonzero(ghost)
        xg = pos[gi, gj]
        nu = dom.inward_normal(dom.project(xg))
        axes = np.array([[1, 0], [-1, 0], [0, 1], [0, -1]])
        k_axis = np.argmax(nu @ axes.T, axis=1)
        e = axes[k_axis].astype(float)
        # entering root of level(xg + s e) = 0
        a = dom.semi_axes
        y = (xg - dom.center) / a
        ee = e / a
        A = np.sum(ee * ee, 1)
        B = 2.0 * np.sum(y * ee, 1)
        C = np.sum(y * y, 1) - 1.0
        disc = B * B - 4 * A * C
        if np.any(disc <= 0):
            raise RuntimeError("ghost node line misses the domain")
        sb = (-B - np.sqrt(disc)) / (2 * A)
        G = gi.size
        i1 = np.zeros(G, np.int64)
        i2 = np.zeros(G, np.int64)
        w0 = np.zeros(G)
        w1 = np.zeros(G)
        w2 = np.zeros(G)
        nx, ny = self.shape
        for g in range(G):
            ks = []
            for k in range(1, 10):
                ii = gi[g] + k * axes[k_axis[g], 0]
                jj = gj[g] + k * axes[k_axis[g], 1]
                if active[ii, jj]:
                    ks.append((k, ii * ny + jj))
                    if len(ks) == 2:
                        break
            if len(ks) < 2:
                raise RuntimeError(f"no interior stencil for ghost node {comp}[{gi[g]}, {gj[g]}]")
            s0, s1, s2 = sb[g], ks[0][0] * h, ks[1][0] * h
            w0[g] = (s1 * s2) / ((s0 - s1) * (s0 - s2))
            w1[g] = (s0 * s2) / ((s1 - s0) * (s1 - s2))
            w2[g] = (s0 * s1) / ((s2 - s0) * (s2 - s1))
            i1[g], i2[g] = ks[0][1], ks[1][1]
        pb = xg + sb[:, None] * e
        return GhostTable(gi * ny + gj, pb, w0, i1, w1, i2, w2)

    # ------------------------------------------------------------------
    def trace_stencil(self, receivers, degree=4, radius=4.5, n_pseudo=9, boundary_weight=100.0, n_radii=4):
        """Weighted least-squares normal-derivative functionals at boundary receivers.

        A polynomial of total degree ``degree`` in local (normal, tangent)
        coordinates is fitted to active nodes within ``radius * h`` and to
        the Dirichlet datum at ``n_pseudo`` boundary points around the
        receiver; its normal slope at the receiver is the derivative.  Of
        the ``n_radii`` radii ``radius, radius + h/2, ...`` the one with the
        smallest total weight ``sum |w| h`` is used.
        """
        dom = self.domain
        h = self.h
        pts = np.atleast_2d(np.asarray(receivers, float))
        if np.any(np.abs(dom.level(pts)) > 1e-9):
            raise ValueError("receiver off boundary")
        nus = dom.inward_normal(pts)
        taus = dom.tangent_frame(pts)[:, 0]
        th = dom.boundary_param(pts)
        a, b = dom.semi_axes
        speed = np.sqrt((a * np.sin(th)) ** 2 + (b * np.cos(th)) ** 2)
        offs = (np.arange(n_pseudo) - (n_pseudo - 1) / 2) * h
        bpts = dom.boundary_point(th[:, None] + offs[None, :] / speed[:, None])
        powers = [(p, q) for p in range(degree + 1) for q in range(degree + 1 - p)]
        col_xi = powers.index((1, 0))
        ptr = [0]
        idx, wts = [], []
        bws = np.zeros((pts.shape[0], 2, n_pseudo))
        ny = self.shape[1]
        for r, p in enumerate(pts):
            for k, comp in enumerate(("vx", "vy")):
                act = self.active_vx if comp == "vx" else self.active_vy
                pos = self.positions(comp)
                d = np.linalg.norm(pos - p, axis=-1)
                best = None
                # near-degenerate node layouts blow up the weights; keep the best-conditioned radius
                for rad in radius + 0.5 * np.arange(n_radii):
                    sel = act & (d <= rad * h)
                    ii, jj = np.nonzero(sel)
                    X = np.concatenate([pos[ii, jj], bpts[r]])
                    loc = X - p
                    xi = loc @ nus[r] / h
                    eta = loc @ taus[r] / h
                    Amat = np.stack([xi**pp * eta**qq for pp, qq in powers], axis=1)
                    dd = np.concatenate([d[ii, jj], np.abs(offs)]) / h
                    wgt = np.exp(-((dd / (rad - 2.0)) ** 2))
                    wgt[ii.size :] *= boundary_weight
                    M = Amat.T @ (wgt[:, None] * Amat)
                    coef = np.linalg.solve(M, (Amat * wgt[:, None]).T)
                    row = coef[col_xi] / h
                    size = float(np.sum(np.abs(row))) * h
                    if best is None or size < best[0]:
                        best = (size, ii, jj, row)
                _, ii, jj, row = best
                idx.extend((ii * ny + jj).tolist())
                wts.extend(row[: ii.size].tolist())
                ptr.append(len(idx))
                bws[r, k] = row[ii.size :]
        return TraceStencil(pts, nus, taus, np.array(ptr, np.int64), np.array(idx, np.int64),
                            np.array(wts), bpts, bws)

    def probe_weights(self, points, comp):
        """Bilinear interpolation ``(idx (P,4), w (P,4))`` on a component grid."""
        ox, oy = OFFSETS[comp]
        p = np.atleast_2d(np.asarray(points, float))
        f = (p - self.origin) / self.h - np.array([ox, oy])
        i0 = np.floor(f).astype(np.int64)
        t = f - i0
        ny = self.shape[1]
        idx = np.stack([i0[:, 0] * ny + i0[:, 1], (i0[:, 0] + 1) * ny + i0[:, 1],
                        i0[:, 0] * ny + i0[:, 1] + 1, (i0[:, 0] + 1) * ny + i0[:, 1] + 1], axis=1)
        w = np.stack([(1 - t[:, 0]) * (1 - t[:, 1]), t[:, 0] * (1 - t[:, 1]),
                      (1 - t[:, 0]) * t[:, 1], t[:, 0] * t[:, 1]], axis=1)
        return idx, w
