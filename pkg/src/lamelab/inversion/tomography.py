"""Conformal travel-time tomography: Gauss-Newton on nodal slowness."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.sparse import coo_matrix, vstack
from scipy.sparse.linalg import lsqr

from ..io import dumps
from .eikonal import EikonalGrid, eikonal_solve, nodal_slowness

log = logging.getLogger(__name__)


class InversionDivergenceError(RuntimeError):
    def __init__(self, message, history):
        super().__init__(message)
        self.history = history


# ----------------------------------------------------------------------

class TravelTimeModel:
    """Predicted boundary travel times for nodal slowness on an eikonal grid.

    Each datum ``(i, j)`` is modelled symmetrically as the mean of the
    first-arrival time from ``z_i`` read at ``z_j`` and from ``z_j`` read at
    ``z_i``, so the model does not depend on how the boundary samples are
    labelled.
    """

    def __init__(self, grid, domain, points, pairs, band_cells=2.0):
        self.grid = grid
        self.domain = domain
        self.points = np.asarray(points, float)
        self.pairs = np.asarray(pairs, np.int64).reshape(-1, 2)
        self.band_cells = band_cells
        self.sources = np.unique(self.pairs.ravel())
        # for each source: receivers and (datum, weight) slots
        self._links = {int(k): [] for k in self.sources}
        for q, (i, j) in enumerate(self.pairs):
            self._links[int(i)].append((int(j), q))
            self._links[int(j)].append((int(i), q))
        X = grid.nodes().reshape(-1, 2)
        self.mask = domain.signed_distance(X) <= band_cells * grid.h

    @property
    def n_data(self):
        return self.pairs.shape[0]

    def predict(self, slowness, jacobian=False):
        """Times for every pair, and optionally the sparse Jacobian ``(n_data, N)``."""
        T = np.zeros(self.n_data)
        rows, cols, vals = [], [], []
        for k in self.sources:
            E = eikonal_solve(None, self.points[k], grid=self.grid, slowness=slowness, mask=self.mask)
            links = self._links[int(k)]
            rec = self.points[[j for j, _ in links]]
            slots = np.array([q for _, q in links])
            np.add.at(T, slots, 0.5 * E.at(rec))
            if jacobian:
                G = E.gradient(rec)
                r_idx, c_idx = np.nonzero(G)
                rows.append(slots[r_idx])
                cols.append(c_idx)
                vals.append(0.5 * G[r_idx, c_idx])
        if not jacobian:
            return T, None
        J = coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                       shape=(self.n_data, self.grid.size)).tocsr()
        return T, J


def difference_operator(grid, mask):
    """Sparse forward differences ``s_i - s_j`` over grid edges joining two masked nodes."""
    nx, ny = grid.shape
    idx = np.arange(grid.size).reshape(grid.shape)
    m = mask.reshape(grid.shape)
    rows, cols, vals = [], [], []
    r = 0
    for a, b in (
        (idx[:-1, :], idx[1:, :]),
        (idx[:, :-1], idx[:, 1:]),
    ):
        ok = m.ravel()[a.ravel()] & m.ravel()[b.ravel()]
        ea = a.ravel()[ok]
        eb = b.ravel()[ok]
        n = ea.size
        rr = r + np.arange(n)
        rows += [rr, rr]
        cols += [ea, eb]
        vals += [np.ones(n), -np.ones(n)]
        r += n
    return coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(r, grid.size)).tocsr()


def regularizer(slowness, D):
    """``|D s|^2``, the discrete ``integral |grad s|^2``, and its gradient."""
    Ds = D @ slowness
    return float(Ds @ Ds), 2.0 * (D.T @ Ds)


# ----------------------------------------------------------------------

@dataclass
class InversionResult:
    """Outcome of :func:`invert_conformal`.

    Attributes
    ----------
    grid : EikonalGrid
    slowness : ndarray, shape (N,)
    mask : ndarray of bool
        Nodes inside the computational band; values elsewhere are unused.
    reg : float
        Regularisation weight used for the returned estimate.
    history : list of dict
        Per-iteration log records.
    status : str
        ``"converged"``, ``"stagnated"`` or ``"max_iter"``.
    """

    grid: EikonalGrid
    slowness: np.ndarray
    mask: np.ndarray
    reg: float
    history: list
    status: str
    initial_residual: float
    final_residual: float
    data_norm: float
    scan: list = field(default_factory=list)
    noise_level: float = 0.0

    @property
    def speed(self):
        return 1.0 / self.slowness

    def speed_field(self):
        return self.grid.field(self.speed.reshape(self.grid.shape), order=1)

    def residual_reduction(self):
        return self.initial_residual / self.final_residual if self.final_residual > 0 else math.inf

    def relative_error(self, truth, domain, fraction=0.9):
        """Relative L2 error of the speed on nodes within ``fraction`` of the domain size."""
        X = self.grid.nodes().reshape(-1, 2)
        inner = domain.level(domain.center + (X - domain.center) / fraction) <= 0.0
        c_true = np.asarray(truth(X) if callable(truth) else np.full(X.shape[0], float(truth)), float)
        e = self.speed[inner] - c_true[inner]
        return float(np.sqrt(np.sum(e * e) / np.sum(c_true[inner] ** 2)))

    def mean_speed(self, domain, fraction=0.9):
        X = self.grid.nodes().reshape(-1, 2)
        inner = domain.level(domain.center + (X - domain.center) / fraction) <= 0.0
        return float(np.mean(self.speed[inner]))

    def write_log(self, path):
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w") as fh:
            for rec in self.history:
                fh.write(dumps(rec, indent=0) + "\n")
        return path


def table_pairs(table):
    """Unordered finite off-diagonal pairs ``(i, j)``, ``i < j``, and their averaged values."""
    d = table.d
    m = d.shape[0]
    iu, ju = np.triu_indices(m, 1)
    vals = []
    pairs = []
    for i, j in zip(iu, ju):
        a, b = d[i, j], d[j, i]
        if np.isfinite(a) and np.isfinite(b):
            v = 0.5 * (a + b)
        elif np.isfinite(a):
            v = a
        elif np.isfinite(b):
            v = b
        else:
            continue
        pairs.append((i, j))
        vals.append(v)
    return np.array(pairs, np.int64).reshape(-1, 2), np.array(vals)


def _gauss_newton(model, data, s0, reg, D, floor, max_iter, tol, damping0, history, log_fh, tag, stall=1e-3):
    """Levenberg-Marquardt damped Gauss-Newton; accepted steps never increase the objective.

    Stops when the relative data residual drops below ``tol``, after
    ``max_iter`` iterations, or once three consecutive accepted steps each
    lower the objective by less than the fraction ``stall``.
    """
    mask = model.mask
    free = np.nonzero(mask)[0]
    s = s0.copy()
    T, J = model.predict(s, jacobian=True)
    r = T - data
    R, _ = regularizer(s, D)
    phi = float(r @ r) + reg * R
    dnorm = float(np.linalg.norm(data))
    damping = damping0
    n_increase = 0
    n_slow = 0
    prev_res = float(np.linalg.norm(r))
    status = "max_iter"
    Df = D[:, free]
    sq = math.sqrt(reg)
    for it in range(1, max_iter + 1):
        rel = float(np.linalg.norm(r)) / dnorm
        if rel < tol:
            status = "converged"
            break
        A = vstack([J[:, free], sq * Df], format="csr")
        b = np.concatenate([-r, -sq * (D @ s)])
        accepted = False
        for _ in range(12):
            step = lsqr(A, b, damp=math.sqrt(damping), atol=1e-10, btol=1e-10, iter_lim=200)[0]
            s_try = s.copy()
            s_try[free] = np.maximum(s[free] + step, floor)
            T_try, J_try = model.predict(s_try, jacobian=True)
            r_try = T_try - data
            R_try, _ = regularizer(s_try, D)
            phi_try = float(r_try @ r_try) + reg * R_try
            if phi_try < phi:
                accepted = True
                break
            damping *= 4.0
        if not accepted:
            status = "stagnated"
            break
        step_norm = float(np.linalg.norm(s_try - s))
        decrease = (phi - phi_try) / phi if phi > 0 else 0.0
        s, T, J, r, phi = s_try, T_try, J_try, r_try, phi_try
        damping = max(damping / 3.0, 1e-12 * damping0)
        res = float(np.linalg.norm(r))
        n_increase = n_increase + 1 if res > prev_res else 0
        prev_res = res
        rec = {
            "stage": tag,
            "iteration": it,
            "residual": res,
            "relative_residual": res / dnorm,
            "objective": phi,
            "step_norm": step_norm,
            "reg_weight": reg,
            "damping": damping,
        }
        history.append(rec)
        if log_fh is not None:
            log_fh.write(dumps(rec, indent=0) + "\n")
        if n_increase >= 5:
            raise InversionDivergenceError("data residual increased over 5 consecutive iterations", history)
        n_slow = n_slow + 1 if decrease < stall else 0
        if n_slow >= 3:
            status = "stagnated"
            break
    return s, r, status


def invert_conformal(table, domain, init, reg=None, n_grid=81, max_iter=100, tol=1e-6,
                     noise_level=None, reg_scan=(1e-8, 1e-7, 1e-6, 1e-5, 1e-4), discrepancy_factor=1.5,
                     floor_fraction=1e-3, log_path=None):
    """Recover a speed ``c`` (with ``g = c^-2 delta``) from a boundary travel-time table.

    Minimises ``sum (T_model - d)^2 + reg * integral |grad(1/c)|^2`` over
    nodal slowness with damped Gauss-Newton steps (LSQR solves, adjoint
    Jacobians) and projection onto ``s >= floor_fraction * min(s_init)``.

    Parameters
    ----------
    table : TravelTimeTable
        Finite entries are used; ``nan`` pairs are ignored.
    domain : Domain
    init : float or scalar field
        Initial speed.
    reg : float, optional
        Fixed regularisation weight.  When omitted, each relative weight in
        ``reg_scan`` (scaled by ``n_data * mean(d^2)``) is tried from the
        largest down, each warm-started from the previous estimate, and the
        first whose RMS relative misfit stays below
        ``discrepancy_factor * noise_level`` is kept (the smallest misfit if
        none does).
    noise_level : float, optional
        Relative data noise for the discrepancy rule.  Defaults to the
        larger of the table's relative reciprocity defect and the relative
        change of the initial-model prediction between grids with ``n_grid``
        and ``2 n_grid - 1`` nodes (a discretisation error estimate).
    """
    grid = EikonalGrid.covering(domain, n_grid)
    pairs, data = table_pairs(table)
    if pairs.shape[0] == 0:
        raise ValueError("the table has no finite off-diagonal entries")
    model = TravelTimeModel(grid, domain, table.points, pairs)
    s0 = nodal_slowness(init, grid).ravel()
    floor = floor_fraction * float(s0[model.mask].min())
    D = difference_operator(grid, model.mask)
    T0, J0 = model.predict(s0, jacobian=True)
    r0 = float(np.linalg.norm(T0 - data))
    scale = pairs.shape[0] * float(np.mean(data**2))
    col = np.asarray(J0[:, model.mask].multiply(J0[:, model.mask]).sum(axis=0)).ravel()
    damping0 = 1e-2 * float(np.mean(col)) if np.any(col > 0) else 1.0

    if noise_level is None:
        rel_asym = table.asymmetry / float(np.mean(np.abs(data)))
        fine_grid = EikonalGrid.covering(domain, 2 * n_grid - 1)
        fine = TravelTimeModel(fine_grid, domain, table.points, pairs)
        T0f, _ = fine.predict(nodal_slowness(init, fine_grid).ravel())
        disc = float(np.sqrt(np.mean(((T0 - T0f) / np.abs(T0f)) ** 2)))
        noise_level = max(rel_asym, disc)

    fh = None
    if log_path is not None:
        Path(log_path).parent.mkdir(parents=True, exist_ok=True)
        fh = open(log_path, "w")
    try:
        history = []
        # weights descend with warm starts; the first admissible one is the largest
        candidates = [reg] if reg is not None else sorted((w * scale for w in reg_scan), reverse=True)
        scan = []
        best = None
        s_start = s0
        for k, lam in enumerate(candidates):
            tag = f"reg[{k}]"
            s, r, status = _gauss_newton(model, data, s_start, lam, D, floor, max_iter, tol, damping0,
                                         history, fh, tag)
            rms_rel = float(np.sqrt(np.mean((r / data) ** 2)))
            scan.append({"reg_weight": lam, "rms_relative_misfit": rms_rel, "status": status,
                         "residual": float(np.linalg.norm(r))})
            if best is None or rms_rel < best[4]:
                best = (lam, s, r, status, rms_rel)
            if reg is None and rms_rel <= discrepancy_factor * noise_level:
                best = (lam, s, r, status, rms_rel)
                break
            s_start = s
        best = best[:4]
        lam, s, r, status = best
        chosen = {"stage": "selected", "reg_weight": lam, "noise_level": noise_level,
                  "residual": float(np.linalg.norm(r))}
        history.append(chosen)
        if fh is not None:
            fh.write(dumps(chosen, indent=0) + "\n")
    finally:
        if fh is not None:
            fh.close()
    s_out = s.copy()
    s_out[~model.mask] = s0[~model.mask]
    return InversionResult(grid, s_out, model.mask, lam, history, status, r0, float(np.linalg.norm(r)),
                           float(np.linalg.norm(data)), scan, noise_level)


# ----------------------------------------------------------------------

def gradient_selfcheck(n_grid=19, n_sources=3, n_nodes=10, seed=0, eps=1e-6, domain=None, speed=1.0,
                       perturbation=0.05):
    """Adjoint gradient of the data misfit versus central finite differences.

    Uses a grid of at most ``20 x 20`` nodes and ``n_sources`` boundary
    sources.  Returns ``(max relative error, details)`` over ``n_nodes``
    random nodes inside the band.
    """
    from ..domain import Domain

    if n_grid > 20 or n_grid < 10:
        raise ValueError("the self-check runs on grids of 10 to 20 nodes per axis")
    domain = Domain.disk(1.0) if domain is None else domain
    rng = np.random.default_rng(seed)
    grid = EikonalGrid.covering(domain, n_grid - 4, margin_cells=2)
    th = 2.0 * np.pi * (np.arange(n_sources) + 0.25) / n_sources
    ths = np.concatenate([th, th + np.pi / n_sources])
    pts = domain.boundary_point(ths)
    pairs = [(i, j) for i in range(n_sources) for j in range(n_sources, 2 * n_sources)]
    model = TravelTimeModel(grid, domain, pts, pairs)
    s = nodal_slowness(speed, grid).ravel()
    s = s * (1.0 + perturbation * rng.standard_normal(s.size))
    T, J = model.predict(s, jacobian=True)
    data = T * (1.0 + 0.05 * rng.standard_normal(T.size))
    r = T - data
    grad = 2.0 * (J.T @ r)

    def misfit(sv):
        Tv, _ = model.predict(sv)
        return float(np.sum((Tv - data) ** 2))

    # nodes whose gradient is not negligible, so the relative error is meaningful
    scale = float(np.max(np.abs(grad[model.mask])))
    sensitive = np.nonzero(model.mask & (np.abs(grad) > 1e-2 * scale))[0]
    nodes = rng.choice(sensitive, size=min(n_nodes, sensitive.size), replace=False)
    errs = []
    details = []
    for k in nodes:
        sp = s.copy()
        sm = s.copy()
        sp[k] += eps
        sm[k] -= eps
        fd = (misfit(sp) - misfit(sm)) / (2.0 * eps)
        err = abs(fd - grad[k]) / abs(fd)
        errs.append(err)
        details.append({"node": int(k), "adjoint": float(grad[k]), "finite_difference": float(fd), "error": err})
    return float(max(errs)), details
