"""Density recovery from DN data once the wave speeds are known."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..elasticity import LameField
from ..fields import CallableField, ConstantField, ScalarField, as_field
from ..wave.dn import assemble_dn_data, compare_dn

GOLDEN = 0.5 * (math.sqrt(5.0) - 1.0)


def lame_with_density(c_p, c_s, rho, domain):
    """Lame triplet with speeds ``c_p``, ``c_s`` and constant density ``rho``.

    ``lambda = rho (c_p^2 - 2 c_s^2)`` and ``mu = rho c_s^2``; speeds may be
    numbers or scalar fields.
    """
    rho = float(rho)
    if not isinstance(c_p, ScalarField) and not isinstance(c_s, ScalarField):
        cp, cs = float(c_p), float(c_s)
        return LameField.constant(rho * (cp * cp - 2.0 * cs * cs), rho * cs * cs, rho, domain)
    fp, fs = as_field(c_p), as_field(c_s)
    lam = CallableField(lambda x: rho * (fp(x) ** 2 - 2.0 * fs(x) ** 2))
    mu = CallableField(lambda x: rho * fs(x) ** 2)
    return LameField(lam, mu, ConstantField(rho), domain)


@dataclass
class DensityFit:
    """Outcome of :func:`fit_density`.

    ``scan`` lists ``(rho, discrepancy)`` for every simulated candidate in
    evaluation order.  ``unimodal`` is False when the coarse scan has more
    than one local minimum, in which case ``ambiguous`` lists the competing
    minimisers and ``rho`` is the best of them.
    """

    rho: float
    lam: float | ScalarField
    mu: float | ScalarField
    discrepancy: float
    scan: list = field(default_factory=list)
    unimodal: bool = True
    ambiguous: list = field(default_factory=list)

    def to_dict(self):
        def num(v):
            return float(v) if not isinstance(v, ScalarField) else None

        return {
            "rho": self.rho,
            "lambda": num(self.lam),
            "mu": num(self.mu),
            "discrepancy": self.discrepancy,
            "scan": [[float(r), float(d)] for r, d in self.scan],
            "unimodal": self.unimodal,
            "ambiguous": [float(r) for r in self.ambiguous],
        }


def _local_minima(values):
    v = np.asarray(values)
    n = v.size
    out = []
    for i in range(n):
        left = v[i - 1] if i > 0 else math.inf
        right = v[i + 1] if i < n - 1 else math.inf
        if v[i] <= left and v[i] <= right and (v[i] < left or v[i] < right):
            out.append(i)
    return out


def fit_density(dn, c_p, c_s, bounds=(0.25, 4.0), n_scan=9, sources=None, rel_tol=2e-3, progress=None):
    """Constant density minimising ``compare_dn`` against measured DN data.

    For each candidate ``rho`` the forward problem is simulated with
    ``lambda = rho (c_p^2 - 2 c_s^2)``, ``mu = rho c_s^2`` on the
    configuration of ``dn``.  A logarithmic scan over ``bounds`` brackets the
    minimum, which a golden-section search then refines to relative width
    ``rel_tol``.

    Parameters
    ----------
    dn : DNDataset
        Measured data.
    c_p, c_s : float or ScalarField
        Recovered wave speeds.
    sources : sequence of int, optional
        Source indices to simulate (all by default); a subset keeps the cost
        of each evaluation down.
    """
    measured = dn if sources is None else dn.subset(sources)
    cfg = measured.config
    domain = cfg.domain
    cache = {}
    scan = []

    def discrepancy(rho):
        key = float(rho)
        if key not in cache:
            model = assemble_dn_data(lame_with_density(c_p, c_s, key, domain), cfg)
            cache[key] = compare_dn(model, measured).discrepancy
            scan.append((key, cache[key]))
            if progress is not None:
                progress(key, cache[key])
        return cache[key]

    lo, hi = (math.log(b) for b in bounds)
    grid = np.exp(np.linspace(lo, hi, n_scan))
    vals = [discrepancy(r) for r in grid]
    minima = _local_minima(vals)
    unimodal = len(minima) == 1
    ambiguous = [] if unimodal else [float(grid[i]) for i in minima]
    k = int(np.argmin(vals))
    a = math.log(grid[max(k - 1, 0)])
    b = math.log(grid[min(k + 1, n_scan - 1)])
    # golden section in log rho
    x1 = b - GOLDEN * (b - a)
    x2 = a + GOLDEN * (b - a)
    f1, f2 = discrepancy(math.exp(x1)), discrepancy(math.exp(x2))
    while b - a > rel_tol:
        if f1 <= f2:
            b, x2, f2 = x2, x1, f1
            x1 = b - GOLDEN * (b - a)
            f1 = discrepancy(math.exp(x1))
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + GOLDEN * (b - a)
            f2 = discrepancy(math.exp(x2))
    best = min(cache, key=cache.get)
    rho = float(best)
    if isinstance(c_p, ScalarField) or isinstance(c_s, ScalarField):
        lame = lame_with_density(c_p, c_s, rho, domain)
        lam, mu = lame.lam, lame.mu
    else:
        lam, mu = rho * (float(c_p) ** 2 - 2.0 * float(c_s) ** 2), rho * float(c_s) ** 2
    return DensityFit(rho, lam, mu, cache[best], scan, unimodal, ambiguous)
