"""Simulation configuration, boundary sources and the Ricker wavelet."""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field, replace

import numpy as np

from ..domain import Domain
from ..io import dumps


class CFLViolationError(ValueError):
    pass


# delay in units of the Ricker period: the wavelet is below 1e-18 at t = 0
RICKER_DELAY_PERIODS = 2.2


def ricker(t, f0, t0):
    """Ricker wavelet of peak frequency ``f0`` centred at ``t0``, cut to ``[0, 2 t0]``."""
    t = np.asarray(t, float)
    a = (np.pi * f0 * (t - t0)) ** 2
    w = (1.0 - 2.0 * a) * np.exp(-a)
    return np.where((t >= 0.0) & (t <= 2.0 * t0), w, 0.0)


def ricker_dot(t, f0, t0):
    """Time derivative of :func:`ricker`."""
    t = np.asarray(t, float)
    b = (np.pi * f0) ** 2
    s = t - t0
    a = b * s * s
    w = 2.0 * b * s * (2.0 * a - 3.0) * np.exp(-a)
    return np.where((t >= 0.0) & (t <= 2.0 * t0), w, 0.0)


@dataclass(frozen=True)
class BoundarySource:
    """Dirichlet datum ``f(x, t) = amplitude * e * G(s(x)) * r(t)``.

    ``G`` is a Gaussian of standard deviation ``width`` in boundary arc length
    around the boundary point with parameter ``theta``; ``e`` is the normal or
    tangential unit vector at that point; ``r`` is a Ricker wavelet.
    """

    theta: float
    polarization: str  # "normal" | "tangential"
    f0: float
    t0: float
    width: float
    amplitude: float = 1.0

    def __post_init__(self):
        if self.polarization not in ("normal", "tangential"):
            raise ValueError(f"unknown polarization {self.polarization!r}")

    def location(self, domain):
        return domain.boundary_point(np.array(self.theta))

    def direction(self, domain):
        p = self.location(domain)[None]
        if self.polarization == "normal":
            return domain.inward_normal(p)[0]
        return domain.tangent_frame(p)[0, 0]

    def _arc(self, domain, xb):
        th = domain.boundary_param(xb)
        dth = np.mod(th - self.theta + np.pi, 2.0 * np.pi) - np.pi
        speed = _param_speed(domain, self.theta)
        return dth * speed, th

    def spatial(self, domain, xb):
        """Spatial factor ``amplitude * e * G`` at boundary points, shape ``(M, 2)``."""
        s, _ = self._arc(domain, np.atleast_2d(xb))
        g = np.exp(-0.5 * (s / self.width) ** 2)
        return self.amplitude * g[:, None] * self.direction(domain)[None, :]

    def spatial_tangential_derivative(self, domain, xb):
        """Arc-length derivative of :meth:`spatial` along the positive tangent."""
        xb = np.atleast_2d(xb)
        s, th = self._arc(domain, xb)
        g = np.exp(-0.5 * (s / self.width) ** 2)
        ds_dth = _param_speed(domain, self.theta) / _param_speed(domain, th)
        dg = -s / self.width**2 * g * ds_dth
        return self.amplitude * dg[:, None] * self.direction(domain)[None, :]

    def time(self, t):
        return ricker(t, self.f0, self.t0)

    def time_dot(self, t):
        return ricker_dot(t, self.f0, self.t0)

    def scaled(self, a):
        return replace(self, amplitude=self.amplitude * a)

    def to_dict(self):
        return {
            "theta": self.theta,
            "polarization": self.polarization,
            "f0": self.f0,
            "t0": self.t0,
            "width": self.width,
            "amplitude": self.amplitude,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(d["theta"], d["polarization"], d["f0"], d["t0"], d["width"], d.get("amplitude", 1.0))


def _param_speed(domain, theta):
    """``|dp/dtheta|`` for the 2D boundary parameterisation."""
    a, b = domain.semi_axes
    theta = np.asarray(theta, float)
    return np.sqrt((a * np.sin(theta)) ** 2 + (b * np.cos(theta)) ** 2)


@dataclass(frozen=True)
class SimulationConfig:
    """Grid, time axis, sources and receivers for one experiment.

    The physical parameters (sources, receivers, ``T``, ``dt_out``) are kept
    apart from the numerical ones (``n_grid``, ``cfl``); :meth:`refined`
    changes only the latter.
    """

    domain: Domain
    n_grid: int
    T: float
    dt_out: float
    sources: tuple
    receivers: tuple  # boundary parameters
    cfl: float = 0.4
    margin_cells: int = 6
    small_cell: float = 0.5
    c_max: float | None = None
    trace_degree: int = 4
    trace_radius: float = 4.5

    def __post_init__(self):
        if self.domain.dim != 2:
            raise NotImplementedError("the time-domain solver supports 2D domains only")
        if self.T <= 0:
            raise ValueError("final time must be positive")
        object.__setattr__(self, "sources", tuple(self.sources))
        object.__setattr__(self, "receivers", tuple(float(r) for r in self.receivers))

    # ------------------------------------------------------------------
    @property
    def h(self):
        """Grid spacing: ``n_grid`` nodes span the widest axis plus the margins."""
        return 2.0 * float(self.domain.semi_axes.max()) / (self.n_grid - 1 - 2 * self.margin_cells)

    @property
    def shape(self):
        h = self.h
        n = [int(math.ceil(2.0 * a / h - 1e-9)) + 1 + 2 * self.margin_cells for a in self.domain.semi_axes]
        return tuple(n)

    @property
    def origin(self):
        h = self.h
        sh = self.shape
        return self.domain.center - 0.5 * h * (np.array(sh) - 1)

    @property
    def n_out(self):
        return int(round(self.T / self.dt_out)) + 1

    @property
    def times(self):
        return np.arange(self.n_out) * self.dt_out

    def time_step(self, c_max):
        """Largest ``dt <= cfl h / c_max`` dividing ``dt_out`` evenly."""
        limit = self.cfl * self.h / c_max
        stride = int(math.ceil(self.dt_out / limit - 1e-12))
        return self.dt_out / stride, stride

    def receiver_points(self):
        return self.domain.boundary_point(np.array(self.receivers))

    def with_sources(self, sources):
        return replace(self, sources=tuple(sources))

    def refined(self, factor):
        """Same physics on a grid with spacing ``h / factor``."""
        inner = (self.n_grid - 1 - 2 * self.margin_cells) * factor
        return replace(self, n_grid=int(round(inner)) + 1 + 2 * self.margin_cells)

    # ------------------------------------------------------------------
    @classmethod
    def build(
        cls,
        domain,
        n_grid=400,
        T=3.0,
        n_sources=16,
        n_receivers=64,
        polarizations=("normal", "tangential"),
        wavelength_cells=20.0,
        width_cells=4.0,
        c_min=1.0,
        samples_per_period=20,
        **kw,
    ):
        """Default catalog of ``n_sources`` sources on ``n_receivers`` equispaced receivers.

        The sources sit at ``n_sources / len(polarizations)`` equispaced
        receiver locations, one per polarization at each location.  The
        Ricker peak frequency makes the shortest wavelength (speed ``c_min``)
        about ``wavelength_cells`` grid cells; the Gaussian boundary width is
        ``width_cells`` cells.  Both are then frozen as physical parameters.
        """
        margin = kw.get("margin_cells", 6)
        h = 2.0 * float(domain.semi_axes.max()) / (n_grid - 1 - 2 * margin)
        f0 = c_min / (wavelength_cells * h)
        t0 = RICKER_DELAY_PERIODS / f0
        width = width_cells * h
        rec = 2.0 * np.pi * np.arange(n_receivers) / n_receivers
        n_loc = max(n_sources // max(len(polarizations), 1), 1)
        if n_loc * len(polarizations) != n_sources:
            raise ValueError("n_sources must be a multiple of the number of polarizations")
        src = []
        for k in range(n_loc):
            if n_receivers % n_loc == 0:
                th = float(rec[k * (n_receivers // n_loc)])
            else:
                th = 2.0 * np.pi * k / n_loc
            for pol in polarizations:
                src.append(BoundarySource(th, pol, f0, t0, width))
        dt_out = 1.0 / (f0 * samples_per_period)
        return cls(domain, n_grid, T, dt_out, tuple(src), tuple(rec), **kw)

    # ------------------------------------------------------------------
    def physics_dict(self):
        """The part of the configuration that defines the sampled DN map."""
        return {
            "domain": self.domain.to_dict(),
            "T": self.T,
            "dt_out": self.dt_out,
            "n_out": self.n_out,
            "sources": [s.to_dict() for s in self.sources],
            "receivers": list(self.receivers),
        }

    def to_dict(self):
        d = self.physics_dict()
        d.update(
            {
                "n_grid": self.n_grid,
                "cfl": self.cfl,
                "margin_cells": self.margin_cells,
                "small_cell": self.small_cell,
                "c_max": self.c_max,
                "trace_degree": self.trace_degree,
                "trace_radius": self.trace_radius,
            }
        )
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(
            Domain.from_dict(d["domain"]),
            d["n_grid"],
            d["T"],
            d["dt_out"],
            tuple(BoundarySource.from_dict(s) for s in d["sources"]),
            tuple(d["receivers"]),
            cfl=d.get("cfl", 0.4),
            margin_cells=d.get("margin_cells", 6),
            small_cell=d.get("small_cell", 0.5),
            c_max=d.get("c_max"),
            trace_degree=d.get("trace_degree", 4),
            trace_radius=d.get("trace_radius", 4.5),
        )

    def hash(self):
        return config_hash(self.to_dict())

    def physics_hash(self):
        return config_hash(self.physics_dict())


def config_hash(d):
    """Hash of the canonical text form, so a reloaded config hashes identically."""
    return hashlib.sha256(dumps(d, indent=0).encode()).hexdigest()[:16]
