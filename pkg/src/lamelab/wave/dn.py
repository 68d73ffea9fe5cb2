"""Sampled Dirichlet-to-Neumann data: assembly, persistence and comparison."""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..io import dumps
from .config import SimulationConfig
from .solver import _Prepared, solve_ibvp


class ConfigMismatchError(ValueError):
    pass


@dataclass
class DNDataset:
    """Traction traces indexed ``[source, receiver, time, component]``.

    Components are Cartesian ``(x, y)`` traction values with respect to the
    outward normal.  ``config`` fixes the source and receiver catalogs and
    the time axis.
    """

    data: np.ndarray
    config: SimulationConfig
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        S, R = len(self.config.sources), len(self.config.receivers)
        expected = (S, R, self.config.n_out, 2)
        if self.data.shape != expected:
            raise ValueError(f"data shape {self.data.shape} does not match config {expected}")

    @property
    def shape(self):
        return self.data.shape

    def norm(self):
        return float(np.linalg.norm(self.data.ravel()))

    def scaled(self, gain):
        return DNDataset(self.data * gain, self.config, dict(self.metadata))

    def subset(self, source_ids):
        """Dataset restricted to the listed sources (catalog order preserved)."""
        ids = [int(i) for i in source_ids]
        cfg = self.config.with_sources([self.config.sources[i] for i in ids])
        return DNDataset(self.data[ids], cfg, dict(self.metadata))

    def normal_tangential(self):
        """Traces projected on the outward normal and positive tangent at each receiver.

        Returns an array of shape ``(S, R, n_out, 2)`` with components
        ``(normal, tangential)``.
        """
        dom = self.config.domain
        pts = self.config.receiver_points()
        nu = dom.outward_normal(pts)
        tau = dom.tangent_frame(pts)[:, 0]
        n = np.einsum("srtk,rk->srt", self.data, nu)
        t = np.einsum("srtk,rk->srt", self.data, tau)
        return np.stack([n, t], axis=-1)

    # ------------------------------------------------------------------
    def checksum(self):
        return hashlib.sha256(self.data.astype("<f8").tobytes()).hexdigest()

    def save(self, path):
        """Write ``<path>.bin`` (little-endian float64, row-major) and ``<path>.json``."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        bin_path = path.with_suffix(".bin")
        bin_path.write_bytes(np.ascontiguousarray(self.data, dtype="<f8").tobytes())
        manifest = {
            "shape": list(self.data.shape),
            "dtype": "<f8",
            "order": "C",
            "index": ["source", "receiver", "time", "component"],
            "config_hash": self.config.hash(),
            "physics_hash": self.config.physics_hash(),
            "config": self.config.to_dict(),
            "sources": [s.to_dict() for s in self.config.sources],
            "receivers": list(self.config.receivers),
            "sha256": self.checksum(),
            "metadata": self.metadata,
        }
        json_path = path.with_suffix(".json")
        json_path.write_text(dumps(manifest) + "\n")
        return bin_path, json_path

    @classmethod
    def load(cls, path):
        path = Path(path)
        manifest = json.loads(path.with_suffix(".json").read_text())
        raw = np.frombuffer(path.with_suffix(".bin").read_bytes(), dtype="<f8")
        data = raw.reshape(manifest["shape"]).astype(np.float64)
        cfg = SimulationConfig.from_dict(manifest["config"])
        return cls(data, cfg, manifest.get("metadata", {}))


def assemble_dn_data(lame, config, sources=None, progress=None):
    """Run one simulation per source and collect the receiver tractions.

    Parameters
    ----------
    lame : LameField
    config : SimulationConfig
    sources : sequence of BoundarySource, optional
        Overrides ``config.sources``; the returned dataset's config carries
        the catalog actually used.
    progress : callable, optional
        Called as ``progress(k, n_sources)`` after each source.
    """
    if sources is not None:
        config = config.with_sources(sources)
    prep = _Prepared(lame, config)
    S, R = len(config.sources), len(config.receivers)
    data = np.zeros((S, R, config.n_out, 2))
    for k, src in enumerate(config.sources):
        if src.amplitude == 0.0:
            continue
        wf = solve_ibvp(lame, config, src, prepared=prep)
        data[k] = wf.traces.transpose(1, 0, 2)
        if progress is not None:
            progress(k + 1, S)
    meta = {"dt": prep.dt, "stride": prep.stride, "h": config.h, "c_max": prep.medium.c_max}
    return DNDataset(data, config, meta)


@dataclass
class DNComparison:
    discrepancy: float
    per_source: np.ndarray

    def to_dict(self):
        return {"discrepancy": self.discrepancy, "per_source": [float(v) for v in self.per_source]}


def _rel(a, b):
    den = max(np.linalg.norm(a), np.linalg.norm(b))
    return 0.0 if den == 0.0 else float(np.linalg.norm(a - b) / den)


def compare_dn(d1, d2, strict=False):
    """Relative discrepancy ``|d1 - d2| / max(|d1|, |d2|)`` plus a per-source breakdown.

    The datasets must share their physical configuration (domain, sources,
    receivers, time axis); with ``strict`` the numerical parameters must
    match too.
    """
    h1 = d1.config.hash() if strict else d1.config.physics_hash()
    h2 = d2.config.hash() if strict else d2.config.physics_hash()
    if h1 != h2 or d1.shape != d2.shape:
        raise ConfigMismatchError("datasets were produced from different configurations")
    per = np.array([_rel(a, b) for a, b in zip(d1.data, d2.data)])
    return DNComparison(_rel(d1.data, d2.data), per)


NOISE_FLOOR_SAFETY = 1.5


def noise_floor(lame, config, factor=math.sqrt(2.0), coarse=None, safety=NOISE_FLOOR_SAFETY, progress=None):
    """Discretisation noise floor: ``safety * compare_dn`` of runs at ``h`` and ``h / factor``.

    Returns ``(floor, coarse_dataset, fine_dataset)``; a precomputed coarse
    dataset may be passed to avoid recomputation.
    """
    if coarse is None:
        coarse = assemble_dn_data(lame, config, progress=progress)
    elif coarse.config.hash() != config.hash():
        raise ConfigMismatchError("coarse dataset does not match the configuration")
    fine = assemble_dn_data(lame, config.refined(factor), progress=progress)
    return safety * compare_dn(coarse, fine).discrepancy, coarse, fine
