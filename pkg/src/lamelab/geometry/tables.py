"""Boundary distance tables and their on-disk format."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..io import dumps, fmt_float as _fmt


@dataclass
class TravelTimeTable:
    """Matrix of in-domain distances between sampled boundary points.

    Attributes
    ----------
    params : ndarray
        Boundary parameters, shape ``(m,)`` in 2D or ``(m, 2)`` in 3D.
    points : ndarray, shape (m, n)
    d : ndarray, shape (m, m)
        Symmetrised distances; ``nan`` marks missing entries.
    mode : str
        Wave-mode tag, ``"p"`` or ``"s"`` (may be empty for test metrics).
    multiple : ndarray of bool, shape (m, m)
        Pairs reached by two or more geodesic branches of distinct length.
    asymmetry : float
        ``max |d_ij - d_ji|`` before symmetrisation.
    """

    params: np.ndarray
    points: np.ndarray
    d: np.ndarray
    mode: str = ""
    multiple: np.ndarray | None = None
    asymmetry: float = 0.0
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.params = np.asarray(self.params, float)
        self.points = np.asarray(self.points, float)
        self.d = np.asarray(self.d, float)
        if self.multiple is None:
            self.multiple = np.zeros(self.d.shape, dtype=bool)
        self.multiple = np.asarray(self.multiple, dtype=bool)

    @property
    def m(self):
        return self.d.shape[0]

    def symmetry_defect(self):
        return float(np.nanmax(np.abs(self.d - self.d.T)))

    def triangle_defect(self):
        """``max_{i,j,k} d_ij - d_ik - d_kj`` (non-positive for a metric)."""
        d = self.d
        worst = -np.inf
        for k in range(self.m):
            worst = max(worst, float(np.nanmax(d - d[:, k : k + 1] - d[k : k + 1, :])))
        return worst

    def any_multiple(self):
        return bool(np.any(self.multiple))

    # ------------------------------------------------------------------
    def save(self, path):
        """Write ``<path>`` (CSV) and ``<path>.json`` (metadata sidecar)."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        if self.params.ndim == 1:
            header = [_fmt(p) for p in self.params]
        else:
            header = [f"{_fmt(p[0])}:{_fmt(p[1])}" for p in self.params]
        lines = [",".join(header)]
        for row in self.d:
            lines.append(",".join(_fmt(v) for v in row))
        path.write_text("\n".join(lines) + "\n")
        meta = dict(self.metadata)
        meta.update(
            {
                "mode": self.mode,
                "m": int(self.m),
                "dim": int(self.points.shape[1]),
                "asymmetry": float(self.asymmetry),
                "multiple_pairs": [[int(i), int(j)] for i, j in zip(*np.nonzero(np.triu(self.multiple)))],
                "points": [[float(v) for v in p] for p in self.points],
            }
        )
        Path(str(path) + ".json").write_text(dumps(meta) + "\n")
        return path

    @classmethod
    def load(cls, path):
        path = Path(path)
        rows = path.read_text().strip().splitlines()
        head = rows[0].split(",")
        if ":" in head[0]:
            params = np.array([[float(a) for a in h.split(":")] for h in head])
        else:
            params = np.array([float(h) for h in head])
        d = np.array([[float(v) for v in r.split(",")] for r in rows[1:]])
        meta = json.loads(Path(str(path) + ".json").read_text())
        m = d.shape[0]
        mult = np.zeros((m, m), dtype=bool)
        for i, j in meta.pop("multiple_pairs", []):
            mult[i, j] = mult[j, i] = True
        points = np.asarray(meta.pop("points"), float)
        mode = meta.pop("mode", "")
        asym = meta.pop("asymmetry", 0.0)
        meta.pop("m", None)
        meta.pop("dim", None)
        return cls(params, points, d, mode, mult, asym, meta)
