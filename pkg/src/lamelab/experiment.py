"""Experiment configuration documents, presets and run manifests."""
from __future__ import annotations

import copy
import hashlib
import json
import platform
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .domain import Domain
from .elasticity import LameField, check_positivity
from .fields import ConstantField, field_from_dict
from .io import dumps, sha256_file, write_json

PRESETS = ("homogeneous-disk", "hyperbolic-disk", "spherical-cap", "mu-bump-10pct")

SIMULATION_DEFAULTS = {"n_grid": 400, "T": 3.0, "n_sources": 16, "n_receivers": 64, "cfl": 0.4,
                       "wavelength_cells": 20.0}
DISTANCE_DEFAULTS = {"m": 32, "mode": "s"}
INVERSION_DEFAULTS = {"n_grid": 61, "m": 32, "mode": "s", "init": 1.2, "reg": None}
RIGIDITY_DEFAULTS = {"tolerance": 0.02, "m_check": 12, "n_grid_inversion": 61, "density_sources": [0, 1],
                     "speed_margin": 0.1}


class ConfigError(ValueError):
    """Invalid experiment configuration (CLI exit code 2)."""


def _field_spec(v):
    if isinstance(v, (int, float)):
        return ConstantField(float(v))
    if isinstance(v, dict):
        return field_from_dict(v)
    raise ConfigError(f"cannot interpret {v!r} as a scalar field")


def _spec_of(f):
    d = f.to_dict()
    return d["value"] if d.get("kind") == "constant" else d


def _merge(defaults, given, section):
    unknown = set(given) - set(defaults)
    if unknown:
        raise ConfigError(f"unknown keys in '{section}': {sorted(unknown)}")
    out = dict(defaults)
    out.update(given)
    return out


@dataclass
class ExperimentConfig:
    """A full experiment description.

    ``reference`` and ``candidate`` hold triplet specs ``{"lambda", "mu",
    "rho"}`` whose values are numbers (constants) or scalar-field records;
    ``candidate`` may be omitted to mean "same as the reference".
    """

    name: str
    domain: Domain
    reference: LameField
    candidate: LameField
    simulation: dict = field(default_factory=lambda: dict(SIMULATION_DEFAULTS))
    distances: dict = field(default_factory=lambda: dict(DISTANCE_DEFAULTS))
    inversion: dict = field(default_factory=lambda: dict(INVERSION_DEFAULTS))
    rigidity: dict = field(default_factory=lambda: dict(RIGIDITY_DEFAULTS))
    seed: int = 0
    output: str | None = None

    @classmethod
    def from_dict(cls, d, validate=True):
        d = copy.deepcopy(d)
        known = {"name", "domain", "reference", "candidate", "simulation", "distances", "inversion",
                 "rigidity", "seed", "output"}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown configuration keys: {sorted(unknown)}")
        try:
            dom = Domain.from_dict(d["domain"])
            ref = cls._triplet(d["reference"], dom)
            cand = ref if d.get("candidate") is None else cls._triplet(d["candidate"], dom)
        except KeyError as exc:
            raise ConfigError(f"missing configuration key {exc}") from None
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from None
        cfg = cls(
            name=str(d.get("name", "experiment")),
            domain=dom,
            reference=ref,
            candidate=cand,
            simulation=_merge(SIMULATION_DEFAULTS, d.get("simulation", {}), "simulation"),
            distances=_merge(DISTANCE_DEFAULTS, d.get("distances", {}), "distances"),
            inversion=_merge(INVERSION_DEFAULTS, d.get("inversion", {}), "inversion"),
            rigidity=_merge(RIGIDITY_DEFAULTS, d.get("rigidity", {}), "rigidity"),
            seed=int(d.get("seed", 0)),
            output=d.get("output"),
        )
        if validate:
            cfg.validate()
        return cfg

    @staticmethod
    def _triplet(spec, domain):
        if not isinstance(spec, dict) or set(spec) != {"lambda", "mu", "rho"}:
            raise ConfigError("a triplet needs exactly the keys 'lambda', 'mu' and 'rho'")
        return LameField(_field_spec(spec["lambda"]), _field_spec(spec["mu"]), _field_spec(spec["rho"]), domain)

    def validate(self):
        """Raise :class:`ConfigError` carrying the violation report if a triplet is not positivity-valid."""
        for label, t in (("reference", self.reference), ("candidate", self.candidate)):
            rep = check_positivity(t)
            if not rep.passed:
                err = ConfigError(f"{label} triplet: {rep.summary()}")
                err.report = rep
                raise err
        if self.distances["mode"] not in ("p", "s") or self.inversion["mode"] not in ("p", "s"):
            raise ConfigError("mode must be 'p' or 's'")

    def to_dict(self):
        def trip(t):
            return {"lambda": _spec_of(t.lam), "mu": _spec_of(t.mu), "rho": _spec_of(t.rho)}

        return {
            "name": self.name,
            "domain": self.domain.to_dict(),
            "reference": trip(self.reference),
            "candidate": trip(self.candidate),
            "simulation": dict(self.simulation),
            "distances": dict(self.distances),
            "inversion": dict(self.inversion),
            "rigidity": dict(self.rigidity),
            "seed": self.seed,
            "output": self.output,
        }

    def hash(self):
        return hashlib.sha256(dumps(self.to_dict(), indent=0).encode()).hexdigest()[:16]

    def simulation_config(self):
        from .wave.config import SimulationConfig

        s = self.simulation
        return SimulationConfig.build(self.domain, n_grid=int(s["n_grid"]), T=float(s["T"]),
                                      n_sources=int(s["n_sources"]), n_receivers=int(s["n_receivers"]),
                                      wavelength_cells=float(s["wavelength_cells"]), cfl=float(s["cfl"]),
                                      c_min=self._c_min())

    def _c_min(self):
        from .elasticity import SpeedField, domain_samples

        pts = domain_samples(self.domain)
        return float(min(SpeedField(t, "s")(pts).min() for t in (self.reference, self.candidate)))

    def save(self, path):
        return write_json(path, self.to_dict())


def load_preset(name):
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
    text = resources.files("lamelab.presets").joinpath(f"{name}.json").read_text()
    return ExperimentConfig.from_dict(json.loads(text))


def load_config(path=None, preset=None):
    """Configuration from a JSON file, a preset name, or a file naming a ``"preset"`` to extend."""
    if path is None and preset is None:
        raise ConfigError("either a configuration file or a preset is required")
    if path is None:
        return load_preset(preset)
    try:
        d = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read configuration {path}: {exc}") from None
    if not isinstance(d, dict):
        raise ConfigError("the configuration must be a JSON object")
    base = d.pop("preset", preset)
    if base is not None:
        merged = load_preset(base).to_dict()
        for k, v in d.items():
            if isinstance(v, dict) and isinstance(merged.get(k), dict) and k not in ("reference", "candidate", "domain"):
                merged[k] = {**merged[k], **v}
            else:
                merged[k] = v
        d = merged
    return ExperimentConfig.from_dict(d)


# ----------------------------------------------------------------------

def versions():
    import numba
    import numpy
    import scipy

    from . import __version__

    return {"lamelab": __version__, "numpy": numpy.__version__, "scipy": scipy.__version__,
            "numba": numba.__version__, "python": platform.python_version()}


class RunManifest:
    """``manifest.json`` in an output directory: artifacts with checksums, versions and timings.

    Entries from earlier subcommands in the same directory are kept.
    Timings are stored apart from the artifact list, which is therefore
    identical across repeated runs.
    """

    def __init__(self, out_dir, config_hash):
        self.root = Path(out_dir)
        self.path = self.root / "manifest.json"
        self.config_hash = config_hash
        self.artifacts = {}
        self.timings = {}
        if self.path.exists():
            old = json.loads(self.path.read_text())
            if old.get("config_hash") == config_hash:
                self.artifacts = {a["path"]: a for a in old.get("artifacts", [])}
                self.timings = old.get("timings", {})

    def add(self, path, command):
        p = Path(path)
        rel = str(p.relative_to(self.root))
        self.artifacts[rel] = {"path": rel, "sha256": sha256_file(p), "bytes": p.stat().st_size, "command": command}

    def add_tree(self, command):
        for p in sorted(self.root.rglob("*")):
            if p.is_file() and p != self.path:
                self.add(p, command)

    def checksums(self):
        return {k: v["sha256"] for k, v in sorted(self.artifacts.items())}

    def save(self, command, seconds):
        self.timings[command] = seconds
        write_json(self.path, {
            "config_hash": self.config_hash,
            "artifacts": [self.artifacts[k] for k in sorted(self.artifacts)],
            "versions": versions(),
            "timings": self.timings,
        })
        return self.path
