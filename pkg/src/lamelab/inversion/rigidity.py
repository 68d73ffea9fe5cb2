"""End-to-end rigidity experiment: compare DN data, then reconstruct the candidate triplet."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..elasticity import check_positivity
from ..geometry import (
    ConformalMetric,
    convexity_check_function,
    default_convex_function,
    diameter,
    distance_table,
    simplicity_check,
)
from ..io import sha256_file, write_json
from ..wave.dn import NOISE_FLOOR_SAFETY, assemble_dn_data, compare_dn, noise_floor
from ..wave.picking import pick_arrivals, travel_time_table
from .density import fit_density
from .tomography import invert_conformal

STATUS_REFUSED = "refused; hypothesis (d) fails"
STATUS_INVALID = "refused; positivity fails"
STATUS_DISTINGUISHABLE = "distinguishable"
STATUS_RECONSTRUCTED = "indistinguishable; reconstructed within tolerance"
STATUS_INACCURATE = "indistinguishable; reconstruction outside tolerance"


@dataclass
class RigidityReport:
    """Outcome of :func:`rigidity_experiment`.

    ``hypotheses`` maps ``"a"`` to ``"d"`` to records with a ``tag``
    (``"pass"``, ``"fail"``, ``"heuristic-pass"``, ``"heuristic-fail"`` or
    ``"not-evaluated"``) and supporting numbers.  ``artifacts`` maps names to
    ``{"path", "sha256"}`` for every file written.
    """

    status: str
    hypotheses: dict
    config_hash: str
    T: float
    time_threshold: float
    dn_discrepancy: float | None = None
    noise_floor: float | None = None
    recovered: dict | None = None
    truth: dict | None = None
    errors: dict | None = None
    tolerance: float = 0.02
    details: dict = field(default_factory=dict)
    artifacts: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)

    @property
    def all_hypotheses_green(self):
        return all(h["tag"] in ("pass", "heuristic-pass") for h in self.hypotheses.values())

    def to_dict(self):
        return {
            "status": self.status,
            "hypotheses": self.hypotheses,
            "config_hash": self.config_hash,
            "T": self.T,
            "time_threshold": self.time_threshold,
            "dn_discrepancy": self.dn_discrepancy,
            "noise_floor": self.noise_floor,
            "recovered": self.recovered,
            "truth": self.truth,
            "errors": self.errors,
            "tolerance": self.tolerance,
            "details": self.details,
            "artifacts": self.artifacts,
            "notes": list(self.notes),
        }

    def save(self, path):
        return write_json(path, self.to_dict())


def _tag(passed, heuristic=False):
    if heuristic:
        return "heuristic-pass" if passed else "heuristic-fail"
    return "pass" if passed else "fail"


def _record(artifacts, name, path, root):
    p = Path(path)
    rel = p.relative_to(root) if root is not None else p
    artifacts[name] = {"path": str(rel), "sha256": sha256_file(p)}


def _table_init(table):
    """Median of chord length over travel time: a data-driven constant starting speed."""
    d = table.d
    chord = np.linalg.norm(table.points[:, None] - table.points[None], axis=-1)
    ok = np.isfinite(d) & (d > 0)
    return float(np.median(chord[ok] / d[ok]))


def rigidity_experiment(reference, candidate, config, out_dir=None, tolerance=0.02, m_check=12,
                        floor=None, reference_dn=None, candidate_dn=None, speed_margin=0.1,
                        n_grid_inversion=61, density_sources=(0, 1), progress=None):
    """Test whether ``candidate`` is distinguishable from the constant ``reference`` by DN data.

    Steps: positivity of both triplets (hypotheses (b) and (c)); the time
    threshold ``T > sqrt(rho/mu) * diam`` (hypothesis (d)), refusing to
    proceed if it fails; simplicity of both reference geometries and the
    convexity of :func:`default_convex_function` along ``g_s`` (hypothesis
    (b)); DN data for both triplets and their discrepancy against the
    grid-refinement noise floor (hypothesis (a)).  When the data agree to
    within the floor, arrivals are picked on the candidate's data, both
    speeds are recovered by conformal tomography, the density is fitted and
    the constants are compared with the candidate.

    Parameters
    ----------
    reference : LameField
        Constant triplet.
    candidate : LameField
    config : SimulationConfig
    out_dir : path, optional
        Directory for artifacts; nothing is written when omitted.
    floor : float, optional
        Precomputed noise floor; by default it is measured with
        :func:`noise_floor` on the reference.
    reference_dn, candidate_dn : DNDataset, optional
        Precomputed datasets for ``config``.
    speed_margin : float
        Relative margin around the reference speeds used to gate picks.
    density_sources : sequence of int
        Sources simulated during the density fit.
    """
    if not reference.is_constant():
        raise ValueError("the reference triplet must be constant")
    root = None if out_dir is None else Path(out_dir)
    if root is not None:
        root.mkdir(parents=True, exist_ok=True)
    artifacts = {}
    notes = []
    domain = config.domain
    lam1, mu1, rho1 = reference.constants()
    c_p1 = math.sqrt((lam1 + 2.0 * mu1) / rho1)
    c_s1 = math.sqrt(mu1 / rho1)
    diam = domain.euclidean_diameter
    threshold = math.sqrt(rho1 / mu1) * diam
    if domain.dim != 3:
        notes.append(f"computed in dimension {domain.dim}; the uniqueness theorem is stated for n = 3")

    pos_ref = check_positivity(reference)
    pos_cand = check_positivity(candidate)
    hyp = {
        "a": {"tag": "not-evaluated", "statement": "DN maps agree up to the noise floor"},
        "b": {"tag": "not-evaluated", "statement": "reference positivity, simple g_p and g_s, strictly convex function for g_s",
              "positivity": pos_ref.passed},
        "c": {"tag": _tag(pos_cand.passed), "statement": "candidate positivity"},
        "d": {"tag": _tag(config.T > threshold), "statement": "T > sqrt(rho/mu) * diam",
              "T": config.T, "threshold": threshold},
    }

    def report(status, **kw):
        rep = RigidityReport(status, hyp, config.hash(), config.T, threshold, tolerance=tolerance,
                             artifacts=artifacts, notes=notes, **kw)
        if root is not None:
            rep.save(root / "report.json")
        return rep

    if not (pos_ref.passed and pos_cand.passed):
        if not pos_ref.passed:
            hyp["b"]["tag"] = "fail"
        return report(STATUS_INVALID)
    if config.T <= threshold:
        notes.append("reconstruction refused: the observation time does not exceed the s-diameter")
        return report(STATUS_REFUSED)

    # geometric hypotheses for the reference
    g_p = ConformalMetric.from_lame(reference, "p")
    g_s = ConformalMetric.from_lame(reference, "s")
    simple_p = simplicity_check(g_p, domain, m=m_check)
    table_s = distance_table(g_s, domain, m_check, mode="s")
    simple_s = simplicity_check(g_s, domain, m=m_check, table=table_s)
    diam_s, diam_info = diameter(g_s, domain, table=table_s)
    hyp["d"].update({"diameter_g_s": diam_s, "longest_geodesic_g_s": diam_info["longest_geodesic"],
                     "tag": _tag(config.T > max(threshold, diam_s))})
    notes.append("hypothesis (d) is checked against the s-diameter; the density step assumes T also "
                 f"exceeds the longest computed geodesic ({diam_info['longest_geodesic']:.6g})")
    conv = convexity_check_function(g_s, domain, default_convex_function(domain))
    b_ok = simple_p.simple and simple_s.simple and conv.passed
    hyp["b"].update({
        "tag": _tag(b_ok, heuristic=True),
        "simplicity_p": simple_p.to_dict(),
        "simplicity_s": simple_s.to_dict(),
        "convex_function": conv.to_dict(),
    })

    # DN data and noise floor
    if reference_dn is None:
        reference_dn = assemble_dn_data(reference, config, progress=progress)
    if candidate_dn is None:
        if candidate.to_dict() == reference.to_dict():
            candidate_dn = reference_dn
            notes.append("candidate serialises identically to the reference; its DN dataset is reused")
        else:
            candidate_dn = assemble_dn_data(candidate, config, progress=progress)
    disc = compare_dn(reference_dn, candidate_dn)
    if floor is None:
        floor, _, _ = noise_floor(reference, config, coarse=reference_dn, progress=progress)
    if root is not None:
        for name, ds in (("reference_dn", reference_dn), ("candidate_dn", candidate_dn)):
            b, j = ds.save(root / name)
            _record(artifacts, f"{name}.bin", b, root)
            _record(artifacts, f"{name}.json", j, root)
    indist = disc.discrepancy <= floor
    hyp["a"].update({"tag": _tag(indist), "discrepancy": disc.discrepancy, "noise_floor": floor,
                     "safety_factor": NOISE_FLOOR_SAFETY})
    if not indist:
        return report(STATUS_DISTINGUISHABLE, dn_discrepancy=disc.discrepancy, noise_floor=floor,
                      details={"per_source": disc.per_source.tolist()})

    # reconstruction from the candidate's data
    bounds = {"p": (c_p1 * (1.0 - speed_margin), c_p1 * (1.0 + speed_margin)),
              "s": (c_s1 * (1.0 - speed_margin), c_s1 * (1.0 + speed_margin))}
    arrivals = pick_arrivals(candidate_dn, bounds)
    speeds = {}
    details = {"speed_bounds": {k: list(v) for k, v in bounds.items()}}
    if root is not None:
        _record(artifacts, "arrivals.csv", arrivals.save(root / "arrivals.csv"), root)
    for mode in ("p", "s"):
        table = travel_time_table(arrivals, config, mode)
        init = _table_init(table)
        log_path = None if root is None else root / f"inversion_{mode}.jsonl"
        res = invert_conformal(table, domain, init, n_grid=n_grid_inversion, log_path=log_path)
        speeds[mode] = res.mean_speed(domain, 0.9)
        details[f"inversion_{mode}"] = {
            "init": init,
            "status": res.status,
            "reg_weight": res.reg,
            "noise_level": res.noise_level,
            "residual_reduction": res.residual_reduction(),
            "relative_residual": res.final_residual / res.data_norm,
            "mean_speed": speeds[mode],
            "speed_spread": float(np.std(res.speed[res.mask])),
            "n_pairs": int(np.sum(np.isfinite(np.triu(table.d, 1)))),
            "asymmetry": table.asymmetry,
        }
        if root is not None:
            _record(artifacts, f"table_{mode}.csv", table.save(root / f"table_{mode}.csv"), root)
            _record(artifacts, f"table_{mode}.csv.json", Path(str(root / f"table_{mode}.csv") + ".json"), root)
            _record(artifacts, f"inversion_{mode}.jsonl", log_path, root)
    fit = fit_density(candidate_dn, speeds["p"], speeds["s"], sources=density_sources)
    details["density_fit"] = fit.to_dict()
    if not fit.unimodal:
        notes.append("density scan is not unimodal; competing minima " + ", ".join(f"{r:.6g}" for r in fit.ambiguous))
    recovered = {"lambda": float(fit.lam), "mu": float(fit.mu), "rho": fit.rho,
                 "c_p": speeds["p"], "c_s": speeds["s"]}
    truth = None
    errors = None
    if candidate.is_constant():
        lam2, mu2, rho2 = candidate.constants()
        truth = {"lambda": lam2, "mu": mu2, "rho": rho2}
        errors = {k: abs(recovered[k] - truth[k]) / abs(truth[k]) for k in truth}
        ok = fit.unimodal and all(e <= tolerance for e in errors.values())
        status = STATUS_RECONSTRUCTED if ok else STATUS_INACCURATE
    else:
        notes.append("candidate is not constant; recovered constants are not compared")
        status = STATUS_INACCURATE
    return report(status, dn_discrepancy=disc.discrepancy, noise_floor=floor, recovered=recovered,
                  truth=truth, errors=errors, details=details)
