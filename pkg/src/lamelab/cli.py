"""``lab`` command-line interface.

Usage: ``lab <subcommand> (--config PATH | --preset NAME) [--out DIR] [--threads N]``.
Exit codes: 0 success, 2 configuration error, 3 physics failure,
4 numerical divergence.
"""
from __future__ import annotations

import argparse
import logging
import sys
import time
from pathlib import Path

import numpy as np

from .experiment import PRESETS, ConfigError, RunManifest, load_config
from .io import fmt_float, write_columns, write_json

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_PHYSICS = 3
EXIT_DIVERGENCE = 4

log = logging.getLogger("lamelab.cli")


class PhysicsError(RuntimeError):
    """A physically inadmissible request (CLI exit code 3)."""


def _physics_errors():
    from .geometry import NoBranchError, NonPositiveSpeedError, PossiblyTrappedError
    from .inversion.eikonal import NonPositiveSpeedError as EikonalSpeedError
    from .wave import CFLViolationError

    return (PhysicsError, NoBranchError, NonPositiveSpeedError, PossiblyTrappedError, EikonalSpeedError,
            CFLViolationError)


def _divergence_errors():
    from .inversion.tomography import InversionDivergenceError
    from .wave import SolverDivergenceError

    return (InversionDivergenceError, SolverDivergenceError)


# ----------------------------------------------------------------------
# subcommands; each writes into ``out`` and returns the list of files

def _grid(domain, n):
    lo, hi = domain.bounding_box()
    axes = [np.linspace(lo[i], hi[i], n) for i in range(domain.dim)]
    return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, domain.dim)


def cmd_speeds(cfg, out, args):
    """Wave-speed summary of the candidate triplet and CSV/gnuplot dumps on an ``n x n`` grid."""
    from .elasticity import wave_speeds

    ws = wave_speeds(cfg.candidate)
    n = args.grid
    X = _grid(cfg.domain, n)
    inside = cfg.domain.level(X) <= 0.0
    cp, cs = ws.c_p(X), ws.c_s(X)
    rows = ["x,y,inside,c_p,c_s"]
    for x, i, a, b in zip(X, inside, cp, cs):
        rows.append(f"{fmt_float(x[0])},{fmt_float(x[1])},{int(i)},{fmt_float(a)},{fmt_float(b)}")
    csv_path = out / "speeds.csv"
    csv_path.write_text("\n".join(rows) + "\n")
    dat_p = write_columns(out / "c_p.dat", [X[:, 0], X[:, 1], np.where(inside, cp, np.nan)], "x y c_p")
    dat_s = write_columns(out / "c_s.dat", [X[:, 0], X[:, 1], np.where(inside, cs, np.nan)], "x y c_s")
    if cfg.candidate.is_constant():
        line = f"c_p={float(cp[0]):.7f}, c_s={float(cs[0]):.7f}"
    else:
        line = (f"c_p in [{cp[inside].min():.7f}, {cp[inside].max():.7f}], "
                f"c_s in [{cs[inside].min():.7f}, {cs[inside].max():.7f}]")
    summary = write_json(out / "speeds.json", {"summary": line, "grid": n, "rows": int(X.shape[0]),
                                               "c_p_range": [float(cp[inside].min()), float(cp[inside].max())],
                                               "c_s_range": [float(cs[inside].min()), float(cs[inside].max())]})
    print(line)
    return [csv_path, dat_p, dat_s, summary]


def _metric(cfg, mode):
    from .geometry import ConformalMetric

    return ConformalMetric.from_lame(cfg.candidate, mode)


def cmd_distances(cfg, out, args):
    """Boundary distance table of the candidate's ``g_p`` or ``g_s`` metric."""
    from .geometry import distance_table

    mode = args.mode or cfg.distances["mode"]
    m = args.m or int(cfg.distances["m"])
    table = distance_table(_metric(cfg, mode), cfg.domain, m, mode=mode, metric_id=f"{cfg.name}:g_{mode}")
    path = table.save(out / f"distances_{mode}.csv")
    print(f"mode={mode} m={m} max={fmt_float(np.nanmax(table.d))}")
    return [path, Path(str(path) + ".json")]


def cmd_simulate(cfg, out, args):
    """DN dataset of the candidate triplet, plus gnuplot traces for the first source."""
    from .wave.dn import assemble_dn_data

    sim = cfg.simulation_config()
    dn = assemble_dn_data(cfg.candidate, sim)
    b, j = dn.save(out / "dn")
    nt = dn.normal_tangential()
    r = len(sim.receivers) // 2
    tr = write_columns(out / "trace_source0.dat", [sim.times, nt[0, r, :, 0], nt[0, r, :, 1]],
                       f"t normal tangential (receiver {r})")
    print(f"dn sha256={dn.checksum()} shape={list(dn.shape)}")
    return [b, j, tr]


def cmd_dn_compare(cfg, out, args):
    """``compare_dn`` between the reference and candidate datasets (simulated or loaded)."""
    from .wave.dn import DNDataset, assemble_dn_data, compare_dn

    sim = cfg.simulation_config()
    files = []
    if args.data is not None:
        a = DNDataset.load(args.data)
        b = DNDataset.load(args.against) if args.against is not None else a
    else:
        a = assemble_dn_data(cfg.reference, sim)
        same = cfg.candidate.to_dict() == cfg.reference.to_dict()
        b = a if same else assemble_dn_data(cfg.candidate, sim)
        for name, ds in (("reference_dn", a), ("candidate_dn", b)):
            files.extend(ds.save(out / name))
    cmp = compare_dn(a, b)
    files.append(write_json(out / "dn_compare.json", cmp.to_dict()))
    print(f"discrepancy={fmt_float(cmp.discrepancy)}")
    return files


def cmd_invert(cfg, out, args):
    """Conformal tomography on the synthetic distance table of the candidate metric."""
    from .geometry import distance_table
    from .inversion.tomography import invert_conformal

    inv = cfg.inversion
    mode = args.mode or inv["mode"]
    table = distance_table(_metric(cfg, mode), cfg.domain, int(inv["m"]), mode=mode)
    tpath = table.save(out / f"table_{mode}.csv")
    log_path = out / f"inversion_{mode}.jsonl"
    res = invert_conformal(table, cfg.domain, float(inv["init"]), reg=inv["reg"], n_grid=int(inv["n_grid"]),
                           log_path=log_path)
    X = res.grid.nodes().reshape(-1, 2)
    speed = np.where(res.mask, res.speed, np.nan)
    field_path = write_columns(out / f"speed_{mode}.dat", [X[:, 0], X[:, 1], speed], f"x y c_{mode}")
    summary = {
        "mode": mode,
        "status": res.status,
        "reg_weight": res.reg,
        "noise_level": res.noise_level,
        "initial_residual": res.initial_residual,
        "final_residual": res.final_residual,
        "residual_reduction": res.residual_reduction(),
        "scan": res.scan,
        "mean_speed_inner": res.mean_speed(cfg.domain, 0.9),
    }
    spath = write_json(out / f"inversion_{mode}.json", summary)
    print(f"status={res.status} reduction={fmt_float(res.residual_reduction())}")
    return [tpath, Path(str(tpath) + ".json"), log_path, field_path, spath]


def cmd_rigidity(cfg, out, args):
    """End-to-end rigidity experiment between the reference and the candidate."""
    from .inversion.rigidity import rigidity_experiment

    if not cfg.reference.is_constant():
        raise ConfigError("the rigidity experiment needs a constant reference triplet")
    rg = cfg.rigidity
    rep = rigidity_experiment(cfg.reference, cfg.candidate, cfg.simulation_config(), out_dir=out,
                              tolerance=float(rg["tolerance"]), m_check=int(rg["m_check"]),
                              speed_margin=float(rg["speed_margin"]), n_grid_inversion=int(rg["n_grid_inversion"]),
                              density_sources=tuple(rg["density_sources"]))
    print(f"status: {rep.status}")
    files = [out / a["path"] for a in rep.artifacts.values()]
    return files + [out / "report.json"]


def cmd_checks(cfg, out, args):
    """Hypothesis report for the reference geometries: boundary convexity, simplicity, convex function."""
    from .geometry import (
        ConformalMetric,
        convexity_check_function,
        default_convex_function,
        is_strictly_convex_boundary,
        simplicity_check,
    )

    rep = {}
    m = int(cfg.rigidity["m_check"])
    for mode in ("p", "s"):
        g = ConformalMetric.from_lame(cfg.reference, mode)
        conv = is_strictly_convex_boundary(g, cfg.domain)
        rep[f"g_{mode}"] = {
            "strictly_convex_boundary": {"passed": conv.passed, "min_eigenvalue": conv.min_eigenvalue},
            "simplicity": simplicity_check(g, cfg.domain, m=m).to_dict(),
            "convex_function": convexity_check_function(g, cfg.domain, default_convex_function(cfg.domain)).to_dict(),
        }
    ok = all(r["strictly_convex_boundary"]["passed"] and r["simplicity"]["simple"] for r in rep.values())
    ok = ok and rep["g_s"]["convex_function"]["passed"]
    rep["all_passed"] = bool(ok)
    path = write_json(out / "checks.json", rep)
    print(f"checks {'passed' if ok else 'failed'}")
    return [path]


COMMANDS = {
    "speeds": cmd_speeds,
    "distances": cmd_distances,
    "simulate": cmd_simulate,
    "dn-compare": cmd_dn_compare,
    "invert": cmd_invert,
    "rigidity": cmd_rigidity,
    "checks": cmd_checks,
}


def build_parser():
    p = argparse.ArgumentParser(prog="lab", description="Elastic boundary rigidity laboratory.")
    sub = p.add_subparsers(dest="command", required=True)
    for name, fn in COMMANDS.items():
        s = sub.add_parser(name, help=fn.__doc__.splitlines()[0])
        s.add_argument("--config", type=Path, help="experiment configuration (JSON)")
        s.add_argument("--preset", choices=PRESETS, help="named preset (or base for --config)")
        s.add_argument("--out", type=Path, help="output directory (default: runs/<name>)")
        s.add_argument("--threads", type=int, default=1, help="thread cap for compiled kernels")
        if name == "speeds":
            s.add_argument("--grid", type=int, default=41, help="nodes per axis of the dump grid")
        if name in ("distances", "invert"):
            s.add_argument("--mode", choices=("p", "s"))
        if name == "distances":
            s.add_argument("--m", type=int, help="number of boundary samples")
        if name == "dn-compare":
            s.add_argument("--data", type=Path, help="stored dataset (path without suffix)")
            s.add_argument("--against", type=Path, help="second stored dataset (default: --data itself)")
    return p


def _set_threads(n):
    import warnings

    import numba

    with warnings.catch_warnings():
        # numba reports unusable optional threading layers on first use
        warnings.simplefilter("ignore")
        numba.set_num_threads(max(1, min(int(n), numba.config.NUMBA_NUM_THREADS)))


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, args.preset)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = args.out or Path(cfg.output or Path("runs") / cfg.name)
    out.mkdir(parents=True, exist_ok=True)
    _set_threads(args.threads)
    cfg.save(out / "config.json")
    manifest = RunManifest(out, cfg.hash())
    t0 = time.perf_counter()
    try:
        files = COMMANDS[args.command](cfg, out, args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except _divergence_errors() as exc:
        print(f"numerical divergence: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE
    except _physics_errors() as exc:
        print(f"physics error: {exc}", file=sys.stderr)
        return EXIT_PHYSICS
    manifest.add(out / "config.json", args.command)
    for f in files:
        manifest.add(f, args.command)
    manifest.save(args.command, time.perf_counter() - t0)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
