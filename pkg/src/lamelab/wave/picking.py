"""First-arrival picking on DN traction traces and arrival tables."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.signal import hilbert

from ..geometry.tables import TravelTimeTable
from ..io import fmt_float

MODES = ("p", "s")
# trace component carrying each mode: normal traction for p, tangential for s
MODE_COMPONENT = {"p": 0, "s": 1}
MODE_POLARIZATION = {"p": "normal", "s": "tangential"}


@dataclass(frozen=True)
class Pick:
    """One picked arrival; ``t`` is ``nan`` for a missing pick."""

    t: float
    confidence: float
    peak: float = 0.0
    threshold: float = 0.0

    @property
    def missing(self):
        return not math.isfinite(self.t)


MISSING = Pick(float("nan"), 0.0)


def envelope(x):
    """Amplitude envelope ``|x + i H[x]|`` of a real trace."""
    x = np.asarray(x, float)
    if not np.any(x):
        return np.zeros_like(x)
    return np.abs(hilbert(x))


def _peak_time(env, k, times):
    """Sub-sample peak location from a parabola through ``log env`` at ``k-1, k, k+1``."""
    if k <= 0 or k >= env.size - 1:
        return float(times[k])
    a, b, c = np.log(np.maximum(env[k - 1 : k + 2], 1e-300))
    den = a - 2.0 * b + c
    off = 0.5 * (a - c) / den if den < 0.0 else 0.0
    off = min(max(off, -0.5), 0.5)
    return float(times[k] + off * (times[1] - times[0]))


def calibrate_delay(source, times):
    """Envelope-peak time of the source wavelet itself, sampled at ``times``.

    Subtracting it from a picked envelope peak back-projects the pick to
    the wavelet onset.
    """
    w = source.time(times)
    env = envelope(w)
    k = int(np.argmax(env))
    return _peak_time(env, k, times)


def pick_first_arrival(trace, times, mode, noise_window, window, delay, threshold_factor=5.0,
                       relative_threshold=0.2):
    """Pick the first arrival of ``mode`` on a traction trace.

    Parameters
    ----------
    trace : ndarray, shape (n,) or (n, 2)
        A single component, or columns ``(normal, tangential)`` from which
        the mode's component is selected (normal for p, tangential for s).
    times : ndarray, shape (n,)
    mode : {"p", "s"}
    noise_window : (float, float)
        Pre-onset interval used for the RMS noise estimate.
    window : (float, float)
        Gate in which the arrival must start.
    delay : float
        Calibrated envelope-peak delay of the wavelet (see :func:`calibrate_delay`).

    Returns
    -------
    Pick
        The first envelope peak above threshold whose back-projected time
        (peak minus ``delay``) lies in the gate.  The threshold is
        ``threshold_factor`` times the noise RMS, raised to
        ``relative_threshold`` times the largest gated peak so that numerical
        leakage does not trigger.
    """
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    x = np.asarray(trace, float)
    if x.ndim == 2:
        x = x[:, MODE_COMPONENT[mode]]
    times = np.asarray(times, float)
    noise = (times >= noise_window[0]) & (times < noise_window[1])
    rms = float(np.sqrt(np.mean(x[noise] ** 2))) if np.any(noise) else 0.0
    env = envelope(x)
    if env.size < 3:
        return MISSING
    inner = np.arange(1, env.size - 1)
    is_peak = (env[inner] >= env[inner - 1]) & (env[inner] > env[inner + 1])
    peaks = inner[is_peak]
    onset = times[peaks] - delay
    peaks = peaks[(onset >= window[0]) & (onset <= window[1])]
    if peaks.size == 0:
        return MISSING
    top = float(env[peaks].max())
    floor = threshold_factor * rms
    if top <= floor:
        return MISSING
    thr = max(floor, relative_threshold * top)
    k = int(peaks[env[peaks] > thr][0]) if np.any(env[peaks] > thr) else int(peaks[np.argmax(env[peaks])])
    t_peak = _peak_time(env, k, times)
    conf = max(0.0, 1.0 - floor / float(env[k]))
    return Pick(t_peak - delay, conf, float(env[k]), thr)


# ----------------------------------------------------------------------

@dataclass
class ArrivalTable:
    """Rows ``(source_id, receiver_id, mode, t_pick, confidence)``; missing picks are ``nan``."""

    source_id: np.ndarray
    receiver_id: np.ndarray
    mode: np.ndarray
    t_pick: np.ndarray
    confidence: np.ndarray

    def __post_init__(self):
        self.source_id = np.asarray(self.source_id, np.int64)
        self.receiver_id = np.asarray(self.receiver_id, np.int64)
        self.mode = np.asarray(self.mode, dtype="<U1")
        self.t_pick = np.asarray(self.t_pick, float)
        self.confidence = np.asarray(self.confidence, float)

    def __len__(self):
        return self.t_pick.size

    def select(self, mode=None, min_confidence=0.0):
        keep = np.isfinite(self.t_pick) & (self.confidence >= min_confidence)
        if mode is not None:
            keep &= self.mode == mode
        return ArrivalTable(self.source_id[keep], self.receiver_id[keep], self.mode[keep],
                            self.t_pick[keep], self.confidence[keep])

    def lookup(self, source_id, receiver_id, mode):
        hit = (self.source_id == source_id) & (self.receiver_id == receiver_id) & (self.mode == mode)
        idx = np.nonzero(hit)[0]
        return Pick(float(self.t_pick[idx[0]]), float(self.confidence[idx[0]])) if idx.size else MISSING

    def save(self, path):
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["source_id", "receiver_id", "mode", "t_pick", "confidence"])
            for row in zip(self.source_id, self.receiver_id, self.mode, self.t_pick, self.confidence):
                w.writerow([int(row[0]), int(row[1]), str(row[2]), fmt_float(row[3]), fmt_float(row[4])])
        return path

    @classmethod
    def load(cls, path):
        with Path(path).open() as fh:
            rows = list(csv.DictReader(fh))
        return cls(
            [int(r["source_id"]) for r in rows],
            [int(r["receiver_id"]) for r in rows],
            [r["mode"] for r in rows],
            [float(r["t_pick"]) for r in rows],
            [float(r["confidence"]) for r in rows],
        )


def pick_arrivals(dn, speed_bounds, min_confidence=0.5, min_separation_periods=1.0,
                  min_offset_wavelengths=2.0, threshold_factor=5.0, relative_threshold=0.2):
    """Pick p and s first arrivals for every source/receiver pair of a DN dataset.

    p arrivals are picked on the normal traction of normal-polarized
    sources and s arrivals on the tangential traction of tangential ones.
    Gates come from the speed bounds: a mode with speeds in ``[lo, hi]``
    arrives between ``|z - w| / hi`` and ``|z - w| / lo`` (plus the wavelet
    support) in a convex domain.

    The s confidence is scaled by the separation from the p arrival on the
    same trace (the smaller of the picked separation and the one implied by
    the speed bounds), in wavelet periods, relative to
    ``2 * min_separation_periods``;
    with the default ``min_confidence`` an s pick within one period of the p
    coda is therefore dropped.  Pairs closer than ``min_offset_wavelengths``
    wavelengths of the mode are not picked.

    Parameters
    ----------
    dn : DNDataset
    speed_bounds : dict
        ``{"p": (lo, hi), "s": (lo, hi)}``.

    Returns
    -------
    ArrivalTable
        All attempted picks, including missing and low-confidence ones; use
        :meth:`ArrivalTable.select` to filter.
    """
    cfg = dn.config
    dom = cfg.domain
    times = cfg.times
    rec = cfg.receiver_points()
    nt = dn.normal_tangential()
    rows = []
    p_hi = speed_bounds["p"][1]
    for k, src in enumerate(cfg.sources):
        z = src.location(dom)
        dist = np.linalg.norm(rec - z[None], axis=1)
        delay = calibrate_delay(src, times)
        support = 2.0 * src.t0
        for mode in MODES:
            if src.polarization != MODE_POLARIZATION[mode]:
                continue
            lo, hi = speed_bounds[mode]
            for r in range(len(cfg.receivers)):
                d = dist[r]
                if d < min_offset_wavelengths * lo / src.f0:
                    continue
                noise_window = (0.0, d / p_hi)
                window = (d / hi, d / lo + support)
                pk = pick_first_arrival(nt[k, r], times, mode, noise_window, window, delay,
                                        threshold_factor, relative_threshold)
                conf = pk.confidence
                if mode == "s" and not pk.missing:
                    pp = pick_first_arrival(nt[k, r], times, "p", noise_window,
                                            (d / p_hi, d / speed_bounds["p"][0] + support), delay,
                                            threshold_factor, relative_threshold)
                    t_p = pp.t if not pp.missing else d / speed_bounds["p"][0]
                    # the bound-implied separation guards short offsets where the picks merge
                    sep = min(pk.t - t_p, d / hi - d / speed_bounds["p"][0]) * src.f0
                    conf *= min(max(sep / (2.0 * min_separation_periods), 0.0), 1.0)
                rows.append((k, r, mode, pk.t, conf))
    if not rows:
        return ArrivalTable([], [], [], [], [])
    cols = list(zip(*rows))
    return ArrivalTable(*cols)


def source_receiver_index(config, source):
    """Index of the receiver nearest to ``source`` in boundary parameter."""
    rec = np.asarray(config.receivers)
    dth = np.abs(np.mod(rec - source.theta + np.pi, 2.0 * np.pi) - np.pi)
    return int(np.argmin(dth))


def travel_time_table(arrivals, config, mode, min_confidence=0.5):
    """Receiver-by-receiver travel-time table from picks of one mode.

    Row ``i`` holds the picks of sources located at receiver ``i``.
    Reciprocal picks are averaged; unmeasured pairs are ``nan`` and the
    diagonal is zero.  ``asymmetry`` records the largest reciprocity defect
    among pairs picked in both directions.
    """
    sel = arrivals.select(mode, min_confidence)
    R = len(config.receivers)
    loc = [source_receiver_index(config, s) for s in config.sources]
    directed = np.full((R, R), np.nan)
    for k, r, t in zip(sel.source_id, sel.receiver_id, sel.t_pick):
        directed[loc[k], r] = t
    both = np.isfinite(directed) & np.isfinite(directed.T)
    asym = float(np.max(np.abs(directed - directed.T)[both])) if np.any(both) else 0.0
    d = np.where(both, 0.5 * (directed + directed.T), np.fmin(directed, directed.T))
    np.fill_diagonal(d, 0.0)
    meta = {"origin": "picked arrivals", "min_confidence": min_confidence, "n_picks": int(len(sel))}
    params = np.asarray(config.receivers, float)
    return TravelTimeTable(params, config.receiver_points(), d, mode, None, asym, meta)
