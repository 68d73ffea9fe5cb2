from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lamelab import Domain, LameField, PositivityError
from lamelab.fields import BumpField, ConstantField
from lamelab.wave import (
    BoundarySource,
    CFLViolationError,
    SimulationConfig,
    WaveField,
    energy_increase,
    neumann_trace,
    ricker,
    ricker_dot,
    solve_ibvp,
)
from lamelab.wave.dn import ConfigMismatchError, DNDataset, assemble_dn_data, compare_dn
from lamelab.wave.grid import StaggeredGrid
from lamelab.wave.picking import (
    ArrivalTable,
    calibrate_delay,
    envelope,
    pick_arrivals,
    pick_first_arrival,
    travel_time_table,
)

DISK = Domain.disk()
UNIT = LameField.constant(1.0, 1.0, 1.0, DISK)
BOUNDS = {"p": (np.sqrt(3.0) / 1.1, np.sqrt(3.0) * 1.1), "s": (1 / 1.1, 1.1)}


def small_config(n_grid=120, T=1.5, **kw):
    kw.setdefault("n_sources", 2)
    kw.setdefault("n_receivers", 32)
    return SimulationConfig.build(DISK, n_grid=n_grid, T=T, **kw)


@pytest.fixture(scope="module")
def dataset():
    """Four source locations with both polarizations on a 200 grid."""
    cfg = SimulationConfig.build(DISK, n_grid=200, T=2.6, n_sources=8, n_receivers=32)
    return assemble_dn_data(UNIT, cfg)


@pytest.fixture(scope="module")
def arrivals(dataset):
    return pick_arrivals(dataset, BOUNDS)


# ----------------------------------------------------------------------
class TestConfig:
    def test_ricker_derivative(self):
        f0, t0 = 3.0, 2.2 / 3.0
        t = np.linspace(0.05, 2 * t0 - 0.05, 200)
        fd = (ricker(t + 1e-6, f0, t0) - ricker(t - 1e-6, f0, t0)) / 2e-6
        assert np.allclose(ricker_dot(t, f0, t0), fd, atol=1e-5)
        assert ricker(t0, f0, t0) == 1.0
        assert abs(ricker(0.0, f0, t0)) < 1e-18
        assert ricker(2 * t0 + 1e-9, f0, t0) == 0.0

    def test_build_defaults(self):
        cfg = SimulationConfig.build(DISK)
        assert len(cfg.sources) == 16 and len(cfg.receivers) == 64
        src = cfg.sources[0]
        assert src.f0 == pytest.approx(1.0 / (20 * cfg.h))
        assert src.width == pytest.approx(4 * cfg.h)
        assert {s.polarization for s in cfg.sources} == {"normal", "tangential"}

    def test_bad_source_count(self):
        with pytest.raises(ValueError):
            SimulationConfig.build(DISK, n_sources=3)

    def test_bad_polarization(self):
        with pytest.raises(ValueError):
            BoundarySource(0.0, "oblique", 1.0, 1.0, 0.1)

    def test_three_dimensional_rejected(self):
        with pytest.raises(NotImplementedError):
            SimulationConfig.build(Domain.ball(), n_grid=50)

    def test_time_step_respects_cfl(self):
        cfg = small_config()
        dt, stride = cfg.time_step(np.sqrt(3.0))
        assert dt * np.sqrt(3.0) / cfg.h <= cfg.cfl * (1 + 1e-12)
        assert dt * stride == pytest.approx(cfg.dt_out, rel=1e-14)

    def test_c_max_below_medium_rejected(self):
        cfg = small_config(c_max=1.0)
        with pytest.raises(CFLViolationError):
            solve_ibvp(UNIT, cfg, cfg.sources[0])

    def test_refined_keeps_physics(self):
        cfg = small_config()
        fine = cfg.refined(2)
        assert fine.h == pytest.approx(cfg.h / 2, rel=1e-12)
        assert fine.physics_hash() == cfg.physics_hash()
        assert fine.hash() != cfg.hash()

    def test_roundtrip(self):
        cfg = small_config()
        back = SimulationConfig.from_dict(cfg.to_dict())
        assert back.hash() == cfg.hash()
        assert back.sources == cfg.sources

    def test_source_footprint(self):
        src = small_config().sources[0]
        z = src.location(DISK)
        val = src.spatial(DISK, z[None])[0]
        assert np.allclose(val, -z, atol=1e-14)  # unit amplitude along the inward normal
        far = src.spatial(DISK, -z[None])[0]
        assert np.all(far == 0.0)


# ----------------------------------------------------------------------
class TestSolver:
    def test_zero_source(self):
        cfg = small_config()
        wf = solve_ibvp(UNIT, cfg, None, probes=np.zeros((1, 2)), checkpoints=(0.5,))
        assert not np.any(wf.traces) and not np.any(wf.probes)
        assert all(not np.any(u) for pair in wf.snapshots.values() for u in pair)

    def test_positivity_enforced(self):
        cfg = small_config()
        with pytest.raises(PositivityError):
            solve_ibvp(LameField.constant(-1.0, 1.0, 1.0, DISK), cfg, cfg.sources[0])

    def test_linearity(self):
        cfg = small_config()
        src = cfg.sources[1]
        a = solve_ibvp(UNIT, cfg, src).traces
        b = solve_ibvp(UNIT, cfg, src.scaled(2.0)).traces
        assert np.linalg.norm(b - 2 * a) <= 1e-10 * np.linalg.norm(b)

    def test_causality(self):
        cfg = small_config(T=1.2, n_receivers=32)
        src = cfg.sources[0]
        wf = solve_ibvp(UNIT, cfg, src)
        d = np.linalg.norm(cfg.receiver_points() - src.location(DISK)[None], axis=1)
        limit = d / np.sqrt(3.0) - 2 * src.t0
        for r in np.nonzero(limit > 0)[0]:
            early = cfg.times < limit[r]
            assert np.max(np.abs(wf.traces[early, r])) < 1e-12

    def test_energy_after_shutoff(self):
        cfg = small_config(n_grid=200, T=6.0)
        for src in cfg.sources:
            wf = solve_ibvp(UNIT, cfg, src, traces=False, energy=True)
            # one crossing: diameter over the slowest speed
            assert energy_increase(wf, 2.0) <= 0.005
            after = wf.energy[wf.times >= wf.shutoff_time()]
            assert abs(after[-1] / after[0] - 1.0) <= 0.005

    def test_energy_requires_record(self):
        cfg = small_config()
        wf = solve_ibvp(UNIT, cfg, None, traces=False)
        with pytest.raises(ValueError):
            energy_increase(wf, 2.0)

    @pytest.mark.parametrize("pol,comp,speed", [("normal", 0, np.sqrt(3.0)), ("tangential", 1, 1.0)])
    def test_wavefront_speed(self, pol, comp, speed):
        cfg = SimulationConfig.build(DISK, n_grid=200, T=2.6, n_sources=1, n_receivers=8,
                                     polarizations=(pol,))
        src = BoundarySource(np.pi, pol, *[getattr(cfg.sources[0], k) for k in ("f0", "t0", "width")])
        x = np.linspace(-0.6, 0.4, 11)
        probes = np.stack([x, np.zeros_like(x)], axis=1)
        wf = solve_ibvp(UNIT, cfg, src, probes=probes, traces=False)
        peak = []
        for k in range(x.size):
            env = envelope(wf.probes[:, k, comp])
            # gate out the other mode and wall reflections around the travel time
            d = x[k] + 1.0
            gate = (wf.times >= d / (1.25 * speed)) & (wf.times <= d / (0.75 * speed) + 1.5 * src.t0)
            peak.append(wf.times[gate][int(np.argmax(env[gate]))])
        slope = np.polyfit(x, peak, 1)[0]
        assert 1.0 / slope == pytest.approx(speed, rel=0.02)

    def test_static_dilation_traction(self):
        cfg = small_config(n_grid=80, n_receivers=16)
        grid = StaggeredGrid.from_config(cfg)
        ux = grid.positions("vx")[..., 0]
        uy = grid.positions("vy")[..., 1]

        class Dilation:
            """Datum ``u = x`` on the boundary, constant in time."""

            def spatial(self, domain, xb):
                return np.atleast_2d(xb)

            def spatial_tangential_derivative(self, domain, xb):
                return domain.tangent_frame(np.atleast_2d(xb))[:, 0]

            def time(self, t):
                return np.ones_like(t)

        wf = WaveField(cfg, grid, None, 1.0, cfg.times, snapshots={0: (ux, uy)})
        pts = cfg.receiver_points()
        tr = neumann_trace(wf, UNIT, pts, datum=Dilation())[0]
        assert np.allclose(tr, 4.0 * DISK.outward_normal(pts), atol=1e-8)

    def test_snapshot_traction_matches_trace(self):
        cfg = small_config()
        src = cfg.sources[0]
        wf = solve_ibvp(UNIT, cfg, src, checkpoints=(0.9,))
        m = int(round(0.9 / cfg.dt_out))
        tr = neumann_trace(wf, UNIT, cfg.receiver_points(), t_index=m)[m]
        assert np.allclose(tr, wf.traces[m], atol=1e-12 * np.abs(wf.traces).max())


# ----------------------------------------------------------------------
class TestDN:
    def test_zero_source_slice(self):
        cfg = small_config(n_sources=2)
        src = [cfg.sources[0], cfg.sources[1].scaled(0.0)]
        dn = assemble_dn_data(UNIT, cfg, sources=src)
        assert not np.any(dn.data[1]) and np.any(dn.data[0])

    def test_deterministic(self):
        cfg = small_config()
        a = assemble_dn_data(UNIT, cfg)
        b = assemble_dn_data(UNIT, cfg)
        assert a.checksum() == b.checksum()
        assert compare_dn(a, b).discrepancy == 0.0

    def test_half_discrepancy_for_doubled(self, dataset):
        assert compare_dn(dataset, dataset.scaled(2.0)).discrepancy == pytest.approx(0.5, abs=1e-15)

    def test_mismatch(self, dataset):
        other = small_config()
        dn = DNDataset(np.zeros((2, 32, other.n_out, 2)), other)
        with pytest.raises(ConfigMismatchError):
            compare_dn(dataset, dn)

    def test_strict_compare(self):
        cfg = small_config()
        a = DNDataset(np.ones((2, 32, cfg.n_out, 2)), cfg)
        b = DNDataset(np.ones((2, 32, cfg.n_out, 2)), cfg.refined(2))
        assert compare_dn(a, b).discrepancy == 0.0
        with pytest.raises(ConfigMismatchError):
            compare_dn(a, b, strict=True)

    def test_shape_checked(self):
        cfg = small_config()
        with pytest.raises(ValueError):
            DNDataset(np.zeros((1, 32, cfg.n_out, 2)), cfg)

    def test_save_load(self, dataset, tmp_path):
        bin_path, json_path = dataset.save(tmp_path / "dn")
        assert bin_path.stat().st_size == dataset.data.size * 8
        back = DNDataset.load(tmp_path / "dn")
        assert back.checksum() == dataset.checksum()
        assert back.config.hash() == dataset.config.hash()

    def test_subset(self, dataset):
        sub = dataset.subset([2, 5])
        assert np.array_equal(sub.data, dataset.data[[2, 5]])
        assert sub.config.sources == (dataset.config.sources[2], dataset.config.sources[5])

    def test_normal_tangential_preserves_norm(self, dataset):
        nt = dataset.normal_tangential()
        assert np.allclose(np.linalg.norm(nt, axis=-1), np.linalg.norm(dataset.data, axis=-1), atol=1e-14)


# ----------------------------------------------------------------------
class TestPicking:
    def test_zero_trace_missing(self):
        t = np.linspace(0, 2, 200)
        assert pick_first_arrival(np.zeros(200), t, "p", (0, 0.3), (0.3, 1.5), 0.1).missing

    def test_unknown_mode(self):
        t = np.linspace(0, 2, 200)
        with pytest.raises(ValueError):
            pick_first_arrival(np.zeros(200), t, "q", (0, 0.3), (0.3, 1.5), 0.1)

    @settings(max_examples=30, deadline=None)
    @given(st.floats(0.4, 1.4), st.floats(0.2, 3.0))
    def test_synthetic_delayed_wavelet(self, shift, amp):
        f0 = 5.0
        src = BoundarySource(0.0, "normal", f0, 2.2 / f0, 0.1)
        t = np.arange(0, 3.0, 1 / (20 * f0))
        delay = calibrate_delay(src, t)
        trace = amp * src.time(t - shift)
        pk = pick_first_arrival(trace, t, "p", (0, 0.3), (0.2, 2.0), delay)
        assert pk.t == pytest.approx(shift, abs=2e-3 / f0)
        assert pk.confidence == 1.0

    def test_first_of_two_arrivals(self):
        f0 = 5.0
        src = BoundarySource(0.0, "normal", f0, 2.2 / f0, 0.1)
        t = np.arange(0, 4.0, 1 / (20 * f0))
        delay = calibrate_delay(src, t)
        trace = 0.5 * src.time(t - 0.5) + src.time(t - 2.0)
        pk = pick_first_arrival(trace, t, "p", (0, 0.3), (0.2, 3.0), delay)
        assert pk.t == pytest.approx(0.5, abs=1e-3)

    def test_diametric_picks(self, arrivals):
        # sources sit at receivers 0, 8, 16, 24; receiver 16 is opposite source 0
        p = arrivals.lookup(0, 16, "p")
        s = arrivals.lookup(1, 16, "s")
        assert p.t == pytest.approx(2 / np.sqrt(3.0), rel=0.05)
        assert s.t == pytest.approx(2.0, rel=0.05)

    def test_reciprocity(self, dataset, arrivals):
        cfg = dataset.config
        pairs = 0
        for mode in ("p", "s"):
            tab = travel_time_table(arrivals, cfg, mode)
            both = np.isfinite(tab.d)
            pairs += int(np.sum(both))
            assert tab.asymmetry <= 0.02 * np.nanmax(tab.d)
        assert pairs > 0

    def test_reciprocity_pairwise(self, arrivals):
        for mode, k0 in (("p", 0), ("s", 1)):
            for a, b in ((0, 1), (0, 2), (1, 3)):
                ra, rb = 8 * a, 8 * b
                fwd = arrivals.lookup(k0 + 2 * a, rb, mode)
                bwd = arrivals.lookup(k0 + 2 * b, ra, mode)
                assert fwd.t == pytest.approx(bwd.t, rel=0.02)

    def test_arrival_lower_bound(self, dataset, arrivals):
        cfg = dataset.config
        sel = arrivals.select()
        rec = cfg.receiver_points()
        for k, r, t in zip(sel.source_id, sel.receiver_id, sel.t_pick):
            src = cfg.sources[k]
            d = np.linalg.norm(rec[r] - src.location(DISK))
            assert t >= d / BOUNDS["p"][1] - src.t0

    def test_picks_near_chords(self, dataset, arrivals):
        cfg = dataset.config
        rec = cfg.receiver_points()
        sel = arrivals.select(min_confidence=0.5)
        assert len(sel) > 20
        for k, r, m, t in zip(sel.source_id, sel.receiver_id, sel.mode, sel.t_pick):
            d = np.linalg.norm(rec[r] - cfg.sources[k].location(DISK))
            c = np.sqrt(3.0) if m == "p" else 1.0
            assert t == pytest.approx(d / c, rel=0.05)

    def test_table_roundtrip(self, arrivals, tmp_path):
        arrivals.save(tmp_path / "arr.csv")
        back = ArrivalTable.load(tmp_path / "arr.csv")
        assert np.array_equal(back.source_id, arrivals.source_id)
        assert np.array_equal(back.mode, arrivals.mode)
        assert np.array_equal(back.t_pick, arrivals.t_pick, equal_nan=True)
        assert np.array_equal(back.confidence, arrivals.confidence)

    def test_select_filters(self, arrivals):
        sel = arrivals.select("s", 0.5)
        assert np.all(sel.mode == "s") and np.all(sel.confidence >= 0.5)
        assert np.all(np.isfinite(sel.t_pick))


def test_heterogeneous_run_is_finite():
    mu = BumpField(1.0, 0.1, (0.2, 0.0), 0.5)
    lame = LameField(ConstantField(1.0), mu, ConstantField(1.0), DISK)
    cfg = small_config()
    wf = solve_ibvp(lame, cfg, cfg.sources[0])
    assert np.all(np.isfinite(wf.traces)) and np.any(wf.traces)
