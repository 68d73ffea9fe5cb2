from __future__ import annotations

import csv
import json
import math

import numpy as np
import pytest

from lamelab.cli import EXIT_CONFIG, EXIT_DIVERGENCE, EXIT_OK, main
from lamelab.experiment import PRESETS, ConfigError, ExperimentConfig, load_config, load_preset
from lamelab.io import dumps, fmt_float

SMALL_SIM = {"n_grid": 60, "T": 0.8, "n_sources": 2, "n_receivers": 8}


def write_config(tmp_path, name="cfg.json", **body):
    p = tmp_path / name
    p.write_text(json.dumps(body))
    return p


def read_table(path):
    with open(path) as fh:
        rows = list(csv.reader(fh))
    return rows


def manifest(out):
    return json.loads((out / "manifest.json").read_text())


class TestConfig:
    @pytest.mark.parametrize("name", PRESETS)
    def test_preset_roundtrip(self, name):
        cfg = load_preset(name)
        again = ExperimentConfig.from_dict(json.loads(dumps(cfg.to_dict())))
        assert again.to_dict() == cfg.to_dict()
        assert again.hash() == cfg.hash()

    def test_unknown_preset(self):
        with pytest.raises(ConfigError):
            load_preset("nope")

    def test_unknown_key(self, tmp_path):
        p = write_config(tmp_path, preset="homogeneous-disk", bogus=1)
        with pytest.raises(ConfigError):
            load_config(p)

    def test_unknown_section_key(self, tmp_path):
        p = write_config(tmp_path, preset="homogeneous-disk", simulation={"grid": 3})
        with pytest.raises(ConfigError):
            load_config(p)

    def test_invalid_triplet_rejected(self, tmp_path):
        p = write_config(tmp_path, preset="homogeneous-disk", candidate={"lambda": -1.0, "mu": 1.0, "rho": 1.0})
        with pytest.raises(ConfigError) as exc:
            load_config(p)
        assert not exc.value.report.passed

    def test_preset_extension(self, tmp_path):
        p = write_config(tmp_path, preset="homogeneous-disk", simulation={"n_grid": 100})
        cfg = load_config(p)
        assert cfg.simulation["n_grid"] == 100 and cfg.simulation["T"] == 3.0

    def test_missing_source(self):
        with pytest.raises(ConfigError):
            load_config()

    def test_fmt_float_roundtrip(self):
        for x in (math.pi, 1e-300, -2.5e17, 1.0 / 3.0):
            assert float(fmt_float(x)) == x


class TestSpeeds:
    def test_summary_and_dump(self, tmp_path, capsys):
        out = tmp_path / "run"
        assert main(["speeds", "--preset", "homogeneous-disk", "--out", str(out), "--grid", "11"]) == EXIT_OK
        assert "c_p=1.7320508, c_s=1.0000000" in capsys.readouterr().out
        rows = read_table(out / "speeds.csv")
        assert len(rows) - 1 == 11 * 11
        m = manifest(out)
        listed = {a["path"] for a in m["artifacts"]}
        assert {"speeds.csv", "c_p.dat", "c_s.dat", "speeds.json", "config.json"} <= listed

    def test_invalid_exit_code(self, tmp_path, capsys):
        p = write_config(tmp_path, preset="homogeneous-disk", candidate={"lambda": -1.0, "mu": 1.0, "rho": 1.0})
        code = main(["speeds", "--config", str(p), "--out", str(tmp_path / "run")])
        assert code == EXIT_CONFIG
        err = capsys.readouterr().err
        assert "lambda" in err

    def test_unreadable_config(self, tmp_path):
        p = tmp_path / "broken.json"
        p.write_text("{not json")
        assert main(["speeds", "--config", str(p), "--out", str(tmp_path / "run")]) == EXIT_CONFIG

    def test_rerun_identical(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        for out in (a, b):
            main(["speeds", "--preset", "mu-bump-10pct", "--out", str(out), "--grid", "9"])
        ca = {x["path"]: x["sha256"] for x in manifest(a)["artifacts"]}
        cb = {x["path"]: x["sha256"] for x in manifest(b)["artifacts"]}
        assert ca == cb


class TestDistances:
    @pytest.mark.parametrize("mode,scale", [("s", 1.0), ("p", 1.0 / math.sqrt(3.0))])
    def test_chords(self, tmp_path, mode, scale):
        out = tmp_path / mode
        assert main(["distances", "--preset", "homogeneous-disk", "--out", str(out), "--m", "4",
                     "--mode", mode]) == EXIT_OK
        rows = read_table(out / f"distances_{mode}.csv")
        d = np.array([[float(v) for v in r] for r in rows[1:]])
        assert d.shape == (4, 4)
        expected = np.array([[0, 1, 2, 1], [1, 0, 1, 2], [2, 1, 0, 1], [1, 2, 1, 0]], float)
        expected = np.where(expected == 1, math.sqrt(2.0), expected) * scale
        assert np.allclose(d, expected, atol=1e-10)

    def test_hyperbolic_max(self, tmp_path, capsys):
        out = tmp_path / "hyp"
        assert main(["distances", "--preset", "hyperbolic-disk", "--out", str(out), "--m", "8"]) == EXIT_OK
        line = capsys.readouterr().out.strip()
        value = float(line.split("max=")[1])
        assert value == pytest.approx(2 * math.log(3.0), rel=1e-4)


class TestSimulation:
    def test_simulate_and_compare(self, tmp_path, capsys):
        p = write_config(tmp_path, preset="homogeneous-disk", simulation=SMALL_SIM)
        out = tmp_path / "sim"
        assert main(["simulate", "--config", str(p), "--out", str(out)]) == EXIT_OK
        capsys.readouterr()
        assert main(["dn-compare", "--config", str(p), "--out", str(out), "--data", str(out / "dn")]) == EXIT_OK
        assert "discrepancy=0\n" in capsys.readouterr().out
        assert json.loads((out / "dn_compare.json").read_text())["discrepancy"] == 0.0
        listed = {a["path"] for a in manifest(out)["artifacts"]}
        assert {"dn.bin", "dn.json", "trace_source0.dat", "dn_compare.json"} <= listed

    def test_compare_bump(self, tmp_path, capsys):
        p = write_config(tmp_path, preset="mu-bump-10pct", simulation=SMALL_SIM)
        out = tmp_path / "cmp"
        assert main(["dn-compare", "--config", str(p), "--out", str(out)]) == EXIT_OK
        d = json.loads((out / "dn_compare.json").read_text())["discrepancy"]
        assert d > 0.0

    def test_simulate_rerun_identical(self, tmp_path):
        p = write_config(tmp_path, preset="homogeneous-disk", simulation=SMALL_SIM)
        sums = []
        for name in ("a", "b"):
            main(["simulate", "--config", str(p), "--out", str(tmp_path / name)])
            sums.append({x["path"]: x["sha256"] for x in manifest(tmp_path / name)["artifacts"]})
        assert sums[0] == sums[1]


class TestRigidityCommand:
    def test_refused_short_time(self, tmp_path, capsys):
        sim = dict(SMALL_SIM, T=1.5)
        p = write_config(tmp_path, preset="homogeneous-disk", simulation=sim)
        out = tmp_path / "rig"
        assert main(["rigidity", "--config", str(p), "--out", str(out)]) == EXIT_OK
        assert "refused; hypothesis (d) fails" in capsys.readouterr().out
        rep = json.loads((out / "report.json").read_text())
        assert rep["hypotheses"]["d"]["tag"] == "fail"

    def test_invert_small(self, tmp_path, capsys):
        p = write_config(tmp_path, preset="homogeneous-disk", inversion={"n_grid": 21, "m": 6, "init": 1.1})
        out = tmp_path / "inv"
        assert main(["invert", "--config", str(p), "--out", str(out)]) == EXIT_OK
        s = json.loads((out / "inversion_s.json").read_text())
        assert s["mean_speed_inner"] == pytest.approx(1.0, rel=0.05)
        assert (out / "speed_s.dat").read_text().startswith("# x y c_s")

    def test_divergence_exit(self, tmp_path, capsys):
        # a CFL number far above the stability limit blows the solution up
        p = write_config(tmp_path, preset="homogeneous-disk", simulation=dict(SMALL_SIM, cfl=5.0, T=30.0))
        code = main(["simulate", "--config", str(p), "--out", str(tmp_path / "x")])
        assert code == EXIT_DIVERGENCE
        assert "numerical divergence" in capsys.readouterr().err
