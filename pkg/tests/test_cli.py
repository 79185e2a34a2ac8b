"""End-to-end checks of the command-line driver: artifact shapes, exit
codes, and byte-level determinism of repeated runs."""

import json

import numpy as np
import pytest

from qflow.cfd import ConfigError
from qflow.cli import main, parse_config


def write_config(path, **overrides):
    base = {"flow": "poiseuille", "n_grid": 6, "re": 1, "dt": 0.01,
            "m_steps": 5}
    base.update(overrides)
    lines = [f"{k} = {v}" for k, v in base.items()]
    path.write_text("\n".join(lines) + "\n")
    return path


class TestConfigParser:
    def test_comments_and_blanks_ignored(self, tmp_path):
        p = tmp_path / "c.cfg"
        p.write_text("# header\n\nflow = couette  # inline\nn_grid = 8\n")
        got = parse_config(p)
        assert got == {"flow": "couette", "n_grid": 8}

    def test_unknown_key_rejected(self, tmp_path):
        p = tmp_path / "c.cfg"
        p.write_text("viscosity = 3\n")
        with pytest.raises(ConfigError, match="unknown key"):
            parse_config(p)

    def test_bad_value_rejected(self, tmp_path):
        p = tmp_path / "c.cfg"
        p.write_text("n_grid = many\n")
        with pytest.raises(ConfigError, match="bad value"):
            parse_config(p)

    def test_missing_equals_rejected(self, tmp_path):
        p = tmp_path / "c.cfg"
        p.write_text("just a line\n")
        with pytest.raises(ConfigError, match="expected key"):
            parse_config(p)

    def test_missing_file_is_config_error(self, tmp_path):
        with pytest.raises(ConfigError, match="cannot read"):
            parse_config(tmp_path / "nope.cfg")


class TestSolve:
    def test_classical_reference_has_zero_self_error(self, tmp_path):
        cfg = write_config(tmp_path / "f.cfg")
        out = tmp_path / "run"
        rc = main(["solve", "--config", str(cfg), "--method", "classical",
                   "--out", str(out)])
        assert rc == 0
        metrics = json.loads((out / "metrics.json").read_text())
        assert metrics["vs_classical"]["rms"] == 0.0
        assert metrics["vs_classical"]["fidelity"] == pytest.approx(1.0)
        # profile holds the initial row plus one row set per step
        lines = (out / "profile.csv").read_text().strip().splitlines()
        n_interior = 4
        assert lines[0] == "step,y,u"
        assert len(lines) - 1 == (metrics["steps"] + 1) * n_interior

    def test_hhl_iterative_tracks_classical(self, tmp_path):
        cfg = write_config(tmp_path / "f.cfg", m_steps=20)
        out = tmp_path / "run"
        rc = main(["solve", "--config", str(cfg), "--method", "hhl",
                   "--scheme", "be1", "--q-pe", "8", "--out", str(out)])
        assert rc == 0
        metrics = json.loads((out / "metrics.json").read_text())
        assert metrics["converged"] is True
        assert metrics["vs_classical"]["rms"] < 1e-3
        assert metrics["min_fidelity_vs_classical"] > 0.999

    def test_one_shot_be2(self, tmp_path):
        cfg = write_config(tmp_path / "f.cfg", dt=0.05, m_steps=4)
        out = tmp_path / "run"
        rc = main(["solve", "--config", str(cfg), "--method", "hhl",
                   "--scheme", "be2", "--q-pe", "9", "--out", str(out)])
        assert rc == 0
        metrics = json.loads((out / "metrics.json").read_text())
        assert metrics["vs_classical"]["rms"] < 5e-2
        assert 0.0 < metrics["success_probability"] <= 1.0

    def test_unstable_fe_exits_2(self, tmp_path):
        cfg = write_config(tmp_path / "f.cfg", n_grid=12, dt=0.05)
        rc = main(["solve", "--config", str(cfg), "--scheme", "fe",
                   "--out", str(tmp_path / "run")])
        assert rc == 2
        assert not (tmp_path / "run" / "metrics.json").exists()

    def test_flag_overrides_config(self, tmp_path):
        cfg = write_config(tmp_path / "f.cfg", scheme="fe", dt=0.05,
                           n_grid=12)
        # config picks the unstable explicit scheme; the flag forces be1
        out = tmp_path / "run"
        rc = main(["solve", "--config", str(cfg), "--scheme", "be1",
                   "--method", "classical", "--out", str(out)])
        assert rc == 0
        metrics = json.loads((out / "metrics.json").read_text())
        assert metrics["scheme"] == "be1"

    def test_bad_scheme_exits_3(self, tmp_path):
        cfg = write_config(tmp_path / "f.cfg")
        rc = main(["solve", "--config", str(cfg), "--scheme", "rk4",
                   "--out", str(tmp_path / "run")])
        assert rc == 3

    def test_missing_config_exits_3(self, tmp_path):
        rc = main(["solve", "--config", str(tmp_path / "nope.cfg"),
                   "--out", str(tmp_path / "run")])
        assert rc == 3

    def test_manifest_lists_outputs(self, tmp_path):
        cfg = write_config(tmp_path / "f.cfg")
        out = tmp_path / "run"
        main(["solve", "--config", str(cfg), "--method", "classical",
              "--out", str(out), "--seed", "3"])
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["command"] == "solve"
        assert manifest["seed"] == 3
        assert manifest["outputs"] == ["metrics.json", "profile.csv"]
        assert manifest["versions"]["qflow"]
        assert manifest["versions"]["backend"] in ("compiled", "python")
        for name in manifest["outputs"]:
            assert (out / name).exists()


class TestScanTQ:
    def test_surrogate_scan_artifacts(self, tmp_path):
        out = tmp_path / "scan"
        rc = main(["scan-tq", "--surrogate-kappa", "9.44",
                   "--t0-range", "0.2:1.0:5", "--q-pe-range", "5:7",
                   "--out", str(out)])
        assert rc == 0
        lines = (out / "scan.csv").read_text().strip().splitlines()
        assert lines[0] == "t0,q_pe,epsilon"
        assert len(lines) - 1 == 5 * 3
        summary = json.loads((out / "scan.json").read_text())
        assert summary["kappa"] == pytest.approx(9.44, rel=1e-6)
        assert summary["q_pe_values"] == [5, 6, 7]
        assert len(summary["locus"]) == 3
        assert summary["t0_min"] == 0.2
        assert 0.0 <= summary["locus_spread_fraction"] <= 1.0

    def test_single_cell_grid_is_legal(self, tmp_path):
        out = tmp_path / "scan"
        rc = main(["scan-tq", "--surrogate-kappa", "5",
                   "--t0-range", "0.5:0.5:1", "--q-pe-range", "6:6",
                   "--out", str(out)])
        assert rc == 0
        lines = (out / "scan.csv").read_text().strip().splitlines()
        assert len(lines) == 2
        summary = json.loads((out / "scan.json").read_text())
        assert summary["t0_star"] == 0.5
        assert summary["locus_spread_fraction"] == 0.0

    def test_repeat_runs_are_byte_identical(self, tmp_path):
        args = ["scan-tq", "--surrogate-kappa", "9.44",
                "--t0-range", "0.2:1.0:5", "--q-pe-range", "5:7",
                "--seed", "11"]
        a, b = tmp_path / "a", tmp_path / "b"
        assert main(args + ["--out", str(a)]) == 0
        assert main(args + ["--out", str(b)]) == 0
        assert (a / "scan.csv").read_bytes() == (b / "scan.csv").read_bytes()
        assert (a / "scan.json").read_bytes() == \
            (b / "scan.json").read_bytes()

    def test_budget_guard_exits_3(self, tmp_path):
        rc = main(["scan-tq", "--surrogate-kappa", "5",
                   "--t0-range", "0.1:1.0:200", "--q-pe-range", "5:9",
                   "--out", str(tmp_path / "scan")])
        assert rc == 3

    def test_malformed_ranges_exit_3(self, tmp_path):
        rc = main(["scan-tq", "--surrogate-kappa", "5",
                   "--t0-range", "0.5:1.0", "--q-pe-range", "5:7",
                   "--out", str(tmp_path / "scan")])
        assert rc == 3
        rc = main(["scan-tq", "--surrogate-kappa", "5",
                   "--t0-range", "0.5:1.0:3", "--q-pe-range", "7:5",
                   "--out", str(tmp_path / "scan")])
        assert rc == 3

    def test_flow_system_scan(self, tmp_path):
        cfg = write_config(tmp_path / "f.cfg", m_steps=1)
        out = tmp_path / "scan"
        rc = main(["scan-tq", "--config", str(cfg),
                   "--t0-range", "0.5:2.0:4", "--q-pe-range", "5:6",
                   "--out", str(out)])
        assert rc == 0
        summary = json.loads((out / "scan.json").read_text())
        assert summary["kappa"] > 1.0


def synthetic_scan(path, kappa, t0_star, exponent=-5.0, coeff=3.0):
    qs = [5, 6, 7, 8]
    payload = {
        "t0_star": t0_star,
        "locus": [t0_star] * len(qs),
        "kappa": kappa,
        "q_pe_values": qs,
        "t0_min": 0.1, "t0_max": 1.0,
        "locus_spread_fraction": 0.0,
        "eps_min_per_q": [coeff * q**exponent for q in qs],
    }
    path.write_text(json.dumps(payload))
    return path


class TestFits:
    def test_power_law_recovered_exactly(self, tmp_path):
        scan = synthetic_scan(tmp_path / "s.json", 10.0, 0.5,
                              exponent=-6.81, coeff=3.7)
        out = tmp_path / "fits"
        rc = main(["fits", "--scan", str(scan), "--out", str(out)])
        assert rc == 0
        result = json.loads((out / "fits.json").read_text())
        fit = result["scans"][0]["power_law"]
        assert fit["exponent"] == pytest.approx(-6.81, abs=1e-9)
        assert fit["coeff"] == pytest.approx(3.7, rel=1e-9)
        assert fit["r_squared"] == pytest.approx(1.0)
        assert result["t0_kappa"] is None

    def test_t0_kappa_fit_across_scans(self, tmp_path):
        slope, intercept = -0.363, 0.918
        paths = []
        for i, kappa in enumerate([5.0, 10.0, 20.0, 40.0]):
            t0 = intercept + slope * np.log(kappa)
            paths.append(synthetic_scan(tmp_path / f"s{i}.json", kappa, t0))
        out = tmp_path / "fits"
        args = ["fits", "--out", str(out)]
        for p in paths:
            args += ["--scan", str(p)]
        assert main(args) == 0
        result = json.loads((out / "fits.json").read_text())
        fit = result["t0_kappa"]
        assert fit["slope"] == pytest.approx(slope, abs=1e-12)
        assert fit["intercept"] == pytest.approx(intercept, abs=1e-12)
        assert fit["r_squared"] == pytest.approx(1.0)

    def test_no_inputs_exits_3(self, tmp_path):
        assert main(["fits", "--out", str(tmp_path / "f")]) == 3

    def test_missing_input_exits_3(self, tmp_path):
        rc = main(["fits", "--scan", str(tmp_path / "ghost.json"),
                   "--out", str(tmp_path / "f")])
        assert rc == 3


class TestDissipation:
    def test_sweep_rows_and_determinism(self, tmp_path):
        cfg = write_config(tmp_path / "f.cfg", n_grid=10, re=10)
        a, b = tmp_path / "a", tmp_path / "b"
        args = ["dissipation", "--config", str(cfg), "--re", "10,100",
                "--r", "6", "--q-pe", "7"]
        assert main(args + ["--out", str(a)]) == 0
        assert main(args + ["--out", str(b)]) == 0
        text = (a / "dissipation.csv").read_text()
        assert text == (b / "dissipation.csv").read_text()
        lines = text.strip().splitlines()
        assert lines[0] == \
            "re,epsilon_quantum,epsilon_classical,epsilon_analytic"
        assert len(lines) == 3
        first = [float(v) for v in lines[1].split(",")]
        assert first[0] == 10.0
        # quantum estimate sits near the classical stencil value
        assert abs(first[1] - first[2]) / first[2] < 0.1

    def test_non_power_of_two_interior_exits_3(self, tmp_path):
        cfg = write_config(tmp_path / "f.cfg", n_grid=7)
        rc = main(["dissipation", "--config", str(cfg),
                   "--out", str(tmp_path / "d")])
        assert rc == 3


class TestQSPDemo:
    def test_block_vector_report(self, tmp_path):
        vec = tmp_path / "vec.csv"
        amps = np.full(8, 1 / np.sqrt(8))
        vec.write_text("".join(f"{i},{float(a)!r}\n"
                               for i, a in enumerate(amps)))
        out = tmp_path / "demo"
        rc = main(["qsp-demo", "--vector", str(vec), "--out", str(out)])
        assert rc == 0
        report = json.loads((out / "report.json").read_text())
        assert report["n_qubits"] == 3
        assert report["nonzeros"] == 8
        assert report["ancilla_count"] == 1
        assert 0.0 <= report["reduction_percent"] <= 100.0
        assert (out / "qsp1.txt").read_text().startswith("qubits 3")
        assert (out / "qsp2.txt").read_text().startswith("qubits 4")

    def test_single_method_writes_one_circuit(self, tmp_path):
        vec = tmp_path / "vec.csv"
        vec.write_text("0,0.6\n3,0.8\n")
        out = tmp_path / "demo"
        rc = main(["qsp-demo", "--vector", str(vec), "--method", "qsp2",
                   "--out", str(out)])
        assert rc == 0
        assert not (out / "qsp1.txt").exists()
        assert (out / "qsp2.txt").exists()
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["outputs"] == ["qsp2.txt", "report.json"]

    def test_missing_vector_exits_3(self, tmp_path):
        rc = main(["qsp-demo", "--vector", str(tmp_path / "ghost.csv"),
                   "--out", str(tmp_path / "demo")])
        assert rc == 3
