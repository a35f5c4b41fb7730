import hashlib
import io
import json
from pathlib import Path

import numpy as np
import pytest

from steinmal import chaos
from steinmal.cli import main
from steinmal.experiments import (
    ExperimentConfig,
    config_from_file,
    run_gamma2d,
    run_lognormal,
    run_selftest,
    run_uniform,
)


def tree_digest(root: Path) -> dict:
    out = {}
    for path in sorted(root.rglob("*")):
        if path.is_file():
            out[str(path.relative_to(root))] = hashlib.sha256(
                path.read_bytes()).hexdigest()
    return out


class TestConfigFile:
    def test_roundtrip(self, tmp_path):
        cfg_file = tmp_path / "exp.cfg"
        cfg_file.write_text(
            "# gamma sweep\n"
            "experiment = gamma2d\n"
            "seed = 7\n"
            "samples = 5000\n"
            "n_schedule = 50, 100, 200\n"
            "m_rule = sqrt\n"
            "plots = false\n",
            encoding="utf-8")
        cfg = config_from_file(cfg_file)
        assert cfg.seed == 7
        assert cfg.n_schedule == (50, 100, 200)
        assert cfg.plots is False

    def test_unknown_key_rejected(self, tmp_path):
        cfg_file = tmp_path / "bad.cfg"
        cfg_file.write_text("wibble = 3\n", encoding="utf-8")
        with pytest.raises(ValueError, match="unknown key"):
            config_from_file(cfg_file)

    def test_schedule_alignment_checked(self):
        with pytest.raises(ValueError, match="align"):
            ExperimentConfig(n_schedule=(10, 20), m_schedule=(3,))


class TestCliExitCodes:
    def test_measure_ok(self, tmp_path):
        assert main(["measure", "--measure", "uniform01",
                     "--out", str(tmp_path), "--quick", "--no-plots"]) == 0
        assert (tmp_path / "measure_uniform01.csv").exists()
        assert (tmp_path / "measure_uniform01.json").exists()

    def test_unknown_measure_is_config_error(self, tmp_path):
        assert main(["measure", "--measure", "cauchy",
                     "--out", str(tmp_path)]) == 2

    def test_missing_config_file_is_config_error(self, tmp_path):
        assert main(["selftest", "--config",
                     str(tmp_path / "nope.cfg")]) == 2

    def test_stein_verify_ok(self, tmp_path):
        out_file = tmp_path / "report.json"
        code = main(["stein", "verify", "--measure", "uniform01",
                     "--grid", "127", "--out-file", str(out_file),
                     "--out", str(tmp_path), "--quick"])
        assert code == 0
        payload = json.loads(out_file.read_text())
        assert payload["all_passed"]
        assert len(payload["reports"]) == 12  # 4 test functions x 3 bounds

    def test_stein_verify_out_names_report_directly(self, tmp_path):
        out_file = tmp_path / "direct.json"
        code = main(["stein", "verify", "--measure", "uniform01",
                     "--grid", "127", "--out", str(out_file), "--quick"])
        assert code == 0
        assert json.loads(out_file.read_text())["all_passed"]

    def test_selftest_quick_ok(self, tmp_path, capsys):
        import time
        start = time.time()
        assert main(["selftest", "--quick", "--out", str(tmp_path)]) == 0
        assert time.time() - start < 60.0
        captured = capsys.readouterr()
        assert "selftest: PASS" in captured.out


class TestMeasureReportContents:
    def test_uniform_rows(self, tmp_path):
        main(["measure", "--measure", "uniform01", "--out", str(tmp_path),
              "--no-plots"])
        payload = json.loads((tmp_path / "measure_uniform01.json").read_text())
        assert abs(payload["median_prefactor"] - 8.0) < 1e-9
        rows = (tmp_path / "measure_uniform01.csv").read_text().splitlines()
        header = rows[0].split(",")
        a_col = header.index("a")
        x_col = header.index("x")
        best = min(rows[1:], key=lambda r: abs(float(r.split(",")[x_col]) - 0.5))
        assert abs(float(best.split(",")[a_col]) - 0.25) < 1e-3

    def test_gamma_diffusion_column(self, tmp_path):
        main(["measure", "--measure", "centered_gamma", "--out",
              str(tmp_path), "--quick", "--no-plots"])
        rows = (tmp_path / "measure_centered_gamma.csv").read_text().splitlines()
        header = rows[0].split(",")
        xi, ai = header.index("x"), header.index("a")
        for row in rows[1:None:25]:
            parts = row.split(",")
            assert abs(float(parts[ai]) - 4 * (float(parts[xi]) + 1)) < 1e-9


class TestExperimentDrivers:
    @pytest.fixture()
    def quick_cfg(self):
        return ExperimentConfig(seed=99, quick=True, plots=False)

    def test_gamma2d_payload(self, tmp_path, quick_cfg):
        from dataclasses import replace
        payload = run_gamma2d(replace(quick_cfg, out_dir=str(tmp_path)))
        assert (tmp_path / "gamma2d.csv").exists()
        fits = payload["rate_fits"]
        assert -0.7 < fits["disc_l1_vs_N"]["slope"] < -0.3
        assert all(c["status"] == "pass" for c in payload["csv_reader_checks"])
        row = payload["rows"][0]
        assert row["contraction_norm_matrix"] > 0
        assert np.isfinite(row["w1"])

    def test_gamma2d_full_overlap_keeps_ratio_large(self, tmp_path, quick_cfg):
        from dataclasses import replace
        cfg = replace(quick_cfg, out_dir=str(tmp_path), m_rule="full",
                      n_schedule=(20, 40, 80))
        payload = run_gamma2d(cfg)
        # with m = N the cross term does not vanish relative to m/N
        for row in payload["rows"]:
            assert row["cross_l2_exact"] / row["m_over_n"] > 0.5

    def test_uniform_payload(self, tmp_path, quick_cfg):
        from dataclasses import replace
        payload = run_uniform(replace(quick_cfg, out_dir=str(tmp_path)))
        for row in payload["rows"]:
            assert row["disc"] <= 1e-2
            assert row["one_sided_pass"]
            if row["rho"]:
                assert row["cross_agreement_gap_se"] <= 5.0

    def test_lognormal_payload(self, tmp_path, quick_cfg):
        from dataclasses import replace
        payload = run_lognormal(replace(quick_cfg, out_dir=str(tmp_path),
                                        samples=20000))
        assert abs(payload["limit_constant"] -
                   float(np.sqrt(2 / np.pi) * np.exp(0.5))) < 1e-10
        for row in payload["rows"]:
            assert 0.8 < row["scaled_over_limit"] < 1.1

    def test_every_cell_has_uncertainty_or_exact_partner(self, tmp_path,
                                                         quick_cfg):
        from dataclasses import replace
        payload = run_gamma2d(replace(quick_cfg, out_dir=str(tmp_path)))
        row = payload["rows"][0]
        for key in row:
            if key.endswith("_se"):
                continue
            # every MC column carries a _se partner; the rest are exact
            mc_columns = {"disc_l1", "disc_l2", "cross_l1", "cross_l2"}
            if key in mc_columns:
                assert f"{key}_se" in row


class TestSelftest:
    def test_quick_pass(self, tmp_path):
        cfg = ExperimentConfig(experiment="selftest", quick=True,
                               out_dir=str(tmp_path))
        buf = io.StringIO()
        assert run_selftest(cfg, stream=buf)
        text = buf.getvalue()
        assert "selftest: PASS" in text
        assert "chaos_key_identity" in text

    def test_mutated_contraction_fails(self, tmp_path, monkeypatch):
        monkeypatch.setattr(chaos, "contract1",
                            lambda k1, k2: chaos.contract1_raw(k1, k2))
        cfg = ExperimentConfig(experiment="selftest", quick=True,
                               out_dir=str(tmp_path))
        buf = io.StringIO()
        assert not run_selftest(cfg, stream=buf)
        assert "chaos_product_variance" in buf.getvalue()

    def test_cli_exit_one_on_failure(self, tmp_path, monkeypatch, capsys):
        monkeypatch.setattr(chaos, "contract1",
                            lambda k1, k2: chaos.contract1_raw(k1, k2))
        assert main(["selftest", "--quick", "--out", str(tmp_path)]) == 1


class TestDeterminism:
    def test_uniform_outputs_identical_across_workers(self, tmp_path,
                                                      monkeypatch):
        digests = []
        for workers, sub in (("1", "a"), ("8", "b"), ("1", "c")):
            monkeypatch.setenv("STEINMAL_WORKERS", workers)
            out = tmp_path / sub
            code = main(["uniform", "--quick", "--out", str(out),
                         "--seed", "31415"])
            assert code == 0
            digests.append(tree_digest(out))
        assert digests[0] == digests[1] == digests[2]

    def test_selftest_stdout_identical(self, tmp_path, capsys, monkeypatch):
        outputs = []
        for workers in ("1", "8"):
            monkeypatch.setenv("STEINMAL_WORKERS", workers)
            main(["selftest", "--quick", "--out",
                  str(tmp_path / workers)])
            outputs.append(capsys.readouterr().out)
        assert outputs[0] == outputs[1]

    def test_plots_deterministic(self, tmp_path, monkeypatch):
        digests = []
        for sub in ("p1", "p2"):
            out = tmp_path / sub
            assert main(["uniform", "--quick", "--out", str(out),
                         "--seed", "7"]) == 0
            digests.append(tree_digest(out))
        assert digests[0] == digests[1]
        assert any(name.endswith(".svg") for name in digests[0])

    def test_no_plots_flag(self, tmp_path):
        assert main(["uniform", "--quick", "--no-plots",
                     "--out", str(tmp_path)]) == 0
        assert not list(tmp_path.glob("*.svg"))
