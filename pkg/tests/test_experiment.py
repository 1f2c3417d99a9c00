import json

import numpy as np
import pytest

from eeba.cli import main
from eeba.exceptions import ConfigError
from eeba.experiment import (ExperimentConfig, RAW_COLUMNS, complexity_rows, derive_seed, read_csv, run_cell,
                             run_experiment, sigma_n2_for, validation_rows)
from eeba.channel import generate_channel
from eeba.quantization import DEFAULT_TABLE
from oracles import brute_force_argmax, ee_by_hand

SMALL = {"snr_db": [0, 10], "n_streams": [2], "num_channel_draws": 2, "scenarios": [1, 2],
         "mc_samples": 5000, "pseudo_samples": 20000, "run_validation": False}


def small_cfg(tmp_path, **kw):
    return ExperimentConfig.from_dict({**SMALL, "output_dir": str(tmp_path / "out"), **kw})


class TestConfig:
    def test_defaults_follow_table(self):
        cfg = ExperimentConfig()
        assert cfg.array.carrier_frequency == 28e9 and cfg.array.tx_rx_separation == 100
        assert cfg.array.num_tx_antennas == 64 and cfg.array.num_rx_antennas == 128
        assert cfg.power.c == 1432e-15 and cfg.power.f_s == 400e6
        assert cfg.snr_db == tuple(range(-10, 31, 5)) and cfg.num_channel_draws == 50 and cfg.max_bits == 4

    @pytest.mark.parametrize("doc,field", [
        ({"solvers": ["es", "x"]}, "solvers"),
        ({"snr_db": []}, "snr_db"),
        ({"power": {"eta_PA": 3}}, "power.eta_PA"),
        ({"power": {"nope": 1}}, "power.nope"),
        ({"array": {"num_rx_antennas": 0}}, "array.num_rx_antennas"),
        ({"n_streams": [200]}, "n_streams"),
        ({"bogus": 1}, "bogus"),
        ({"sa_params": {"sa9": {"r": 0.1}}}, "sa_params.sa9.r"),
        ({"sa_params": {"sa9": {"kappa": -1}}}, "sa_params.sa9.kappa"),
        ({"combiner": "x"}, "combiner"),
        ({"scenarios": [3]}, "scenarios"),
        ({"record_runtime": 1}, "record_runtime"),
    ])
    def test_field_named_in_error(self, doc, field):
        with pytest.raises(ConfigError) as exc:
            ExperimentConfig.from_dict(doc)
        assert exc.value.field == field


class TestRun:
    def test_single_es_row_matches_hand_oracle(self, tmp_path):
        cfg = small_cfg(tmp_path, snr_db=[0], num_channel_draws=1, scenarios=[2], solvers=["es"])
        rows = run_cell(cfg, 2, 2, 0)
        assert len(rows) == 1
        chan = generate_channel(cfg.array, cfg.scenario_for(2), derive_seed(cfg.seed, 2, 2, 0), n_streams=2)
        best = brute_force_argmax(2, 4, lambda b: ee_by_hand(b, chan.singular_values, 1.0, sigma_n2_for(0),
                                                              DEFAULT_TABLE.f))
        assert rows[0]["bits"] == "-".join(map(str, best))

    def test_outputs_and_invariants(self, tmp_path):
        cfg = small_cfg(tmp_path, solvers=["fixed1", "fixed2", "es", "qsearch"])
        out = run_experiment(cfg)
        raw = read_csv(out / "raw_rows.csv")
        assert list(raw[0]) == list(RAW_COLUMNS)
        assert len(raw) == 2 * 2 * 2 * 4
        for r in raw:
            assert float(r["ee"]) == pytest.approx(float(r["rate"]) / float(r["power_W"]), rel=1e-12)
        cells = {}
        for r in raw:
            cells.setdefault((r["scenario"], r["snr_db"], r["draw"]), {})[r["solver"]] = float(r["ee"])
        for ee in cells.values():
            assert ee["es"] >= ee["qsearch"] - 1e-9
            assert ee["es"] >= max(ee["fixed1"], ee["fixed2"]) - 1e-9
        text = (out / "ee_vs_snr.csv").read_text()
        assert text.startswith("# ") and "ee_mean" in text
        assert (out / "complexity.csv").exists()
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["seed"] == 0 and "raw_rows.csv" in manifest["files"]

    def test_byte_identical_rerun_and_threads(self, tmp_path):
        cfg = small_cfg(tmp_path, solvers=["es", "qsearch", "sa9"])
        a = run_experiment(cfg, out=tmp_path / "a")
        b = run_experiment(cfg, out=tmp_path / "b", threads=2)
        for name in ("raw_rows.csv", "ee_vs_snr.csv", "rate_vs_snr.csv", "complexity.csv", "manifest.json"):
            if name == "manifest.json":
                da, db = (json.loads((d / name).read_text()) for d in (a, b))
                da["config"].pop("output_dir"), db["config"].pop("output_dir")
                assert da["config"] == db["config"]
            else:
                assert (a / name).read_bytes() == (b / name).read_bytes()

    def test_infeasible_budget_becomes_error_rows(self, tmp_path):
        cfg = small_cfg(tmp_path, power={"P_ADC": 1e-6}, solvers=["es", "fixed1"])
        out = run_experiment(cfg)
        raw = read_csv(out / "raw_rows.csv")
        assert raw and all("InfeasibleBudgetError" in r["error"] for r in raw)
        means = read_csv(out / "ee_vs_snr.csv")
        assert all(m["n_draws"] == "0" for m in means)

    def test_runtime_column_opt_in(self, tmp_path):
        cfg = small_cfg(tmp_path, solvers=["qsearch"], record_runtime=True, snr_db=[0], num_channel_draws=1,
                        scenarios=[1])
        row = run_cell(cfg, 1, 2, 0)[0]
        assert row["runtime_ms"] > 0


class TestReports:
    def test_complexity_rows(self, tmp_path):
        cfg = small_cfg(tmp_path, n_streams=[8], solvers=["es", "qsearch", "sa9", "sa5"])
        rows = {r["solver"]: r for r in complexity_rows(cfg)}
        assert rows["qsearch"]["real_mults"] == 288
        assert rows["es"]["complex_mults"] == 4**8 * 80
        assert "complex_mults" in rows["es"]["mismatch"]

    def test_complexity_needs_es_and_qsearch(self, tmp_path):
        with pytest.raises(ConfigError):
            complexity_rows(small_cfg(tmp_path, solvers=["es"]))

    def test_validation_rows(self, tmp_path):
        cfg = small_cfg(tmp_path, mc_samples=20_000, pseudo_samples=50_000,
                        validation={"n_streams": 2, "aqnm_bits": [2], "real_bits": [3], "pseudo_bits": [2]})
        rows = validation_rows(cfg)
        checks = {r["check"] for r in rows}
        assert {"mse_aqnm", "mse_uniform_quantizer", "pseudo_covariance_max", "covariance_vs_phi", "lemma1",
                "lemma2_slope"} <= checks
        assert all(r["passed"] for r in rows)
        l1 = [r for r in rows if r["check"] == "lemma1" and abs(r["empirical"] - np.log2(1.1)) < 1e-12][0]
        assert l1["rel_error"] == pytest.approx(0.049, abs=1e-3)


class TestCli:
    def write(self, tmp_path, doc):
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps(doc))
        return str(path)

    def test_run(self, tmp_path, capsys):
        cfg = self.write(tmp_path, {**SMALL, "output_dir": str(tmp_path / "o")})
        assert main(["run", "--config", cfg, "--solvers", "es,qsearch", "--seed", "3"]) == 0
        out = json.loads(capsys.readouterr().out)
        assert out["status"] == "ok"
        raw = read_csv(tmp_path / "o" / "raw_rows.csv")
        assert {r["solver"] for r in raw} == {"es", "qsearch"}

    def test_bad_solver_flag(self, tmp_path, capsys):
        cfg = self.write(tmp_path, SMALL)
        assert main(["run", "--config", cfg, "--solvers", "es,bogus"]) != 0
        err = json.loads(capsys.readouterr().err)
        assert err["field"] == "solvers"

    def test_bad_config(self, tmp_path, capsys):
        cfg = self.write(tmp_path, {"power": {"eta_PA": 0}})
        assert main(["validate", "--config", cfg]) == 2
        assert json.loads(capsys.readouterr().err)["field"] == "power.eta_PA"

    def test_unreadable_config(self, tmp_path, capsys):
        assert main(["complexity", "--config", str(tmp_path / "missing.json")]) == 2
        assert json.loads(capsys.readouterr().err)["field"] == "config"

    def test_dump_and_inspect(self, tmp_path, capsys):
        path = tmp_path / "ch.json"
        assert main(["dump-channel", "--seed", "4", "--n-streams", "3", "--out", str(path)]) == 0
        assert main(["inspect-channel", str(path)]) == 0
        info = json.loads(capsys.readouterr().out)
        assert info["dims"] == [128, 64] and info["n_streams"] == 3 and info["seed"] == 4
        assert info["frobenius_norm_sq"] == pytest.approx(128 * 64)

    def test_inspect_malformed(self, tmp_path, capsys):
        path = tmp_path / "bad.json"
        path.write_text("{}")
        assert main(["inspect-channel", str(path)]) == 2

    def test_complexity_and_validate(self, tmp_path, capsys):
        doc = {**SMALL, "n_streams": [4], "output_dir": str(tmp_path / "c"), "mc_samples": 20000,
               "pseudo_samples": 50000, "validation": {"n_streams": 2, "aqnm_bits": [3], "real_bits": [3],
                                                       "pseudo_bits": [1]}}
        cfg = self.write(tmp_path, doc)
        assert main(["complexity", "--config", cfg]) == 0
        assert main(["validate", "--config", cfg]) == 0
        assert (tmp_path / "c" / "complexity.csv").exists() and (tmp_path / "c" / "validation.csv").exists()
