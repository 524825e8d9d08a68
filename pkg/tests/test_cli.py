import json

import numpy as np
import pytest
import yaml

from biflux.cli import main
from biflux.model import builtin_model_path
from biflux.reports import emit_plotdata, read_csv, write_csv


def write_yaml(path, payload):
    path.write_text(yaml.safe_dump(payload))
    return str(path)


SIM_CONFIG = {
    "mode": "simulate",
    "model": "two_lane_tasep",
    "params": {
        "n": 128,
        "beta": 0.1,
        "u0": 0.3,
        "v0": 0.7,
        "u_star": {"name": "cos", "amplitude": 0.25},
        "v_star": {"name": "sin", "amplitude": 0.25},
        "times": [0.1],
        "seeds": {"start": 0, "count": 3},
        "test_functions": ["1", "cos2pix"],
        "grid": 256,
    },
}


class TestValidateCommand:
    def test_builtin_model_writes_reports(self, tmp_path, capsys):
        code = main(["validate", "two_lane_tasep", "--out", str(tmp_path)])
        assert code == 0
        assert (tmp_path / "validate_report.json").is_file()
        assert (tmp_path / "validate_report.txt").is_file()
        assert (tmp_path / "manifest.json").is_file()
        payload = json.loads((tmp_path / "validate_report.json").read_text())
        assert payload["all_ok"] is True
        assert payload["stationarity_residual"] <= 1e-12
        assert "VALID" in capsys.readouterr().out

    def test_model_path_accepted(self, tmp_path):
        path = builtin_model_path("two_species_exclusion")
        assert main(["validate", str(path), "--out", str(tmp_path)]) == 0

    def test_missing_model_is_config_error(self, tmp_path):
        assert main(["validate", str(tmp_path / "none.model")]) == 2

    def test_bad_torus_sizes_flag(self, tmp_path):
        assert main(["validate", "two_lane_tasep", "--torus-sizes", "a,b"]) == 2

    def test_oversized_torus_is_config_error(self):
        assert main(["validate", "two_lane_tasep", "--torus-sizes", "10"]) == 2


class TestRunModes:
    def test_simulate_writes_residuals_and_figure(self, tmp_path):
        cfg = write_yaml(tmp_path / "sim.yaml", SIM_CONFIG)
        out = tmp_path / "out"
        assert main(["run", cfg, "--out", str(out)]) == 0
        schema, meta, columns, rows = read_csv(out / "residuals.csv")
        assert schema == "residuals@1"
        assert len(rows) == 4  # 2 test functions x 2 components
        assert (out / "residuals.png").stat().st_size > 0
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["mode"] == "simulate"
        assert "xoshiro256++" in manifest["rng"]

    def test_reruns_byte_identical(self, tmp_path):
        cfg = write_yaml(tmp_path / "sim.yaml", SIM_CONFIG)
        out1, out2 = tmp_path / "a", tmp_path / "b"
        assert main(["run", cfg, "--out", str(out1)]) == 0
        assert main(["run", cfg, "--out", str(out2)]) == 0
        assert (out1 / "residuals.csv").read_bytes() == (out2 / "residuals.csv").read_bytes()

    def test_beta_guard_cites_bound(self, tmp_path, capsys):
        bad = dict(SIM_CONFIG, params=dict(SIM_CONFIG["params"], beta=0.3))
        cfg = write_yaml(tmp_path / "bad.yaml", bad)
        assert main(["run", cfg, "--out", str(tmp_path / "x")]) == 2
        assert "(0, 1/5)" in capsys.readouterr().err

    def test_shock_guard_exit_three(self, tmp_path, capsys):
        bad = dict(SIM_CONFIG, params=dict(SIM_CONFIG["params"], times=[0.5]))
        cfg = write_yaml(tmp_path / "bad.yaml", bad)
        assert main(["run", cfg, "--out", str(tmp_path / "x")]) == 3
        assert "shock" in capsys.readouterr().err

    def test_unknown_mode_rejected(self, tmp_path):
        cfg = write_yaml(tmp_path / "bad.yaml", {"mode": "never", "model": "two_lane_tasep"})
        assert main(["run", cfg]) == 2

    def test_experiment_trend_summary(self, tmp_path):
        config = {
            "mode": "experiment",
            "model": "two_lane_tasep",
            "params": dict(
                SIM_CONFIG["params"],
                n_values=[64, 128],
                seeds={"start": 0, "count": 3},
                test_functions=["1"],
            ),
        }
        cfg = write_yaml(tmp_path / "exp.yaml", config)
        out = tmp_path / "out"
        assert main(["run", cfg, "--out", str(out)]) == 0
        trend = json.loads((out / "trend_summary.json").read_text())
        assert any(key.startswith("g=1|zeta") for key in trend)
        schema, _, _, rows = read_csv(out / "residuals.csv")
        assert schema == "residuals@1"
        assert {row[0] for row in rows} == {"64", "128"}

    def test_exact_entropy_mode(self, tmp_path):
        config = {
            "mode": "exact-entropy",
            "model": "two_lane_tasep",
            "params": {
                "n": 4,
                "beta": 0.1,
                "u0": 0.3,
                "v0": 0.7,
                "u_star": {"name": "cos", "amplitude": 0.05},
                "v_star": {"name": "sin", "amplitude": 0.05},
                "t_max": 0.1,
                "t_points": 5,
                "grid": 128,
            },
        }
        cfg = write_yaml(tmp_path / "ent.yaml", config)
        out = tmp_path / "out"
        assert main(["run", cfg, "--out", str(out)]) == 0
        schema, _, columns, rows = read_csv(out / "entropy.csv")
        assert schema == "entropy@1"
        assert columns == ["t", "H_nu", "H_nu_tilde", "H_pi"]
        assert float(rows[0][1]) == 0.0
        meta = json.loads((out / "entropy_meta.json").read_text())
        assert meta["monotone_H_pi"] is True

    def test_gap_scan_command(self, tmp_path):
        out = tmp_path / "gap"
        code = main(
            ["gap-scan", "two_lane_tasep", "--l-min", "2", "--l-max", "4", "--out", str(out)]
        )
        assert code == 0
        meta = json.loads((out / "gap_meta.json").read_text())
        assert meta["bounded"] is True
        assert (out / "gap.png").stat().st_size > 0

    def test_thermo_table_command(self, tmp_path):
        out = tmp_path / "th"
        assert main(["thermo-table", "two_species_exclusion", "--grid", "8", "--out", str(out)]) == 0
        schema, _, columns, rows = read_csv(out / "thermo_table.csv")
        assert schema == "thermo@1"
        assert "onsager_residual" in columns
        assert all(float(r[columns.index("onsager_residual")]) <= 1e-8 for r in rows)

    def test_waves_solve_command(self, tmp_path):
        cfg = write_yaml(
            tmp_path / "waves.yaml",
            {
                "model": "two_lane_tasep",
                "params": {
                    "n": 256,
                    "beta": 0.1,
                    "u0": 0.3,
                    "v0": 0.7,
                    "u_star": {"name": "cos", "amplitude": 0.25},
                    "v_star": {"name": "sin", "amplitude": 0.25},
                    "times": [0.0, 0.2],
                    "grid": 256,
                },
            },
        )
        out = tmp_path / "wv"
        assert main(["waves-solve", "two_lane_tasep", "--config", cfg, "--out", str(out)]) == 0
        meta = json.loads((out / "waves_meta.json").read_text())
        assert meta["lambda"] == pytest.approx(0.4, abs=1e-10)
        assert meta["coefficients"]["a1"] == pytest.approx(-2.0, abs=1e-6)
        schema, _, _, rows = read_csv(out / "waves.csv")
        assert schema == "waves@1"
        assert len(rows) == 2 * 256


class TestPlotData:
    def test_residual_reshaping(self, tmp_path):
        cfg = write_yaml(tmp_path / "sim.yaml", SIM_CONFIG)
        out = tmp_path / "out"
        main(["run", cfg, "--out", str(out)])
        pd_out = tmp_path / "pd"
        assert main(
            ["plotdata", str(out / "residuals.csv"), "--out", str(pd_out)]
        ) == 0
        schema, _, columns, rows = read_csv(pd_out / "plotdata.csv")
        assert schema == "plotdata@1"
        assert columns == ["series", "x", "y", "stderr"]
        series = {row[0] for row in rows}
        assert "g=1|zeta|n=128" in series
        assert len(rows) == 4

    def test_empty_report_gives_header_only(self, tmp_path):
        empty = tmp_path / "empty.csv"
        write_csv(
            empty,
            "residuals@1",
            {},
            ["n", "beta", "t", "g", "component", "n_seeds",
             "mean_abs_residual", "stderr_abs", "mean_residual", "stderr"],
            [],
        )
        count = emit_plotdata([empty], tmp_path / "pd.csv")
        assert count == 0
        schema, _, columns, rows = read_csv(tmp_path / "pd.csv")
        assert rows == []
        assert columns == ["series", "x", "y", "stderr"]

    def test_unknown_schema_rejected(self, tmp_path):
        weird = tmp_path / "weird.csv"
        write_csv(weird, "mystery@9", {}, ["a"], [[1]])
        from biflux.errors import ParseError

        with pytest.raises(ParseError):
            emit_plotdata([weird], tmp_path / "pd.csv")


def test_version_flag(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["--version"])
    assert exc.value.code == 0
    assert "biflux" in capsys.readouterr().out
