import csv
import os

import numpy as np
import pytest
import yaml

from fedzoo.cli import main
from fedzoo.config import load_config, parse_config
from fedzoo.errors import ConfigError


def write_config(path, **overrides):
    data = {
        "name": "test",
        "algorithm": "fedzo",
        "dimension": 2,
        "clients": 2,
        "heterogeneity": 1.0,
        "noise_std": 0.01,
        "rounds": 2,
        "local_iterations": 2,
        "fd_directions": 4,
        "feature_count": 50,
        "seeds": [0],
        "emit_plots": False,
    }
    data.update(overrides)
    with open(path, "w") as fh:
        yaml.safe_dump(data, fh)
    return str(path)


class TestConfigParsing:
    def test_defaults(self):
        cfg = parse_config({})
        assert cfg.learning_rate == 0.01
        assert cfg.local_iterations == 10
        assert cfg.feature_count == 10000
        assert cfg.gamma_kind == "inverse_iteration"
        assert cfg.active_candidates == 100
        assert cfg.active_radius == 0.01
        assert cfg.active_select == 5
        assert cfg.lengthscale == 1.0
        assert cfg.seeds == [0, 1, 2, 3, 4]

    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigError) as exc:
            parse_config({"learning_rte": 0.1})
        assert "learning_rte" in str(exc.value)

    def test_field_named_in_error(self):
        with pytest.raises(ConfigError) as exc:
            parse_config({"learning_rate": -1})
        assert "learning_rate" in str(exc.value)

    def test_type_check(self):
        with pytest.raises(ConfigError):
            parse_config({"rounds": "many"})
        with pytest.raises(ConfigError):
            parse_config({"seeds": [0, "one"]})

    def test_init_point_validation(self):
        with pytest.raises(ConfigError):
            parse_config({"init_point": 1.5})
        with pytest.raises(ConfigError):
            parse_config({"dimension": 3, "init_point": [0.5, 0.5]})

    def test_load_yaml(self, tmp_path):
        path = write_config(tmp_path / "c.yaml", rounds=7)
        cfg = load_config(path)
        assert cfg.rounds == 7

    def test_missing_file(self):
        with pytest.raises(ConfigError):
            load_config("/nonexistent/config.yaml")


class TestCLIExitCodes:
    def test_validate_ok(self, tmp_path):
        path = write_config(tmp_path / "c.yaml")
        assert main(["validate", path]) == 0

    def test_validate_bad_field(self, tmp_path):
        path = write_config(tmp_path / "c.yaml", learning_rate=-1)
        assert main(["validate", path]) == 2

    def test_validate_unknown_key(self, tmp_path, capsys):
        path = write_config(tmp_path / "c.yaml", lerning_rate=0.1)
        assert main(["validate", path]) == 2
        assert "lerning_rate" in capsys.readouterr().err

    def test_run_smoke(self, tmp_path):
        out = tmp_path / "out"
        path = write_config(tmp_path / "c.yaml", output_dir=str(out))
        assert main(["run", path]) == 0
        assert (out / "trace_fedzo_0.csv").exists()
        assert (out / "summary.csv").exists()

    def test_run_bad_config_exit_2(self, tmp_path):
        path = write_config(tmp_path / "c.yaml", rounds=0)
        assert main(["run", path]) == 2

    def test_compare_bad_algorithm_exit_2(self, tmp_path):
        path = write_config(tmp_path / "c.yaml")
        assert main(["compare", path, "--algorithms", "fedzo,quantum"]) == 2


class TestRunOutputs:
    def test_trace_schema_and_precision(self, tmp_path):
        out = tmp_path / "out"
        path = write_config(tmp_path / "c.yaml", output_dir=str(out), seeds=[0, 1])
        assert main(["run", path]) == 0
        with open(out / "trace_fedzo_0.csv") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == [
            "round", "cum_queries", "cum_scalars_tx", "F_value",
            "conv_error", "mean_disparity", "gamma",
        ]
        assert len(rows) == 1 + 3  # header + round 0..2
        assert rows[1][0] == "0" and rows[1][1] == "0"
        # full round-trip precision: reparsing gives the exact float back
        f_val = float(rows[2][3])
        assert repr(f_val) == rows[2][3]

    def test_summary_includes_medians(self, tmp_path):
        out = tmp_path / "out"
        path = write_config(tmp_path / "c.yaml", output_dir=str(out), seeds=[0, 1, 2])
        assert main(["run", path]) == 0
        with open(out / "summary.csv") as fh:
            rows = list(csv.reader(fh))
        seeds_col = [r[1] for r in rows[1:]]
        assert seeds_col == ["0", "1", "2", "median"]

    def test_multi_algorithm_run(self, tmp_path):
        out = tmp_path / "out"
        path = write_config(
            tmp_path / "c.yaml", output_dir=str(out), algorithms=["fedzo", "fedprox"]
        )
        assert main(["run", path]) == 0
        assert (out / "trace_fedzo_0.csv").exists()
        assert (out / "trace_fedprox_0.csv").exists()

    def test_diagnostics_csv(self, tmp_path):
        out = tmp_path / "out"
        path = write_config(
            tmp_path / "c.yaml", output_dir=str(out), diagnostics_verbosity="iteration"
        )
        assert main(["run", path]) == 0
        with open(out / "diagnostics_fedzo_0.csv") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["r", "t", "i", "xi", "cosine", "gamma_used", "gamma_star"]
        assert len(rows) == 1 + 2 * 2 * 2  # rounds * T * clients

    def test_output_dir_env_override(self, tmp_path, monkeypatch):
        out = tmp_path / "env_out"
        monkeypatch.setenv("FEDZOO_OUTPUT_DIR", str(out))
        path = write_config(tmp_path / "c.yaml", output_dir=str(tmp_path / "ignored"))
        assert main(["run", path]) == 0
        assert (out / "summary.csv").exists()
        assert not (tmp_path / "ignored").exists()

    def test_reruns_byte_identical(self, tmp_path):
        out = tmp_path / "out"
        path = write_config(tmp_path / "c.yaml", output_dir=str(out))
        assert main(["run", path]) == 0
        first = (out / "trace_fedzo_0.csv").read_bytes()
        assert main(["run", path]) == 0
        assert (out / "trace_fedzo_0.csv").read_bytes() == first


class TestCompare:
    def test_comparison_csv_shape(self, tmp_path):
        out = tmp_path / "out"
        path = write_config(tmp_path / "c.yaml", output_dir=str(out), seeds=[0, 1])
        assert main(["compare", path, "--algorithms", "fedzo,fzoos"]) == 0
        with open(out / "comparison.csv") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == [
            "round", "fedzo_seed0", "fedzo_seed1", "fzoos_seed0", "fzoos_seed1"
        ]
        assert len(rows) == 1 + 3

    def test_homogeneous_smoke_both_converge(self, tmp_path):
        out = tmp_path / "out"
        path = write_config(
            tmp_path / "c.yaml", output_dir=str(out), heterogeneity=0.0,
            rounds=5, local_iterations=5,
        )
        assert main(["compare", path, "--algorithms", "fedzo,fzoos"]) == 0
        with open(out / "comparison.csv") as fh:
            rows = list(csv.reader(fh))
        for col in (1, 2):
            first = float(rows[1][col])
            last = float(rows[-1][col])
            assert np.isfinite(last) and last < first

    def test_single_algorithm_degenerates(self, tmp_path):
        out = tmp_path / "out"
        path = write_config(tmp_path / "c.yaml", output_dir=str(out))
        assert main(["compare", path, "--algorithms", "fedzo"]) == 0
        assert (out / "trace_fedzo_0.csv").exists()
        assert (out / "comparison.csv").exists()


def test_plots_emitted_when_enabled(tmp_path):
    out = tmp_path / "out"
    path = write_config(tmp_path / "c.yaml", output_dir=str(out), emit_plots=True)
    assert main(["run", path]) == 0
    assert (out / "convergence_fedzo.png").exists()
