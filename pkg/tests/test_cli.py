import json

import numpy as np
import pytest
import yaml

from gimcmc import cli
from gimcmc.cli import ResultBundle, main
from gimcmc.config import ConfigError, load_config, parse_config, serialize_config


def _write_config(tmp_path, data, name="config.yaml"):
    path = tmp_path / name
    path.write_text(yaml.safe_dump(data))
    return path


MINIMAL = {
    "target": {"kind": "gaussian", "dim": 1},
    "samplers": [{"kind": "gi-mala", "step_size": 0.5}],
    "n_burnin": 100,
    "n_samples": 1000,
    "seed": 7,
}


class TestConfig:
    def test_minimal_parse_and_defaults(self):
        cfg = parse_config({"target": {"kind": "gaussian"}})
        assert cfg.target["dim"] == 10
        assert cfg.samplers[0]["kind"] == "gi-mala"
        assert cfg.repeats == 2

    def test_unknown_sampler_kind_names_field(self):
        with pytest.raises(ConfigError, match=r"samplers\[0\]\.kind"):
            parse_config({"target": {"kind": "gaussian"},
                          "samplers": [{"kind": "nuts"}]})

    def test_unknown_root_key(self):
        with pytest.raises(ConfigError, match="unknown configuration field"):
            parse_config({"target": {"kind": "gaussian"}, "chains": 4})

    def test_missing_dataset_file(self):
        with pytest.raises(ConfigError, match="does not exist"):
            parse_config({"target": {"kind": "logistic",
                                     "dataset": "nope.csv"}})

    def test_bundled_dataset_accepted(self):
        cfg = parse_config({"target": {"kind": "logistic", "dataset": "heart"}})
        assert cfg.target["dataset"] == "heart"

    def test_seeds_must_cover_repeats(self):
        with pytest.raises(ConfigError, match="seeds"):
            parse_config({"target": {"kind": "gaussian"},
                          "repeats": 5, "seeds": [1, 2, 3]})

    def test_gi_step_size_range(self):
        with pytest.raises(ConfigError, match="step_size"):
            parse_config({"target": {"kind": "gaussian"},
                          "samplers": [{"kind": "gi-mala", "step_size": 2.5}]})

    def test_estimator_validation(self):
        with pytest.raises(ConfigError, match=r"estimator\.f"):
            parse_config({"target": {"kind": "gaussian"},
                          "estimator": {"f": "cubic"}})

    def test_roundtrip_identity(self, tmp_path):
        data = {
            "target": {"kind": "student-t", "nu": 5.0},
            "samplers": [{"kind": "gi-mala", "step_size": 0.8,
                          "target_rate": 0.8}],
            "n_burnin": 500,
            "n_samples": 2000,
            "seed": 3,
            "repeats": 4,
            "estimator": {"f": "indicator", "a": [1.0], "b": 0.0,
                          "truncation": 2},
        }
        cfg1 = parse_config(data, base_dir=tmp_path)
        text = serialize_config(cfg1)
        cfg2 = parse_config(yaml.safe_load(text), base_dir=tmp_path)
        assert cfg1.to_dict() == cfg2.to_dict()
        # JSON is an accepted alternative encoding
        cfg3 = parse_config(json.loads(serialize_config(cfg1, fmt="json")),
                            base_dir=tmp_path)
        assert cfg3.to_dict() == cfg1.to_dict()

    def test_load_config_json_file(self, tmp_path):
        path = tmp_path / "config.json"
        path.write_text(json.dumps(MINIMAL))
        cfg = load_config(path)
        assert cfg.seed == 7

    def test_load_config_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="does not exist"):
            load_config(tmp_path / "absent.yaml")


class TestSampleCommand:
    def test_minimal_run_writes_outputs(self, tmp_path):
        cfg_path = _write_config(tmp_path, MINIMAL)
        out = tmp_path / "results"
        assert main(["sample", "--config", str(cfg_path), "--out", str(out)]) == 0
        assert (out / "ess.csv").exists()
        assert (out / "trace_summary.csv").exists()
        assert (out / "manifest.json").exists()
        bundle = ResultBundle.load(out)
        assert "ess" in bundle.tables
        assert bundle.manifest["config"]["seed"] == 7

    def test_rerun_is_byte_identical(self, tmp_path):
        cfg_path = _write_config(tmp_path, MINIMAL)
        out1, out2 = tmp_path / "r1", tmp_path / "r2"
        main(["sample", "--config", str(cfg_path), "--out", str(out1)])
        main(["sample", "--config", str(cfg_path), "--out", str(out2)])
        for name in ("ess.csv", "trace_summary.csv"):
            assert (out1 / name).read_bytes() == (out2 / name).read_bytes()

    def test_unknown_sampler_exits_2(self, tmp_path):
        bad = dict(MINIMAL, samplers=[{"kind": "warp", "step_size": 0.5}])
        cfg_path = _write_config(tmp_path, bad)
        assert main(["sample", "--config", str(cfg_path),
                     "--out", str(tmp_path / "x")]) == 2

    def test_seed_override(self, tmp_path):
        cfg_path = _write_config(tmp_path, MINIMAL)
        out1, out2 = tmp_path / "a", tmp_path / "b"
        main(["sample", "--config", str(cfg_path), "--out", str(out1),
              "--seed", "1"])
        main(["sample", "--config", str(cfg_path), "--out", str(out2),
              "--seed", "2"])
        assert (out1 / "ess.csv").read_bytes() != (out2 / "ess.csv").read_bytes()


class TestCompareCommand:
    def test_identical_specs_identical_rows(self, tmp_path, capsys):
        data = dict(MINIMAL)
        data["samplers"] = [{"kind": "gi-mala", "step_size": 0.5},
                            {"kind": "gi-mala", "step_size": 0.5}]
        data["n_samples"] = 500
        cfg_path = _write_config(tmp_path, data)
        out = tmp_path / "cmp"
        assert main(["compare", "--config", str(cfg_path), "--out", str(out)]) == 0
        lines = (out / "compare.csv").read_text().strip().splitlines()
        assert len(lines) == 3
        assert lines[1] == lines[2]

    def test_needs_two_samplers(self, tmp_path):
        cfg_path = _write_config(tmp_path, MINIMAL)
        assert main(["compare", "--config", str(cfg_path),
                     "--out", str(tmp_path / "x")]) == 2

    def test_logistic_compare_runs(self, tmp_path):
        data = {
            "target": {"kind": "logistic", "dataset": "ripley"},
            "samplers": [{"kind": "gi-mala", "step_size": 0.5},
                         {"kind": "mala", "step_size": 0.5}],
            "n_burnin": 300, "n_samples": 800, "seed": 1, "repeats": 2,
        }
        cfg_path = _write_config(tmp_path, data)
        out = tmp_path / "cmp"
        assert main(["compare", "--config", str(cfg_path), "--out", str(out)]) == 0
        table = np.loadtxt(out / "compare.csv", delimiter=",", skiprows=1,
                           usecols=(1, 2, 3, 4, 5))
        assert table.shape == (2, 5)
        assert np.all(table[:, 1] > 0)


class TestVarianceReductionCommand:
    def test_minimal_t2_run(self, tmp_path):
        data = dict(MINIMAL)
        data["repeats"] = 2
        data["n_samples"] = 400
        data["estimator"] = {"f": "identity"}
        cfg_path = _write_config(tmp_path, data)
        out = tmp_path / "vr"
        assert main(["variance-reduction", "--config", str(cfg_path),
                     "--out", str(out)]) == 0
        bundle = ResultBundle.load(out)
        assert "variance_ratio" in bundle.tables
        assert "estimator" in bundle.tables

    def test_gaussian_zero_variance_capped(self, tmp_path):
        data = dict(MINIMAL)
        data["repeats"] = 5
        data["n_samples"] = 200
        data["n_burnin"] = 0
        data["estimator"] = {"f": "identity"}
        cfg_path = _write_config(tmp_path, data)
        out = tmp_path / "vr"
        main(["variance-reduction", "--config", str(cfg_path), "--out", str(out)])
        table = ResultBundle.load(out).tables["variance_ratio"]
        # plain/cv: the Gaussian path drives cv variance to ~0
        assert np.all(table[:, 3] >= 1e10)

    def test_missing_estimator_exits_2(self, tmp_path):
        cfg_path = _write_config(tmp_path, MINIMAL)
        assert main(["variance-reduction", "--config", str(cfg_path),
                     "--out", str(tmp_path / "x")]) == 2

    def test_numerical_abort_exits_3(self, tmp_path):
        # exp estimator with an absurd direction overflows in every repeat
        data = dict(MINIMAL)
        data["repeats"] = 2
        data["n_samples"] = 50
        data["n_burnin"] = 0
        data["estimator"] = {"f": "exp", "a": [800.0]}
        cfg_path = _write_config(tmp_path, data)
        assert main(["variance-reduction", "--config", str(cfg_path),
                     "--out", str(tmp_path / "x")]) == 3


class TestScalingCommand:
    def test_gaussian_row_and_monotonicity(self, tmp_path):
        data = {
            "target": {"kind": "perturbed-gaussian"},
            "scaling": {"eps_grid": [0.0, 0.05, 0.1], "d_grid": [10, 100]},
        }
        cfg_path = _write_config(tmp_path, data)
        out = tmp_path / "sc"
        assert main(["scaling", "--config", str(cfg_path), "--out", str(out)]) == 0
        rows = ResultBundle.load(out).tables["scaling_curve"]
        eps0 = rows[rows[:, 0] == 0.0]
        assert np.all(np.abs(eps0[:, 2] - 1.0) < 1e-5)
        assert np.all(eps0[:, 3] == 1.0)

    def test_empty_grid_exits_2(self, tmp_path):
        data = {"target": {"kind": "perturbed-gaussian"},
                "scaling": {"eps_grid": [], "d_grid": [10]}}
        cfg_path = _write_config(tmp_path, data)
        assert main(["scaling", "--config", str(cfg_path),
                     "--out", str(tmp_path / "x")]) == 2

    def test_infeasible_m_exits_2(self, tmp_path):
        data = {"target": {"kind": "perturbed-gaussian"},
                "scaling": {"eps_grid": [0.1], "d_grid": [100], "M": 1.5}}
        cfg_path = _write_config(tmp_path, data)
        assert main(["scaling", "--config", str(cfg_path),
                     "--out", str(tmp_path / "x")]) == 2


class TestSimulateCoxCommand:
    def test_grid64_dimension(self, tmp_path):
        out = tmp_path / "cox64"
        assert main(["simulate-cox", "--grid-size", "64", "--seed", "9",
                     "--out", str(out)]) == 0
        counts = np.loadtxt(out / "cox_counts.csv", delimiter=",")
        assert counts.shape == (4096, 3)

    def test_grid8_desk_scale(self, tmp_path):
        out = tmp_path / "cox8"
        main(["simulate-cox", "--grid-size", "8", "--seed", "9", "--out",
              str(out)])
        counts = np.loadtxt(out / "cox_counts.csv", delimiter=",")
        assert counts.shape == (64, 3)

    def test_seed_reproducible(self, tmp_path):
        out1, out2 = tmp_path / "c1", tmp_path / "c2"
        main(["simulate-cox", "--grid-size", "8", "--seed", "4", "--out", str(out1)])
        main(["simulate-cox", "--grid-size", "8", "--seed", "4", "--out", str(out2)])
        assert (out1 / "cox_counts.csv").read_bytes() \
            == (out2 / "cox_counts.csv").read_bytes()

    def test_grid_bounds(self, tmp_path):
        assert main(["simulate-cox", "--grid-size", "4", "--seed", "0",
                     "--out", str(tmp_path / "x")]) == 2


class TestDatasetsCommand:
    def test_exports_and_validates(self, tmp_path):
        out = tmp_path / "data"
        assert main(["datasets", "--out", str(out)]) == 0
        for name in ("heart", "australian", "german", "pima", "ripley"):
            assert (out / f"{name}.csv").exists()
        bundle = ResultBundle.load(out)
        assert bundle.tables["heart"].shape == (270, 13)


class TestTargetBuilders:
    def test_student_t_bundle(self):
        cfg = parse_config({"target": {"kind": "student-t", "nu": 5.0}})
        bundle = cli.build_target(cfg)
        assert bundle.dim == 1
        assert bundle.precond[0, 0] == pytest.approx(4.0 / 3.0)

    def test_mixture_default_is_paper_setup(self):
        cfg = parse_config({"target": {"kind": "mixture"}})
        bundle = cli.build_target(cfg)
        assert bundle.dim == 2
        np.testing.assert_allclose(bundle.precond, np.eye(2))

    def test_gp_classification_bundle(self):
        cfg = parse_config({"target": {"kind": "gp-classification",
                                       "dataset": "ripley"}})
        bundle = cli.build_target(cfg)
        assert bundle.dim == 250
        assert bundle.is_lgm

    def test_log_cox_bundle_default_grid(self):
        cfg = parse_config({"target": {"kind": "log-cox"}})
        bundle = cli.build_target(cfg)
        assert bundle.dim == 256

    def test_pcn_on_non_lgm_rejected(self):
        cfg = parse_config({"target": {"kind": "gaussian"},
                            "samplers": [{"kind": "pcn", "step_size": 0.5}]})
        bundle = cli.build_target(cfg)
        with pytest.raises(ConfigError, match="latent Gaussian"):
            cli.run_sampler(bundle, cfg.samplers[0], 10, 10, seed=0)
