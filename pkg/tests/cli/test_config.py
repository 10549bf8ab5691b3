"""
Tests for config loading and validation.
"""

import pytest
import yaml

from src.cli.config import config_digest, deep_merge, load_config, validate_config
from src.exceptions import ConfigError

GEOMETRY = {"lambda": 0.01, "spacing": 0.005, "rows": 4, "cols": 4}


def write_yaml(path, data) -> str:
    path.write_text(yaml.safe_dump(data))
    return str(path)


def region_config(**overrides):
    config = {"geometry": dict(GEOMETRY), "experiment": {"kind": "region"}}
    config.update(overrides)
    return config


class TestLoadConfig:
    """Test YAML loading with base inheritance."""

    def test_base_inheritance(self, tmp_path):
        """Test overrides merge into the base file key by key."""
        write_yaml(tmp_path / "common.yaml", {"geometry": GEOMETRY, "logging": {"level": "INFO"}})
        path = write_yaml(
            tmp_path / "child.yaml",
            {"base": "common.yaml", "geometry": {"rows": 8}, "experiment": {"kind": "region"}},
        )
        config = load_config(path)
        assert config["geometry"]["rows"] == 8
        assert config["geometry"]["lambda"] == 0.01
        assert config["logging"]["level"] == "INFO"

    def test_circular_base(self, tmp_path):
        """Test a base chain that loops back is rejected."""
        write_yaml(tmp_path / "a.yaml", {"base": "b.yaml"})
        path = write_yaml(tmp_path / "b.yaml", {"base": "a.yaml"})
        with pytest.raises(ConfigError) as exc_info:
            load_config(path)
        assert exc_info.value.key_path == "base"

    def test_missing_file(self, tmp_path):
        """Test an unreadable config is a config error."""
        with pytest.raises(ConfigError):
            load_config(str(tmp_path / "nope.yaml"))

    def test_top_level_must_be_mapping(self, tmp_path):
        """Test a YAML list is rejected."""
        path = tmp_path / "list.yaml"
        path.write_text("- 1\n- 2\n")
        with pytest.raises(ConfigError):
            load_config(str(path))

    def test_deep_merge_leaves_inputs(self):
        """Test merging copies instead of mutating the base."""
        base = {"a": {"b": 1, "c": 2}}
        merged = deep_merge(base, {"a": {"b": 3}})
        assert merged == {"a": {"b": 3, "c": 2}}
        assert base == {"a": {"b": 1, "c": 2}}


class TestValidateConfig:
    """Test schema validation and key-path reporting."""

    def test_valid_region(self):
        """Test a minimal region config passes and gets its kind filled in."""
        config = validate_config({"geometry": GEOMETRY, "experiment": {}}, "region")
        assert config["experiment"]["kind"] == "region"

    def test_missing_lambda(self):
        """Test a missing wavelength names geometry.lambda."""
        geometry = {k: v for k, v in GEOMETRY.items() if k != "lambda"}
        with pytest.raises(ConfigError) as exc_info:
            validate_config(region_config(geometry=geometry), "region")
        assert exc_info.value.key_path == "geometry.lambda"
        assert str(exc_info.value).startswith("geometry.lambda")

    def test_unknown_key(self):
        """Test a misspelled key is reported by its path."""
        config = region_config(experiment={"kind": "region", "sizez": [4]})
        with pytest.raises(ConfigError) as exc_info:
            validate_config(config, "region")
        assert exc_info.value.key_path == "experiment.sizez"

    def test_negative_spacing(self):
        """Test numeric bounds are enforced."""
        config = region_config(geometry={**GEOMETRY, "spacing": -1.0})
        with pytest.raises(ConfigError) as exc_info:
            validate_config(config, "region")
        assert exc_info.value.key_path == "geometry.spacing"

    def test_kind_mismatch(self):
        """Test a config written for another subcommand is rejected."""
        with pytest.raises(ConfigError) as exc_info:
            validate_config(region_config(), "edof")
        assert exc_info.value.key_path == "experiment.kind"

    def test_subcommand_requirements(self):
        """Test per-kind required keys."""
        config = {"geometry": GEOMETRY, "experiment": {"kind": "edof"}}
        with pytest.raises(ConfigError) as exc_info:
            validate_config(config, "edof")
        assert exc_info.value.key_path == "experiment.distances"

    def test_seed_required_for_train(self):
        """Test stochastic commands need a seed from the file or the command line."""
        experiment = {
            "kind": "train",
            "protocols": ["exhaustive"],
            "trials": 1,
            "angles": 4,
            "distance_samples": 2,
            "d_min": 1.0,
            "d_max": 2.0,
        }
        config = {"geometry": GEOMETRY, "experiment": experiment, "placement": {"bs": [0, 0, 5]}}
        with pytest.raises(ConfigError) as exc_info:
            validate_config(config, "train")
        assert exc_info.value.key_path == "seed"
        assert validate_config(config, "train", seed_override=9)["seed"] == 9

    def test_seed_required_for_random_receivers(self):
        """Test power-scaling needs a seed only when it samples comparison receivers."""
        experiment = {"kind": "power-scaling", "sizes": [2, 4], "compare_receivers": 3}
        config = {"geometry": GEOMETRY, "experiment": experiment, "placement": {"tx": [0, 0, 5], "rx": [0, 0, 1]}}
        with pytest.raises(ConfigError) as exc_info:
            validate_config(config, "power-scaling")
        assert exc_info.value.key_path == "seed"
        assert validate_config(config, "power-scaling", seed_override=3)["seed"] == 3
        experiment["compare_receivers"] = 0
        assert "seed" not in validate_config(config, "power-scaling")

    def test_unknown_subcommand(self):
        """Test only the known subcommands validate."""
        with pytest.raises(ConfigError):
            validate_config(region_config(), "plot")


class TestConfigDigest:
    """Test the manifest digest."""

    def test_key_order_independent(self):
        """Test the digest depends on content, not key order."""
        assert config_digest({"a": 1, "b": [1, 2]}) == config_digest({"b": [1, 2], "a": 1})
        assert config_digest({"a": 1}) != config_digest({"a": 2})
