"""Tests for run configuration loading, presets and overrides."""

from __future__ import annotations

import math

import pytest
import yaml

from selene.config import (
    BranchMaskOptions,
    RunConfig,
    load_config,
    load_preset,
    parse_angle,
    preset_path,
)
from selene.errors import ConfigError


def _write(tmp_path, text):
    path = tmp_path / "run.yaml"
    path.write_text(text)
    return path


class TestParseAngle:
    @pytest.mark.parametrize("text,expected", [
        ("pi/36", math.pi / 36),
        ("10*pi", 10 * math.pi),
        ("2pi", 2 * math.pi),
        ("-pi/2", -math.pi / 2),
        ("π/4", math.pi / 4),
        ("1.5", 1.5),
        ("1e-8", 1e-8),
        (" 3 * pi / 4 ", 3 * math.pi / 4),
        (0, 0.0),
        (2.5, 2.5),
    ])
    def test_accepted(self, text, expected):
        assert parse_angle(text) == pytest.approx(expected, rel=1e-15)

    @pytest.mark.parametrize("text", ["", "pie", "pi/", "2 pi pi", "nan", "pi/0"])
    def test_rejected(self, text):
        with pytest.raises(ConfigError):
            parse_angle(text)

    def test_rejects_non_numbers(self):
        with pytest.raises(ConfigError):
            parse_angle(True)
        with pytest.raises(ConfigError):
            parse_angle([1, 2])
        with pytest.raises(ConfigError):
            parse_angle(math.inf)

    def test_key_in_message(self):
        with pytest.raises(ConfigError) as exc_info:
            parse_angle("x", "grid.alpha.step")
        assert exc_info.value.key == "grid.alpha.step"
        assert "[grid.alpha.step]" in exc_info.value.format()


class TestPresets:
    def test_full_matches_defaults(self):
        config = load_preset("full")
        assert config.grid.shape == (72, 71, 500)
        assert config.grid.size == 2_556_000
        assert config.to_dict()["grid"] == RunConfig().to_dict()["grid"]
        assert config.correction == RunConfig().correction

    def test_desk(self):
        config = load_preset("desk")
        assert config.grid.shape == (24, 15, 250)
        assert config.search.workers == 4
        assert config.output_dir == "runs/desk"

    def test_geo(self):
        config = load_preset("geo")
        assert config.orbit.parking_altitude_km == 36000.0
        assert config.grid.shape == (36, 41, 250)
        assert config.correction.beta_bounds == (1.2, 1.4)

    def test_unknown_preset(self):
        with pytest.raises(ConfigError, match="available: .*desk"):
            preset_path("lunar-gateway")


class TestLoading:
    def test_empty_file_is_defaults(self, tmp_path):
        assert load_config(_write(tmp_path, "")) == RunConfig()

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="not found"):
            load_config(tmp_path / "none.yaml")

    def test_invalid_yaml(self, tmp_path):
        with pytest.raises(ConfigError, match="invalid YAML"):
            load_config(_write(tmp_path, "grid: [unclosed"))

    def test_top_level_must_be_mapping(self, tmp_path):
        with pytest.raises(ConfigError, match="mapping"):
            load_config(_write(tmp_path, "- 1\n- 2\n"))

    def test_partial_axis_keeps_defaults(self, tmp_path):
        config = load_config(_write(tmp_path, "grid:\n  alpha: {step: pi/4}\n"))
        assert config.grid.alpha.step == pytest.approx(math.pi / 4)
        assert config.grid.alpha.closed is False
        assert config.grid.shape == (8, 71, 500)

    @pytest.mark.parametrize("text,key", [
        ("gird: {}\n", "gird"),
        ("grid: {alpha: {stpe: 1}}\n", "grid.alpha.stpe"),
        ("search: {threads: 2}\n", "search.threads"),
        ("correction: {tolerance: 1e-9}\n", "correction.tolerance"),
    ])
    def test_unknown_keys(self, tmp_path, text, key):
        with pytest.raises(ConfigError) as exc_info:
            load_config(_write(tmp_path, text))
        assert exc_info.value.key == key

    @pytest.mark.parametrize("text,key", [
        ("search: {workers: 2.5}\n", "search.workers"),
        ("search: {workers: true}\n", "search.workers"),
        ("correction: {max_iterations: ten}\n", "correction.max_iterations"),
        ("grid: {beta: {closed: yes please}}\n", "grid.beta.closed"),
        ("correction: {beta_bounds: [1.4]}\n", "correction.beta_bounds"),
        ("output_dir: ''\n", "output_dir"),
    ])
    def test_type_errors(self, tmp_path, text, key):
        with pytest.raises(ConfigError) as exc_info:
            load_config(_write(tmp_path, text))
        assert exc_info.value.key == key

    def test_library_errors_become_config_errors(self, tmp_path):
        with pytest.raises(ConfigError, match="mass parameter"):
            load_config(_write(tmp_path, "constants: {mu: 0.7}\n"))

    def test_branch_mask_section(self, tmp_path):
        config = load_config(_write(tmp_path, "search:\n  branch_mask: {catalog: ref.jsonl, margin_days: 3}\n"))
        assert config.search.branch_mask == BranchMaskOptions("ref.jsonl", 10.0, 3.0)

    def test_branch_mask_needs_catalog(self, tmp_path):
        with pytest.raises(ConfigError, match="catalog path"):
            load_config(_write(tmp_path, "search:\n  branch_mask: {margin_days: 3}\n"))


class TestValidate:
    def test_grid_outside_bounds(self, tmp_path):
        with pytest.raises(ConfigError, match="not inside corrector bounds") as exc_info:
            load_config(_write(tmp_path, "grid: {beta: {min: 1.3, max: 1.4, step: 0.01}}\n"))
        assert exc_info.value.key == "correction.beta_bounds"

    def test_ulp_overshoot_is_tolerated(self):
        # 1.2 + 40 * 0.005 lands a hair above 1.4
        assert load_preset("geo").grid.beta.value(40) == pytest.approx(1.4)

    def test_worker_and_interval_limits(self):
        with pytest.raises(ConfigError, match="workers"):
            RunConfig().override(workers=0)
        with pytest.raises(ConfigError, match="interval"):
            RunConfig().override(checkpoint_interval=0)

    def test_screen_threshold_positive(self):
        with pytest.raises(ConfigError, match="screen"):
            RunConfig().override(screen_threshold=-1.0)

    def test_bad_step_override(self):
        with pytest.raises(ConfigError) as exc_info:
            RunConfig().override(alpha_step=0.0)
        assert exc_info.value.key == "grid"


class TestSerialisation:
    @pytest.mark.parametrize("name", ["full", "desk", "geo"])
    def test_dict_round_trip(self, name):
        config = load_preset(name)
        assert RunConfig.from_dict(config.to_dict()) == config

    def test_yaml_round_trip(self, tmp_path):
        config = load_preset("desk").override(screen_threshold=0.05)
        path = tmp_path / "dump.yaml"
        path.write_text(yaml.safe_dump(config.to_dict()))
        assert load_config(path) == config

    def test_overrides(self):
        config = load_preset("desk").override(output_dir="elsewhere", workers=2, tof_step=math.pi / 10)
        assert config.output_dir == "elsewhere"
        assert config.search.workers == 2
        assert config.grid.tof.count == 100
        assert config.grid.alpha == load_preset("desk").grid.alpha

    def test_none_overrides_change_nothing(self):
        config = load_preset("desk")
        assert config.override() == config
