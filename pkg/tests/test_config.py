"""Tests for config.py"""

import json

import pytest

from config import AnalyticsConfig, PipelineConfig, ProviderConfig, RunConfig, load_run_config, validate_config
from errors import ConfigError


def write(tmp_path, name, text):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return str(path)


class TestLoadRunConfig:
    def test_defaults(self):
        config = load_run_config()
        assert config.pipeline.match_threshold == 85
        assert config.pipeline.candidate_k == 25
        assert config.pipeline.max_depth == 4
        assert config.provider.kind == "mock"

    def test_json(self, tmp_path):
        path = write(tmp_path, "run.json", json.dumps({"pipeline": {"candidate_k": 100}, "io": {"out_dir": "x"}}))
        config = load_run_config(path)
        assert config.pipeline.candidate_k == 100
        assert config.io.out_dir == "x"
        assert config.analytics == AnalyticsConfig()

    def test_toml(self, tmp_path):
        path = write(tmp_path, "run.toml", '[analytics]\nalpha = 0.01\nrollup = true\n\n[provider]\nkind = "http"\n')
        config = load_run_config(path)
        assert config.analytics.alpha == 0.01
        assert config.analytics.rollup is True
        assert config.provider.kind == "http"

    def test_round_trip_through_dict(self):
        config = RunConfig(pipeline=PipelineConfig(candidate_k=7))
        assert RunConfig.from_dict(config.to_dict()) == config

    @pytest.mark.parametrize("data, message", [
        ({"extras": {}}, "Unknown config sections"),
        ({"pipeline": {"k": 3}}, "Unknown keys in 'pipeline'"),
        ({"pipeline": []}, "must be a table"),
        ({"pipeline": {"match_threshold": 101}}, "match_threshold"),
        ({"analytics": {"span": 0}}, "span"),
        ({"analytics": {"min_quarters": 2}}, "min_quarters"),
        ({"analytics": {"count_mode": "words"}}, "count_mode"),
        ({"provider": {"kind": "grpc"}}, "provider.kind"),
        ({"provider": {"temperature": 5}}, "temperature"),
    ])
    def test_invalid(self, tmp_path, data, message):
        path = write(tmp_path, "run.json", json.dumps(data))
        with pytest.raises(ConfigError, match=message):
            load_run_config(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="not found"):
            load_run_config(str(tmp_path / "missing.json"))

    def test_unparseable(self, tmp_path):
        with pytest.raises(ConfigError, match="Cannot parse"):
            load_run_config(write(tmp_path, "run.toml", "[pipeline\n"))

    def test_root_must_be_object(self, tmp_path):
        with pytest.raises(ConfigError, match="root"):
            load_run_config(write(tmp_path, "run.json", "[1, 2]"))


class TestValidateConfig:
    def test_http_needs_api_key(self, monkeypatch):
        monkeypatch.delenv("CALLTOPICS_TEST_KEY", raising=False)
        config = RunConfig(provider=ProviderConfig(kind="http", api_key_env_var="CALLTOPICS_TEST_KEY"))
        with pytest.raises(ConfigError, match="CALLTOPICS_TEST_KEY not set"):
            validate_config(config)
        monkeypatch.setenv("CALLTOPICS_TEST_KEY", "secret")
        validate_config(config)

    def test_mock_script_must_exist(self, tmp_path):
        config = RunConfig(provider=ProviderConfig(mock_script=str(tmp_path / "script.json")))
        with pytest.raises(ConfigError, match="mock script not found"):
            validate_config(config)

    def test_default_mock_is_valid(self):
        validate_config(RunConfig())
