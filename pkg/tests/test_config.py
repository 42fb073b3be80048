"""Tests for environment-backed settings."""

from pathlib import Path

from zeroshotlab.config import Settings, get_settings


class TestSettings:
    def test_defaults(self, isolated_settings):
        settings = Settings()
        assert settings.threads == 1
        assert settings.log_level == "INFO"
        assert settings.run_log_path is None
        assert settings.bandwidth_scale == 1.0
        assert settings.dependence_lambda == 1e-3

    def test_env_prefix(self, isolated_settings, monkeypatch):
        monkeypatch.setenv("ZEROSHOTLAB_THREADS", "4")
        monkeypatch.setenv("ZEROSHOTLAB_RUN_LOG_PATH", str(isolated_settings / "runs.jsonl"))
        settings = get_settings()
        assert settings.threads == 4
        assert settings.run_log_path == isolated_settings / "runs.jsonl"

    def test_data_path_override(self, isolated_settings):
        assert get_settings().data_path == Path(isolated_settings / "data")

    def test_unprefixed_env_ignored(self, isolated_settings, monkeypatch):
        monkeypatch.setenv("THREADS", "9")
        assert Settings().threads == 1
