"""Configuration management using pydantic-settings."""

from pathlib import Path

from pydantic_settings import BaseSettings, SettingsConfigDict

_PROJECT_ROOT = Path(__file__).resolve().parent.parent.parent


class Settings(BaseSettings):
    """Lab settings loaded from environment variables."""

    model_config = SettingsConfigDict(
        env_prefix="ZEROSHOTLAB_",
        env_file=str(_PROJECT_ROOT / ".env"),
        env_file_encoding="utf-8",
        extra="ignore",
    )

    # Output storage
    data_path: Path = _PROJECT_ROOT / "data"
    run_log_path: Path | None = None  # JSONL timing log; disabled when unset

    # Execution
    threads: int = 1
    log_level: str = "INFO"

    # Estimator defaults
    dependence_lambda: float = 1e-3  # NOCCO / CCA regularization
    bandwidth_scale: float = 1.0  # multiplier on the median-heuristic bandwidth
    prompt_bias_mc_draws: int = 20000


def get_settings() -> Settings:
    """Get lab settings instance."""
    return Settings()
