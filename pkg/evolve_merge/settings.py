#!/usr/bin/env python3
"""
Process settings
Environment-driven defaults (EVOLVE_MERGE_* variables or a .env file)
"""

from pathlib import Path

from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    model_config = SettingsConfigDict(
        env_prefix="EVOLVE_MERGE_",
        env_file=".env",
        env_file_encoding="utf-8",
        extra="ignore",
    )

    jobs: int = Field(default=1, ge=1)
    log_level: str = "INFO"
    runs_dir: Path = Path("runs")
    checkpoint_every: int = Field(default=50, ge=1)
    progress: bool = False


def get_settings() -> Settings:
    """Read settings from the environment (fresh on every call)."""
    return Settings()
