from __future__ import annotations

from functools import lru_cache
from pathlib import Path
from typing import Optional

from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    model_config = SettingsConfigDict(
        env_prefix="VARFIELD_",
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=False,
    )

    threads: int = Field(default=1, ge=1)
    timeout_s: float = Field(default=600.0, gt=0)
    max_order: int = Field(default=12, ge=1)
    output_format: str = Field(default="plain", pattern="^(plain|latex|json)$")
    grid: Optional[str] = Field(default=None)
    tol_identity: float = Field(default=1e-9, gt=0)
    tol_fd: float = Field(default=1e-6, gt=0)
    fd_step: float = Field(default=1e-5, gt=0)
    fd_points: int = Field(default=1001, ge=2)
    ym_grid_points: int = Field(default=9, ge=2)
    models_dir: Optional[str] = Field(default=None)
    log_level: str = Field(default="WARNING")

    def models_path(self) -> str:
        if self.models_dir:
            configured = Path(self.models_dir)
            if configured.is_dir():
                return str(configured)
        return str(Path(__file__).resolve().parent / "models")

    def resolve_model(self, path: str) -> Path:
        candidate = Path(path)
        if candidate.is_file():
            return candidate
        fallback = Path(self.models_path()) / candidate.name
        if fallback.is_file():
            return fallback
        return candidate


@lru_cache(maxsize=1)
def get_settings() -> Settings:
    return Settings()
