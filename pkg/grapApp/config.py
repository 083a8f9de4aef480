from functools import lru_cache
from typing import Optional

from pydantic_settings import BaseSettings, SettingsConfigDict


class BaseConfig(BaseSettings):
    ENV_STATE: Optional[str] = None

    model_config = SettingsConfigDict(env_file=".env", extra="ignore")


class GlobalConfig(BaseConfig):
    DATABASE_URL: str = "sqlite:///grap_runs.db"
    OUTPUT_DIR: str = "runs"
    LOG_LEVEL: str = "INFO"
    SWEEP_WORKERS: int = 1
    USE_RUN_CACHE: bool = True
    # Steps faster than this are below useful timer resolution in `benchmark`
    MIN_TIMED_STEP_US: float = 50.0


class DevConfig(GlobalConfig):
    model_config = SettingsConfigDict(env_prefix="DEV_")


class TestConfig(GlobalConfig):
    DATABASE_URL: str = "sqlite:///:memory:"
    USE_RUN_CACHE: bool = False

    model_config = SettingsConfigDict(env_prefix="TEST_")


class ProdConfig(GlobalConfig):
    model_config = SettingsConfigDict(env_prefix="PROD_")


# lru_cache to avoid reloading config multiple times
@lru_cache()
def get_config(env_state: Optional[str]):
    configs = {
        "dev": DevConfig,
        "test": TestConfig,
        "prod": ProdConfig,
    }
    return configs[env_state or "dev"]()


config = get_config(BaseConfig().ENV_STATE)
