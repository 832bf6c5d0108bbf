"""Configuration objects for the harvestsim CLI."""
from __future__ import annotations

from pathlib import Path

PACKAGE_ROOT = Path(__file__).resolve().parent


class Config:
    DEFAULT_SEED = 1
    LOG_LEVEL = "INFO"
    OUTPUT_DIR = "out"
    EXPORT_FORMAT = "csv"
    SAMPLE_INTERVAL_S = 1.0
    SWEEP_JOBS = 1
    PROFILES_PATH = PACKAGE_ROOT / "energy" / "profiles.yml"
    PRESETS_PATH = PACKAGE_ROOT / "scenario" / "presets.yml"


class TestingConfig(Config):
    TESTING = True
    LOG_LEVEL = "WARNING"
    OUTPUT_DIR = "test-out"
