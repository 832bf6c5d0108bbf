"""CLI factory for the harvestsim duty-cycle simulator."""
from __future__ import annotations

import os
from pathlib import Path
from typing import Any

import click
from dotenv import load_dotenv

from .config import Config
from .extensions import configure_logging

ENV_PREFIX = "HARVESTSIM_"


def create_cli(config_class: type[Config] | None = None) -> click.Group:
    """CLI factory pattern."""
    settings = _load_settings(config_class or Config)
    group = _build_group(settings)
    _register_commands(group)
    return group


def _load_settings(config_class: type[Config]) -> dict[str, Any]:
    settings = {key: getattr(config_class, key) for key in dir(config_class) if key.isupper()}
    _load_dotenv()
    overridden = set()
    for key, default in settings.items():
        raw = os.environ.get(ENV_PREFIX + key)
        if raw is None:
            continue
        overridden.add(key)
        if isinstance(default, bool):
            settings[key] = raw.lower() in ("1", "true", "yes")
        elif isinstance(default, int):
            settings[key] = int(raw)
        elif isinstance(default, Path):
            settings[key] = Path(raw)
        else:
            settings[key] = raw
    settings["ENV_OVERRIDES"] = frozenset(overridden)
    return settings


def _load_dotenv() -> None:
    env_file = Path.cwd() / ".env"
    if env_file.exists():
        load_dotenv(env_file, override=False)


def _build_group(settings: dict[str, Any]) -> click.Group:
    @click.group(help="Simulate batteryless BLE and LIoT nodes running energy-aware duty cycles.")
    @click.option("--log-level", default=None, help="Logging level (DEBUG, INFO, WARNING, ...).")
    @click.pass_context
    def cli(ctx: click.Context, log_level: str | None) -> None:
        ctx.obj = dict(settings)
        try:
            configure_logging(log_level or settings["LOG_LEVEL"])
        except ValueError as exc:
            raise click.BadParameter(str(exc), param_hint="--log-level") from exc

    return cli


def _register_commands(group: click.Group) -> None:
    from .cli import report, simulate, solve, sweep

    group.add_command(solve)
    group.add_command(simulate)
    group.add_command(sweep)
    group.add_command(report)
