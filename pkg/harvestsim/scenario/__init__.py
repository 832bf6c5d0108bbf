"""Scenario loading and presets."""
from .services import (
    check_param,
    get_param,
    load_scenario,
    load_scenario_mapping,
    preset_names,
    set_param,
    validate_scenario,
)

__all__ = [
    "check_param",
    "get_param",
    "load_scenario",
    "load_scenario_mapping",
    "preset_names",
    "set_param",
    "validate_scenario",
]
