from __future__ import annotations

import copy
from typing import Any

import pytest
from click.testing import CliRunner

from harvestsim import create_cli
from harvestsim.config import TestingConfig
from harvestsim.energy import profile_preset
from harvestsim.models import NodeConfig
from harvestsim.scenario import load_scenario_mapping, set_param, validate_scenario


@pytest.fixture
def ble_preset():
    return profile_preset("ble-table1")


@pytest.fixture
def liot_preset():
    return profile_preset("liot-table2")


@pytest.fixture
def ble_profile(ble_preset):
    return ble_preset.profile


@pytest.fixture
def liot_profile(liot_preset):
    return liot_preset.profile


@pytest.fixture
def ble_node() -> NodeConfig:
    return NodeConfig(
        node_id="ble-1",
        profile="ble-table1",
        advertising="fixed",
        supercap={"voltage_v": 4.463},
    )


@pytest.fixture
def liot_node() -> NodeConfig:
    return NodeConfig(node_id="liot-1", profile="liot-table2", supercap={"voltage_v": 4.235})


@pytest.fixture
def preset_scenario():
    """Build a validated preset scenario with dotted-path overrides."""

    def build(name: str, **overrides: Any):
        mapping, _, source = load_scenario_mapping(name)
        for path, value in overrides.items():
            mapping = set_param(mapping, path.replace("__", "."), value)
        return validate_scenario(copy.deepcopy(mapping), source=source)

    return build


@pytest.fixture
def cli_app():
    return create_cli(TestingConfig)


@pytest.fixture
def runner() -> CliRunner:
    return CliRunner()
