"""Run the four eight-hour presets and print the delivery summary table."""
from __future__ import annotations

import sys
from pathlib import Path

PROJECT_ROOT = Path(__file__).resolve().parents[1]
if str(PROJECT_ROOT) not in sys.path:
    sys.path.insert(0, str(PROJECT_ROOT))

from harvestsim.metrics import summary_table_header, summary_table_row
from harvestsim.scenario import load_scenario
from harvestsim.sim import run

PRESETS = ("ble-700lx", "ble-500lx", "liot-700lx", "liot-500lx")


def main() -> None:
    seed = int(sys.argv[1]) if len(sys.argv) > 1 else None
    overrides = {"seed": seed} if seed is not None else {}

    print(summary_table_header())
    for preset in PRESETS:
        result = run(load_scenario(preset, overrides))
        for node in result.summary.nodes:
            print(summary_table_row(node, label=preset))


if __name__ == "__main__":
    main()
