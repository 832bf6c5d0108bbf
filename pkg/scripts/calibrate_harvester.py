"""Print the harvest power implied by measured sleep times for each profile preset."""
from __future__ import annotations

import sys
from pathlib import Path

PROJECT_ROOT = Path(__file__).resolve().parents[1]
if str(PROJECT_ROOT) not in sys.path:
    sys.path.insert(0, str(PROJECT_ROOT))

import yaml

from harvestsim.config import Config
from harvestsim.energy import implied_harvest_power, load_profile


def main() -> None:
    data = yaml.safe_load(Path(Config.PROFILES_PATH).read_text(encoding="utf-8"))
    for name, entry in data.get("harvesters", {}).items():
        if "calibrate_against" not in entry:
            continue
        profile = load_profile(entry["calibrate_against"])
        print(f"{name} (against {profile.name}, P_sleep {profile.sleep_power_mw:.4f} mW)")
        for lux, t_sleep in sorted(entry["sleep_s"].items()):
            print(f"  {lux:>6} lx  sleep {t_sleep:>9.3f} s  ->  {implied_harvest_power(profile, t_sleep):.6f} mW")


if __name__ == "__main__":
    main()
