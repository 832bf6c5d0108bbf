"""Energy budgeting for batteryless nodes."""
from .services import (
    ProfilePreset,
    active_totals,
    budget_cycle,
    calibrate_harvester,
    implied_harvest_power,
    load_harvester,
    load_profile,
    profile_preset,
    solve_sleep_time,
    stage_breakdown,
    stage_energy,
    supercap_exchange,
    supercap_step,
)

__all__ = [
    "ProfilePreset",
    "active_totals",
    "budget_cycle",
    "calibrate_harvester",
    "implied_harvest_power",
    "load_harvester",
    "load_profile",
    "profile_preset",
    "solve_sleep_time",
    "stage_breakdown",
    "stage_energy",
    "supercap_exchange",
    "supercap_step",
]
