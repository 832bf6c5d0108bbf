"""Energy budgeting: stage energies, sleep-time solving and supercap integration."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from functools import lru_cache
from pathlib import Path
from typing import Any, Mapping

import yaml
from pydantic import ValidationError

from ..config import Config
from ..errors import ConfigValidationError, ValidationIssue
from ..models import (
    CycleBudget,
    EnergyProfile,
    HarvesterCurve,
    NodeKind,
    SleepSolution,
    SolutionKind,
    Stage,
    Supercap,
)

log = logging.getLogger(__name__)

# Relative slack when deciding whether harvest exactly covers the active cycle.
CONTINUOUS_TOLERANCE = 1e-12


@dataclass(frozen=True)
class ProfilePreset:
    name: str
    kind: NodeKind
    profile: EnergyProfile
    harvester: HarvesterCurve
    margin: float


@dataclass(frozen=True)
class StageRow:
    label: str
    current_ma: float
    duration_s: float
    energy_j: float


def stage_energy(stage: Stage, voltage_v: float) -> float:
    """Energy in joules drawn by one stage: I (mA) x V x t / 1000."""
    return stage.current_ma * voltage_v * stage.duration_s / 1000.0


def active_totals(profile: EnergyProfile) -> tuple[float, float]:
    """Return (t_active seconds, e_active joules) summed over the active stages."""
    t_active = math.fsum(stage.duration_s for stage in profile.active_stages)
    e_active = math.fsum(stage_energy(stage, profile.voltage_v) for stage in profile.active_stages)
    return t_active, e_active


def solve_sleep_time(profile: EnergyProfile, p_harv_mw: float) -> SleepSolution:
    """Shortest sleep for which harvest over the whole cycle covers its consumption."""
    if p_harv_mw < 0:
        raise ValueError(f"harvested power must be >= 0, got {p_harv_mw}")

    t_active, e_active = active_totals(profile)
    e_active_mj = e_active * 1000.0
    p_sleep = profile.sleep_power_mw

    deficit = e_active_mj - p_harv_mw * t_active
    if deficit <= CONTINUOUS_TOLERANCE * e_active_mj:
        return SleepSolution(SolutionKind.CONTINUOUS, 0.0, p_harv_mw)
    if p_harv_mw <= p_sleep:
        return SleepSolution(SolutionKind.INFEASIBLE, None, p_harv_mw)
    return SleepSolution(SolutionKind.FINITE, deficit / (p_harv_mw - p_sleep), p_harv_mw)


def implied_harvest_power(profile: EnergyProfile, t_sleep: float) -> float:
    """Harvest power (mW) at which ``t_sleep`` is exactly the energy-neutral sleep."""
    if t_sleep <= 0:
        raise ValueError(f"t_sleep must be positive, got {t_sleep}")
    t_active, e_active = active_totals(profile)
    return (e_active * 1000.0 + profile.sleep_power_mw * t_sleep) / (t_active + t_sleep)


def budget_cycle(profile: EnergyProfile, p_harv_mw: float, t_sleep: float) -> CycleBudget:
    t_active, e_active = active_totals(profile)
    return CycleBudget(
        t_active=t_active,
        e_active=e_active,
        t_sleep=t_sleep,
        e_sleep=profile.sleep_power_mw * t_sleep / 1000.0,
        p_harv=p_harv_mw,
    )


def supercap_step(cap: Supercap, p_net_mw: float, dt: float) -> Supercap:
    """Integrate the buffer energy over ``dt`` seconds at constant net power.

    Charging power is scaled by the converter efficiency. Voltage is clamped to
    [v_min, v_max]; dropping below v_min marks the returned cap as depleted.
    """
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    if p_net_mw == 0:
        return replace(cap, depleted=False)

    p_effective = p_net_mw * cap.efficiency if p_net_mw > 0 else p_net_mw
    v_squared = cap.voltage_v**2 + 2.0 * (p_effective / 1000.0) * dt / cap.capacitance_f
    floor = cap.v_min_v**2
    voltage = min(math.sqrt(max(floor, v_squared)), cap.v_max_v)
    return replace(cap, voltage_v=voltage, depleted=v_squared < floor)


def supercap_exchange(cap: Supercap, harvest_mw: float, load_mw: float, dt: float) -> tuple[Supercap, float, float]:
    """Step the cap and return it with the (harvested, consumed) joules that actually moved.

    Harvest spilled at v_max is not credited, and load the cap could not supply
    below v_min is not debited, so the stored-energy change always equals
    harvested minus consumed.
    """
    after = supercap_step(cap, harvest_mw - load_mw, dt)
    load_j = load_mw * dt / 1000.0
    p_net = harvest_mw - load_mw
    nominal = (p_net * cap.efficiency if p_net > 0 else p_net) * dt / 1000.0
    actual = after.stored_energy_j - cap.stored_energy_j
    if actual <= nominal:
        return after, actual + load_j, load_j
    return after, nominal + load_j, nominal + load_j - actual


def stage_breakdown(profile: EnergyProfile, sleep_rows: Mapping[str, float] | None = None) -> list[StageRow]:
    """Rows of the per-stage energy table, active stages first, then one row per sleep."""
    rows = [
        StageRow(stage.name.value, stage.current_ma, stage.duration_s, stage_energy(stage, profile.voltage_v))
        for stage in profile.active_stages
    ]
    for label, t_sleep in (sleep_rows or {}).items():
        rows.append(
            StageRow(label, profile.sleep_current_ma, t_sleep, profile.sleep_power_mw * t_sleep / 1000.0)
        )
    return rows


def calibrate_harvester(
    profile: EnergyProfile, sleep_by_lux: Mapping[float, float], name: str = "calibrated"
) -> HarvesterCurve:
    """Build a curve through the powers implied by measured sleep times, anchored at (0, 0)."""
    points = [(float(lux), implied_harvest_power(profile, t_sleep)) for lux, t_sleep in sorted(sleep_by_lux.items())]
    if not points or points[0][0] > 0:
        points.insert(0, (0.0, 0.0))
    return HarvesterCurve(name=name, points=tuple(points))


@lru_cache(maxsize=8)
def _catalogue(path: str) -> dict[str, Any]:
    data = yaml.safe_load(Path(path).read_text(encoding="utf-8")) or {}
    return {"profiles": data.get("profiles", {}), "harvesters": data.get("harvesters", {})}


def _invalid(source: str, exc: ValidationError) -> ConfigValidationError:
    issues = [
        ValidationIssue(location=".".join(str(part) for part in error["loc"]) or "<root>", message=error["msg"])
        for error in exc.errors()
    ]
    return ConfigValidationError(issues, source=source)


def _build_profile(name: str, entry: Mapping[str, Any]) -> EnergyProfile:
    try:
        return EnergyProfile(
            name=name,
            voltage_v=entry.get("voltage_v"),
            sleep_current_ma=entry.get("sleep_current_ma"),
            active_stages=entry.get("stages", ()),
        )
    except ValidationError as exc:
        raise _invalid(f"profile {name!r}", exc) from exc


def load_profile(name: str | Mapping[str, Any], path: Path | str | None = None) -> EnergyProfile:
    if isinstance(name, Mapping):
        return _build_profile(str(name.get("name", "custom")), name)
    profiles = _catalogue(str(path or Config.PROFILES_PATH))["profiles"]
    if name not in profiles:
        raise ConfigValidationError(f"unknown energy profile {name!r} (known: {', '.join(sorted(profiles))})")
    return _build_profile(name, profiles[name])


def _build_harvester(name: str, entry: Mapping[str, Any], path: Path | str | None) -> HarvesterCurve:
    if "calibrate_against" in entry:
        profile = load_profile(entry["calibrate_against"], path)
        curve = calibrate_harvester(profile, entry.get("sleep_s", {}), name=name)
        log.debug("calibrated harvester %s against %s: %s", name, profile.name, curve.points)
        return curve
    try:
        return HarvesterCurve(name=name, points=entry.get("points", ()))
    except ValidationError as exc:
        raise _invalid(f"harvester {name!r}", exc) from exc


def load_harvester(name: str | Mapping[str, Any], path: Path | str | None = None) -> HarvesterCurve:
    if isinstance(name, Mapping):
        return _build_harvester(str(name.get("name", "custom")), name, path)
    harvesters = _catalogue(str(path or Config.PROFILES_PATH))["harvesters"]
    if name not in harvesters:
        raise ConfigValidationError(f"unknown harvester {name!r} (known: {', '.join(sorted(harvesters))})")
    return _build_harvester(name, harvesters[name], path)


def profile_preset(ref: str, path: Path | str | None = None) -> ProfilePreset:
    """Resolve a profile by preset name or by a YAML file holding one profile entry."""
    profiles = _catalogue(str(path or Config.PROFILES_PATH))["profiles"]
    if ref in profiles:
        entry, name = profiles[ref], ref
    elif Path(ref).is_file():
        entry = yaml.safe_load(Path(ref).read_text(encoding="utf-8")) or {}
        name = Path(ref).stem
    else:
        raise ConfigValidationError(f"unknown energy profile {ref!r} (known: {', '.join(sorted(profiles))})")

    try:
        kind = NodeKind(entry.get("kind"))
    except ValueError as exc:
        raise ConfigValidationError(f"profile {name!r} needs kind 'ble' or 'liot'") from exc

    profile = _build_profile(name, entry)
    harvester_entry = entry.get("harvester")
    if isinstance(harvester_entry, str):
        harvester = load_harvester(harvester_entry, path)
    elif isinstance(harvester_entry, Mapping):
        harvester = _build_harvester(f"{name}-harvester", harvester_entry, path)
    else:
        raise ConfigValidationError(f"profile {name!r} needs a harvester")
    return ProfilePreset(name=name, kind=kind, profile=profile, harvester=harvester, margin=float(entry.get("margin", 0.0)))
