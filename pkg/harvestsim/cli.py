"""Command-line commands: solve, simulate, sweep, report."""
from __future__ import annotations

import functools
import logging
from pathlib import Path
from typing import Any, Callable

import click
import yaml

from .errors import ConfigValidationError, ExportError, InfeasibleScheduleError

log = logging.getLogger(__name__)

SAMPLE_WINDOW_S = 8 * 3600


class ValidationFailed(click.ClickException):
    exit_code = 2


class ScheduleInfeasible(click.ClickException):
    exit_code = 3


class OutputFailed(click.ClickException):
    exit_code = 4


def _mapped_errors(command: Callable[..., Any]) -> Callable[..., Any]:
    @functools.wraps(command)
    def wrapper(*args: Any, **kwargs: Any) -> Any:
        try:
            return command(*args, **kwargs)
        except ConfigValidationError as exc:
            raise ValidationFailed(str(exc)) from exc
        except InfeasibleScheduleError as exc:
            raise ScheduleInfeasible(str(exc)) from exc
        except ExportError as exc:
            raise OutputFailed(str(exc)) from exc

    return wrapper


def _output_dir(settings: dict[str, Any], scenario_dir: str | None, option: Path | None) -> Path:
    if option is not None:
        return option
    if "OUTPUT_DIR" in settings.get("ENV_OVERRIDES", ()):
        return Path(settings["OUTPUT_DIR"])
    return Path(scenario_dir or settings["OUTPUT_DIR"])


def _parse_values(raw: str) -> list[Any]:
    values = [yaml.safe_load(part.strip()) for part in raw.split(",") if part.strip()]
    if not values:
        raise click.BadParameter("give at least one value", param_hint="--values")
    return values


@click.command("solve")
@click.option("--profile", "profile_ref", required=True, help="Profile preset name or YAML file.")
@click.option("--lux", type=float, default=None, help="Illuminance; converted through the harvester curve.")
@click.option("--harvest-mw", type=float, default=None, help="Harvested power in mW.")
@click.option("--harvester", "harvester_ref", default=None, help="Harvester preset overriding the profile's.")
@click.option("--margin", type=float, default=None, help="Cycle stretch fraction (default: profile's).")
@click.pass_obj
@_mapped_errors
def solve(
    settings: dict[str, Any],
    profile_ref: str,
    lux: float | None,
    harvest_mw: float | None,
    harvester_ref: str | None,
    margin: float | None,
) -> None:
    """Solve the energy-neutral sleep time for a profile."""
    from .energy import services
    from .models import SolutionKind

    if (lux is None) == (harvest_mw is None):
        raise click.UsageError("give exactly one of --lux or --harvest-mw")
    if (lux is not None and lux < 0) or (harvest_mw is not None and harvest_mw < 0):
        raise click.UsageError("--lux and --harvest-mw must be >= 0")
    if margin is not None and margin < 0:
        raise click.UsageError("--margin must be >= 0")

    preset = services.profile_preset(profile_ref, settings["PROFILES_PATH"])
    harvester = services.load_harvester(harvester_ref, settings["PROFILES_PATH"]) if harvester_ref else preset.harvester
    p_harv = harvest_mw if harvest_mw is not None else harvester.power_mw(lux)
    margin = preset.margin if margin is None else margin

    solution = services.solve_sleep_time(preset.profile, p_harv)
    if solution.kind is SolutionKind.INFEASIBLE:
        raise InfeasibleScheduleError(p_harv, preset.profile.sleep_power_mw)

    t_active, e_active = services.active_totals(preset.profile)
    cycle = (t_active + solution.t_sleep) * (1.0 + margin)
    click.echo(f"profile      {preset.name}")
    click.echo(f"harvest      {p_harv:.6f} mW")
    click.echo(f"t_active     {t_active:.3f} s")
    click.echo(f"e_active     {e_active:.6f} J")
    if solution.kind is SolutionKind.CONTINUOUS:
        click.secho("t_sleep      0.000 s (continuous operation)", fg="yellow")
    else:
        click.echo(f"t_sleep      {solution.t_sleep:.3f} s")
    click.echo(f"cycle        {cycle:.3f} s (margin {margin:.1%})")
    click.echo(f"samples/8h   {round(SAMPLE_WINDOW_S / cycle)}")


@click.command("simulate")
@click.option("--scenario", "scenario_ref", required=True, help="Scenario preset name or YAML file.")
@click.option("--seed", type=int, default=None, help="Override the scenario seed.")
@click.option("--duration", type=float, default=None, help="Override the run length in seconds.")
@click.option("--out", "out_dir", type=click.Path(file_okay=False, path_type=Path), default=None)
@click.option("--format", "fmt", type=click.Choice(["csv", "jsonl"]), default=None)
@click.pass_obj
@_mapped_errors
def simulate(
    settings: dict[str, Any],
    scenario_ref: str,
    seed: int | None,
    duration: float | None,
    out_dir: Path | None,
    fmt: str | None,
) -> None:
    """Run one scenario and write its result files."""
    from .metrics import services as metrics
    from .scenario.services import load_scenario
    from .sim.kernel import run

    overrides: dict[str, Any] = {}
    if seed is not None:
        overrides["seed"] = seed
    if duration is not None:
        overrides["duration_s"] = duration
    scenario = load_scenario(scenario_ref, overrides)

    result = run(scenario)
    target = _output_dir(settings, scenario.output.dir, out_dir)
    if fmt is None:
        fmt = settings["EXPORT_FORMAT"] if "EXPORT_FORMAT" in settings.get("ENV_OVERRIDES", ()) else scenario.output.format
    ext = "csv" if fmt == "csv" else "jsonl"
    metrics.export(result.summary, fmt, target / f"summary.{ext}")
    metrics.export(result.records, fmt, target / f"cycles.{ext}")
    metrics.export(result.traces, fmt, target / f"voltage.{ext}")
    metrics.export(result.frames, fmt, target / f"frames.{ext}")

    click.echo(metrics.summary_table_header())
    for node in result.summary.nodes:
        click.echo(metrics.summary_table_row(node))
    click.secho(f"Results written to {target}", fg="green")


@click.command("sweep")
@click.option("--scenario", "scenario_ref", required=True, help="Scenario preset name or YAML file.")
@click.option("--param", required=True, help="Dotted parameter path, e.g. illumination.lux.")
@click.option("--values", "raw_values", required=True, help="Comma-separated values.")
@click.option("--jobs", type=click.IntRange(min=1), default=None, help="Parallel worker processes.")
@click.option("--out", "out_file", type=click.Path(dir_okay=False, path_type=Path), default=None)
@click.option("--format", "fmt", type=click.Choice(["csv", "jsonl"]), default=None)
@click.pass_obj
@_mapped_errors
def sweep(
    settings: dict[str, Any],
    scenario_ref: str,
    param: str,
    raw_values: str,
    jobs: int | None,
    out_file: Path | None,
    fmt: str | None,
) -> None:
    """Run a scenario once per parameter value and merge the summaries."""
    from .metrics import services as metrics
    from .scenario.services import check_param, load_scenario_mapping
    from .sim.sweep import run_sweep

    values = _parse_values(raw_values)
    mapping, _, source = load_scenario_mapping(scenario_ref)
    try:
        check_param(param)
    except ConfigValidationError as exc:
        raise click.BadParameter(str(exc), param_hint="--param") from exc

    results = run_sweep(mapping, param, values, jobs=jobs or settings["SWEEP_JOBS"], source=source)
    fmt = fmt or settings["EXPORT_FORMAT"]
    ext = "csv" if fmt == "csv" else "jsonl"
    target = out_file or _output_dir(settings, mapping.get("output", {}).get("dir"), None) / f"sweep.{ext}"
    metrics.export_sweep(results, param, fmt, target)

    click.echo(f"{param:<16} " + metrics.summary_table_header())
    for value, summary in results:
        for node in summary.nodes:
            click.echo(f"{value!s:<16} " + metrics.summary_table_row(node))
    click.secho(f"Sweep written to {target}", fg="green")


@click.command("report")
@click.option("--profile", "profile_ref", default=None, help="Print the stage energy table for a profile.")
@click.option("--lux", "lux_levels", type=float, multiple=True, help="Illuminance for the sleep rows (repeatable).")
@click.option("--run-dir", type=click.Path(exists=True, file_okay=False, path_type=Path), default=None)
@click.pass_obj
@_mapped_errors
def report(settings: dict[str, Any], profile_ref: str | None, lux_levels: tuple[float, ...], run_dir: Path | None) -> None:
    """Print a profile's energy table or the summary table of a finished run."""
    if (profile_ref is None) == (run_dir is None):
        raise click.UsageError("give exactly one of --profile or --run-dir")
    if profile_ref is not None:
        _report_profile(settings, profile_ref, lux_levels)
    else:
        _report_run(run_dir)


def _report_profile(settings: dict[str, Any], profile_ref: str, lux_levels: tuple[float, ...]) -> None:
    from .energy import services
    from .models import SolutionKind

    preset = services.profile_preset(profile_ref, settings["PROFILES_PATH"])
    levels = lux_levels or tuple(lux for lux, _ in preset.harvester.points if lux > 0)
    sleep_rows = {}
    for lux in levels:
        solution = services.solve_sleep_time(preset.profile, preset.harvester.power_mw(lux))
        if solution.kind is SolutionKind.INFEASIBLE:
            click.secho(f"{lux:g} lx: harvest below sleep power, no schedule", fg="red")
            continue
        sleep_rows[f"Sleep {lux:g}lx"] = solution.t_sleep

    click.echo(f"{'stage':<18} {'current_mA':>10} {'time_s':>10} {'energy_J':>10}")
    for row in services.stage_breakdown(preset.profile, sleep_rows):
        click.echo(f"{row.label:<18} {row.current_ma:>10.3f} {row.duration_s:>10.3f} {row.energy_j:>10.4f}")
    t_active, e_active = services.active_totals(preset.profile)
    click.echo(f"{'active total':<18} {'':>10} {t_active:>10.3f} {e_active:>10.4f}")


def _find(run_dir: Path, stem: str) -> Path:
    for ext in ("csv", "jsonl"):
        candidate = run_dir / f"{stem}.{ext}"
        if candidate.exists():
            return candidate
    raise ExportError(run_dir / stem, "no result file found")


def _report_run(run_dir: Path) -> None:
    from .metrics import services as metrics

    records = metrics.read_records(_find(run_dir, "cycles"))
    traces = metrics.read_trace(_find(run_dir, "voltage"))
    node_ids = sorted(set(traces) | {record.node_id for record in records})
    summary = metrics.summarize(records, traces, node_ids=node_ids)

    click.echo(metrics.summary_table_header() + f" {'dip_v':>8}")
    for node in summary.nodes:
        dips = [record.dip_v for record in records if record.node_id == node.node_id and record.dip_v is not None]
        mean_dip = sum(dips) / len(dips) if dips else 0.0
        click.echo(metrics.summary_table_row(node) + f" {mean_dip:>8.4f}")
