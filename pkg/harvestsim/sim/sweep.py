"""Parameter sweeps: independent runs over one scenario parameter."""
from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from typing import Any, Mapping, Sequence

from ..models import RunSummary
from ..scenario.services import check_param, set_param, validate_scenario
from .kernel import run

log = logging.getLogger(__name__)


def _run_one(mapping: Mapping[str, Any], source: str) -> RunSummary:
    return run(validate_scenario(mapping, source=source)).summary


def run_sweep(
    mapping: Mapping[str, Any],
    param: str,
    values: Sequence[Any],
    *,
    jobs: int = 1,
    source: str = "<sweep>",
) -> list[tuple[Any, RunSummary]]:
    """One run per value, results sorted by value regardless of completion order."""
    check_param(param)
    variants = [set_param(mapping, param, value) for value in values]
    # Validate everything before any run starts.
    for value, variant in zip(values, variants):
        validate_scenario(variant, source=f"{source} [{param}={value}]")

    log.info("sweeping %s over %d value(s) with %d job(s)", param, len(values), jobs)
    if jobs > 1 and len(variants) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            summaries = list(pool.map(_run_one, variants, [source] * len(variants)))
    else:
        summaries = [_run_one(variant, source) for variant in variants]
    return sorted(zip(values, summaries), key=lambda item: item[0])
