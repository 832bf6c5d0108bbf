"""Exceptions raised by the simulator."""
from __future__ import annotations

from dataclasses import dataclass


class HarvestSimError(Exception):
    """Base class for harvestsim errors."""


class InfeasibleScheduleError(HarvestSimError):
    """Harvested power cannot cover the sleep load, so no duty cycle is sustainable."""

    def __init__(self, p_harv_mw: float, p_sleep_mw: float) -> None:
        self.p_harv_mw = p_harv_mw
        self.p_sleep_mw = p_sleep_mw
        super().__init__(
            f"harvest {p_harv_mw:.6f} mW does not exceed sleep power {p_sleep_mw:.6f} mW"
        )


class ProtocolError(HarvestSimError):
    """A frame or session breaks the exchange rules."""


@dataclass(frozen=True)
class ValidationIssue:
    location: str
    message: str
    line: int | None = None

    def __str__(self) -> str:
        where = f"line {self.line}: " if self.line is not None else ""
        return f"{where}{self.location}: {self.message}"


class ConfigValidationError(HarvestSimError):
    """Scenario or profile input failed validation."""

    def __init__(self, issues: list[ValidationIssue] | str, source: str | None = None) -> None:
        if isinstance(issues, str):
            issues = [ValidationIssue(location="<root>", message=issues)]
        self.issues = issues
        self.source = source
        header = f"invalid configuration in {source}" if source else "invalid configuration"
        super().__init__("\n".join([header, *(f"  {issue}" for issue in issues)]))


class ExportError(HarvestSimError):
    """Writing or reading a result file failed."""

    def __init__(self, path: object, reason: str) -> None:
        self.path = path
        super().__init__(f"{path}: {reason}")
