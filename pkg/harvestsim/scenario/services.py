"""Scenario files: presets, YAML loading, validation with line numbers, parameter overrides."""
from __future__ import annotations

import copy
import logging
from functools import lru_cache
from pathlib import Path
from types import UnionType
from typing import Annotated, Any, Mapping, Union, get_args, get_origin

import yaml
from pydantic import BaseModel, ValidationError

from ..config import Config
from ..errors import ConfigValidationError, ValidationIssue
from ..models import Scenario

log = logging.getLogger(__name__)


@lru_cache(maxsize=4)
def _presets(path: str) -> dict[str, Any]:
    data = yaml.safe_load(Path(path).read_text(encoding="utf-8")) or {}
    return data.get("scenarios", {})


def preset_names(path: Path | str | None = None) -> list[str]:
    return sorted(_presets(str(path or Config.PRESETS_PATH)))


def load_scenario_mapping(ref: str | Path, presets_file: Path | str | None = None) -> tuple[dict[str, Any], str | None, str]:
    """Return (raw mapping, YAML text or None, source label) for a preset name or file path."""
    presets = _presets(str(presets_file or Config.PRESETS_PATH))
    if str(ref) in presets:
        return copy.deepcopy(presets[str(ref)]), None, f"preset {ref}"

    path = Path(ref)
    if not path.is_file():
        raise ConfigValidationError(
            f"no scenario file or preset named {str(ref)!r} (presets: {', '.join(sorted(presets))})"
        )
    text = path.read_text(encoding="utf-8")
    try:
        mapping = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        line = mark.line + 1 if mark is not None else None
        raise ConfigValidationError([ValidationIssue("<yaml>", str(exc).splitlines()[0], line)], source=str(path)) from exc
    if not isinstance(mapping, dict):
        raise ConfigValidationError("scenario file must hold a mapping", source=str(path))
    return mapping, text, str(path)


def validate_scenario(mapping: Mapping[str, Any], *, text: str | None = None, source: str = "<scenario>") -> Scenario:
    try:
        return Scenario.model_validate(mapping)
    except ValidationError as exc:
        root = _compose(text)
        issues = [
            ValidationIssue(
                location=".".join(str(part) for part in error["loc"]) or "<root>",
                message=error["msg"],
                line=_line_for(root, error["loc"]),
            )
            for error in exc.errors()
        ]
        raise ConfigValidationError(issues, source=source) from exc
    except ConfigValidationError as exc:
        exc.source = exc.source or source
        raise


def load_scenario(ref: str | Path, overrides: Mapping[str, Any] | None = None) -> Scenario:
    """Load and validate a scenario, applying dotted-path overrides first."""
    mapping, text, source = load_scenario_mapping(ref)
    for param, value in (overrides or {}).items():
        mapping = set_param(mapping, param, value)
    scenario = validate_scenario(mapping, text=text, source=source)
    log.debug("loaded scenario %s from %s", scenario.name, source)
    return scenario


def _split(path: str) -> list[str | int]:
    return [int(part) if part.isdigit() else part for part in path.split(".") if part]


def _unwrap(annotation: Any) -> list[Any]:
    """Concrete types behind Annotated/Optional/Union wrappers."""
    origin = get_origin(annotation)
    if origin is Annotated:
        return _unwrap(get_args(annotation)[0])
    if origin in (Union, UnionType):
        return [inner for arg in get_args(annotation) if arg is not type(None) for inner in _unwrap(arg)]
    return [annotation]


def _step(annotation: Any, part: str | int) -> list[Any]:
    """Annotations reachable from ``annotation`` through one path part."""
    reached = []
    for candidate in _unwrap(annotation):
        origin = get_origin(candidate)
        if isinstance(candidate, type) and issubclass(candidate, BaseModel):
            field = candidate.model_fields.get(str(part))
            if field is not None:
                reached.append(field.annotation)
        elif origin is dict:
            reached.append(get_args(candidate)[1])
        elif origin in (tuple, list) and isinstance(part, int):
            args = get_args(candidate)
            reached.append(args[0] if len(args) == 2 and args[1] is Ellipsis else args[min(part, len(args) - 1)])
    return reached


def check_param(path: str) -> None:
    """Reject a dotted path that names no field of the scenario schema."""
    parts = _split(path)
    if not parts:
        raise ConfigValidationError("empty parameter path")
    annotations: list[Any] = [Scenario]
    for part in parts:
        annotations = [reached for annotation in annotations for reached in _step(annotation, part)]
        if not annotations:
            raise ConfigValidationError(f"parameter {path!r} is not a scenario field")


def get_param(mapping: Mapping[str, Any], path: str) -> Any:
    node: Any = mapping
    for part in _split(path):
        try:
            node = node[part]
        except (KeyError, IndexError, TypeError) as exc:
            raise ConfigValidationError(f"parameter {path!r} is not set in the scenario") from exc
    return node


def set_param(mapping: Mapping[str, Any], path: str, value: Any) -> dict[str, Any]:
    """Copy of ``mapping`` with the dotted ``path`` set to ``value``.

    The path must name a schema field. Missing mapping keys along the way are
    created; list indices must already exist.
    """
    check_param(path)
    parts = _split(path)
    result = copy.deepcopy(dict(mapping))
    node: Any = result
    for part, following in zip(parts, parts[1:]):
        if isinstance(node, dict) and part not in node and not isinstance(following, int):
            node[part] = {}
        try:
            node = node[part]
        except (KeyError, IndexError, TypeError) as exc:
            raise ConfigValidationError(f"parameter {path!r} is not set in the scenario") from exc
    last = parts[-1]
    if isinstance(node, list) and isinstance(last, int) and last < len(node):
        node[last] = value
    elif isinstance(node, dict):
        node[last] = value
    else:
        raise ConfigValidationError(f"parameter {path!r} is not set in the scenario")
    return result


def _compose(text: str | None) -> yaml.Node | None:
    if not text:
        return None
    try:
        return yaml.compose(text, Loader=yaml.SafeLoader)
    except yaml.YAMLError:
        return None


def _line_for(root: yaml.Node | None, loc: tuple[Any, ...]) -> int | None:
    """1-based line of the deepest YAML node matching the error location."""
    if root is None:
        return None
    node, line = root, root.start_mark.line + 1
    for part in loc:
        if isinstance(node, yaml.MappingNode):
            for key, value in node.value:
                if key.value == str(part):
                    node, line = value, key.start_mark.line + 1
                    break
            # Parts with no YAML key (union tags, model names) are skipped.
        elif isinstance(node, yaml.SequenceNode) and isinstance(part, int) and part < len(node.value):
            node = node.value[part]
            line = node.start_mark.line + 1
        else:
            break
    return line
