"""Run metrics: cycle records, voltage traces, summaries and result files."""
from __future__ import annotations

import csv
import json
import logging
import math
from collections import defaultdict
from dataclasses import asdict, dataclass, fields
from enum import Enum
from pathlib import Path
from typing import Any, Callable, Iterable, Mapping, Sequence

import numpy as np

from ..errors import ExportError
from ..models import (
    CycleRecord,
    FailureReason,
    Frame,
    FrameKind,
    FrameRecord,
    Link,
    NodeState,
    NodeSummary,
    Outcome,
    RunSummary,
)

log = logging.getLogger(__name__)

Trace = Mapping[str, Sequence[tuple[float, float]]]

SUMMARY_COLUMNS = (
    "node_id",
    "sent",
    "received",
    "pdr",
    "scap_avg_v",
    "scap_min_v",
    "scap_max_v",
    "cycles_truncated",
    "energy_consumed_j",
    "energy_harvested_j",
    "duration_s",
    "seed",
    "config_hash",
)
RECORD_COLUMNS = tuple(f.name for f in fields(CycleRecord))
TRACE_COLUMNS = ("node_id", "time_s", "voltage_v")
FRAME_COLUMNS = tuple(f.name for f in fields(FrameRecord))
FORMATS = ("csv", "jsonl")


@dataclass
class _OpenCycle:
    start: float
    v_start: float
    consumed_j: float
    harvested_j: float
    wake_time: float | None = None
    v_wake: float | None = None


class Collector:
    """Accumulates records for one run; owned by a single kernel."""

    def __init__(self, node_ids: Iterable[str]) -> None:
        self.node_ids = tuple(node_ids)
        self.records: list[CycleRecord] = []
        self.traces: dict[str, list[tuple[float, float]]] = {node_id: [] for node_id in self.node_ids}
        self.frames: list[FrameRecord] = []
        self._open: dict[str, _OpenCycle] = {}
        self._counts: dict[str, int] = defaultdict(int)

    def open_cycle(self, state: NodeState, now: float) -> None:
        self._open[state.node_id] = _OpenCycle(now, state.supercap.voltage_v, state.consumed_j, state.harvested_j)

    def mark_wake(self, state: NodeState, now: float) -> None:
        current = self._open[state.node_id]
        current.wake_time = now
        current.v_wake = state.supercap.voltage_v

    def close_cycle(
        self, state: NodeState, now: float, outcome: Outcome, reason: FailureReason | None = None
    ) -> CycleRecord:
        current = self._open[state.node_id]
        record = CycleRecord(
            node_id=state.node_id,
            cycle_index=self._counts[state.node_id],
            start=current.start,
            end=now,
            outcome=outcome,
            reason=reason,
            scap_v_start=current.v_start,
            scap_v_end=state.supercap.voltage_v,
            energy_consumed=state.consumed_j - current.consumed_j,
            energy_harvested=state.harvested_j - current.harvested_j,
            wake_time=current.wake_time,
            scap_v_wake=current.v_wake,
        )
        self._counts[state.node_id] += 1
        self.records.append(record)
        self.open_cycle(state, now)
        return record

    def truncate(self, state: NodeState, now: float) -> CycleRecord | None:
        """Close the trailing partial cycle at the end of the run."""
        current = self._open.get(state.node_id)
        if current is None or now <= current.start:
            return None
        return self.close_cycle(state, now, Outcome.TRUNCATED)

    def sample(self, node_id: str, t: float, voltage_v: float) -> None:
        self.traces[node_id].append((t, voltage_v))

    def frame(self, frame: Frame, sent_at: float, delivered: bool) -> None:
        self.frames.append(
            FrameRecord(
                sent_at=sent_at,
                arrives_at=sent_at + frame.airtime,
                src=frame.src,
                dst=frame.dst,
                link=frame.link,
                channel=frame.channel,
                kind=frame.kind,
                payload_bytes=frame.payload_bytes,
                airtime=frame.airtime,
                delivered=delivered,
            )
        )


def voltage_stats(trace: Sequence[tuple[float, float]]) -> tuple[float, float, float]:
    """(time-weighted average, min, max) voltage of a sampled trace."""
    if not trace:
        return 0.0, 0.0, 0.0
    times = np.fromiter((t for t, _ in trace), dtype=float, count=len(trace))
    volts = np.fromiter((v for _, v in trace), dtype=float, count=len(trace))
    v_min, v_max = float(volts.min()), float(volts.max())
    span = float(times[-1] - times[0])
    if len(trace) == 1 or span <= 0:
        return float(volts.mean()), v_min, v_max
    area = float(np.sum((volts[1:] + volts[:-1]) * np.diff(times)) / 2.0)
    # Keep the average inside [min, max] despite rounding.
    return min(max(area / span, v_min), v_max), v_min, v_max


def summarize(
    records: Iterable[CycleRecord],
    traces: Trace,
    *,
    node_ids: Sequence[str] | None = None,
    duration_s: float = 0.0,
    seed: int = 0,
    config_hash: str = "",
) -> RunSummary:
    by_node: dict[str, list[CycleRecord]] = defaultdict(list)
    for record in records:
        by_node[record.node_id].append(record)
    ids = list(node_ids) if node_ids is not None else sorted(set(by_node) | set(traces))

    nodes = []
    for node_id in ids:
        node_records = by_node.get(node_id, [])
        sent = sum(1 for record in node_records if record.counted)
        received = sum(1 for record in node_records if record.outcome is Outcome.DELIVERED)
        avg, low, high = voltage_stats(traces.get(node_id, ()))
        nodes.append(
            NodeSummary(
                node_id=node_id,
                packets_sent=sent,
                packets_received=received,
                pdr=received / sent if sent else 0.0,
                scap_avg_v=avg,
                scap_min_v=low,
                scap_max_v=high,
                cycles_truncated=sum(1 for record in node_records if record.outcome is Outcome.TRUNCATED),
                energy_consumed_j=math.fsum(record.energy_consumed for record in node_records),
                energy_harvested_j=math.fsum(record.energy_harvested for record in node_records),
            )
        )
    return RunSummary(nodes=tuple(nodes), duration_s=duration_s, seed=seed, config_hash=config_hash)


def format_pdr(pdr: float) -> str:
    """PDR truncated (not rounded) to three decimals, as reported tables print it."""
    return f"{math.floor(pdr * 1000 + 1e-9) / 1000:.3f}"


def summary_table_row(node: NodeSummary, label: str | None = None) -> str:
    return (
        f"{label or node.node_id:<14} {node.packets_sent:>6} {node.packets_received:>8} "
        f"{format_pdr(node.pdr):>6} {node.scap_avg_v:>8.3f}"
    )


def summary_table_header() -> str:
    return f"{'node':<14} {'sent':>6} {'received':>8} {'pdr':>6} {'avg_v':>8}"


def summary_rows(summary: RunSummary) -> list[dict[str, Any]]:
    return [
        {
            "node_id": node.node_id,
            "sent": node.packets_sent,
            "received": node.packets_received,
            "pdr": node.pdr,
            "scap_avg_v": node.scap_avg_v,
            "scap_min_v": node.scap_min_v,
            "scap_max_v": node.scap_max_v,
            "cycles_truncated": node.cycles_truncated,
            "energy_consumed_j": node.energy_consumed_j,
            "energy_harvested_j": node.energy_harvested_j,
            "duration_s": summary.duration_s,
            "seed": summary.seed,
            "config_hash": summary.config_hash,
        }
        for node in summary.nodes
    ]


def trace_rows(traces: Trace) -> list[dict[str, Any]]:
    return [
        {"node_id": node_id, "time_s": t, "voltage_v": v}
        for node_id in traces
        for t, v in traces[node_id]
    ]


def export(artifact: RunSummary | Sequence[CycleRecord] | Sequence[FrameRecord] | Trace, fmt: str, path: Path | str) -> Path:
    """Write a summary, cycle records, frame log or voltage trace as CSV or JSON lines."""
    if isinstance(artifact, RunSummary):
        return _write_rows(summary_rows(artifact), SUMMARY_COLUMNS, fmt, path)
    if isinstance(artifact, Mapping):
        return _write_rows(trace_rows(artifact), TRACE_COLUMNS, fmt, path)
    items = list(artifact)
    if items and isinstance(items[0], FrameRecord):
        return _write_rows((asdict(item) for item in items), FRAME_COLUMNS, fmt, path)
    return _write_rows((asdict(item) for item in items), RECORD_COLUMNS, fmt, path)


def export_sweep(results: Sequence[tuple[Any, RunSummary]], param: str, fmt: str, path: Path | str) -> Path:
    rows = [
        {"param": param, "value": value, **row}
        for value, summary in results
        for row in summary_rows(summary)
    ]
    return _write_rows(rows, ("param", "value", *SUMMARY_COLUMNS), fmt, path)


def _plain(value: Any, fmt: str) -> Any:
    if isinstance(value, Enum):
        return value.value
    if fmt == "csv":
        if value is None:
            return ""
        if isinstance(value, bool):
            return int(value)
    return value


def _write_rows(rows: Iterable[Mapping[str, Any]], columns: Sequence[str], fmt: str, path: Path | str) -> Path:
    if fmt not in FORMATS:
        raise ValueError(f"unknown export format {fmt!r}; use one of {', '.join(FORMATS)}")
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", encoding="utf-8", newline="") as handle:
            if fmt == "csv":
                writer = csv.DictWriter(handle, fieldnames=list(columns), lineterminator="\n")
                writer.writeheader()
                for row in rows:
                    writer.writerow({column: _plain(row.get(column), fmt) for column in columns})
            else:
                for row in rows:
                    handle.write(json.dumps({column: _plain(row.get(column), fmt) for column in columns}) + "\n")
    except OSError as exc:
        raise ExportError(path, exc.strerror or str(exc)) from exc
    log.debug("wrote %s", path)
    return path


def _optional(convert: Callable[[Any], Any]) -> Callable[[Any], Any]:
    def parse(value: Any) -> Any:
        return None if value in (None, "") else convert(value)

    return parse


def _flag(value: Any) -> bool:
    return value in (True, 1, "1", "True", "true")


RECORD_TYPES: dict[str, Callable[[Any], Any]] = {
    "node_id": str,
    "cycle_index": int,
    "start": float,
    "end": float,
    "outcome": Outcome,
    "reason": _optional(FailureReason),
    "scap_v_start": float,
    "scap_v_end": float,
    "energy_consumed": float,
    "energy_harvested": float,
    "wake_time": _optional(float),
    "scap_v_wake": _optional(float),
}

FRAME_TYPES: dict[str, Callable[[Any], Any]] = {
    "sent_at": float,
    "arrives_at": float,
    "src": str,
    "dst": str,
    "link": Link,
    "channel": _optional(int),
    "kind": FrameKind,
    "payload_bytes": int,
    "airtime": float,
    "delivered": _flag,
}


def _read_rows(path: Path | str) -> list[dict[str, Any]]:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ExportError(path, exc.strerror or str(exc)) from exc
    if path.suffix == ".csv":
        return list(csv.DictReader(text.splitlines()))
    if path.suffix in (".jsonl", ".json"):
        return [json.loads(line) for line in text.splitlines() if line.strip()]
    raise ExportError(path, "unknown result file type")


def read_records(path: Path | str) -> list[CycleRecord]:
    return [CycleRecord(**{key: RECORD_TYPES[key](row[key]) for key in RECORD_COLUMNS}) for row in _read_rows(path)]


def read_frames(path: Path | str) -> list[FrameRecord]:
    return [FrameRecord(**{key: FRAME_TYPES[key](row[key]) for key in FRAME_COLUMNS}) for row in _read_rows(path)]


def read_trace(path: Path | str) -> dict[str, list[tuple[float, float]]]:
    traces: dict[str, list[tuple[float, float]]] = defaultdict(list)
    for row in _read_rows(path):
        traces[str(row["node_id"])].append((float(row["time_s"]), float(row["voltage_v"])))
    return dict(traces)


def read_summary(path: Path | str) -> RunSummary:
    rows = _read_rows(path)
    nodes = tuple(
        NodeSummary(
            node_id=str(row["node_id"]),
            packets_sent=int(row["sent"]),
            packets_received=int(row["received"]),
            pdr=float(row["pdr"]),
            scap_avg_v=float(row["scap_avg_v"]),
            scap_min_v=float(row["scap_min_v"]),
            scap_max_v=float(row["scap_max_v"]),
            cycles_truncated=int(row["cycles_truncated"]),
            energy_consumed_j=float(row["energy_consumed_j"]),
            energy_harvested_j=float(row["energy_harvested_j"]),
        )
        for row in rows
    )
    if not rows:
        return RunSummary(nodes=())
    first = rows[0]
    return RunSummary(
        nodes=nodes,
        duration_s=float(first["duration_s"]),
        seed=int(first["seed"]),
        config_hash=str(first["config_hash"]),
    )
