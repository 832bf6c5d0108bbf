"""Run metrics and result files."""
from .services import (
    Collector,
    export,
    export_sweep,
    format_pdr,
    read_frames,
    read_records,
    read_summary,
    read_trace,
    summarize,
    summary_table_header,
    summary_table_row,
    voltage_stats,
)

__all__ = [
    "Collector",
    "export",
    "export_sweep",
    "format_pdr",
    "read_frames",
    "read_records",
    "read_summary",
    "read_trace",
    "summarize",
    "summary_table_header",
    "summary_table_row",
    "voltage_stats",
]
