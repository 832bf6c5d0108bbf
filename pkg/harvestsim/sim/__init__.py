"""Discrete-event simulation of nodes, gateway and links."""
from .channel import deliver
from .gateway import Gateway
from .illumination import lux_at
from .kernel import Event, EventKind, Kernel, RunResult, config_hash, run
from .sweep import run_sweep

__all__ = [
    "Event",
    "EventKind",
    "Gateway",
    "Kernel",
    "RunResult",
    "config_hash",
    "deliver",
    "lux_at",
    "run",
    "run_sweep",
]
