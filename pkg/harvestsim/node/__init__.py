"""Sensor node behaviour: duty-cycle state machine and synthetic sensors."""
from .fsm import LEGAL_TRANSITIONS, LOCAL_SOLVE, GatewayAssigned, LocalSolve, advance, boot, schedule_next_cycle, settle
from .sensors import read_sensors

__all__ = [
    "LEGAL_TRANSITIONS",
    "LOCAL_SOLVE",
    "GatewayAssigned",
    "LocalSolve",
    "advance",
    "boot",
    "read_sensors",
    "schedule_next_cycle",
    "settle",
]
