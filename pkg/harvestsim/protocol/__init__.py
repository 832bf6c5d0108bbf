"""BLE and LIoT data-exchange protocols."""
from .services import (
    BLE_SCRIPT,
    DEFAULT_AIRTIME,
    LIOT_SCRIPT,
    abort_session,
    assign_sleep,
    ble_exchange_step,
    exchange_step,
    frame_airtime,
    liot_exchange_step,
    make_frame,
    open_session,
    payload_bytes,
)

__all__ = [
    "BLE_SCRIPT",
    "DEFAULT_AIRTIME",
    "LIOT_SCRIPT",
    "abort_session",
    "assign_sleep",
    "ble_exchange_step",
    "exchange_step",
    "frame_airtime",
    "liot_exchange_step",
    "make_frame",
    "open_session",
    "payload_bytes",
]
