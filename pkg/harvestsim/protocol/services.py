"""Gateway-side exchange sessions and frame construction for the BLE and LIoT links."""
from __future__ import annotations

import logging
from dataclasses import replace
from enum import Enum
from typing import Sequence

from ..energy.services import active_totals, solve_sleep_time
from ..errors import ProtocolError
from ..models import (
    ALL_CHANNELS,
    GATEWAY_ID,
    KIND_LINKS,
    AirtimeModel,
    ExchangeSession,
    FailureReason,
    Frame,
    FrameKind,
    Link,
    NodeKind,
    Outcome,
    SensorChannel,
    SensorSample,
    SleepPolicy,
    SolutionKind,
)

log = logging.getLogger(__name__)

DEFAULT_AIRTIME = AirtimeModel()
MAX_SLEEP_SET_S = 65535
SENSOR_RECORD_BYTES = 37
ESS_RECORD_BYTES = 5


class Sender(str, Enum):
    NODE = "node"
    GATEWAY = "gateway"


BLE_SCRIPT: tuple[tuple[FrameKind, Sender], ...] = (
    (FrameKind.ADV_ESS, Sender.NODE),
    (FrameKind.CONN_REQ, Sender.GATEWAY),
    (FrameKind.ESS_ATTR_REQUEST, Sender.GATEWAY),
    (FrameKind.ESS_ATTR_DATA, Sender.NODE),
    (FrameKind.CONFIG_OR_DISCONNECT, Sender.GATEWAY),
)

LIOT_SCRIPT: tuple[tuple[FrameKind, Sender], ...] = (
    (FrameKind.NODE_ID_LUX, Sender.NODE),
    (FrameKind.SENSOR_REQUEST, Sender.GATEWAY),
    (FrameKind.SENSOR_DATA, Sender.NODE),
    (FrameKind.SLEEP_SET, Sender.GATEWAY),
    (FrameKind.ACK, Sender.NODE),
)

SCRIPTS = {NodeKind.BLE: BLE_SCRIPT, NodeKind.LIOT: LIOT_SCRIPT}


def payload_bytes(kind: FrameKind, channels: Sequence[SensorChannel] = ALL_CHANNELS) -> int:
    """Payload size of each frame kind; data frames scale with the channel count."""
    sizes = {
        FrameKind.ADV_ESS: 31,
        FrameKind.CONN_REQ: 22,
        FrameKind.ESS_ATTR_REQUEST: 3,
        FrameKind.ESS_ATTR_DATA: 2 + ESS_RECORD_BYTES * len(channels),
        FrameKind.CONFIG_OR_DISCONNECT: 3,
        FrameKind.NODE_ID_LUX: 16,
        FrameKind.SENSOR_REQUEST: 1,
        FrameKind.SENSOR_DATA: SENSOR_RECORD_BYTES * len(channels),
        FrameKind.SLEEP_SET: 2,
        FrameKind.ACK: 1,
    }
    return sizes[kind]


def frame_airtime(kind: FrameKind, n_bytes: int, link: Link, model: AirtimeModel = DEFAULT_AIRTIME) -> float:
    """Airtime in seconds: per-link overhead plus per-byte cost."""
    if n_bytes < 0:
        raise ProtocolError(f"payload size must be >= 0, got {n_bytes}")
    if KIND_LINKS[kind] is not link:
        raise ProtocolError(f"{kind.value} cannot travel on {link.value}")
    timing = model.for_link(link)
    return timing.overhead_s + n_bytes * timing.per_byte_s


def adv_channel(session_id: int) -> int:
    return 37 + session_id % 3


def conn_channel(session_id: int, step: int) -> int:
    return (session_id * 7 + step * 11) % 37


def make_frame(
    kind: FrameKind,
    *,
    src: str,
    dst: str,
    session_id: int,
    airtime_model: AirtimeModel = DEFAULT_AIRTIME,
    channels: Sequence[SensorChannel] = ALL_CHANNELS,
    step: int = 0,
    airtime: float | None = None,
    lux: int | None = None,
    sleep_s: int | None = None,
    sample: SensorSample | None = None,
) -> Frame:
    link = KIND_LINKS[kind]
    size = payload_bytes(kind, channels)
    if airtime is None:
        airtime = frame_airtime(kind, size, link, airtime_model)

    channel: int | None = None
    if link is Link.BLE_ADV:
        channel = adv_channel(session_id)
    elif link is Link.BLE_CONN:
        channel = conn_channel(session_id, step)

    return Frame(
        src=src,
        dst=dst,
        link=link,
        kind=kind,
        payload_bytes=size,
        airtime=airtime,
        session_id=session_id,
        channel=channel,
        lux=lux,
        channels=tuple(channels) if kind in (FrameKind.SENSOR_REQUEST, FrameKind.SENSOR_DATA, FrameKind.ESS_ATTR_DATA) else (),
        sleep_s=sleep_s,
        sample=sample,
    )


def assign_sleep(policy: SleepPolicy, lux: float) -> int:
    """Whole seconds of sleep the gateway hands a LIoT node reporting ``lux``."""
    solution = solve_sleep_time(policy.profile, policy.harvester.power_mw(lux))
    if solution.kind is SolutionKind.INFEASIBLE:
        return int(round(policy.backoff_s))
    t_active, _ = active_totals(policy.profile)
    cycle = (t_active + solution.t_sleep) * (1.0 + policy.margin)
    return min(max(int(round(cycle - t_active)), 0), MAX_SLEEP_SET_S)


def open_session(
    node_id: str,
    protocol: NodeKind,
    session_id: int,
    now: float,
    deadline: float,
    *,
    airtime: AirtimeModel = DEFAULT_AIRTIME,
    channels: Sequence[SensorChannel] = ALL_CHANNELS,
    sleep_policy: SleepPolicy | None = None,
) -> ExchangeSession:
    if protocol is NodeKind.LIOT and sleep_policy is None:
        raise ProtocolError("LIoT sessions need a sleep policy to answer with SleepSet")
    return ExchangeSession(
        node_id=node_id,
        protocol=protocol,
        session_id=session_id,
        started_at=now,
        deadline=deadline,
        airtime=airtime,
        channels=tuple(channels),
        sleep_policy=sleep_policy,
    )


def abort_session(session: ExchangeSession, reason: FailureReason) -> ExchangeSession:
    if session.outcome is not Outcome.PENDING:
        return session
    return replace(session, outcome=Outcome.FAILED, reason=reason)


def is_overdue(session: ExchangeSession, now: float) -> bool:
    return session.outcome is Outcome.PENDING and now > session.deadline


def ble_exchange_step(session: ExchangeSession, incoming: Frame | None) -> tuple[ExchangeSession, Frame | None]:
    """Advance a BLE session by one delivered frame (or one missed frame when None)."""
    if session.protocol is not NodeKind.BLE:
        raise ProtocolError("ble_exchange_step called on a LIoT session")
    return _step(session, incoming)


def liot_exchange_step(session: ExchangeSession, incoming: Frame | None) -> tuple[ExchangeSession, Frame | None]:
    """Advance a LIoT session by one delivered frame (or one missed frame when None)."""
    if session.protocol is not NodeKind.LIOT:
        raise ProtocolError("liot_exchange_step called on a BLE session")
    return _step(session, incoming)


def exchange_step(session: ExchangeSession, incoming: Frame | None) -> tuple[ExchangeSession, Frame | None]:
    return _step(session, incoming)


def _step(session: ExchangeSession, incoming: Frame | None) -> tuple[ExchangeSession, Frame | None]:
    if session.outcome is not Outcome.PENDING:
        return session, None

    script = SCRIPTS[session.protocol]
    if incoming is None:
        reason = FailureReason.NO_GATEWAY if session.step <= 1 else FailureReason.TIMEOUT
        return replace(session, outcome=Outcome.FAILED, reason=reason), None

    expected, _ = script[session.step]
    if incoming.kind is not expected or incoming.session_id != session.session_id:
        log.debug(
            "session %s/%s expected %s, got %s", session.node_id, session.session_id, expected.value, incoming.kind.value
        )
        return replace(session, outcome=Outcome.FAILED, reason=FailureReason.PROTOCOL_VIOLATION), None

    changes: dict[str, object] = {"step": session.step + 1}
    if incoming.kind is FrameKind.NODE_ID_LUX:
        changes["reported_lux"] = incoming.lux
    session = replace(session, **changes)

    if session.step == len(script):
        return replace(session, outcome=Outcome.DELIVERED), None

    next_kind, sender = script[session.step]
    if sender is Sender.NODE:
        return session, None
    reply = _gateway_frame(session, next_kind)
    if next_kind is FrameKind.CONFIG_OR_DISCONNECT:
        # Last frame of the BLE script comes from the gateway.
        session = replace(session, step=session.step + 1, outcome=Outcome.DELIVERED)
    return session, reply


def _gateway_frame(session: ExchangeSession, kind: FrameKind) -> Frame:
    sleep_s: int | None = None
    if kind is FrameKind.SLEEP_SET:
        sleep_s = assign_sleep(session.sleep_policy, session.reported_lux or 0)
    return make_frame(
        kind,
        src=GATEWAY_ID,
        dst=session.node_id,
        session_id=session.session_id,
        airtime_model=session.airtime,
        channels=session.channels,
        step=session.step,
        sleep_s=sleep_s,
    )
