"""Gateway: owns the exchange sessions and answers node frames."""
from __future__ import annotations

import logging

from ..models import (
    GATEWAY_ID,
    AirtimeModel,
    ExchangeSession,
    FailureReason,
    Frame,
    FrameKind,
    GatewayConfig,
    NodeKind,
    Outcome,
    SleepPolicy,
)
from ..protocol.services import abort_session, exchange_step, is_overdue, open_session

log = logging.getLogger(__name__)


class Gateway:
    """Serves BLE nodes concurrently and LIoT nodes one at a time."""

    def __init__(self, config: GatewayConfig, airtime: AirtimeModel, policies: dict[str, SleepPolicy]) -> None:
        self.config = config
        self.airtime = airtime
        self.policies = policies
        self.sessions: dict[str, ExchangeSession] = {}
        self.liot_owner: str | None = None

    def open(self, node_id: str, kind: NodeKind, session_id: int, now: float, deadline: float) -> ExchangeSession:
        session = open_session(
            node_id,
            kind,
            session_id,
            now,
            deadline,
            airtime=self.airtime,
            channels=self.config.request_channels,
            sleep_policy=self.policies.get(node_id),
        )
        self.sessions[node_id] = session
        return session

    def receive(self, frame: Frame, now: float) -> Frame | None:
        """Step the owning session with a delivered frame; return the gateway's reply.

        A frame landing after the session deadline times the session out unanswered.
        """
        node_id = frame.src if frame.dst == GATEWAY_ID else frame.dst
        session = self.sessions.get(node_id)
        if session is None or session.session_id != frame.session_id:
            return None
        if is_overdue(session, now):
            log.debug("session %s/%s overdue at %.3f s", node_id, session.session_id, now)
            self.sessions[node_id] = abort_session(session, FailureReason.TIMEOUT)
            return None

        if frame.kind is FrameKind.NODE_ID_LUX:
            if self.liot_owner not in (None, node_id):
                log.debug("gateway busy with %s, dropping %s from %s", self.liot_owner, frame.kind.value, node_id)
                return None
            self.liot_owner = node_id

        session, reply = exchange_step(session, frame)
        self.sessions[node_id] = session
        return reply

    def close(self, node_id: str, reason: FailureReason | None = None) -> ExchangeSession | None:
        """Finish the node's session; a still-pending session fails."""
        session = self.sessions.pop(node_id, None)
        if self.liot_owner == node_id:
            self.liot_owner = None
        if session is None or session.outcome is not Outcome.PENDING:
            return session
        if reason is FailureReason.BROWNOUT:
            return abort_session(session, reason)
        session, _ = exchange_step(session, None)
        return session
