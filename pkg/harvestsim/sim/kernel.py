"""Discrete-event kernel: one run of one scenario."""
from __future__ import annotations

import hashlib
import heapq
import itertools
import logging
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from ..energy.services import active_totals
from ..metrics.services import Collector, summarize
from ..models import (
    GATEWAY_ID,
    CycleRecord,
    FailureReason,
    Frame,
    FrameKind,
    FrameRecord,
    NodeConfig,
    NodeEvent,
    NodeEventKind,
    NodeKind,
    NodeState,
    Outcome,
    Phase,
    RunSummary,
    Scenario,
    SleepPolicy,
)
from ..node.fsm import advance, boot, settle
from .channel import deliver
from .gateway import Gateway
from .illumination import lux_at

log = logging.getLogger(__name__)

SESSION_OPENERS = (FrameKind.ADV_ESS, FrameKind.NODE_ID_LUX)


class EventKind(str, Enum):
    TIMER_FIRED = "timer_fired"
    FRAME_DELIVERED = "frame_delivered"
    FRAME_LOST = "frame_lost"
    SUPERCAP_SAMPLED = "supercap_sampled"
    RUN_ENDED = "run_ended"


@dataclass(order=True, frozen=True)
class Event:
    time: float
    seq: int
    kind: EventKind = field(compare=False)
    node_id: str | None = field(default=None, compare=False)
    epoch: int = field(default=0, compare=False)
    frame: Frame | None = field(default=None, compare=False)


@dataclass(frozen=True)
class RunResult:
    summary: RunSummary
    records: list[CycleRecord]
    traces: dict[str, list[tuple[float, float]]]
    frames: list[FrameRecord]


def config_hash(scenario: Scenario) -> str:
    return hashlib.sha256(scenario.model_dump_json().encode("utf-8")).hexdigest()


class Kernel:
    """Single-threaded event loop; ties (time, seq) so equal-time events keep insertion order."""

    def __init__(self, scenario: Scenario) -> None:
        self.scenario = scenario
        self.clock = 0.0
        self._queue: list[Event] = []
        self._seq = itertools.count()
        self._configs: dict[str, NodeConfig] = {node.node_id: node for node in scenario.nodes}
        self._states: dict[str, NodeState] = {}
        channel_seed = scenario.channel.seed if scenario.channel.seed is not None else scenario.seed
        self._channel_rng = np.random.default_rng([channel_seed, 0])
        self._node_rngs = {
            node.node_id: np.random.default_rng([scenario.seed, 1, index]) for index, node in enumerate(scenario.nodes)
        }
        policies = {
            node.node_id: SleepPolicy(node.profile, node.harvester, node.margin, node.recovery_backoff_s)
            for node in scenario.nodes
            if node.kind is NodeKind.LIOT
        }
        self.gateway = Gateway(scenario.gateway, scenario.airtime, policies)
        self.collector = Collector(self._configs)
        self.events_processed = 0

    @property
    def node_states(self) -> dict[str, NodeState]:
        return dict(self._states)

    def _push(self, time: float, kind: EventKind, **fields) -> None:
        heapq.heappush(self._queue, Event(time, next(self._seq), kind, **fields))

    def _lux(self, now: float) -> float:
        s = self.scenario
        return lux_at(s.illumination, now, horizon=s.duration_s, seed=s.seed)

    def run(self) -> RunResult:
        s = self.scenario
        log.info("run %s: %d node(s), %.0f s, seed %d", s.name, len(s.nodes), s.duration_s, s.seed)

        n_samples = math.floor(s.duration_s / s.sample_interval_s + 1e-9) + 1
        for node in s.nodes:
            for k in range(n_samples):
                self._push(k * s.sample_interval_s, EventKind.SUPERCAP_SAMPLED, node_id=node.node_id)
        self._push(s.duration_s, EventKind.RUN_ENDED)

        lux = self._lux(0.0)
        for node in s.nodes:
            state, events = boot(node, 0.0, lux=lux)
            self.collector.open_cycle(state, 0.0)
            self._apply(node.node_id, None, state, events)

        while self._queue:
            event = heapq.heappop(self._queue)
            if event.time < self.clock:
                raise RuntimeError(f"event at {event.time} s precedes clock {self.clock} s")
            self.clock = event.time
            self.events_processed += 1
            if event.kind is EventKind.RUN_ENDED:
                break
            self._dispatch(event)

        return self._finish()

    def _dispatch(self, event: Event) -> None:
        if event.kind is EventKind.TIMER_FIRED:
            state = self._states[event.node_id]
            if event.epoch == state.epoch:
                self._advance(event.node_id)
        elif event.kind is EventKind.FRAME_DELIVERED:
            self._on_delivered(event.frame)
        elif event.kind is EventKind.SUPERCAP_SAMPLED:
            self._on_sample(event.node_id)
        # Lost frames need no action: the waiting side times out.

    def _advance(self, node_id: str, frame: Frame | None = None) -> None:
        cfg = self._configs[node_id]
        previous = self._states[node_id]
        state, events = advance(
            previous,
            cfg,
            self.clock,
            lux=self._lux(self.clock),
            frame=frame,
            rng=self._node_rngs[node_id],
            airtime=self.scenario.airtime,
            timeout_factor=self.scenario.gateway.timeout_factor,
        )
        self._apply(node_id, previous, state, events)

    def _apply(self, node_id: str, previous: NodeState | None, state: NodeState, events: list[NodeEvent]) -> None:
        self._states[node_id] = state
        for event in events:
            if event.kind is NodeEventKind.CYCLE_STARTED:
                self.collector.mark_wake(state, self.clock)
            elif event.kind is NodeEventKind.FRAME_SENT:
                self._node_transmit(node_id, event.frame)
            elif event.kind in (NodeEventKind.CYCLE_COMPLETED, NodeEventKind.CYCLE_ABORTED):
                self._close_cycle(node_id, state, event)
        if previous is None or state.epoch != previous.epoch:
            self._push(state.phase_deadline, EventKind.TIMER_FIRED, node_id=node_id, epoch=state.epoch)

    def _node_transmit(self, node_id: str, frame: Frame) -> None:
        if frame.kind in SESSION_OPENERS:
            cfg = self._configs[node_id]
            t_active, _ = active_totals(cfg.profile)
            deadline = self.clock + self.scenario.gateway.timeout_factor * t_active
            self.gateway.open(node_id, cfg.kind, frame.session_id, self.clock, deadline)
        self._transmit(frame)

    def _transmit(self, frame: Frame) -> None:
        delivered = deliver(frame, self.scenario.channel, self._channel_rng)
        self.collector.frame(frame, self.clock, delivered)
        kind = EventKind.FRAME_DELIVERED if delivered else EventKind.FRAME_LOST
        self._push(self.clock + frame.airtime, kind, frame=frame)

    def _on_delivered(self, frame: Frame) -> None:
        reply = self.gateway.receive(frame, self.clock)
        if reply is not None:
            self._transmit(reply)
        if frame.dst != GATEWAY_ID and frame.dst in self._states:
            self._advance(frame.dst, frame)

    def _on_sample(self, node_id: str) -> None:
        cfg = self._configs[node_id]
        state = settle(self._states[node_id], cfg, self.clock, self._lux(self.clock))
        self._states[node_id] = state
        if state.depleted and state.phase is not Phase.SLEEPING:
            self._advance(node_id)
            state = self._states[node_id]
        self.collector.sample(node_id, self.clock, state.supercap.voltage_v)

    def _close_cycle(self, node_id: str, state: NodeState, event: NodeEvent) -> None:
        session = self.gateway.close(node_id, event.reason)
        if event.kind is NodeEventKind.CYCLE_COMPLETED and session is not None and session.outcome is Outcome.DELIVERED:
            outcome, reason = Outcome.DELIVERED, None
        elif event.kind is NodeEventKind.CYCLE_COMPLETED:
            outcome = Outcome.FAILED
            reason = session.reason if session is not None else FailureReason.TIMEOUT
        else:
            outcome = Outcome.FAILED
            reason = event.reason
            if session is not None and session.reason is FailureReason.PROTOCOL_VIOLATION:
                reason = session.reason
        self.collector.close_cycle(state, self.clock, outcome, reason)

    def _finish(self) -> RunResult:
        s = self.scenario
        lux = self._lux(s.duration_s)
        for node_id, state in self._states.items():
            state = settle(state, self._configs[node_id], s.duration_s, lux)
            self._states[node_id] = state
            self.collector.truncate(state, s.duration_s)
            self.gateway.close(node_id)

        summary = summarize(
            self.collector.records,
            self.collector.traces,
            node_ids=list(self._configs),
            duration_s=s.duration_s,
            seed=s.seed,
            config_hash=config_hash(s),
        )
        log.info("run %s finished after %d events", s.name, self.events_processed)
        return RunResult(summary, self.collector.records, self.collector.traces, self.collector.frames)


def run(scenario: Scenario) -> RunResult:
    return Kernel(scenario).run()
