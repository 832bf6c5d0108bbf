"""Duty-cycle state machine for BLE and LIoT batteryless nodes.

The machine is pure: every call takes a NodeState and returns the next one plus
the events the kernel must act on. Timer tokens (``epoch``) change whenever a
new deadline is armed so the kernel can drop stale timers.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from typing import NamedTuple, Union

import numpy as np

from ..energy.services import active_totals, solve_sleep_time, supercap_exchange
from ..errors import InfeasibleScheduleError
from ..models import (
    GATEWAY_ID,
    KIND_LINKS,
    AdvertisingMode,
    AirtimeModel,
    FailureReason,
    Frame,
    FrameKind,
    NodeConfig,
    NodeEvent,
    NodeEventKind,
    NodeKind,
    NodeState,
    Phase,
    SensorChannel,
    SolutionKind,
    StageName,
)
from ..protocol.services import DEFAULT_AIRTIME, frame_airtime, make_frame, payload_bytes
from .sensors import read_sensors

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class LocalSolve:
    """Node computes its own sleep from the harvester curve."""


@dataclass(frozen=True)
class GatewayAssigned:
    seconds: float


SleepMode = Union[LocalSolve, GatewayAssigned]
LOCAL_SOLVE = LocalSolve()

_ACTIVE = {
    NodeKind.BLE: (Phase.SENSING, Phase.ADVERTISING, Phase.EXCHANGING),
    NodeKind.LIOT: (
        Phase.UPLINKING,
        Phase.AWAITING_REQUEST,
        Phase.SENSING,
        Phase.EXCHANGING,
        Phase.AWAITING_SLEEP_SET,
        Phase.ACKNOWLEDGING,
    ),
}


def _transitions(kind: NodeKind) -> frozenset[tuple[Phase, Phase]]:
    chain = (Phase.SLEEPING, *_ACTIVE[kind], Phase.SLEEPING)
    legal = set(zip(chain, chain[1:]))
    legal.update((phase, Phase.SLEEPING) for phase in _ACTIVE[kind])
    legal.add((Phase.SLEEPING, Phase.SLEEPING))
    if kind is NodeKind.BLE:
        legal.add((Phase.EXCHANGING, Phase.EXCHANGING))
    return frozenset(legal)


LEGAL_TRANSITIONS: dict[NodeKind, frozenset[tuple[Phase, Phase]]] = {kind: _transitions(kind) for kind in NodeKind}


class _Radio(NamedTuple):
    airtime: AirtimeModel
    timeout_factor: float
    rng: np.random.Generator | None


def schedule_next_cycle(cfg: NodeConfig, lux: float, mode: SleepMode = LOCAL_SOLVE) -> float:
    """Sleep duration to arm after an active cycle."""
    if isinstance(mode, GatewayAssigned):
        if mode.seconds < 0:
            raise ValueError(f"assigned sleep must be >= 0, got {mode.seconds}")
        return float(mode.seconds)

    p_harv = cfg.harvester.power_mw(lux)
    solution = solve_sleep_time(cfg.profile, p_harv)
    if solution.kind is SolutionKind.INFEASIBLE:
        raise InfeasibleScheduleError(p_harv, cfg.profile.sleep_power_mw)
    t_active, _ = active_totals(cfg.profile)
    cycle = (t_active + solution.t_sleep) * (1.0 + cfg.margin)
    return max(cycle - t_active, 0.0)


def boot(cfg: NodeConfig, now: float = 0.0, *, lux: float) -> tuple[NodeState, list[NodeEvent]]:
    """Initial state: asleep, with the first sleep solved locally."""
    state = NodeState(
        node_id=cfg.node_id,
        kind=cfg.kind,
        supercap=cfg.supercap.to_state(),
        phase_started=now,
        phase_deadline=now,
        load_ma=cfg.profile.sleep_current_ma,
        settled_at=now,
        lux=lux,
    )
    events: list[NodeEvent] = []
    return _arm_sleep(state, cfg, now, LOCAL_SOLVE, events), events


def settle(state: NodeState, cfg: NodeConfig, now: float, lux: float) -> NodeState:
    """Integrate the supercap from the last settle point to ``now`` at the held load.

    Harvest over the interval uses the illuminance recorded at the previous
    settle; ``lux`` becomes the value for the next interval.
    """
    dt = now - state.settled_at
    if dt < 0:
        raise ValueError(f"node {state.node_id}: clock moved backwards ({now} < {state.settled_at})")
    if dt == 0:
        return state if lux == state.lux else replace(state, lux=lux)

    harvest_mw = cfg.harvester.power_mw(state.lux)
    load_mw = state.load_ma * cfg.profile.voltage_v
    cap, harvested_j, consumed_j = supercap_exchange(state.supercap, harvest_mw, load_mw, dt)
    return replace(
        state,
        supercap=cap,
        depleted=state.depleted or cap.depleted,
        settled_at=now,
        lux=lux,
        consumed_j=state.consumed_j + consumed_j,
        harvested_j=state.harvested_j + harvested_j,
    )


def advance(
    state: NodeState,
    cfg: NodeConfig,
    now: float,
    *,
    lux: float,
    frame: Frame | None = None,
    rng: np.random.Generator | None = None,
    airtime: AirtimeModel = DEFAULT_AIRTIME,
    timeout_factor: float = 2.0,
) -> tuple[NodeState, list[NodeEvent]]:
    """Apply an elapsed deadline or a delivered frame at time ``now``."""
    state = settle(state, cfg, now, lux)
    radio = _Radio(airtime, timeout_factor, rng)

    if state.depleted and state.phase is not Phase.SLEEPING:
        log.warning("node %s browned out in %s at %.3f s", state.node_id, state.phase.value, now)
        return _abort(state, cfg, now, FailureReason.BROWNOUT)
    if frame is not None:
        return _on_frame(state, cfg, now, frame, radio)
    if now < state.phase_deadline:
        return state, []
    return _on_timer(state, cfg, now, radio)


def _enter(state: NodeState, phase: Phase, now: float, deadline: float, load_ma: float, **changes) -> NodeState:
    if (state.phase, phase) not in LEGAL_TRANSITIONS[state.kind]:
        raise RuntimeError(f"illegal {state.kind.value} transition {state.phase.value} -> {phase.value}")
    return replace(
        state,
        phase=phase,
        phase_started=now,
        phase_deadline=deadline,
        load_ma=load_ma,
        epoch=state.epoch + 1,
        **changes,
    )


def _rearm(state: NodeState, deadline: float, awaiting: FrameKind) -> NodeState:
    return replace(state, phase_deadline=deadline, awaiting=awaiting, epoch=state.epoch + 1)


def _sleep_for(state: NodeState, cfg: NodeConfig, now: float, duration: float, events: list[NodeEvent], hold: bool) -> NodeState:
    events.append(NodeEvent(NodeEventKind.SLEEP_ARMED, now, duration=duration))
    return _enter(
        state,
        Phase.SLEEPING,
        now,
        now + duration,
        cfg.profile.sleep_current_ma,
        next_sleep_duration=duration,
        hold=hold,
        awaiting=None,
    )


def _arm_sleep(state: NodeState, cfg: NodeConfig, now: float, mode: SleepMode, events: list[NodeEvent]) -> NodeState:
    try:
        duration = schedule_next_cycle(cfg, state.lux, mode)
    except InfeasibleScheduleError as exc:
        log.info("node %s: %s; holding for %.0f s", state.node_id, exc, cfg.recovery_backoff_s)
        return _sleep_for(state, cfg, now, cfg.recovery_backoff_s, events, hold=True)
    return _sleep_for(state, cfg, now, duration, events, hold=False)


def _abort(state: NodeState, cfg: NodeConfig, now: float, reason: FailureReason) -> tuple[NodeState, list[NodeEvent]]:
    events = [NodeEvent(NodeEventKind.CYCLE_ABORTED, now, reason=reason)]
    if reason is FailureReason.BROWNOUT:
        state = _sleep_for(state, cfg, now, cfg.recovery_backoff_s, events, hold=False)
    else:
        state = _arm_sleep(state, cfg, now, LOCAL_SOLVE, events)
    return state, events


def _complete(state: NodeState, cfg: NodeConfig, now: float, mode: SleepMode) -> tuple[NodeState, list[NodeEvent]]:
    events = [NodeEvent(NodeEventKind.CYCLE_COMPLETED, now)]
    return _arm_sleep(state, cfg, now, mode, events), events


def _current(cfg: NodeConfig, stage: StageName) -> float:
    return cfg.profile.stage(stage).current_ma


def _airtime(kind: FrameKind, channels: tuple[SensorChannel, ...], radio: _Radio) -> float:
    return frame_airtime(kind, payload_bytes(kind, channels), KIND_LINKS[kind], radio.airtime)


def _send(state: NodeState, kind: FrameKind, now: float, radio: _Radio, **fields) -> tuple[Frame, NodeEvent]:
    frame = make_frame(
        kind,
        src=state.node_id,
        dst=GATEWAY_ID,
        session_id=state.cycle_index,
        airtime_model=radio.airtime,
        **fields,
    )
    return frame, NodeEvent(NodeEventKind.FRAME_SENT, now, frame=frame)


def _wake(state: NodeState, cfg: NodeConfig, now: float, radio: _Radio) -> tuple[NodeState, list[NodeEvent]]:
    events: list[NodeEvent] = []
    if state.hold:
        try:
            schedule_next_cycle(cfg, state.lux, LOCAL_SOLVE)
        except InfeasibleScheduleError:
            return _sleep_for(state, cfg, now, cfg.recovery_backoff_s, events, hold=True), events

    _, e_active = active_totals(cfg.profile)
    if state.supercap.usable_energy_j < e_active:
        log.debug(
            "node %s: %.4f J usable < %.4f J needed, backing off",
            state.node_id,
            state.supercap.usable_energy_j,
            e_active,
        )
        return _sleep_for(state, cfg, now, cfg.recovery_backoff_s, events, hold=False), events

    state = replace(state, cycle_index=state.cycle_index + 1)
    fresh = dict(
        hold=False,
        depleted=False,
        requested=(),
        assigned_sleep_s=None,
    )
    events.append(NodeEvent(NodeEventKind.CYCLE_STARTED, now))
    if state.kind is NodeKind.BLE:
        sensing = cfg.profile.stage(StageName.SENSOR_READ)
        return _enter(state, Phase.SENSING, now, now + sensing.duration_s, sensing.current_ma, **fresh), events

    frame, sent = _send(state, FrameKind.NODE_ID_LUX, now, radio, lux=int(round(state.lux)))
    events.append(sent)
    state = _enter(state, Phase.UPLINKING, now, now + frame.airtime, _current(cfg, StageName.GW_REQUEST), **fresh)
    return state, events


def _on_timer(state: NodeState, cfg: NodeConfig, now: float, radio: _Radio) -> tuple[NodeState, list[NodeEvent]]:
    phase, kind = state.phase, state.kind

    if phase is Phase.SLEEPING:
        return _wake(state, cfg, now, radio)

    if phase is Phase.SENSING:
        sample = read_sensors(cfg, cfg.environment, now)
        if kind is NodeKind.BLE:
            return _start_advertising(replace(state, last_sample=sample), cfg, now, radio)
        frame, sent = _send(state, FrameKind.SENSOR_DATA, now, radio, channels=state.requested, sample=sample)
        state = _enter(
            state,
            Phase.EXCHANGING,
            now,
            now + frame.airtime,
            _current(cfg, StageName.LIOT_DATA_UPLOAD),
            last_sample=sample,
        )
        return state, [sent]

    if phase is Phase.ADVERTISING:
        wait = radio.timeout_factor * _airtime(FrameKind.CONN_REQ, cfg.sensors, radio)
        state = _enter(
            state,
            Phase.EXCHANGING,
            now,
            now + wait,
            _current(cfg, StageName.BLE_DATA_EXCHANGE),
            awaiting=FrameKind.CONN_REQ,
        )
        return state, []

    if phase is Phase.UPLINKING:
        wait = radio.timeout_factor * _airtime(FrameKind.SENSOR_REQUEST, (), radio)
        state = _enter(
            state,
            Phase.AWAITING_REQUEST,
            now,
            now + wait,
            _current(cfg, StageName.GW_REQUEST),
            awaiting=FrameKind.SENSOR_REQUEST,
        )
        return state, []

    if phase is Phase.EXCHANGING and kind is NodeKind.BLE:
        reason = FailureReason.NO_GATEWAY if state.awaiting is FrameKind.CONN_REQ else FailureReason.TIMEOUT
        return _abort(state, cfg, now, reason)

    if phase is Phase.EXCHANGING:
        wait = radio.timeout_factor * _airtime(FrameKind.SLEEP_SET, (), radio)
        state = _enter(
            state,
            Phase.AWAITING_SLEEP_SET,
            now,
            now + wait,
            _current(cfg, StageName.LIOT_SLEEP_SET),
            awaiting=FrameKind.SLEEP_SET,
        )
        return state, []

    if phase is Phase.AWAITING_REQUEST:
        return _abort(state, cfg, now, FailureReason.NO_GATEWAY)

    if phase is Phase.AWAITING_SLEEP_SET:
        return _abort(state, cfg, now, FailureReason.TIMEOUT)

    if phase is Phase.ACKNOWLEDGING:
        return _complete(state, cfg, now, GatewayAssigned(state.assigned_sleep_s))

    raise RuntimeError(f"no timer handling for {kind.value} in {phase.value}")


def _advertising_window(cfg: NodeConfig, rng: np.random.Generator | None) -> float:
    longest = cfg.profile.stage(StageName.BLE_ADVERTISE).duration_s
    if cfg.advertising is AdvertisingMode.FIXED or rng is None:
        return longest
    # Window lies in (advertising_min_s, longest].
    return longest - float(rng.uniform(0.0, longest - cfg.advertising_min_s))


def _start_advertising(state: NodeState, cfg: NodeConfig, now: float, radio: _Radio) -> tuple[NodeState, list[NodeEvent]]:
    window = _advertising_window(cfg, radio.rng)
    frame, sent = _send(state, FrameKind.ADV_ESS, now, radio, airtime=window)
    state = _enter(
        state,
        Phase.ADVERTISING,
        now,
        now + window,
        _current(cfg, StageName.BLE_ADVERTISE),
        adv_window_s=window,
    )
    return state, [NodeEvent(NodeEventKind.ADVERTISING_STARTED, now, duration=window), sent]


def _on_frame(
    state: NodeState, cfg: NodeConfig, now: float, frame: Frame, radio: _Radio
) -> tuple[NodeState, list[NodeEvent]]:
    if frame.dst != state.node_id or frame.session_id != state.cycle_index or frame.kind is not state.awaiting:
        log.debug("node %s ignored %s in %s", state.node_id, frame.kind.value, state.phase.value)
        return state, []

    if frame.kind is FrameKind.CONN_REQ:
        wait = radio.timeout_factor * _airtime(FrameKind.ESS_ATTR_REQUEST, cfg.sensors, radio)
        return _rearm(state, now + wait, FrameKind.ESS_ATTR_REQUEST), []

    if frame.kind is FrameKind.ESS_ATTR_REQUEST:
        data, sent = _send(
            state,
            FrameKind.ESS_ATTR_DATA,
            now,
            radio,
            channels=cfg.sensors,
            step=3,
            sample=state.last_sample,
        )
        wait = radio.timeout_factor * (data.airtime + _airtime(FrameKind.CONFIG_OR_DISCONNECT, cfg.sensors, radio))
        return _rearm(state, now + wait, FrameKind.CONFIG_OR_DISCONNECT), [sent]

    if frame.kind is FrameKind.CONFIG_OR_DISCONNECT:
        return _complete(state, cfg, now, LOCAL_SOLVE)

    if frame.kind is FrameKind.SENSOR_REQUEST:
        requested = tuple(channel for channel in frame.channels if channel in cfg.sensors) or cfg.sensors
        sensing = cfg.profile.stage(StageName.LIOT_SENSOR_READ)
        state = _enter(
            state,
            Phase.SENSING,
            now,
            now + sensing.duration_s,
            sensing.current_ma,
            requested=requested,
            awaiting=None,
        )
        return state, []

    if frame.kind is FrameKind.SLEEP_SET:
        ack, sent = _send(state, FrameKind.ACK, now, radio)
        state = _enter(
            state,
            Phase.ACKNOWLEDGING,
            now,
            now + ack.airtime,
            _current(cfg, StageName.LIOT_SLEEP_SET),
            assigned_sleep_s=float(frame.sleep_s),
            awaiting=None,
        )
        return state, [sent]

    return state, []
