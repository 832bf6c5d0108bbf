"""Domain types for the harvestsim simulator.

Configuration-shaped types (profiles, curves, node and scenario settings) are
pydantic models validated on construction. Hot-path runtime state (supercap,
node state, frames, sessions, records) uses frozen dataclasses.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Annotated, Literal, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from .config import Config
from .errors import ProtocolError

SUPPORTED_SCHEMA_MAJOR = 1
GATEWAY_ID = "gateway"

PositiveFloat = Annotated[float, Field(gt=0)]
NonNegativeFloat = Annotated[float, Field(ge=0)]
Probability = Annotated[float, Field(ge=0, le=1)]


class _Model(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")


class StageName(str, Enum):
    SENSOR_READ = "SensorRead"
    BLE_ADVERTISE = "BleAdvertise"
    BLE_DATA_EXCHANGE = "BleDataExchange"
    GW_REQUEST = "GwRequest"
    LIOT_SENSOR_READ = "LiotSensorRead"
    LIOT_DATA_UPLOAD = "LiotDataUpload"
    LIOT_SLEEP_SET = "LiotSleepSet"
    SLEEP = "Sleep"


class Stage(_Model):
    name: StageName
    current_ma: PositiveFloat
    duration_s: PositiveFloat


class EnergyProfile(_Model):
    """Per-stage current/duration table of one node build at one supply voltage."""

    name: str = "custom"
    voltage_v: PositiveFloat
    active_stages: tuple[Stage, ...] = Field(min_length=1)
    sleep_current_ma: PositiveFloat

    @model_validator(mode="after")
    def _sleep_below_active(self) -> EnergyProfile:
        lowest = min(stage.current_ma for stage in self.active_stages)
        if self.sleep_current_ma >= lowest:
            raise ValueError(
                f"sleep_current_ma ({self.sleep_current_ma}) must be below every active stage current ({lowest})"
            )
        return self

    @property
    def sleep_power_mw(self) -> float:
        return self.sleep_current_ma * self.voltage_v

    def stage(self, name: StageName) -> Stage:
        for stage in self.active_stages:
            if stage.name is name:
                return stage
        raise KeyError(name)


class HarvesterCurve(_Model):
    """Harvested power versus illuminance, linear between points, clamped at the ends."""

    name: str = "custom"
    points: tuple[tuple[NonNegativeFloat, NonNegativeFloat], ...] = Field(min_length=1)

    @field_validator("points")
    @classmethod
    def _monotone(cls, points: tuple[tuple[float, float], ...]) -> tuple[tuple[float, float], ...]:
        for (lux_a, p_a), (lux_b, p_b) in zip(points, points[1:]):
            if lux_b <= lux_a:
                raise ValueError("illuminance points must be strictly increasing")
            if p_b < p_a:
                raise ValueError("power must be non-decreasing in illuminance")
        return points

    def power_mw(self, lux: float) -> float:
        xs = [lux_value for lux_value, _ in self.points]
        ys = [power for _, power in self.points]
        return float(np.interp(lux, xs, ys))


class SupercapSpec(_Model):
    capacitance_f: PositiveFloat = 0.4
    voltage_v: NonNegativeFloat = 4.2
    v_min_v: NonNegativeFloat = 3.3
    v_max_v: PositiveFloat = 4.5
    efficiency: Annotated[float, Field(gt=0, le=1)] = 1.0

    @model_validator(mode="after")
    def _ordered(self) -> SupercapSpec:
        if not self.v_min_v <= self.voltage_v <= self.v_max_v:
            raise ValueError("supercap voltages must satisfy v_min_v <= voltage_v <= v_max_v")
        return self

    def to_state(self) -> Supercap:
        return Supercap(
            capacitance_f=self.capacitance_f,
            voltage_v=self.voltage_v,
            v_min_v=self.v_min_v,
            v_max_v=self.v_max_v,
            efficiency=self.efficiency,
        )


@dataclass(frozen=True, slots=True)
class Supercap:
    capacitance_f: float
    voltage_v: float
    v_min_v: float
    v_max_v: float
    efficiency: float = 1.0
    depleted: bool = False

    def __post_init__(self) -> None:
        if self.capacitance_f <= 0:
            raise ValueError("capacitance must be positive")
        if not 0 <= self.v_min_v <= self.voltage_v <= self.v_max_v:
            raise ValueError(
                f"supercap voltage {self.voltage_v} outside [{self.v_min_v}, {self.v_max_v}]"
            )

    @property
    def stored_energy_j(self) -> float:
        return 0.5 * self.capacitance_f * self.voltage_v**2

    @property
    def floor_energy_j(self) -> float:
        """Energy left at the brown-out cutoff; never spent."""
        return 0.5 * self.capacitance_f * self.v_min_v**2

    @property
    def usable_energy_j(self) -> float:
        return self.stored_energy_j - self.floor_energy_j


class SolutionKind(str, Enum):
    FINITE = "finite"
    CONTINUOUS = "continuous"
    INFEASIBLE = "infeasible"


@dataclass(frozen=True, slots=True)
class SleepSolution:
    kind: SolutionKind
    t_sleep: float | None
    p_harv_mw: float


@dataclass(frozen=True, slots=True)
class CycleBudget:
    t_active: float
    e_active: float
    t_sleep: float
    e_sleep: float
    p_harv: float

    @property
    def e_harvested(self) -> float:
        return self.p_harv * (self.t_active + self.t_sleep) / 1000.0

    @property
    def surplus(self) -> float:
        return self.e_harvested - self.e_active - self.e_sleep


class NodeKind(str, Enum):
    BLE = "ble"
    LIOT = "liot"


class SensorChannel(str, Enum):
    TEMPERATURE = "temperature"
    HUMIDITY = "humidity"
    PRESSURE = "pressure"
    GAS = "gas"


ALL_CHANNELS: tuple[SensorChannel, ...] = tuple(SensorChannel)


class AdvertisingMode(str, Enum):
    FIXED = "fixed"
    UNIFORM = "uniform"


NODE_STAGES: dict[NodeKind, tuple[StageName, ...]] = {
    NodeKind.BLE: (StageName.SENSOR_READ, StageName.BLE_ADVERTISE, StageName.BLE_DATA_EXCHANGE),
    NodeKind.LIOT: (
        StageName.GW_REQUEST,
        StageName.LIOT_SENSOR_READ,
        StageName.LIOT_DATA_UPLOAD,
        StageName.LIOT_SLEEP_SET,
    ),
}

DEFAULT_MARGIN: dict[NodeKind, float] = {NodeKind.BLE: 0.05, NodeKind.LIOT: 0.0}


class ChannelSpec(_Model):
    baseline: float
    amplitude: float = 0.0
    period_s: PositiveFloat = 86400.0
    noise_sd: NonNegativeFloat = 0.0
    low: float = -math.inf
    high: float = math.inf


def _default_channels() -> dict[SensorChannel, ChannelSpec]:
    return {
        SensorChannel.TEMPERATURE: ChannelSpec(baseline=21.0, amplitude=1.5, low=-40.0, high=85.0),
        SensorChannel.HUMIDITY: ChannelSpec(baseline=40.0, amplitude=5.0, low=0.0, high=100.0),
        SensorChannel.PRESSURE: ChannelSpec(baseline=1013.0, amplitude=2.0, low=300.0, high=1100.0),
        SensorChannel.GAS: ChannelSpec(baseline=50000.0, amplitude=5000.0, low=0.0, high=500000.0),
    }


class EnvironmentModel(_Model):
    seed: Annotated[int, Field(ge=0)] = 42
    channels: dict[SensorChannel, ChannelSpec] = Field(default_factory=_default_channels)


class NodeConfig(_Model):
    node_id: str
    kind: NodeKind
    profile: EnergyProfile
    harvester: HarvesterCurve
    supercap: SupercapSpec = SupercapSpec()
    margin: NonNegativeFloat = 0.05
    sensors: tuple[SensorChannel, ...] = Field(default=ALL_CHANNELS, min_length=1)
    advertising: AdvertisingMode = AdvertisingMode.UNIFORM
    advertising_min_s: PositiveFloat = 0.5
    recovery_backoff_s: PositiveFloat = 60.0
    environment: EnvironmentModel = EnvironmentModel()

    @model_validator(mode="before")
    @classmethod
    def _resolve_presets(cls, data: object) -> object:
        if not isinstance(data, dict):
            return data
        from .energy.services import load_harvester, profile_preset

        data = dict(data)
        profile_ref = data.get("profile")
        if isinstance(profile_ref, str):
            preset = profile_preset(profile_ref)
            data["profile"] = preset.profile
            data.setdefault("kind", preset.kind.value)
            data.setdefault("harvester", preset.harvester)
            data.setdefault("margin", preset.margin)
        if isinstance(data.get("harvester"), str):
            data["harvester"] = load_harvester(data["harvester"])
        if "margin" not in data and data.get("kind") is not None:
            data["margin"] = DEFAULT_MARGIN[NodeKind(data["kind"])]
        return data

    @model_validator(mode="after")
    def _stages_match_kind(self) -> NodeConfig:
        names = tuple(stage.name for stage in self.profile.active_stages)
        if names != NODE_STAGES[self.kind]:
            expected = ", ".join(name.value for name in NODE_STAGES[self.kind])
            raise ValueError(f"{self.kind.value} node needs stages [{expected}], got [{', '.join(n.value for n in names)}]")
        if self.advertising_min_s >= self.profile.active_stages[1].duration_s and self.kind is NodeKind.BLE:
            raise ValueError("advertising_min_s must be shorter than the advertising stage")
        return self


class Phase(str, Enum):
    SLEEPING = "sleeping"
    SENSING = "sensing"
    ADVERTISING = "advertising"
    EXCHANGING = "exchanging"
    UPLINKING = "uplinking"
    AWAITING_REQUEST = "awaiting_request"
    AWAITING_SLEEP_SET = "awaiting_sleep_set"
    ACKNOWLEDGING = "acknowledging"


@dataclass(frozen=True, slots=True)
class SensorSample:
    timestamp: float
    temperature: float | None = None
    humidity: float | None = None
    pressure: float | None = None
    gas: float | None = None


class FailureReason(str, Enum):
    TIMEOUT = "timeout"
    NO_GATEWAY = "no_gateway"
    PROTOCOL_VIOLATION = "protocol_violation"
    BROWNOUT = "brownout"


class NodeEventKind(str, Enum):
    CYCLE_STARTED = "cycle_started"
    ADVERTISING_STARTED = "advertising_started"
    FRAME_SENT = "frame_sent"
    CYCLE_COMPLETED = "cycle_completed"
    CYCLE_ABORTED = "cycle_aborted"
    SLEEP_ARMED = "sleep_armed"


@dataclass(frozen=True, slots=True)
class NodeEvent:
    kind: NodeEventKind
    time: float
    frame: Frame | None = None
    reason: FailureReason | None = None
    duration: float | None = None


@dataclass(frozen=True, slots=True)
class NodeState:
    node_id: str
    kind: NodeKind
    supercap: Supercap
    phase: Phase = Phase.SLEEPING
    phase_started: float = 0.0
    phase_deadline: float = 0.0
    load_ma: float = 0.0
    next_sleep_duration: float = 0.0
    depleted: bool = False
    hold: bool = False
    epoch: int = 0
    cycle_index: int = 0
    settled_at: float = 0.0
    lux: float = 0.0
    awaiting: FrameKind | None = None
    requested: tuple[SensorChannel, ...] = ()
    assigned_sleep_s: float | None = None
    adv_window_s: float = 0.0
    last_sample: SensorSample | None = None
    consumed_j: float = 0.0
    harvested_j: float = 0.0


class Link(str, Enum):
    BLE_ADV = "ble_adv"
    BLE_CONN = "ble_conn"
    IR_UPLINK = "ir_uplink"
    VLC_DOWNLINK = "vlc_downlink"


class FrameKind(str, Enum):
    ADV_ESS = "AdvEss"
    CONN_REQ = "ConnReq"
    ESS_ATTR_REQUEST = "EssAttrRequest"
    ESS_ATTR_DATA = "EssAttrData"
    CONFIG_OR_DISCONNECT = "ConfigOrDisconnect"
    NODE_ID_LUX = "NodeIdLux"
    SENSOR_REQUEST = "SensorRequest"
    SENSOR_DATA = "SensorData"
    SLEEP_SET = "SleepSet"
    ACK = "Ack"


KIND_LINKS: dict[FrameKind, Link] = {
    FrameKind.ADV_ESS: Link.BLE_ADV,
    FrameKind.CONN_REQ: Link.BLE_CONN,
    FrameKind.ESS_ATTR_REQUEST: Link.BLE_CONN,
    FrameKind.ESS_ATTR_DATA: Link.BLE_CONN,
    FrameKind.CONFIG_OR_DISCONNECT: Link.BLE_CONN,
    FrameKind.NODE_ID_LUX: Link.IR_UPLINK,
    FrameKind.SENSOR_REQUEST: Link.VLC_DOWNLINK,
    FrameKind.SENSOR_DATA: Link.IR_UPLINK,
    FrameKind.SLEEP_SET: Link.VLC_DOWNLINK,
    FrameKind.ACK: Link.IR_UPLINK,
}

ADV_CHANNELS = (37, 38, 39)


@dataclass(frozen=True, slots=True)
class Frame:
    src: str
    dst: str
    link: Link
    kind: FrameKind
    payload_bytes: int
    airtime: float
    session_id: int = 0
    channel: int | None = None
    lux: int | None = None
    channels: tuple[SensorChannel, ...] = ()
    sleep_s: int | None = None
    sample: SensorSample | None = None

    def __post_init__(self) -> None:
        if self.airtime <= 0:
            raise ProtocolError(f"{self.kind.value} frame needs positive airtime")
        if self.payload_bytes < 0:
            raise ProtocolError("payload_bytes must be >= 0")
        if KIND_LINKS[self.kind] is not self.link:
            raise ProtocolError(f"{self.kind.value} cannot travel on {self.link.value}")
        if self.link is Link.BLE_ADV and self.channel not in ADV_CHANNELS:
            raise ProtocolError(f"advertising frames use channels 37-39, got {self.channel}")
        if self.link is Link.BLE_CONN and (self.channel is None or not 0 <= self.channel <= 36):
            raise ProtocolError(f"connection frames use channels 0-36, got {self.channel}")
        if self.link in (Link.IR_UPLINK, Link.VLC_DOWNLINK) and self.channel is not None:
            raise ProtocolError("optical frames carry no RF channel")
        if self.kind is FrameKind.SLEEP_SET and self.sleep_s is None:
            raise ProtocolError("SleepSet frame needs sleep_s")


class Outcome(str, Enum):
    PENDING = "pending"
    DELIVERED = "delivered"
    FAILED = "failed"
    TRUNCATED = "truncated"


@dataclass(frozen=True, slots=True)
class SleepPolicy:
    """What the gateway needs to assign a LIoT node's next sleep."""

    profile: EnergyProfile
    harvester: HarvesterCurve
    margin: float = 0.0
    backoff_s: float = 60.0


@dataclass(frozen=True, slots=True)
class ExchangeSession:
    node_id: str
    protocol: NodeKind
    session_id: int
    started_at: float
    deadline: float
    airtime: AirtimeModel
    step: int = 0
    outcome: Outcome = Outcome.PENDING
    reason: FailureReason | None = None
    channels: tuple[SensorChannel, ...] = ALL_CHANNELS
    reported_lux: int | None = None
    sleep_policy: SleepPolicy | None = None


class LinkTiming(_Model):
    overhead_s: NonNegativeFloat
    per_byte_s: NonNegativeFloat


class AirtimeModel(_Model):
    """Frame airtime = overhead(link) + payload_bytes * per_byte(link)."""

    ble_adv: LinkTiming = LinkTiming(overhead_s=0.00008, per_byte_s=0.000008)
    ble_conn: LinkTiming = LinkTiming(overhead_s=0.25, per_byte_s=0.006)
    ir_uplink: LinkTiming = LinkTiming(overhead_s=0.028, per_byte_s=0.024)
    vlc_downlink: LinkTiming = LinkTiming(overhead_s=0.006, per_byte_s=0.010)

    def for_link(self, link: Link) -> LinkTiming:
        return getattr(self, link.value)


class ChannelModel(_Model):
    loss: dict[Link, Probability] = Field(default_factory=dict)
    seed: Annotated[int, Field(ge=0)] | None = None

    def loss_for(self, link: Link) -> float:
        return self.loss.get(link, 0.0)


class ConstantIllumination(_Model):
    kind: Literal["constant"] = "constant"
    lux: NonNegativeFloat
    jitter: Annotated[float, Field(ge=0, lt=1)] = 0.0
    jitter_period_s: PositiveFloat = 60.0


class StepIllumination(_Model):
    kind: Literal["step"] = "step"
    steps: tuple[tuple[NonNegativeFloat, NonNegativeFloat], ...] = Field(min_length=1)

    @field_validator("steps")
    @classmethod
    def _ordered(cls, steps: tuple[tuple[float, float], ...]) -> tuple[tuple[float, float], ...]:
        if steps[0][0] != 0:
            raise ValueError("first step must start at 0 s")
        for (t_a, _), (t_b, _) in zip(steps, steps[1:]):
            if t_b <= t_a:
                raise ValueError("step start times must be strictly increasing")
        return steps


class SinusoidIllumination(_Model):
    kind: Literal["sinusoid"] = "sinusoid"
    mean: NonNegativeFloat
    amplitude: NonNegativeFloat
    period_s: PositiveFloat


IlluminationProfile = Annotated[
    Union[ConstantIllumination, StepIllumination, SinusoidIllumination],
    Field(discriminator="kind"),
]


class GatewayConfig(_Model):
    request_channels: tuple[SensorChannel, ...] = Field(default=ALL_CHANNELS, min_length=1)
    timeout_factor: Annotated[float, Field(gt=1)] = 2.0


class OutputConfig(_Model):
    dir: str | None = None
    format: Literal["csv", "jsonl"] = "csv"


class Scenario(_Model):
    version: str = "1.0"
    name: str = "scenario"
    duration_s: PositiveFloat
    seed: Annotated[int, Field(ge=0)] = Config.DEFAULT_SEED
    sample_interval_s: PositiveFloat = Config.SAMPLE_INTERVAL_S
    nodes: tuple[NodeConfig, ...] = Field(min_length=1)
    gateway: GatewayConfig = GatewayConfig()
    channel: ChannelModel = ChannelModel()
    illumination: IlluminationProfile
    airtime: AirtimeModel = AirtimeModel()
    output: OutputConfig = OutputConfig()

    @field_validator("version", mode="before")
    @classmethod
    def _supported_version(cls, value: object) -> str:
        text = str(value)
        try:
            major = int(text.split(".")[0])
        except ValueError as exc:
            raise ValueError(f"unreadable schema version {text!r}") from exc
        if major > SUPPORTED_SCHEMA_MAJOR:
            raise ValueError(f"schema version {text} is newer than supported major {SUPPORTED_SCHEMA_MAJOR}")
        return text

    @model_validator(mode="after")
    def _unique_nodes(self) -> Scenario:
        ids = [node.node_id for node in self.nodes]
        if len(set(ids)) != len(ids):
            raise ValueError("node_id values must be unique")
        if GATEWAY_ID in ids:
            raise ValueError(f"{GATEWAY_ID!r} is reserved for the gateway")
        return self


@dataclass(frozen=True, slots=True)
class CycleRecord:
    node_id: str
    cycle_index: int
    start: float
    end: float
    outcome: Outcome
    reason: FailureReason | None
    scap_v_start: float
    scap_v_end: float
    energy_consumed: float
    energy_harvested: float
    wake_time: float | None = None
    scap_v_wake: float | None = None

    @property
    def dip_v(self) -> float | None:
        if self.scap_v_wake is None:
            return None
        return self.scap_v_wake - self.scap_v_end

    @property
    def counted(self) -> bool:
        return self.outcome in (Outcome.DELIVERED, Outcome.FAILED)


@dataclass(frozen=True, slots=True)
class FrameRecord:
    sent_at: float
    arrives_at: float
    src: str
    dst: str
    link: Link
    channel: int | None
    kind: FrameKind
    payload_bytes: int
    airtime: float
    delivered: bool


@dataclass(frozen=True, slots=True)
class NodeSummary:
    node_id: str
    packets_sent: int = 0
    packets_received: int = 0
    pdr: float = 0.0
    scap_avg_v: float = 0.0
    scap_min_v: float = 0.0
    scap_max_v: float = 0.0
    cycles_truncated: int = 0
    energy_consumed_j: float = 0.0
    energy_harvested_j: float = 0.0


@dataclass(frozen=True, slots=True)
class RunSummary:
    nodes: tuple[NodeSummary, ...]
    duration_s: float = 0.0
    seed: int = 0
    config_hash: str = ""

    def node(self, node_id: str) -> NodeSummary:
        for summary in self.nodes:
            if summary.node_id == node_id:
                return summary
        raise KeyError(node_id)
