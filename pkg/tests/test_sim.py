from __future__ import annotations

import heapq
import math
import statistics

import numpy as np
import pytest

from harvestsim.models import (
    GATEWAY_ID,
    AirtimeModel,
    ChannelModel,
    ConstantIllumination,
    FailureReason,
    FrameKind,
    GatewayConfig,
    Link,
    NodeKind,
    Outcome,
    SinusoidIllumination,
    StepIllumination,
)
from harvestsim.protocol import make_frame
from harvestsim.scenario import load_scenario_mapping, validate_scenario
from harvestsim.sim import Event, EventKind, Gateway, Kernel, config_hash, deliver, lux_at, run, run_sweep

LOSSLESS = {"channel__loss": {}, "sample_interval_s": 60.0}


def delivered_cycles(result, node_id):
    return [r for r in result.records if r.node_id == node_id and r.outcome is Outcome.DELIVERED]


def test_constant_illumination():
    assert lux_at(ConstantIllumination(lux=700), 123.0) == 700


def test_step_illumination_switches_at_boundaries():
    profile = StepIllumination(steps=((0, 700), (3600, 500)))
    assert lux_at(profile, 3599.9) == 700
    assert lux_at(profile, 3600) == 500


def test_sinusoid_never_negative():
    profile = SinusoidIllumination(mean=100, amplitude=300, period_s=100)
    values = [lux_at(profile, t) for t in np.linspace(0, 100, 41)]
    assert min(values) == 0.0
    assert max(values) == pytest.approx(400)


def test_jitter_is_seeded_and_bounded():
    profile = ConstantIllumination(lux=500, jitter=0.1, jitter_period_s=10)
    first = [lux_at(profile, t, seed=3) for t in range(0, 200, 5)]
    second = [lux_at(profile, t, seed=3) for t in range(0, 200, 5)]
    assert first == second
    assert all(450 <= value <= 550 for value in first)
    assert lux_at(profile, 1, seed=3) == lux_at(profile, 9, seed=3)


def test_lux_outside_run_is_rejected():
    with pytest.raises(ValueError):
        lux_at(ConstantIllumination(lux=700), 10.5, horizon=10)


def test_lossless_and_dead_links():
    frame = make_frame(FrameKind.ACK, src="liot-1", dst="gateway", session_id=1)
    rng = np.random.default_rng(0)
    assert all(deliver(frame, ChannelModel(), rng) for _ in range(100))
    dead = ChannelModel(loss={Link.IR_UPLINK: 1.0})
    assert not any(deliver(frame, dead, rng) for _ in range(100))


def test_loss_rate_matches_probability():
    frame = make_frame(FrameKind.CONN_REQ, src="gateway", dst="ble-1", session_id=1, step=1)
    channel = ChannelModel(loss={Link.BLE_CONN: 0.2})
    rng = np.random.default_rng(1)
    lost = sum(not deliver(frame, channel, rng) for _ in range(20000))
    assert lost / 20000 == pytest.approx(0.2, abs=0.01)


def test_events_order_by_time_then_insertion():
    queue = []
    for seq, time in enumerate((5.0, 1.0, 5.0, 0.0)):
        heapq.heappush(queue, Event(time, seq, EventKind.TIMER_FIRED))
    order = [heapq.heappop(queue) for _ in range(4)]
    assert [(event.time, event.seq) for event in order] == [(0.0, 3), (1.0, 1), (5.0, 0), (5.0, 2)]


@pytest.mark.parametrize("preset, expected", [("liot-700lx", 46), ("liot-500lx", 21)])
def test_lossless_liot_cycle_counts(preset_scenario, preset, expected):
    result = run(preset_scenario(preset, sample_interval_s=60.0))
    node = result.summary.node("liot-1")

    assert node.packets_sent == expected
    assert node.packets_received == expected
    assert node.pdr == 1.0


@pytest.mark.parametrize("preset, expected, tolerance", [("ble-700lx", 1490, 0.01), ("ble-500lx", 1051, 0.05)])
def test_lossless_ble_cycle_counts(preset_scenario, preset, expected, tolerance):
    result = run(preset_scenario(preset, **LOSSLESS))
    node = result.summary.node("ble-1")

    assert node.packets_sent == pytest.approx(expected, rel=tolerance)
    assert node.packets_received == node.packets_sent


def test_ble_cycle_period(preset_scenario):
    result = run(preset_scenario("ble-700lx", duration_s=600, **LOSSLESS))
    ends = [record.end for record in delivered_cycles(result, "ble-1")]
    periods = np.diff(ends)
    assert periods == pytest.approx(np.full(len(periods), 19.3221), abs=1e-6)


def test_liot_cycle_period_follows_assigned_sleep(preset_scenario):
    result = run(preset_scenario("liot-700lx", duration_s=3000, sample_interval_s=60.0))
    ends = [record.end for record in delivered_cycles(result, "liot-1")]
    assert ends[0] == pytest.approx(624.611, abs=1e-6)
    assert np.diff(ends) == pytest.approx([624.611] * (len(ends) - 1), abs=1e-6)


def test_liot_frames_follow_script(preset_scenario):
    result = run(preset_scenario("liot-700lx", duration_s=700))
    kinds = [frame.kind for frame in result.frames]
    assert kinds == [
        FrameKind.NODE_ID_LUX,
        FrameKind.SENSOR_REQUEST,
        FrameKind.SENSOR_DATA,
        FrameKind.SLEEP_SET,
        FrameKind.ACK,
    ]
    assert all(frame.delivered for frame in result.frames)


def test_voltage_dip_per_cycle(preset_scenario):
    ble = run(preset_scenario("ble-700lx", duration_s=1200, **LOSSLESS))
    liot = run(preset_scenario("liot-700lx", duration_s=3000, sample_interval_s=60.0))

    ble_dip = statistics.fmean(record.dip_v for record in delivered_cycles(ble, "ble-1"))
    liot_dip = statistics.fmean(record.dip_v for record in delivered_cycles(liot, "liot-1"))
    assert 0.003 <= ble_dip <= 0.011
    assert 0.10 <= liot_dip <= 0.22


def test_voltage_stays_in_window(preset_scenario):
    result = run(preset_scenario("liot-500lx", duration_s=7200, sample_interval_s=10.0))
    node = result.summary.node("liot-1")
    assert 3.3 <= node.scap_min_v <= node.scap_avg_v <= node.scap_max_v <= 4.5


def test_trace_has_one_sample_per_interval(preset_scenario):
    result = run(preset_scenario("liot-700lx", duration_s=600))
    trace = result.traces["liot-1"]
    assert len(trace) == 601
    assert trace[0][0] == 0.0
    assert trace[-1][0] == 600.0


def test_trailing_cycle_is_truncated(preset_scenario):
    result = run(preset_scenario("liot-700lx", duration_s=1000, sample_interval_s=50.0))
    node = result.summary.node("liot-1")

    assert node.packets_sent == 1
    assert node.cycles_truncated == 1
    last = result.records[-1]
    assert last.outcome is Outcome.TRUNCATED
    assert last.end == 1000


def test_dead_advertising_link_delivers_nothing(preset_scenario):
    result = run(preset_scenario("ble-700lx", duration_s=600, channel__loss={"ble_adv": 1.0}, sample_interval_s=60.0))
    node = result.summary.node("ble-1")

    assert node.packets_sent > 0
    assert node.packets_received == 0
    assert node.pdr == 0.0
    assert {record.reason for record in result.records if record.counted} == {FailureReason.NO_GATEWAY}


def test_dead_uplink_fails_liot_cycles(preset_scenario):
    result = run(preset_scenario("liot-700lx", duration_s=700, channel={"loss": {"ir_uplink": 1.0}}))
    counted = [record for record in result.records if record.counted]

    assert [record.outcome for record in counted] == [Outcome.FAILED]
    assert counted[0].reason is FailureReason.NO_GATEWAY
    assert counted[0].dip_v is not None


@pytest.mark.parametrize("preset, duration", [("ble-700lx", 3600), ("liot-500lx", 3000)])
def test_energy_ledgers_match_the_supercap(preset_scenario, preset, duration):
    scenario = preset_scenario(preset, duration_s=duration, sample_interval_s=10.0)
    capacitance = scenario.nodes[0].supercap.capacitance_f
    kernel = Kernel(scenario)
    result = kernel.run()

    for record in result.records:
        stored = 0.5 * capacitance * (record.scap_v_end**2 - record.scap_v_start**2)
        assert stored == pytest.approx(record.energy_harvested - record.energy_consumed, rel=1e-6, abs=1e-9)

    (state,) = kernel.node_states.values()
    assert math.fsum(r.energy_consumed for r in result.records) == pytest.approx(state.consumed_j, rel=1e-9)
    assert result.summary.nodes[0].energy_harvested_j == pytest.approx(state.harvested_j, rel=1e-9)


def test_same_seed_same_run(preset_scenario):
    scenario = preset_scenario("ble-700lx", duration_s=1800, channel__loss={"ble_adv": 0.05, "ble_conn": 0.05})
    first, second = run(scenario), run(scenario)

    assert first.summary == second.summary
    assert first.records == second.records
    assert first.frames == second.frames


def test_different_seeds_differ(preset_scenario):
    loss = {"ble_adv": 0.05, "ble_conn": 0.05}
    first = run(preset_scenario("ble-700lx", duration_s=1800, seed=1, channel__loss=loss))
    second = run(preset_scenario("ble-700lx", duration_s=1800, seed=2, channel__loss=loss))
    assert [f.delivered for f in first.frames] != [f.delivered for f in second.frames]


def test_delivery_does_not_rise_along_a_loss_sweep():
    mapping, _, source = load_scenario_mapping("ble-700lx")
    mapping["sample_interval_s"] = 60.0
    mapping["channel"] = {"loss": {}}

    results = run_sweep(mapping, "channel.loss.ble_adv", [0.1, 0.0, 0.05], source=source)
    pdrs = [summary.node("ble-1").pdr for _, summary in results]

    assert [value for value, _ in results] == [0.0, 0.05, 0.1]
    assert pdrs[0] == 1.0
    assert pdrs[0] >= pdrs[1] >= pdrs[2]
    assert pdrs[2] < 1.0


def test_sweep_over_a_field_the_preset_omits():
    mapping, _, source = load_scenario_mapping("liot-700lx")
    mapping["duration_s"] = 700
    mapping["sample_interval_s"] = 100.0

    results = run_sweep(mapping, "channel.loss.ir_uplink", [0.0, 1.0], source=source)
    nodes = [summary.node("liot-1") for _, summary in results]

    assert [(node.packets_sent, node.packets_received) for node in nodes] == [(1, 1), (1, 0)]


def test_liot_nodes_take_turns_at_the_gateway(preset_scenario):
    scenario = preset_scenario("liot-700lx", duration_s=700, sample_interval_s=60.0)
    mapping = scenario.model_dump()
    second = dict(mapping["nodes"][0], node_id="liot-2")
    mapping["nodes"] = [mapping["nodes"][0], second]

    result = run(validate_scenario(mapping))
    first_cycle = {record.node_id: record for record in result.records if record.counted}

    assert first_cycle["liot-1"].outcome is Outcome.DELIVERED
    assert first_cycle["liot-2"].outcome is Outcome.FAILED
    assert first_cycle["liot-2"].reason is FailureReason.NO_GATEWAY


@pytest.mark.parametrize("arrival, answered", [(0.1, True), (11.2, False)])
def test_gateway_ignores_frames_after_the_session_deadline(arrival, answered):
    gateway = Gateway(GatewayConfig(), AirtimeModel(), {})
    gateway.open("ble-1", NodeKind.BLE, 1, 0.0, 11.12)
    adv = make_frame(FrameKind.ADV_ESS, src="ble-1", dst=GATEWAY_ID, session_id=1)

    reply = gateway.receive(adv, arrival)

    assert (reply is not None) is answered
    session = gateway.close("ble-1")
    if not answered:
        assert session.outcome is Outcome.FAILED
        assert session.reason is FailureReason.TIMEOUT


def test_config_hash_tracks_scenario(preset_scenario):
    base = preset_scenario("liot-700lx")
    assert config_hash(base) == config_hash(preset_scenario("liot-700lx"))
    assert config_hash(base) != config_hash(preset_scenario("liot-700lx", seed=2))
    assert len(config_hash(base)) == 64


def test_sweep_sorts_by_value():
    mapping, _, source = load_scenario_mapping("liot-700lx")
    mapping["duration_s"] = 1300
    mapping["sample_interval_s"] = 100.0

    results = run_sweep(mapping, "illumination.lux", [700, 500], source=source)

    assert [value for value, _ in results] == [500, 700]
    assert results[0][1].node("liot-1").packets_sent == 0
    assert results[1][1].node("liot-1").packets_sent == 2
