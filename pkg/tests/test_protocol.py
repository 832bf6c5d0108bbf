from __future__ import annotations

import pytest

from harvestsim.energy import profile_preset
from harvestsim.errors import ProtocolError
from harvestsim.models import (
    ALL_CHANNELS,
    GATEWAY_ID,
    KIND_LINKS,
    FailureReason,
    Frame,
    FrameKind,
    Link,
    NodeKind,
    Outcome,
    SensorChannel,
    SleepPolicy,
)
from harvestsim.protocol import (
    BLE_SCRIPT,
    LIOT_SCRIPT,
    abort_session,
    assign_sleep,
    ble_exchange_step,
    frame_airtime,
    liot_exchange_step,
    make_frame,
    open_session,
    payload_bytes,
)
from harvestsim.protocol.services import MAX_SLEEP_SET_S, is_overdue


@pytest.fixture
def liot_policy() -> SleepPolicy:
    preset = profile_preset("liot-table2")
    return SleepPolicy(preset.profile, preset.harvester, margin=0.0, backoff_s=60.0)


def airtime(kind, channels=ALL_CHANNELS):
    return frame_airtime(kind, payload_bytes(kind, channels), KIND_LINKS[kind])


def node_frame(kind, session, **fields):
    return make_frame(kind, src=session.node_id, dst=GATEWAY_ID, session_id=session.session_id, **fields)


def test_sensor_upload_fills_data_upload_stage():
    assert airtime(FrameKind.SENSOR_DATA) == pytest.approx(3.58)


def test_ble_connection_frames_fill_data_exchange_stage():
    total = sum(
        airtime(kind)
        for kind in (
            FrameKind.CONN_REQ,
            FrameKind.ESS_ATTR_REQUEST,
            FrameKind.ESS_ATTR_DATA,
            FrameKind.CONFIG_OR_DISCONNECT,
        )
    )
    assert total == pytest.approx(1.3)


def test_liot_request_and_sleep_set_exchanges():
    assert airtime(FrameKind.NODE_ID_LUX) + airtime(FrameKind.SENSOR_REQUEST) == pytest.approx(0.428)
    assert airtime(FrameKind.SLEEP_SET) + airtime(FrameKind.ACK) == pytest.approx(0.078)


def test_payload_sizes_scale_with_channels():
    assert payload_bytes(FrameKind.SENSOR_DATA, (SensorChannel.GAS,)) == 37
    assert payload_bytes(FrameKind.ESS_ATTR_DATA, (SensorChannel.GAS, SensorChannel.HUMIDITY)) == 12
    assert payload_bytes(FrameKind.ADV_ESS) == 31


def test_airtime_rejects_wrong_link_and_negative_size():
    with pytest.raises(ProtocolError):
        frame_airtime(FrameKind.SENSOR_DATA, 10, Link.BLE_CONN)
    with pytest.raises(ProtocolError):
        frame_airtime(FrameKind.ACK, -1, Link.IR_UPLINK)


@pytest.mark.parametrize(
    "fields",
    [
        {"link": Link.IR_UPLINK, "kind": FrameKind.ACK, "payload_bytes": 1, "airtime": 0.0},
        {"link": Link.BLE_CONN, "kind": FrameKind.ACK, "payload_bytes": 1, "airtime": 0.05, "channel": 3},
        {"link": Link.BLE_ADV, "kind": FrameKind.ADV_ESS, "payload_bytes": 31, "airtime": 4.0, "channel": 12},
        {"link": Link.BLE_CONN, "kind": FrameKind.CONN_REQ, "payload_bytes": 22, "airtime": 0.382},
        {"link": Link.IR_UPLINK, "kind": FrameKind.ACK, "payload_bytes": 1, "airtime": 0.05, "channel": 38},
        {"link": Link.VLC_DOWNLINK, "kind": FrameKind.SLEEP_SET, "payload_bytes": 2, "airtime": 0.026},
    ],
)
def test_frame_rejects_inconsistent_fields(fields):
    with pytest.raises(ProtocolError):
        Frame(src="liot-1", dst=GATEWAY_ID, **fields)


def test_make_frame_picks_link_channels():
    adv = make_frame(FrameKind.ADV_ESS, src="ble-1", dst=GATEWAY_ID, session_id=4, airtime=4.0)
    conn = make_frame(FrameKind.CONN_REQ, src=GATEWAY_ID, dst="ble-1", session_id=4, step=1)
    upload = make_frame(FrameKind.SENSOR_DATA, src="liot-1", dst=GATEWAY_ID, session_id=4)

    assert adv.channel == 38
    assert adv.airtime == 4.0
    assert 0 <= conn.channel <= 36
    assert upload.channel is None
    assert upload.link is Link.IR_UPLINK


def test_ble_session_happy_path():
    session = open_session("ble-1", NodeKind.BLE, 1, 0.0, 11.12)

    session, reply = ble_exchange_step(session, node_frame(FrameKind.ADV_ESS, session, airtime=4.0))
    assert reply.kind is FrameKind.CONN_REQ
    session, reply = ble_exchange_step(session, reply)
    assert reply.kind is FrameKind.ESS_ATTR_REQUEST
    session, reply = ble_exchange_step(session, reply)
    assert reply is None
    session, reply = ble_exchange_step(session, node_frame(FrameKind.ESS_ATTR_DATA, session, step=3))

    assert reply.kind is FrameKind.CONFIG_OR_DISCONNECT
    assert reply.dst == "ble-1"
    assert session.outcome is Outcome.DELIVERED
    assert session.step == len(BLE_SCRIPT)


@pytest.mark.parametrize("lux, expected", [(700, 620), (500, 1350)])
def test_liot_session_happy_path(liot_policy, lux, expected):
    session = open_session("liot-1", NodeKind.LIOT, 1, 0.0, 9.222, sleep_policy=liot_policy)

    session, reply = liot_exchange_step(session, node_frame(FrameKind.NODE_ID_LUX, session, lux=lux))
    assert reply.kind is FrameKind.SENSOR_REQUEST
    assert session.reported_lux == lux
    session, reply = liot_exchange_step(session, reply)
    assert reply is None
    session, reply = liot_exchange_step(session, node_frame(FrameKind.SENSOR_DATA, session))
    assert reply.kind is FrameKind.SLEEP_SET
    assert reply.sleep_s == expected
    session, _ = liot_exchange_step(session, reply)
    assert session.outcome is Outcome.PENDING
    session, reply = liot_exchange_step(session, node_frame(FrameKind.ACK, session))

    assert reply is None
    assert session.outcome is Outcome.DELIVERED
    assert session.step == len(LIOT_SCRIPT)


def test_missing_first_reply_means_no_gateway():
    session = open_session("ble-1", NodeKind.BLE, 1, 0.0, 11.12)
    session, _ = ble_exchange_step(session, None)
    assert session.outcome is Outcome.FAILED
    assert session.reason is FailureReason.NO_GATEWAY


def test_missing_later_frame_means_timeout(liot_policy):
    session = open_session("liot-1", NodeKind.LIOT, 1, 0.0, 9.222, sleep_policy=liot_policy)
    session, reply = liot_exchange_step(session, node_frame(FrameKind.NODE_ID_LUX, session, lux=700))
    session, _ = liot_exchange_step(session, reply)
    session, _ = liot_exchange_step(session, None)
    assert session.reason is FailureReason.TIMEOUT


def test_out_of_order_frame_is_protocol_violation():
    session = open_session("ble-1", NodeKind.BLE, 1, 0.0, 11.12)
    session, reply = ble_exchange_step(session, node_frame(FrameKind.ESS_ATTR_DATA, session))
    assert reply is None
    assert session.reason is FailureReason.PROTOCOL_VIOLATION


def test_wrong_session_id_is_protocol_violation():
    session = open_session("ble-1", NodeKind.BLE, 2, 0.0, 11.12)
    frame = make_frame(FrameKind.ADV_ESS, src="ble-1", dst=GATEWAY_ID, session_id=1, airtime=4.0)
    session, _ = ble_exchange_step(session, frame)
    assert session.reason is FailureReason.PROTOCOL_VIOLATION


def test_finished_session_ignores_frames():
    session = open_session("ble-1", NodeKind.BLE, 1, 0.0, 11.12)
    failed, _ = ble_exchange_step(session, None)
    again, reply = ble_exchange_step(failed, node_frame(FrameKind.ADV_ESS, session, airtime=4.0))
    assert again == failed
    assert reply is None


def test_step_functions_check_protocol(liot_policy):
    ble = open_session("ble-1", NodeKind.BLE, 1, 0.0, 11.12)
    liot = open_session("liot-1", NodeKind.LIOT, 1, 0.0, 9.222, sleep_policy=liot_policy)
    with pytest.raises(ProtocolError):
        liot_exchange_step(ble, None)
    with pytest.raises(ProtocolError):
        ble_exchange_step(liot, None)


def test_liot_session_needs_sleep_policy():
    with pytest.raises(ProtocolError):
        open_session("liot-1", NodeKind.LIOT, 1, 0.0, 9.222)


def test_assign_sleep_backs_off_in_darkness(liot_policy):
    assert assign_sleep(liot_policy, 0) == 60


def test_assign_sleep_is_zero_when_harvest_covers_activity(liot_policy):
    bright = SleepPolicy(
        liot_policy.profile,
        liot_policy.harvester.model_copy(update={"points": ((0.0, 0.0), (10.0, 100.0))}),
    )
    assert assign_sleep(bright, 50) == 0


def test_assign_sleep_clamps_to_field_width(liot_policy):
    assert assign_sleep(liot_policy, 320) == MAX_SLEEP_SET_S


def test_abort_only_touches_pending_sessions():
    session = open_session("ble-1", NodeKind.BLE, 1, 0.0, 11.12)
    aborted = abort_session(session, FailureReason.BROWNOUT)
    assert aborted.outcome is Outcome.FAILED
    assert aborted.reason is FailureReason.BROWNOUT
    assert abort_session(aborted, FailureReason.TIMEOUT) == aborted


def test_session_overdue_after_deadline():
    session = open_session("ble-1", NodeKind.BLE, 1, 0.0, 11.12)
    assert not is_overdue(session, 11.12)
    assert is_overdue(session, 11.2)
