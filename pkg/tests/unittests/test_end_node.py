from dataclasses import replace

import numpy as np
import pytest
from pytest import raises

from lorawan_thermal import end_node
from lorawan_thermal.end_node import (DEAD, EMITTED, FRAME_LENGTH, LOST, NODE_DEAD, NODE_LOST,
                                      SKIPPED, BatteryState, NodeConfig, NodeState, SensorSample,
                                      UplinkFrame, apply_loss_event, cycle_charge_mah,
                                      decode_frame, lifetime_estimate, recharge, run_cycle,
                                      sample_sensors)
from lorawan_thermal.errors import FrameDecodeError, NodeDeadError
from lorawan_thermal.lora_link import RadioParams
from tests.configuration.fixtures import DEV_EUI, make_frame, node, world


def test_frame_layout():
    payload = make_frame(counter=513, temp_centi=-125, lux=40000, flags=2)
    assert len(payload) == FRAME_LENGTH == 18
    assert payload[0] == end_node.FRAME_VERSION
    assert payload[1:9] == DEV_EUI
    frame = decode_frame(payload)
    assert (frame.counter, frame.temp_c, frame.lux) == (513, -1.25, 40000)
    assert frame.lux_gross_error


@pytest.mark.parametrize(
    'payload',
    [
        pytest.param(b'', id='empty'),
        pytest.param(make_frame()[:14], id='short'),
        pytest.param(make_frame() + b'\x00', id='long'),
        pytest.param(b'\x09' + make_frame()[1:], id='unknown_version'),
    ],
)
def test_decode_rejects_malformed_frames(payload):
    with raises(FrameDecodeError):
        decode_frame(payload)


def test_frame_fields_out_of_range():
    with raises(ValueError):
        UplinkFrame(dev_eui=DEV_EUI, counter=-1, temp_centi=0, lux=0).encode()
    with raises(ValueError):
        SensorSample(timestamp=0, temp_centi=20000, lux=0)


def test_dev_eui_must_be_eight_bytes():
    with raises(ValueError):
        NodeConfig(dev_eui='0011', device_id='x', material_ref='grass')


def test_sample_reads_probe_and_light(node, world):
    sample = sample_sensors(node, world, 0)
    # grass probe: 20 + 0.6 * (25 - 20)
    assert sample.temp_centi == 2300
    assert sample.lux == 0
    assert sample.flags == 0


def test_cycle_emits_frame_and_advances_counter(node, world):
    radio = RadioParams()
    first = run_cycle(node, world, radio, 0)
    second = run_cycle(node, world, radio, 2)
    assert first.status == second.status == EMITTED
    assert decode_frame(first.frame).counter == 0
    assert decode_frame(second.frame).counter == 1
    assert node.counter == 2
    assert first.airtime_ms == pytest.approx(51.456)


def test_cycle_charge_matches_closed_form(node, world):
    outcome = run_cycle(node, world, RadioParams(), 0)
    assert outcome.charge_mah == pytest.approx(cycle_charge_mah(node.config, node.battery))
    assert node.battery.consumed == pytest.approx(outcome.charge_mah)


def test_overheat_always_skips_when_p_skip_is_one(node, world):
    node.overheat = {'threshold_c': -50.0, 'p_skip': 1.0, 'lux_full_scale': 40000}
    radio = RadioParams()
    outcomes = [run_cycle(node, world, radio, t) for t in range(0, 20, 2)]
    assert {o.status for o in outcomes} == {SKIPPED}
    assert node.counter == 0
    assert node.skips == 10
    # skipped cycles never key the radio
    active_only = (node.battery.active_ma * node.battery.active_seconds
                   + node.battery.sleep_ma * (120 - node.battery.active_seconds)) / 3600.0
    assert outcomes[0].charge_mah == pytest.approx(active_only)


def test_overheat_gross_lux_when_not_skipped(node, world):
    node.overheat = {'threshold_c': -50.0, 'p_skip': 0.0, 'lux_full_scale': 40000}
    radio = RadioParams()
    frames = [decode_frame(run_cycle(node, world, radio, t).frame) for t in range(0, 20, 2)]
    assert all(f.lux_gross_error for f in frames)
    assert {f.lux for f in frames} <= {0, 65535}
    assert node.gross_errors == 10


def test_shaded_enclosure_reads_ambient(world):
    config = NodeConfig(dev_eui=DEV_EUI, device_id='n1', material_ref='grass',
                        enclosure_shaded=True)
    shaded = NodeState(config=config, battery=BatteryState(), rng=np.random.default_rng(1),
                       overheat={'threshold_c': 22.0, 'p_skip': 1.0, 'lux_full_scale': 40000})
    # surface 25, ambient 20: the shaded box stays under 22
    assert not sample_sensors(shaded, world, 0).overheat_skip


def test_exhausted_battery(node, world):
    node.battery = replace(node.battery, consumed=node.battery.capacity_mah)
    with raises(NodeDeadError):
        sample_sensors(node, world, 0)
    assert run_cycle(node, world, RadioParams(), 0).status == NODE_DEAD
    assert node.status == DEAD


def test_lost_node_stays_silent_after_recharge(node, world):
    apply_loss_event(node, 10)
    assert node.status == LOST
    assert run_cycle(node, world, RadioParams(), 10).status == NODE_LOST
    recharge(node, 12)
    assert node.status == LOST


def test_recharge_revives_dead_node(node, world):
    node.battery = replace(node.battery, consumed=node.battery.capacity_mah)
    run_cycle(node, world, RadioParams(), 0)
    recharge(node, 4)
    assert node.status == 'ALIVE'
    assert node.battery.consumed == 0.0
    assert run_cycle(node, world, RadioParams(), 4).status == EMITTED


def test_battery_anchor_two_hundred_hours(node):
    hours = lifetime_estimate(node.config, node.battery)
    assert 180.0 <= hours <= 220.0


def test_stepped_death_matches_closed_form(node, world):
    radio = RadioParams()
    t = 0
    while node.status != DEAD:
        run_cycle(node, world, radio, t)
        t += node.config.tx_interval
    simulated = node.died_at / 60.0
    assert simulated == pytest.approx(lifetime_estimate(node.config, BatteryState()), rel=0.01)
    assert 180.0 <= simulated <= 220.0


def test_longer_interval_and_timer_extend_lifetime():
    battery = BatteryState()
    fast = NodeConfig(dev_eui=DEV_EUI, device_id='n1', material_ref='grass', tx_interval=2)
    slow = replace(fast, tx_interval=30)
    timed = replace(slow, low_power_timer=True)
    assert lifetime_estimate(slow, battery) > lifetime_estimate(fast, battery)
    assert lifetime_estimate(timed, battery) >= 5 * lifetime_estimate(slow, battery)


def test_battery_draw_reports_powered_seconds():
    battery = BatteryState(capacity_mah=1.0)
    assert battery.draw(3600.0, 0.5) == 0.5
    assert battery.draw(3600.0, 1.0) == pytest.approx(0.5)
    assert battery.exhausted


def test_negative_temperature_golden_bytes():
    payload = UplinkFrame(dev_eui=DEV_EUI, counter=0, temp_centi=-150, lux=0).encode()
    assert payload[13:15] == b'\x6a\xff'
    assert payload.hex() == '01' + DEV_EUI.hex() + '00000000' + '6aff' + '0000' + '00'


def test_codec_is_an_involution_on_random_frames():
    rng = np.random.default_rng(2024)
    low, high = end_node.TEMP_CENTI_BOUNDS
    for _ in range(10000):
        frame = UplinkFrame(dev_eui=rng.bytes(8),
                            counter=int(rng.integers(0, 2 ** 32)),
                            temp_centi=int(rng.integers(low, high + 1)),
                            lux=int(rng.integers(0, end_node.LUX_MAX + 1)),
                            flags=int(rng.integers(0, 4)))
        payload = frame.encode()
        assert decode_frame(payload) == frame
        assert decode_frame(payload).encode() == payload
