import datetime

import numpy as np
import pytest
import pytz

from lorawan_thermal.app_store import AppStore, Reading
from lorawan_thermal.backhaul import DeviceRegistry, UplinkPacket
from lorawan_thermal.end_node import BatteryState, NodeConfig, NodeState, UplinkFrame
from lorawan_thermal.thermal_world import AmbientForcing, MaterialThermalModel, ThermalWorld

START = datetime.datetime(2024, 1, 15, 10, 30, tzinfo=pytz.utc)
DEV_EUI = bytes.fromhex('0011223344556677')

MINIMAL_SCENARIO = """
[scenario]
name = minimal
duration_h = 2
seed = 5

[material]
name = grass

[gateway]
id = gw1

[node]
dev_eui = 0011223344556677
device_id = n1
material = grass
distance = gw1:100
"""


def flat_forcing(temp_c=20.0):
    return AmbientForcing(day_profile=((0, temp_c), (720, temp_c)), insolation_peak=0.0)


def make_frame(counter=0, dev_eui=DEV_EUI, temp_centi=2150, lux=1200, flags=0):
    return UplinkFrame(dev_eui=dev_eui, counter=counter, temp_centi=temp_centi, lux=lux,
                       flags=flags).encode()


def make_packet(counter=0, gateway_id='gw1', rssi=-100.0, offset_ms=0, frame=None):
    return UplinkPacket(frame=frame if frame is not None else make_frame(counter),
                        gateway_id=gateway_id,
                        rssi_dbm=rssi,
                        snr_db=7.5,
                        received_at_ms=int((START - datetime.datetime(
                            1970, 1, 1, tzinfo=pytz.utc)).total_seconds() * 1000) + offset_ms)


def make_reading(counter, minutes=0, temp_c=21.5, device_id='n1'):
    return Reading(device_id=device_id,
                   counter=counter,
                   timestamp=START + datetime.timedelta(minutes=minutes),
                   temp_c=temp_c,
                   lux=1200,
                   flags=0,
                   gateway_id='gw1',
                   rssi=-98.25,
                   snr=7.5)


@pytest.fixture
def store(tmp_path):
    with AppStore(tmp_path / 'store.sqlite') as app_store:
        user_id = app_store.upsert_entity('user', {'name': 'researcher'})
        project_id = app_store.upsert_entity('project', {'name': 'campus',
                                                         'owner_user': user_id})
        material_id = app_store.upsert_entity('material', {'name': 'grass', 'k_cool': 0.5,
                                                           'solar_gain': 4.0,
                                                           'probe_coupling': 0.6})
        app_store.upsert_entity('device', {'dev_eui': DEV_EUI.hex(), 'name': 'n1',
                                           'project_id': project_id,
                                           'material_id': material_id})
        yield app_store


@pytest.fixture
def registry():
    return DeviceRegistry([(DEV_EUI, 'campus', 'n1')])


@pytest.fixture
def world():
    thermal_world = ThermalWorld(forcing=flat_forcing(20.0),
                                 materials={'grass': MaterialThermalModel.default('grass')})
    thermal_world.place(DEV_EUI.hex(), 'grass', 25.0)
    return thermal_world


@pytest.fixture
def node():
    return NodeState(config=NodeConfig(dev_eui=DEV_EUI, device_id='n1', material_ref='grass',
                                       distance_to_gateway={'gw1': 100.0}),
                     battery=BatteryState(),
                     rng=np.random.default_rng(1))
