"""One temperature node: read, encode, transmit, sleep.

Uplink frame layout (little-endian, 18 bytes)::

    offset  size  field
    0       1     version (FRAME_VERSION)
    1       8     dev_eui
    9       4     counter      uint32
    13      2     temp_centi   int16, hundredths of a degree C
    15      2     lux          uint16
    17      1     flags        bit0 overheat_skip, bit1 lux_gross_error
"""
import struct
from dataclasses import dataclass, field, replace

import numpy as np
import singer

from lorawan_thermal.errors import FrameDecodeError, NodeDeadError
from lorawan_thermal.lora_link import RadioParams, airtime_ms

LOGGER = singer.get_logger()

FRAME_VERSION = 1
FRAME_FORMAT = '<B8sIhHB'
FRAME_LENGTH = struct.calcsize(FRAME_FORMAT)

FLAG_OVERHEAT_SKIP = 0x01
FLAG_LUX_GROSS_ERROR = 0x02

TEMP_CENTI_BOUNDS = (-4000, 12000)
LUX_MAX = 65535
LUX_GROSS_VALUES = (0, LUX_MAX)

ALIVE = 'ALIVE'
DEAD = 'DEAD'
LOST = 'LOST'

EMITTED = 'EMITTED'
SKIPPED = 'SKIPPED'
NODE_DEAD = 'NODE_DEAD'
NODE_LOST = 'NODE_LOST'

# Calibrated so a 2-minute interval averages 12.5 mA (2500 mAh over 200 h).
DEFAULT_BATTERY = {
    'capacity_mah': 2500.0,
    'voltage': 3.7,
    'sleep_ma': 11.0,
    'active_ma': 45.0,
    'tx_ma': 120.0,
    'active_seconds': 5.0,
    'timer_sleep_ma': 0.02,
}

DEFAULT_OVERHEAT = {
    'threshold_c': 40.0,
    'p_skip': 0.8,
    'lux_full_scale': 40000,
}


def parse_dev_eui(value):
    if isinstance(value, bytes):
        raw = value
    else:
        raw = bytes.fromhex(str(value).replace(':', '').replace('-', ''))
    if len(raw) != 8:
        raise ValueError('dev_eui must be 8 bytes, got {}'.format(len(raw)))
    return raw


@dataclass(frozen=True)
class NodeConfig:
    dev_eui: bytes
    device_id: str
    material_ref: str
    tx_interval: int = 2
    distance_to_gateway: dict = field(default_factory=dict)
    antenna_raised: bool = False
    low_power_timer: bool = False
    enclosure_shaded: bool = False

    def __post_init__(self):
        object.__setattr__(self, 'dev_eui', parse_dev_eui(self.dev_eui))
        if not 1 <= self.tx_interval <= 30:
            raise ValueError('tx_interval must lie in [1, 30] minutes')
        for gateway_id, distance in self.distance_to_gateway.items():
            if distance < 1:
                raise ValueError('distance to gateway {} must be at least 1 m'.format(gateway_id))

    @property
    def eui_hex(self):
        return self.dev_eui.hex()


@dataclass
class BatteryState:
    capacity_mah: float = DEFAULT_BATTERY['capacity_mah']
    voltage: float = DEFAULT_BATTERY['voltage']
    consumed: float = 0.0
    sleep_ma: float = DEFAULT_BATTERY['sleep_ma']
    active_ma: float = DEFAULT_BATTERY['active_ma']
    tx_ma: float = DEFAULT_BATTERY['tx_ma']
    active_seconds: float = DEFAULT_BATTERY['active_seconds']
    timer_sleep_ma: float = DEFAULT_BATTERY['timer_sleep_ma']

    def __post_init__(self):
        for name in ('sleep_ma', 'active_ma', 'tx_ma', 'timer_sleep_ma'):
            if getattr(self, name) <= 0:
                raise ValueError('{} must be positive'.format(name))
        if not 0 <= self.consumed <= self.capacity_mah:
            raise ValueError('consumed charge must lie in [0, capacity]')

    @property
    def remaining(self):
        return self.capacity_mah - self.consumed

    @property
    def exhausted(self):
        return self.consumed >= self.capacity_mah

    def sleep_current(self, low_power_timer):
        return self.timer_sleep_ma if low_power_timer else self.sleep_ma

    def draw(self, current_ma, seconds):
        """Charge ``seconds`` at ``current_ma``; returns the seconds actually powered."""
        if seconds <= 0:
            return 0.0
        charge = current_ma * seconds / 3600.0
        if charge <= self.remaining:
            self.consumed += charge
            return float(seconds)
        powered = self.remaining * 3600.0 / current_ma
        self.consumed = self.capacity_mah
        return powered


@dataclass(frozen=True)
class SensorSample:
    timestamp: float
    temp_centi: int
    lux: int
    overheat_skip: bool = False
    lux_gross_error: bool = False

    def __post_init__(self):
        low, high = TEMP_CENTI_BOUNDS
        if not low <= self.temp_centi <= high:
            raise ValueError('temp_centi {} outside [{}, {}]'.format(self.temp_centi, low, high))
        if not 0 <= self.lux <= LUX_MAX:
            raise ValueError('lux {} outside 16 bits'.format(self.lux))

    @property
    def flags(self):
        return ((FLAG_OVERHEAT_SKIP if self.overheat_skip else 0)
                | (FLAG_LUX_GROSS_ERROR if self.lux_gross_error else 0))


@dataclass(frozen=True)
class UplinkFrame:
    dev_eui: bytes
    counter: int
    temp_centi: int
    lux: int
    flags: int = 0
    version: int = FRAME_VERSION

    def encode(self):
        try:
            return struct.pack(FRAME_FORMAT, self.version, self.dev_eui, self.counter,
                               self.temp_centi, self.lux, self.flags)
        except struct.error as err:
            raise ValueError('frame field out of range: {}'.format(err)) from err

    @classmethod
    def decode(cls, payload):
        if len(payload) != FRAME_LENGTH:
            raise FrameDecodeError('frame must be {} bytes, got {}'.format(
                FRAME_LENGTH, len(payload)))
        version, dev_eui, counter, temp_centi, lux, flags = struct.unpack(FRAME_FORMAT,
                                                                           bytes(payload))
        if version != FRAME_VERSION:
            raise FrameDecodeError('unknown frame version {}'.format(version))
        return cls(dev_eui=dev_eui, counter=counter, temp_centi=temp_centi, lux=lux,
                   flags=flags, version=version)

    @property
    def temp_c(self):
        return self.temp_centi / 100.0

    @property
    def lux_gross_error(self):
        return bool(self.flags & FLAG_LUX_GROSS_ERROR)


@dataclass
class NodeState:
    config: NodeConfig
    battery: BatteryState
    rng: np.random.Generator
    overheat: dict = field(default_factory=lambda: dict(DEFAULT_OVERHEAT))
    status: str = ALIVE
    counter: int = 0
    died_at: float = None
    lost_at: float = None
    cycles: int = 0
    frames: int = 0
    skips: int = 0
    gross_errors: int = 0
    last_emitted_counter: int = None

    @property
    def alive(self):
        return self.status == ALIVE

    @property
    def key(self):
        return self.config.eui_hex


@dataclass(frozen=True)
class CycleOutcome:
    status: str
    timestamp: float
    frame: bytes = None
    sample: SensorSample = None
    airtime_ms: float = 0.0
    charge_mah: float = 0.0


def sample_sensors(node, world, t):
    """Read probe and light sensor at elapsed minute ``t``; ``world`` must sit at ``t``."""
    if node.battery.exhausted:
        raise NodeDeadError('node {} battery exhausted'.format(node.config.device_id))
    key = node.key
    probe_c = world.probe(key)
    lux = int(round(world.insolation() * node.overheat['lux_full_scale']))
    lux = min(max(lux, 0), LUX_MAX)
    if node.config.enclosure_shaded:
        enclosure_c = world.ambient()
    else:
        enclosure_c = world.surface(key)

    overheat_skip = False
    lux_gross_error = False
    if enclosure_c >= node.overheat['threshold_c']:
        if node.rng.random() < node.overheat['p_skip']:
            overheat_skip = True
        else:
            lux_gross_error = True
            lux = int(node.rng.choice(LUX_GROSS_VALUES))

    low, high = TEMP_CENTI_BOUNDS
    temp_centi = min(max(int(round(probe_c * 100)), low), high)
    return SensorSample(timestamp=t, temp_centi=temp_centi, lux=lux,
                        overheat_skip=overheat_skip, lux_gross_error=lux_gross_error)


def encode_frame(node, sample):
    if sample.overheat_skip:
        raise ValueError('skipped samples produce no frame')
    return UplinkFrame(dev_eui=node.config.dev_eui,
                       counter=node.counter,
                       temp_centi=sample.temp_centi,
                       lux=sample.lux,
                       flags=sample.flags).encode()


def decode_frame(payload):
    return UplinkFrame.decode(payload)


def _mark_dead(node, t):
    node.status = DEAD
    node.died_at = t
    LOGGER.warning('Node {} battery exhausted at minute {:.2f}'.format(
        node.config.device_id, t))


def run_cycle(node, world, radio, t):
    """Boot, sample, transmit unless skipped, then sleep until the next grid slot."""
    if node.status == LOST:
        return CycleOutcome(status=NODE_LOST, timestamp=t)
    if node.status == DEAD or node.battery.exhausted:
        if node.status != DEAD:
            _mark_dead(node, t)
        return CycleOutcome(status=NODE_DEAD, timestamp=t)

    node.cycles += 1
    before = node.battery.consumed
    battery = node.battery
    interval_s = node.config.tx_interval * 60.0

    powered = battery.draw(battery.active_ma, battery.active_seconds)
    if powered < battery.active_seconds:
        _mark_dead(node, t + powered / 60.0)
        return CycleOutcome(status=NODE_DEAD, timestamp=t,
                            charge_mah=battery.consumed - before)
    elapsed_s = battery.active_seconds

    sample = sample_sensors(node, world, t)
    frame = None
    air_ms = 0.0
    if sample.overheat_skip:
        node.skips += 1
        status = SKIPPED
    else:
        air_ms = airtime_ms(radio, FRAME_LENGTH)
        powered = battery.draw(battery.tx_ma, air_ms / 1000.0)
        if powered < air_ms / 1000.0:
            _mark_dead(node, t + (elapsed_s + powered) / 60.0)
            return CycleOutcome(status=NODE_DEAD, timestamp=t, sample=sample,
                                charge_mah=battery.consumed - before)
        elapsed_s += air_ms / 1000.0
        frame = encode_frame(node, sample)
        node.last_emitted_counter = node.counter
        node.counter += 1
        node.frames += 1
        if sample.lux_gross_error:
            node.gross_errors += 1
        status = EMITTED

    sleep_s = max(interval_s - elapsed_s, 0.0)
    powered = battery.draw(battery.sleep_current(node.config.low_power_timer), sleep_s)
    if powered < sleep_s:
        _mark_dead(node, t + (elapsed_s + powered) / 60.0)
    return CycleOutcome(status=status, timestamp=t, frame=frame, sample=sample,
                        airtime_ms=air_ms, charge_mah=battery.consumed - before)


def cycle_charge_mah(config, battery, radio=None, payload_len=FRAME_LENGTH):
    """Charge drawn by one full transmitting cycle including the sleep that follows."""
    radio = radio or RadioParams()
    air_s = airtime_ms(radio, payload_len) / 1000.0
    interval_s = config.tx_interval * 60.0
    sleep_s = max(interval_s - battery.active_seconds - air_s, 0.0)
    return (battery.sleep_current(config.low_power_timer) * sleep_s
            + battery.active_ma * battery.active_seconds
            + battery.tx_ma * air_s) / 3600.0


def average_current_ma(config, battery, radio=None):
    return cycle_charge_mah(config, battery, radio) * 3600.0 / (config.tx_interval * 60.0)


def lifetime_estimate(config, battery, radio=None):
    """Closed-form hours until ``battery.capacity_mah`` is spent."""
    return battery.capacity_mah / average_current_ma(config, battery, radio)


def apply_loss_event(node, t):
    """Theft or breakage: nothing is kept on the device, so only future uplinks are lost."""
    if not node.alive:
        LOGGER.info('Loss event for {} ignored, node already {}'.format(
            node.config.device_id, node.status))
        return node
    node.status = LOST
    node.lost_at = t
    LOGGER.warning('Node {} lost at minute {}'.format(node.config.device_id, t))
    return node


def recharge(node, t):
    if node.status == LOST:
        LOGGER.info('Recharge for {} ignored, node lost'.format(node.config.device_id))
        return node
    node.battery = replace(node.battery, consumed=0.0)
    node.status = ALIVE
    node.died_at = None
    LOGGER.info('Node {} recharged at minute {}'.format(node.config.device_id, t))
    return node
