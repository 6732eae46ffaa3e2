"""LoRa airtime, log-distance path loss and per-gateway delivery."""
import math
from dataclasses import dataclass, field

import numpy as np
import singer

LOGGER = singer.get_logger()

LOS = 'LOS'
OBSTRUCTED = 'OBSTRUCTED'

# Exponents put the budget crossing at 5 km (line of sight) and 550 m
# (obstructed, ground-level antenna) for SF12 at 14 dBm.
DEFAULT_EXPONENTS = {
    LOS: 3.0,
    OBSTRUCTED: 4.05,
}

# SX127x receiver sensitivity at 125 kHz, dBm.
DEFAULT_SENSITIVITY_DBM = {
    7: -123.0,
    8: -126.0,
    9: -129.0,
    10: -132.0,
    11: -134.5,
    12: -137.0,
}

NOISE_FLOOR_DBM = -117.0
SNR_BOUNDS_DB = (-20.0, 10.0)


@dataclass(frozen=True)
class RadioParams:
    spreading_factor: int = 7
    bandwidth: float = 125000.0
    coding_rate_index: int = 1
    preamble_symbols: int = 8
    explicit_header: bool = True
    crc_on: bool = True
    low_datarate_optimize: bool = None
    tx_power_dbm: float = 14.0
    sensitivity_dbm: dict = field(default_factory=lambda: dict(DEFAULT_SENSITIVITY_DBM))
    noise_floor_dbm: float = NOISE_FLOOR_DBM

    def __post_init__(self):
        if not 7 <= self.spreading_factor <= 12:
            raise ValueError('spreading factor must lie in [7, 12]')
        if self.bandwidth <= 0:
            raise ValueError('bandwidth must be positive')
        if not 1 <= self.coding_rate_index <= 4:
            raise ValueError('coding_rate_index must lie in [1, 4]')
        if self.low_datarate_optimize is None:
            object.__setattr__(self, 'low_datarate_optimize',
                               self.spreading_factor >= 11 and self.bandwidth <= 125000.0)

    @property
    def sensitivity(self):
        return self.sensitivity_dbm[self.spreading_factor]


@dataclass(frozen=True)
class PathEnvironment:
    mode: str = LOS
    path_loss_exponent: float = None
    reference_loss_db: float = 40.0
    shadowing_sigma_db: float = 2.0
    antenna_bonus_db: float = 6.0

    def __post_init__(self):
        if self.mode not in DEFAULT_EXPONENTS:
            raise ValueError('unknown path mode: {}'.format(self.mode))
        if self.path_loss_exponent is None:
            object.__setattr__(self, 'path_loss_exponent', DEFAULT_EXPONENTS[self.mode])
        if not 1.6 <= self.path_loss_exponent <= 6.0:
            raise ValueError('path loss exponent must lie in [1.6, 6]')
        if self.shadowing_sigma_db < 0:
            raise ValueError('shadowing sigma must not be negative')


@dataclass(frozen=True)
class DeliveryResult:
    received: bool
    rssi_dbm: float
    snr_db: float
    gateway_id: str = None


def symbol_time_ms(radio):
    return (2 ** radio.spreading_factor) / radio.bandwidth * 1000.0


def payload_symbols(radio, payload_len):
    sf = radio.spreading_factor
    de = 1 if radio.low_datarate_optimize else 0
    ih = 0 if radio.explicit_header else 1
    crc = 1 if radio.crc_on else 0
    numerator = 8 * payload_len - 4 * sf + 28 + 16 * crc - 20 * ih
    blocks = math.ceil(numerator / (4 * (sf - 2 * de)))
    return 8 + max(blocks * (radio.coding_rate_index + 4), 0)


def airtime_ms(radio, payload_len):
    """Time on air of one uplink, milliseconds."""
    if not 1 <= payload_len <= 255:
        raise ValueError('payload length must lie in [1, 255], got {}'.format(payload_len))
    n_symbols = radio.preamble_symbols + 4.25 + payload_symbols(radio, payload_len)
    return n_symbols * symbol_time_ms(radio)


def path_loss_db(env, distance_m, rng=None):
    if distance_m < 1:
        raise ValueError('distance must be at least 1 m')
    loss = env.reference_loss_db + 10 * env.path_loss_exponent * math.log10(distance_m)
    if env.shadowing_sigma_db > 0:
        if rng is None:
            rng = np.random.default_rng()
        loss += float(rng.normal(0.0, env.shadowing_sigma_db))
    return loss


def link_budget_db(radio, env, antenna_raised=False):
    bonus = env.antenna_bonus_db if antenna_raised else 0.0
    return radio.tx_power_dbm + bonus - radio.sensitivity


def max_range_m(radio, env, antenna_raised=False):
    """Distance at which mean path loss uses up the whole link budget."""
    budget = link_budget_db(radio, env, antenna_raised)
    return 10 ** ((budget - env.reference_loss_db) / (10 * env.path_loss_exponent))


def deliver(radio, env, distance_m, antenna_raised, rng, gateway_id=None):
    rssi = radio.tx_power_dbm - path_loss_db(env, distance_m, rng)
    if antenna_raised:
        rssi += env.antenna_bonus_db
    low, high = SNR_BOUNDS_DB
    snr = min(max(rssi - radio.noise_floor_dbm, low), high)
    # inclusive at exactly the sensitivity
    return DeliveryResult(received=rssi >= radio.sensitivity,
                          rssi_dbm=rssi,
                          snr_db=snr,
                          gateway_id=gateway_id)
