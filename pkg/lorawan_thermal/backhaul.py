"""Gateways, network server and the project webhook.

Every gateway that hears an uplink forwards its own copy. The network server
folds copies of one (dev_eui, counter) that arrive inside the dedup window,
keeps the strongest gateway's metadata, and hands the result to the webhook,
which keeps only devices registered to the project and routes them to the store.
"""
import collections
import functools
from dataclasses import dataclass, field, asdict

import backoff
import pandas as pd
import singer
from singer import metrics, Transformer

from lorawan_thermal.app_store import Reading, STORED, DUPLICATE
from lorawan_thermal.end_node import UplinkFrame
from lorawan_thermal.errors import (ExportError, FrameDecodeError, InvariantViolationError,
                                    StoreUnavailableError)
from lorawan_thermal.schema import get_schema
from lorawan_thermal.transform import (epoch_ms, floor_minute, format_timestamp_ms,
                                       from_epoch_ms, parse_timestamp, transform_reading)

LOGGER = singer.get_logger()

BACKOFF_MAX_TRIES_INSERT = 5
DEDUP_WINDOW_MS = 2000
RETRY_QUEUE_LIMIT = 1000

DROPPED = 'DROPPED'
IGNORED = 'IGNORED'
MALFORMED = 'MALFORMED'
QUEUED = 'QUEUED'

REGISTRY_COLUMNS = ['dev_eui', 'project_id', 'device_id']


@dataclass(frozen=True)
class GatewayConfig:
    gateway_id: str
    name: str = ''
    position: tuple = (0.0, 0.0)


@dataclass(frozen=True)
class UplinkPacket:
    frame: bytes
    gateway_id: str
    rssi_dbm: float
    snr_db: float
    received_at_ms: int

    @property
    def received_at(self):
        return from_epoch_ms(self.received_at_ms)

    def to_trace(self):
        return {
            'timestamp': format_timestamp_ms(self.received_at),
            'gateway_id': self.gateway_id,
            'rssi': self.rssi_dbm,
            'snr': self.snr_db,
            'frame': self.frame.hex()
        }

    @classmethod
    def from_trace(cls, record):
        try:
            frame = bytes.fromhex(record.get('frame') or '')
        except ValueError:
            frame = b''
        return cls(frame=frame,
                   gateway_id=str(record['gateway_id']),
                   rssi_dbm=float(record['rssi']),
                   snr_db=float(record['snr']),
                   received_at_ms=epoch_ms(parse_timestamp(record['timestamp'])))


class DeviceRegistry(object):
    """dev_eui -> (project_id, device_id); one project per device at a time."""

    def __init__(self, entries=None):
        self.__entries = {}
        for dev_eui, project_id, device_id in entries or []:
            self.register(dev_eui, project_id, device_id)

    def __contains__(self, dev_eui):
        return self._key(dev_eui) in self.__entries

    def __len__(self):
        return len(self.__entries)

    @staticmethod
    def _key(dev_eui):
        return dev_eui.hex() if isinstance(dev_eui, bytes) else str(dev_eui).lower()

    def register(self, dev_eui, project_id, device_id):
        key = self._key(dev_eui)
        previous = self.__entries.get(key)
        if previous and previous[0] != project_id:
            LOGGER.info('Device {} moved from project {} to {}'.format(
                key, previous[0], project_id))
        self.__entries[key] = (project_id, device_id)

    def resolve(self, dev_eui):
        return self.__entries.get(self._key(dev_eui))

    def write_csv(self, path):
        frame = pd.DataFrame([[eui, project_id, device_id] for eui, (project_id, device_id)
                              in sorted(self.__entries.items())],
                             columns=REGISTRY_COLUMNS)
        try:
            frame.to_csv(str(path), index=False)
        except OSError as err:
            raise ExportError(path, err)

    @classmethod
    def read_csv(cls, path):
        try:
            frame = pd.read_csv(str(path), dtype=str, keep_default_na=False)
        except OSError as err:
            raise ExportError(path, err)
        return cls([(row['dev_eui'], row['project_id'], row['device_id'])
                    for row in frame.to_dict('records')])


def gateway_receive(gateway, frame, delivery, received_at_ms):
    if not delivery.received:
        return DROPPED
    return UplinkPacket(frame=bytes(frame),
                        gateway_id=gateway.gateway_id,
                        rssi_dbm=delivery.rssi_dbm,
                        snr_db=delivery.snr_db,
                        received_at_ms=int(received_at_ms))


def _preference(packet):
    # strongest first, then lexicographically smallest gateway id
    return (-packet.rssi_dbm, packet.gateway_id)


@dataclass
class DedupRecord:
    packet: UplinkPacket
    first_received_at_ms: int
    key: tuple = None
    copies: int = 1
    gateways: list = field(default_factory=list)


class Deduplicator(object):
    def __init__(self, window_ms=DEDUP_WINDOW_MS):
        self.window_ms = window_ms
        self.folded = 0
        self.replay_anomalies = 0
        self.__pending = collections.OrderedDict()
        # highest released counter per dev_eui
        self.__released = {}

    def _mark_released(self, key):
        dev_eui, counter = key
        if counter > self.__released.get(dev_eui, -1):
            self.__released[dev_eui] = counter

    def _released_before(self, key):
        dev_eui, counter = key
        return counter <= self.__released.get(dev_eui, -1)

    def _release_due(self, now_ms):
        released = []
        while self.__pending:
            key, record = next(iter(self.__pending.items()))
            if now_ms - record.first_received_at_ms <= self.window_ms:
                break
            del self.__pending[key]
            self._mark_released(key)
            released.append(record)
        return released

    def push(self, packet):
        """Feed one packet (in received order); returns the records whose window closed."""
        released = self._release_due(packet.received_at_ms)
        try:
            frame = UplinkFrame.decode(packet.frame)
        except FrameDecodeError:
            released.append(DedupRecord(packet=packet,
                                        first_received_at_ms=packet.received_at_ms,
                                        gateways=[packet.gateway_id]))
            return released

        key = (frame.dev_eui, frame.counter)
        if key in self.__pending:
            record = self.__pending[key]
            record.copies += 1
            record.gateways.append(packet.gateway_id)
            if _preference(packet) < _preference(record.packet):
                record.packet = packet
            self.folded += 1
        elif self._released_before(key):
            self.replay_anomalies += 1
            LOGGER.warning('REPLAY_ANOMALY: dev_eui {} counter {} seen outside the dedup window'
                           .format(frame.dev_eui.hex(), frame.counter))
        else:
            self.__pending[key] = DedupRecord(packet=packet,
                                              first_received_at_ms=packet.received_at_ms,
                                              key=key,
                                              gateways=[packet.gateway_id])
        return released

    def flush(self):
        released = list(self.__pending.values())
        for key in self.__pending:
            self._mark_released(key)
        self.__pending.clear()
        return released


def dedup(packets, window_ms=DEDUP_WINDOW_MS):
    """Collapse an ordered packet list to one record per uplink."""
    deduplicator = Deduplicator(window_ms)
    records = []
    for packet in sorted(packets, key=lambda p: p.received_at_ms):
        records.extend(deduplicator.push(packet))
    records.extend(deduplicator.flush())
    return records


@functools.lru_cache(maxsize=1)
def _readings_schema():
    return get_schema('readings')


def webhook_filter(registry, record):
    """Resolve a deduplicated uplink against the project registry."""
    if isinstance(record, UplinkPacket):
        record = DedupRecord(packet=record, first_received_at_ms=record.received_at_ms)
    packet = record.packet
    try:
        frame = UplinkFrame.decode(packet.frame)
    except FrameDecodeError as err:
        LOGGER.info('Ignoring malformed frame from gateway {}: {}'.format(
            packet.gateway_id, err))
        return MALFORMED

    resolved = registry.resolve(frame.dev_eui)
    if resolved is None:
        return IGNORED
    project_id, device_id = resolved

    reading = Reading(device_id=device_id,
                      counter=frame.counter,
                      timestamp=floor_minute(from_epoch_ms(record.first_received_at_ms)),
                      temp_c=frame.temp_centi / 100.0,
                      lux=frame.lux,
                      flags=frame.flags,
                      gateway_id=packet.gateway_id,
                      rssi=round(packet.rssi_dbm, 2),
                      snr=round(packet.snr_db, 2),
                      project_id=project_id)
    record = transform_reading(asdict(reading))
    record.pop('project_id')
    with Transformer() as transformer:
        try:
            transformer.transform(record, _readings_schema())
        except Exception as err:
            LOGGER.info('Ignoring malformed reading {}: {}'.format(reading.key(), err))
            return MALFORMED
    return reading


class Router(object):
    def __init__(self, store, retry_limit=RETRY_QUEUE_LIMIT):
        self.store = store
        self.retry_limit = retry_limit
        self.retry_queue = collections.deque()
        self.retry_dropped = 0

    @backoff.on_exception(backoff.expo,
                          StoreUnavailableError,
                          max_tries=BACKOFF_MAX_TRIES_INSERT,
                          factor=2,
                          logger=LOGGER)
    def insert(self, reading):
        return self.store.insert_reading(reading)

    def _enqueue(self, reading):
        if len(self.retry_queue) >= self.retry_limit:
            dropped = self.retry_queue.popleft()
            self.retry_dropped += 1
            LOGGER.warning('Retry queue full, dropped reading {}'.format(dropped.key()))
        self.retry_queue.append(reading)

    def _held(self, device_id):
        return any(queued.device_id == device_id for queued in self.retry_queue)

    def _attempt(self, reading):
        try:
            return self.insert(reading)
        except StoreUnavailableError as err:
            LOGGER.error('Store unavailable for reading {}: {}'.format(reading.key(), err))
            self._enqueue(reading)
            return QUEUED

    def route(self, reading):
        """Exactly-once insert per (device_id, counter); failures wait in the retry queue.

        A device with queued readings keeps its later readings queued behind them, so the
        store sees each device's readings in time order.
        """
        if self._held(reading.device_id):
            self._enqueue(reading)
            return QUEUED
        return self._attempt(reading)

    def drain(self):
        """Retry queued readings oldest first; returns (reading, outcome) for each one that left."""
        results = []
        blocked = set()
        for _ in range(len(self.retry_queue)):
            reading = self.retry_queue.popleft()
            if reading.device_id in blocked:
                self.retry_queue.append(reading)
                continue
            outcome = self._attempt(reading)
            if outcome == QUEUED:
                blocked.add(reading.device_id)
            else:
                results.append((reading, outcome))
        return results


@dataclass
class Accounting:
    frames_emitted: int = 0
    uplink_copies: int = 0
    dropped_radio: int = 0
    packets: int = 0
    stored: int = 0
    dedup_folded: int = 0
    ignored: int = 0
    malformed: int = 0
    replay_anomalies: int = 0
    store_duplicates: int = 0
    retry_pending: int = 0
    retry_dropped: int = 0

    def fates(self):
        return (self.stored + self.dropped_radio + self.dedup_folded + self.ignored
                + self.malformed + self.replay_anomalies + self.store_duplicates
                + self.retry_pending + self.retry_dropped)

    def to_dict(self):
        return asdict(self)

    def check(self):
        if self.uplink_copies != self.fates():
            raise InvariantViolationError(
                'accounting identity broken: {} copies, {} fates'.format(
                    self.uplink_copies, self.fates()),
                accounting=self.to_dict())
        return True


class NetworkServer(object):
    def __init__(self, registry, store, dedup_window_ms=DEDUP_WINDOW_MS, trace_writer=None,
                 retry_limit=RETRY_QUEUE_LIMIT):
        self.registry = registry
        self.deduplicator = Deduplicator(dedup_window_ms)
        self.router = Router(store, retry_limit)
        self.trace_writer = trace_writer
        self.accounting = Accounting()
        self.readings = []
        self.__counter = None

    def __enter__(self):
        self.__counter = metrics.record_counter('readings')
        self.__counter.__enter__()
        return self

    def __exit__(self, exception_type, exception_value, traceback):
        self.flush()
        if self.__counter is not None:
            self.__counter.__exit__(exception_type, exception_value, traceback)
            self.__counter = None

    def radio_drop(self, copies=1):
        self.accounting.uplink_copies += copies
        self.accounting.dropped_radio += copies

    def receive(self, packet):
        self.accounting.uplink_copies += 1
        self.accounting.packets += 1
        if self.trace_writer is not None:
            self.trace_writer.write(packet.to_trace())
        for record in self.deduplicator.push(packet):
            self._deliver(record)

    def _deliver(self, record):
        result = webhook_filter(self.registry, record)
        if result == IGNORED:
            self.accounting.ignored += 1
            return result
        if result == MALFORMED:
            self.accounting.malformed += 1
            return result
        self._route(result)
        return result

    def _route(self, reading):
        if self.router.retry_queue:
            self._drain()
        return self._account(reading, self.router.route(reading))

    def _drain(self):
        for reading, outcome in self.router.drain():
            self._account(reading, outcome)

    def _account(self, reading, outcome):
        if outcome == STORED:
            self.accounting.stored += 1
            self.readings.append(reading)
            if self.__counter is not None:
                self.__counter.increment()
        elif outcome == DUPLICATE:
            self.accounting.store_duplicates += 1
        return outcome

    def flush(self):
        for record in self.deduplicator.flush():
            self._deliver(record)
        self._drain()
        self.router.store.commit()
        self.accounting.dedup_folded = self.deduplicator.folded
        self.accounting.replay_anomalies = self.deduplicator.replay_anomalies
        self.accounting.retry_pending = len(self.router.retry_queue)
        self.accounting.retry_dropped = self.router.retry_dropped
        return self.accounting
