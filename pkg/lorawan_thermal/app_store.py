"""Application store: projects, users, materials, locations, gateways, devices, readings.

A single SQLite file. The pipeline is the only writer; analysis and the CLI
read through their own connections and, under WAL, see committed snapshots.
Reading timestamps are stored as UTC epoch seconds and queried half-open.
"""
import json
import os
import sqlite3
import sys
from dataclasses import dataclass

import pandas as pd
import singer

from lorawan_thermal.errors import (ExportError, InvariantViolationError, NotFoundError,
                                    RefIntegrityError, StoreUnavailableError)
from lorawan_thermal.streams import KIND_TO_STREAM, STREAMS
from lorawan_thermal.transform import (EPOCH, format_timestamp, from_epoch_ms,
                                       parse_timestamp)

LOGGER = singer.get_logger()

COMMIT_EVERY = 500

CSV_COLUMNS = ['timestamp', 'device_id', 'material', 'temp_c', 'lux', 'flags',
               'gateway_id', 'rssi', 'snr']

STORED = 'stored'
DUPLICATE = 'duplicate'

SCHEMA_SQL = """
CREATE TABLE IF NOT EXISTS users (
    id INTEGER PRIMARY KEY,
    name TEXT NOT NULL UNIQUE
);
CREATE TABLE IF NOT EXISTS projects (
    id INTEGER PRIMARY KEY,
    name TEXT NOT NULL UNIQUE,
    owner_user INTEGER REFERENCES users(id)
);
CREATE TABLE IF NOT EXISTS materials (
    id INTEGER PRIMARY KEY,
    name TEXT NOT NULL UNIQUE,
    k_cool REAL NOT NULL,
    solar_gain REAL NOT NULL,
    probe_coupling REAL NOT NULL
);
CREATE TABLE IF NOT EXISTS locations (
    id INTEGER PRIMARY KEY,
    label TEXT NOT NULL UNIQUE,
    surface TEXT,
    distance_to_gateways TEXT
);
CREATE TABLE IF NOT EXISTS gateways (
    id INTEGER PRIMARY KEY,
    gateway_id TEXT NOT NULL UNIQUE,
    name TEXT,
    position_x REAL,
    position_y REAL
);
CREATE TABLE IF NOT EXISTS devices (
    id INTEGER PRIMARY KEY,
    dev_eui TEXT NOT NULL UNIQUE,
    name TEXT NOT NULL UNIQUE,
    project_id INTEGER NOT NULL REFERENCES projects(id),
    material_id INTEGER NOT NULL REFERENCES materials(id),
    location_id INTEGER REFERENCES locations(id)
);
CREATE TABLE IF NOT EXISTS readings (
    id INTEGER PRIMARY KEY,
    device_id TEXT NOT NULL REFERENCES devices(name),
    counter INTEGER NOT NULL,
    ts INTEGER NOT NULL,
    temp_c REAL NOT NULL,
    lux INTEGER NOT NULL,
    flags INTEGER NOT NULL,
    gateway_id TEXT,
    rssi REAL,
    snr REAL,
    UNIQUE (device_id, counter)
);
CREATE INDEX IF NOT EXISTS readings_device_ts ON readings (device_id, ts);
"""


@dataclass(frozen=True)
class Reading:
    device_id: str
    counter: int
    timestamp: object
    temp_c: float
    lux: int
    flags: int = 0
    gateway_id: str = None
    rssi: float = None
    snr: float = None
    project_id: str = None
    id: int = None

    @property
    def ts(self):
        return int((parse_timestamp(self.timestamp) - EPOCH).total_seconds())

    def key(self):
        return (self.device_id, self.counter)


def _reading_from_row(row):
    return Reading(id=row['id'],
                   device_id=row['device_id'],
                   counter=row['counter'],
                   timestamp=from_epoch_ms(row['ts'] * 1000),
                   temp_c=row['temp_c'],
                   lux=row['lux'],
                   flags=row['flags'],
                   gateway_id=row['gateway_id'],
                   rssi=row['rssi'],
                   snr=row['snr'])


class AppStore(object):
    def __init__(self, path):
        self.path = str(path)
        self.__connection = None
        self.__last_ts = {}
        self.__pending = 0

    def __enter__(self):
        self.open()
        return self

    def __exit__(self, exception_type, exception_value, traceback):
        self.close()

    @property
    def connection(self):
        if self.__connection is None:
            self.open()
        return self.__connection

    def open(self):
        if self.__connection is not None:
            return self
        try:
            connection = sqlite3.connect(self.path)
            connection.row_factory = sqlite3.Row
            connection.execute('PRAGMA foreign_keys = ON')
            connection.execute('PRAGMA journal_mode = WAL')
            connection.executescript(SCHEMA_SQL)
        except sqlite3.Error as err:
            raise StoreUnavailableError('cannot open store {}: {}'.format(self.path, err))
        self.__connection = connection
        LOGGER.info('Opened store {}'.format(self.path))
        return self

    def commit(self):
        if self.__connection is not None:
            self.__connection.commit()
            self.__pending = 0

    def close(self):
        if self.__connection is not None:
            self.commit()
            self.__connection.close()
            self.__connection = None

    def _check_references(self, stream_name, fields):
        for column, target in STREAMS[stream_name]['references'].items():
            value = fields.get(column)
            if value is None:
                continue
            lookup = 'name' if stream_name == 'readings' else 'id'
            row = self.connection.execute(
                'SELECT 1 FROM {} WHERE {} = ?'.format(target, lookup), (value,)).fetchone()
            if row is None:
                raise RefIntegrityError('{}.{} references missing {} {}'.format(
                    stream_name, column, target, value))

    def upsert_entity(self, kind, fields):
        """Insert or update by natural key; returns the row id."""
        if kind not in KIND_TO_STREAM or kind == 'reading':
            raise ValueError('unknown entity kind: {}'.format(kind))
        stream_name = KIND_TO_STREAM[kind]
        config = STREAMS[stream_name]
        natural_key = config['natural_key']
        values = {column: fields.get(column) for column in config['columns'] if column in fields}
        if values.get(natural_key) is None:
            raise ValueError('{} requires {}'.format(kind, natural_key))
        if isinstance(values.get('distance_to_gateways'), dict):
            values['distance_to_gateways'] = json.dumps(values['distance_to_gateways'],
                                                        sort_keys=True)
        self._check_references(stream_name, values)

        columns = list(values)
        updates = ', '.join('{0} = excluded.{0}'.format(c) for c in columns if c != natural_key)
        sql = 'INSERT INTO {} ({}) VALUES ({}) ON CONFLICT({}) DO {}'.format(
            stream_name,
            ', '.join(columns),
            ', '.join('?' for _ in columns),
            natural_key,
            'UPDATE SET {}'.format(updates) if updates else 'NOTHING')
        try:
            self.connection.execute(sql, [values[c] for c in columns])
        except sqlite3.IntegrityError as err:
            raise RefIntegrityError('{} {}: {}'.format(kind, values[natural_key], err))
        except sqlite3.OperationalError as err:
            raise StoreUnavailableError(str(err))
        self.commit()
        row = self.connection.execute(
            'SELECT id FROM {} WHERE {} = ?'.format(stream_name, natural_key),
            (values[natural_key],)).fetchone()
        return row['id']

    def entity_id(self, kind, natural_value):
        stream_name = KIND_TO_STREAM[kind]
        row = self.connection.execute('SELECT id FROM {} WHERE {} = ?'.format(
            stream_name, STREAMS[stream_name]['natural_key']), (natural_value,)).fetchone()
        return row['id'] if row else None

    def count(self, stream_name):
        if stream_name not in STREAMS:
            raise ValueError('unknown stream: {}'.format(stream_name))
        return self.connection.execute(
            'SELECT COUNT(*) AS n FROM {}'.format(stream_name)).fetchone()['n']

    def device_names(self):
        rows = self.connection.execute('SELECT name FROM devices ORDER BY name').fetchall()
        return [row['name'] for row in rows]

    def _last_ts(self, device_id):
        if device_id not in self.__last_ts:
            row = self.connection.execute('SELECT MAX(ts) AS ts FROM readings WHERE device_id = ?',
                                          (device_id,)).fetchone()
            self.__last_ts[device_id] = row['ts']
        return self.__last_ts[device_id]

    def insert_reading(self, reading):
        """At most once per (device_id, counter)."""
        try:
            self._check_references('readings', {'device_id': reading.device_id})
            existing = self.connection.execute(
                'SELECT 1 FROM readings WHERE device_id = ? AND counter = ?',
                reading.key()).fetchone()
            if existing is not None:
                LOGGER.info('Duplicate reading {} rejected'.format(reading.key()))
                return DUPLICATE
            ts = reading.ts
            last = self._last_ts(reading.device_id)
            if last is not None and ts < last:
                raise InvariantViolationError('reading {} at {} precedes stored {}'.format(
                    reading.key(), ts, last))
            cursor = self.connection.execute(
                'INSERT OR IGNORE INTO readings '
                '(device_id, counter, ts, temp_c, lux, flags, gateway_id, rssi, snr) '
                'VALUES (?, ?, ?, ?, ?, ?, ?, ?, ?)',
                (reading.device_id, reading.counter, ts, reading.temp_c, reading.lux,
                 reading.flags, reading.gateway_id, reading.rssi, reading.snr))
        except sqlite3.OperationalError as err:
            raise StoreUnavailableError(str(err))
        if cursor.rowcount == 0:
            LOGGER.info('Duplicate reading {} rejected'.format(reading.key()))
            return DUPLICATE
        self.__last_ts[reading.device_id] = ts
        self.__pending += 1
        if self.__pending >= COMMIT_EVERY:
            self.commit()
        return STORED

    def query_readings(self, device_id, t0=None, t1=None):
        """Readings of one device in [t0, t1), ascending."""
        row = self.connection.execute('SELECT 1 FROM devices WHERE name = ?',
                                      (device_id,)).fetchone()
        if row is None:
            raise NotFoundError('unknown device: {}'.format(device_id))
        lower = _bound_seconds(t0)
        upper = _bound_seconds(t1)
        if lower is not None and upper is not None and lower > upper:
            raise ValueError('t0 must not be after t1')
        sql = 'SELECT * FROM readings WHERE device_id = ?'
        params = [device_id]
        if lower is not None:
            sql += ' AND ts >= ?'
            params.append(lower)
        if upper is not None:
            sql += ' AND ts < ?'
            params.append(upper)
        sql += ' ORDER BY ts, counter'
        return [_reading_from_row(r) for r in self.connection.execute(sql, params)]

    def iter_rows(self, stream_name, since=None):
        if stream_name == 'readings':
            sql = ('SELECT r.*, d.name AS device FROM readings r '
                   'JOIN devices d ON d.name = r.device_id')
            params = []
            if since is not None:
                sql += ' WHERE r.ts >= ?'
                params.append(_bound_seconds(since))
            sql += ' ORDER BY r.ts, r.device_id, r.counter'
            for row in self.connection.execute(sql, params):
                record = {key: row[key] for key in row.keys() if key not in ('ts', 'device')}
                record['timestamp'] = format_timestamp(from_epoch_ms(row['ts'] * 1000))
                yield record
            return
        for row in self.connection.execute('SELECT * FROM {} ORDER BY id'.format(stream_name)):
            yield {key: row[key] for key in row.keys()}

    def export_rows(self, device_id=None, t0=None, t1=None):
        sql = ('SELECT r.ts, r.device_id, m.name AS material, r.temp_c, r.lux, r.flags, '
               'r.gateway_id, r.rssi, r.snr FROM readings r '
               'JOIN devices d ON d.name = r.device_id '
               'JOIN materials m ON m.id = d.material_id WHERE 1 = 1')
        params = []
        if device_id is not None:
            sql += ' AND r.device_id = ?'
            params.append(device_id)
        if t0 is not None:
            sql += ' AND r.ts >= ?'
            params.append(_bound_seconds(t0))
        if t1 is not None:
            sql += ' AND r.ts < ?'
            params.append(_bound_seconds(t1))
        sql += ' ORDER BY r.ts, r.device_id, r.counter'
        return self.connection.execute(sql, params).fetchall()


def _bound_seconds(value):
    if value is None:
        return None
    return int((parse_timestamp(value) - EPOCH).total_seconds())


def _format_optional(value, pattern='{:.2f}'):
    return '' if value is None else pattern.format(value)


def export_csv(store, path, device_id=None, t0=None, t1=None):
    """Write readings as CSV; returns the number of data rows."""
    rows = store.export_rows(device_id, t0, t1)
    frame = pd.DataFrame(
        [[format_timestamp(from_epoch_ms(row['ts'] * 1000)),
          row['device_id'],
          row['material'],
          '{:.2f}'.format(row['temp_c']),
          str(row['lux']),
          str(row['flags']),
          row['gateway_id'] or '',
          _format_optional(row['rssi']),
          _format_optional(row['snr'])] for row in rows],
        columns=CSV_COLUMNS,
        dtype=object)
    if str(path) == '-':
        frame.to_csv(sys.stdout, index=False)
        return len(frame)
    try:
        directory = os.path.dirname(os.path.abspath(str(path)))
        os.makedirs(directory, exist_ok=True)
        frame.to_csv(str(path), index=False)
    except OSError as err:
        LOGGER.error('OS Error writing export: {}'.format(path))
        raise ExportError(path, err)
    LOGGER.info('Exported {} readings to {}'.format(len(frame), path))
    return len(frame)


def import_csv(path):
    """Read an export back; values come back as the store holds them."""
    try:
        frame = pd.read_csv(str(path), dtype={'device_id': str, 'material': str,
                                              'gateway_id': str, 'timestamp': str},
                            keep_default_na=False)
    except OSError as err:
        raise ExportError(path, err)
    records = []
    for row in frame.to_dict('records'):
        records.append({
            'timestamp': parse_timestamp(row['timestamp']),
            'device_id': row['device_id'],
            'material': row['material'],
            'temp_c': float(row['temp_c']),
            'lux': int(row['lux']),
            'flags': int(row['flags']),
            'gateway_id': row['gateway_id'] or None,
            'rssi': float(row['rssi']) if row['rssi'] != '' else None,
            'snr': float(row['snr']) if row['snr'] != '' else None,
        })
    return records
