import datetime

import pytz
import singer
from singer.utils import strftime, strptime_to_utc

LOGGER = singer.get_logger()

EPOCH = datetime.datetime(1970, 1, 1, tzinfo=pytz.utc)

TIMESTAMP_FORMAT = '%Y-%m-%dT%H:%M:%SZ'
TIMESTAMP_MS_FORMAT = '%Y-%m-%dT%H:%M:%S.%fZ'

FLAG_NAMES = {
    0x01: 'overheat_skip',
    0x02: 'lux_gross_error',
}


def local_zone(offset_minutes):
    return pytz.FixedOffset(int(offset_minutes))


# Scenario start is given as a local wall-clock date and time plus a fixed offset
def local_start_to_utc(start_date, start_minute_of_day, offset_minutes):
    naive = datetime.datetime.combine(start_date, datetime.time(0, 0)) + \
        datetime.timedelta(minutes=start_minute_of_day)
    return local_zone(offset_minutes).localize(naive).astimezone(pytz.utc)


def epoch_ms(value):
    return int(round((value - EPOCH).total_seconds() * 1000))


def from_epoch_ms(value):
    return EPOCH + datetime.timedelta(milliseconds=int(value))


def floor_minute(value):
    return value.replace(second=0, microsecond=0)


def format_timestamp(value):
    return strftime(value.astimezone(pytz.utc), TIMESTAMP_FORMAT)


def format_timestamp_ms(value):
    return strftime(value.astimezone(pytz.utc), TIMESTAMP_MS_FORMAT)


def parse_timestamp(value):
    if isinstance(value, datetime.datetime):
        if value.tzinfo is None:
            return pytz.utc.localize(value)
        return value.astimezone(pytz.utc)
    return strptime_to_utc(str(value))


def to_local(value, offset_minutes):
    return value.astimezone(local_zone(offset_minutes))


def local_minute_of_day(value, offset_minutes):
    local = to_local(value, offset_minutes)
    return local.hour * 60 + local.minute


def flags_to_text(flags):
    names = [name for bit, name in sorted(FLAG_NAMES.items()) if flags & bit]
    return '|'.join(names)


def text_to_flags(text):
    flags = 0
    for name in filter(None, str(text or '').split('|')):
        for bit, known in FLAG_NAMES.items():
            if known == name:
                flags |= bit
                break
        else:
            raise ValueError('unknown flag: {}'.format(name))
    return flags


# Readings: ISO timestamps, decoded flag booleans for downstream targets
def transform_reading(row):
    record = dict(row)
    record['timestamp'] = format_timestamp(parse_timestamp(row['timestamp']))
    flags = int(row.get('flags') or 0)
    for bit, name in FLAG_NAMES.items():
        record[name] = bool(flags & bit)
    return record


def transform_record(record, stream_name):
    if stream_name == 'readings':
        return transform_reading(record)
    return dict(record)
