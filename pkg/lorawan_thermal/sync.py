import singer
from singer import metrics, metadata, Transformer, utils

from lorawan_thermal.streams import STREAMS
from lorawan_thermal.transform import parse_timestamp, transform_record

LOGGER = singer.get_logger()


def write_schema(catalog, stream_name):
    stream = catalog.get_stream(stream_name)
    schema = stream.schema

    try:
        singer.write_schema(stream_name, schema.to_dict(), stream.key_properties)
    except OSError as err:
        LOGGER.error('OS Error writing schema for: {}'.format(stream_name))
        raise err


def write_record(stream_name, record, time_extracted):
    try:
        singer.messages.write_record(stream_name, record, time_extracted=time_extracted)
    except OSError as err:
        LOGGER.error('OS Error writing record for: {}'.format(stream_name))
        raise err


def get_bookmark(state, stream, default):
    if (state is None) or ('bookmarks' not in state):
        return default
    return (
        state
        .get('bookmarks', {})
        .get(stream, default)
    )


def write_bookmark(state, stream, value):
    if 'bookmarks' not in state:
        state['bookmarks'] = {}
    state['bookmarks'][stream] = value
    LOGGER.info('Write state for stream: {}, value: {}'.format(stream, value))
    singer.write_state(state)


def process_records(catalog, stream_name, records, time_extracted, bookmark_field=None,
                    max_bookmark_value=None):
    stream = catalog.get_stream(stream_name)
    schema = stream.schema.to_dict()
    stream_metadata = metadata.to_map(stream.metadata)

    with metrics.record_counter(stream_name) as counter:
        for record in records:
            with Transformer() as transformer:
                try:
                    transformed_record = transformer.transform(
                        transform_record(record, stream_name),
                        schema,
                        stream_metadata)
                except Exception as err:
                    LOGGER.info('Ignoring malformed {} record: {}'.format(stream_name, err))
                    continue

            # Bookmarks are ISO strings in UTC, so they order lexically
            if bookmark_field and transformed_record.get(bookmark_field):
                if max_bookmark_value is None or \
                        transformed_record[bookmark_field] > max_bookmark_value:
                    max_bookmark_value = transformed_record[bookmark_field]

            write_record(stream_name, transformed_record, time_extracted=time_extracted)
            counter.increment()

        return max_bookmark_value, counter.value


def sync_stream(store, catalog, state, stream_name):
    endpoint_config = STREAMS[stream_name]
    bookmark_field = next(iter(endpoint_config.get('replication_keys', [])), None)
    last_datetime = get_bookmark(state, stream_name, None) if bookmark_field else None

    write_schema(catalog, stream_name)
    records = store.iter_rows(stream_name, since=last_datetime)
    if last_datetime is not None:
        last_dttm = parse_timestamp(last_datetime)
        # the bookmarked reading itself was already delivered
        records = (r for r in records if parse_timestamp(r['timestamp']) > last_dttm)

    max_bookmark_value, total = process_records(catalog,
                                                stream_name,
                                                records,
                                                utils.now(),
                                                bookmark_field=bookmark_field,
                                                max_bookmark_value=last_datetime)
    if bookmark_field and max_bookmark_value is not None:
        write_bookmark(state, stream_name, max_bookmark_value)
    return total


# Currently syncing sets the stream currently being delivered in the state.
# If the export is interrupted, this state property is used to identify
#  the starting point to continue from.
def update_currently_syncing(state, stream_name):
    if (stream_name is None) and ('currently_syncing' in state):
        del state['currently_syncing']
    else:
        singer.set_currently_syncing(state, stream_name)
    singer.write_state(state)


def sync(store, catalog, state):
    last_stream = singer.get_currently_syncing(state)
    LOGGER.info('last/currently syncing stream: {}'.format(last_stream))

    totals = {}
    for stream_name in STREAMS:
        LOGGER.info('START Syncing: {}'.format(stream_name))
        update_currently_syncing(state, stream_name)
        totals[stream_name] = sync_stream(store, catalog, state, stream_name)
        update_currently_syncing(state, None)
        LOGGER.info('FINISHED Syncing: {}, Total records: {}'.format(
            stream_name,
            totals[stream_name]))
    return totals


def sync_readings(store, catalog, device_id, t0=None, t1=None):
    """Readings of one device as Singer RECORD messages, no state."""
    write_schema(catalog, 'readings')
    readings = store.query_readings(device_id, t0, t1)
    records = ({'id': r.id, 'device_id': r.device_id, 'counter': r.counter,
                'timestamp': r.timestamp, 'temp_c': r.temp_c, 'lux': r.lux, 'flags': r.flags,
                'gateway_id': r.gateway_id, 'rssi': r.rssi, 'snr': r.snr} for r in readings)
    _, total = process_records(catalog, 'readings', records, utils.now())
    return total
