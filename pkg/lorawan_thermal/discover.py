from singer.catalog import Catalog, CatalogEntry, Schema
from lorawan_thermal.schema import get_schemas
from lorawan_thermal.streams import STREAMS


def discover(store=None):
    """Catalog of the store tables; row counts are filled in when a store is given."""
    schemas, field_metadata = get_schemas()
    catalog = Catalog([])

    for stream_name, schema_dict in schemas.items():
        config = STREAMS[stream_name]
        replication_keys = config.get('replication_keys') or [None]

        catalog.streams.append(CatalogEntry(
            stream=stream_name,
            tap_stream_id=stream_name,
            table=stream_name,
            key_properties=config['key_properties'],
            replication_method=config['replication_method'],
            replication_key=replication_keys[0],
            row_count=store.count(stream_name) if store is not None else None,
            schema=Schema.from_dict(schema_dict),
            metadata=field_metadata[stream_name]
        ))

    return catalog
