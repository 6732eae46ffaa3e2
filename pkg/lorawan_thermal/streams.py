# streams: application-store tables, also exported as Singer streams
# properties:
#   <root node>: Plural stream name, equal to the SQLite table name
#   kind: Entity kind accepted by app_store.upsert_entity
#   natural_key: Column used to insert-or-update an entity
#   columns: Writable columns, in table order
#   references: Foreign-key column -> referenced stream
#   key_properties: Primary key fields for identifying an exported record
#   replication_method: INCREMENTAL or FULL_TABLE
#   replication_keys: bookmark field, used for filtering and for the Singer state

STREAMS = {
    'users': {
        'kind': 'user',
        'natural_key': 'name',
        'columns': ['name'],
        'references': {},
        'key_properties': ['id'],
        'replication_method': 'FULL_TABLE'
    },

    'projects': {
        'kind': 'project',
        'natural_key': 'name',
        'columns': ['name', 'owner_user'],
        'references': {
            'owner_user': 'users'
        },
        'key_properties': ['id'],
        'replication_method': 'FULL_TABLE'
    },

    'materials': {
        'kind': 'material',
        'natural_key': 'name',
        'columns': ['name', 'k_cool', 'solar_gain', 'probe_coupling'],
        'references': {},
        'key_properties': ['id'],
        'replication_method': 'FULL_TABLE'
    },

    'locations': {
        'kind': 'location',
        'natural_key': 'label',
        'columns': ['label', 'surface', 'distance_to_gateways'],
        'references': {},
        'key_properties': ['id'],
        'replication_method': 'FULL_TABLE'
    },

    'gateways': {
        'kind': 'gateway',
        'natural_key': 'gateway_id',
        'columns': ['gateway_id', 'name', 'position_x', 'position_y'],
        'references': {},
        'key_properties': ['id'],
        'replication_method': 'FULL_TABLE'
    },

    'devices': {
        'kind': 'device',
        'natural_key': 'dev_eui',
        'columns': ['dev_eui', 'name', 'project_id', 'material_id', 'location_id'],
        'references': {
            'project_id': 'projects',
            'material_id': 'materials',
            'location_id': 'locations'
        },
        'key_properties': ['id'],
        'replication_method': 'FULL_TABLE'
    },

    'readings': {
        'kind': 'reading',
        'natural_key': None,
        'columns': ['device_id', 'counter', 'ts', 'temp_c', 'lux', 'flags',
                    'gateway_id', 'rssi', 'snr'],
        'references': {
            'device_id': 'devices'
        },
        'key_properties': ['device_id', 'counter'],
        'replication_method': 'INCREMENTAL',
        'replication_keys': ['timestamp']
    }

}

KIND_TO_STREAM = {config['kind']: name for name, config in STREAMS.items()}
