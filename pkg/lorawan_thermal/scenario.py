"""Scenario files: the deployment plan a run is built from.

Line oriented: ``# comment``, ``[section]`` headers and ``key = value`` pairs.
List sections (material, gateway, node, project, user, event, expect) repeat;
every other section appears at most once. See docs/SCENARIO_FORMAT.md.
"""
import datetime
import os
from dataclasses import dataclass, field

import singer

from lorawan_thermal.end_node import DEFAULT_BATTERY, DEFAULT_OVERHEAT, NodeConfig, parse_dev_eui
from lorawan_thermal.errors import ScenarioError
from lorawan_thermal.lora_link import LOS, OBSTRUCTED, PathEnvironment, RadioParams
from lorawan_thermal.thermal_world import (DEFAULT_KNOTS, DEFAULT_MATERIALS, DEFAULT_SUNRISE,
                                           DEFAULT_SUNSET, AmbientForcing, MaterialThermalModel,
                                           ambient_at, parse_time_of_day)
from lorawan_thermal.transform import local_start_to_utc

LOGGER = singer.get_logger()

DEFAULT_PROJECT = 'default'
DEFAULT_USER = 'default'
DEFAULT_START_DATE = datetime.date(2024, 1, 15)
EVENT_KINDS = ('LOSS', 'RECHARGE')

REPEATABLE = ('material', 'gateway', 'node', 'project', 'user', 'event', 'expect')

# section -> accepted keys
SECTION_KEYS = {
    'scenario': ('name', 'duration_h', 'start_date', 'start_time', 'timezone_offset_min', 'seed',
                 'ambient_floor_c', 'fit_from', 'fit_to'),
    'forcing': ('profile', 'sunrise', 'sunset', 'insolation_peak'),
    'link': ('spreading_factor', 'bandwidth', 'coding_rate', 'preamble', 'explicit_header',
             'crc', 'low_datarate_optimize', 'tx_power_dbm', 'mode', 'path_loss_exponent',
             'reference_loss_db', 'shadowing_sigma_db', 'antenna_bonus_db'),
    'battery': tuple(DEFAULT_BATTERY),
    'overheat': tuple(DEFAULT_OVERHEAT),
    'weather': ('station', 'cadence'),
    'material': ('name', 'k_cool', 'solar_gain', 'probe_coupling'),
    'gateway': ('id', 'name', 'x', 'y'),
    'project': ('name', 'owner'),
    'user': ('name',),
    'node': ('dev_eui', 'device_id', 'material', 'project', 'location', 'surface',
             'initial_surface_c', 'tx_interval', 'antenna_raised', 'low_power_timer',
             'enclosure_shaded', 'registered', 'distance'),
    'event': ('at_min', 'node', 'kind'),
    'expect': ('name', 'check', 'device', 'greater', 'lesser', 'from', 'to', 'period',
               'lower', 'upper', 'above', 'below'),
}

BOUND_KEYS = ('lower', 'upper', 'above', 'below')
TRUE_VALUES = ('true', 'yes', '1', 'on')
FALSE_VALUES = ('false', 'no', '0', 'off')


@dataclass
class Section:
    name: str
    line: int
    values: dict = field(default_factory=dict)

    def has(self, key):
        return key in self.values

    def raw(self, key):
        return self.values[key][0]

    def line_of(self, key):
        return self.values[key][1] if key in self.values else self.line

    def get(self, key, convert=str, default=None, required=False):
        if key not in self.values:
            if required:
                raise ScenarioError('missing required key', line=self.line,
                                    field='{}.{}'.format(self.name, key))
            return default
        value, line = self.values[key]
        try:
            return convert(value)
        except (TypeError, ValueError) as err:
            raise ScenarioError('invalid value {!r}: {}'.format(value, err), line=line,
                                field='{}.{}'.format(self.name, key))


def to_bool(value):
    text = str(value).strip().lower()
    if text in TRUE_VALUES:
        return True
    if text in FALSE_VALUES:
        return False
    raise ValueError('expected a boolean')


def to_int(value):
    return int(str(value).strip(), 0)


def to_date(value):
    return datetime.date.fromisoformat(str(value).strip())


def parse_profile(value):
    """'HH:MM temp, HH:MM temp, ...' -> knots in minutes."""
    knots = []
    for item in filter(None, (part.strip() for part in str(value).split(','))):
        when, _, temp = item.partition(' ')
        knots.append((parse_time_of_day(when), float(temp)))
    return tuple(knots)


def parse_distances(value):
    """'gw1:300, gw2:450' -> {gateway_id: metres}."""
    distances = {}
    for item in filter(None, (part.strip() for part in str(value).split(','))):
        gateway_id, sep, metres = item.partition(':')
        if not sep:
            raise ValueError('expected gateway:metres, got {!r}'.format(item))
        distances[gateway_id.strip()] = float(metres)
    return distances


def tokenize(text):
    sections = []
    current = None
    for number, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.strip()
        if not line or line.startswith('#') or line.startswith(';'):
            continue
        if line.startswith('['):
            if not line.endswith(']'):
                raise ScenarioError('unterminated section header', line=number)
            name = line[1:-1].strip().lower()
            if name not in SECTION_KEYS:
                raise ScenarioError('unknown section [{}]'.format(name), line=number)
            if name not in REPEATABLE and any(s.name == name for s in sections):
                raise ScenarioError('section [{}] given twice'.format(name), line=number)
            current = Section(name=name, line=number)
            sections.append(current)
            continue
        key, sep, value = line.partition('=')
        key = key.strip().lower()
        if not sep or not key:
            raise ScenarioError('expected key = value', line=number)
        if current is None:
            raise ScenarioError('key outside any section', line=number, field=key)
        if key not in SECTION_KEYS[current.name]:
            raise ScenarioError('unknown key', line=number,
                                field='{}.{}'.format(current.name, key))
        if key in current.values:
            raise ScenarioError('key given twice', line=number,
                                field='{}.{}'.format(current.name, key))
        current.values[key] = (value.strip(), number)
    return sections


@dataclass(frozen=True)
class NodeSpec:
    config: NodeConfig
    project: str = DEFAULT_PROJECT
    location: str = None
    surface: str = None
    initial_surface_c: float = None
    registered: bool = True

    @property
    def device_id(self):
        return self.config.device_id


@dataclass(frozen=True)
class GatewaySpec:
    gateway_id: str
    name: str = ''
    position: tuple = (0.0, 0.0)


@dataclass(frozen=True)
class EventSpec:
    at_min: int
    device_id: str
    kind: str


@dataclass(frozen=True)
class WeatherSpec:
    station: str = 'synthetic'
    cadence: int = 30


@dataclass(frozen=True)
class Expectation:
    name: str
    check: str
    params: dict = field(default_factory=dict)
    line: int = None


@dataclass
class Scenario:
    name: str
    duration_h: float
    start_date: datetime.date = DEFAULT_START_DATE
    start_minute: int = 0
    timezone_offset_min: int = 0
    seed: int = 0
    ambient_floor_c: float = None
    fit_window: tuple = None
    forcing: AmbientForcing = field(default_factory=AmbientForcing)
    materials: dict = field(default_factory=dict)
    gateways: list = field(default_factory=list)
    nodes: list = field(default_factory=list)
    radio: RadioParams = field(default_factory=RadioParams)
    environment: PathEnvironment = field(default_factory=PathEnvironment)
    battery: dict = field(default_factory=lambda: dict(DEFAULT_BATTERY))
    overheat: dict = field(default_factory=lambda: dict(DEFAULT_OVERHEAT))
    projects: dict = field(default_factory=dict)
    users: list = field(default_factory=list)
    events: list = field(default_factory=list)
    weather: WeatherSpec = None
    expectations: list = field(default_factory=list)
    source: str = ''

    @property
    def duration_min(self):
        return int(round(self.duration_h * 60))

    @property
    def start_utc(self):
        return local_start_to_utc(self.start_date, self.start_minute, self.timezone_offset_min)

    def node(self, device_id):
        for spec in self.nodes:
            if spec.device_id == device_id:
                return spec
        return None

    def initial_surface(self, spec):
        if spec.initial_surface_c is not None:
            return spec.initial_surface_c
        return ambient_at(self.forcing, self.start_minute)


def _single(sections, name):
    for section in sections:
        if section.name == name:
            return section
    return Section(name=name, line=0)


def _build_error(section, key, err):
    return ScenarioError(str(err), line=section.line_of(key),
                         field='{}.{}'.format(section.name, key))


def _parse_materials(sections):
    materials = {}
    for section in sections:
        name = section.get('name', required=True)
        defaults = DEFAULT_MATERIALS.get(name, {})
        if name in materials:
            raise ScenarioError('duplicate material {}'.format(name), line=section.line_of('name'),
                                field='material.name')
        if 'k_cool' not in defaults and not section.has('k_cool'):
            raise ScenarioError('missing required key', line=section.line,
                                field='material.k_cool')
        try:
            materials[name] = MaterialThermalModel(
                name=name,
                k_cool=section.get('k_cool', float, defaults.get('k_cool')),
                solar_gain=section.get('solar_gain', float, defaults.get('solar_gain', 0.0)),
                probe_coupling=section.get('probe_coupling', float,
                                           defaults.get('probe_coupling', 0.0)))
        except ValueError as err:
            raise ScenarioError(str(err), line=section.line, field='material')
    return materials


def _parse_radio(section):
    try:
        radio = RadioParams(
            spreading_factor=section.get('spreading_factor', to_int, 7),
            bandwidth=section.get('bandwidth', float, 125000.0),
            coding_rate_index=section.get('coding_rate', to_int, 1),
            preamble_symbols=section.get('preamble', to_int, 8),
            explicit_header=section.get('explicit_header', to_bool, True),
            crc_on=section.get('crc', to_bool, True),
            low_datarate_optimize=section.get('low_datarate_optimize', to_bool, None),
            tx_power_dbm=section.get('tx_power_dbm', float, 14.0))
    except ValueError as err:
        raise ScenarioError(str(err), line=section.line, field='link')
    mode = section.get('mode', lambda v: v.strip().upper(), LOS)
    if mode not in (LOS, OBSTRUCTED):
        raise ScenarioError('mode must be LOS or OBSTRUCTED', line=section.line_of('mode'),
                            field='link.mode')
    try:
        environment = PathEnvironment(
            mode=mode,
            path_loss_exponent=section.get('path_loss_exponent', float, None),
            reference_loss_db=section.get('reference_loss_db', float, 40.0),
            shadowing_sigma_db=section.get('shadowing_sigma_db', float, 2.0),
            antenna_bonus_db=section.get('antenna_bonus_db', float, 6.0))
    except ValueError as err:
        raise ScenarioError(str(err), line=section.line, field='link')
    return radio, environment


def _parse_numeric_block(section, defaults):
    values = dict(defaults)
    for key, default in defaults.items():
        values[key] = section.get(key, type(default), default)
    return values


def _parse_expectation(section, index):
    params = {}
    for key in section.values:
        if key in ('name', 'check'):
            continue
        params[key] = section.get(key, float) if key in BOUND_KEYS else section.get(key)
        if key in ('from', 'to'):
            section.get(key, parse_time_of_day)
    return Expectation(name=section.get('name', default='expect{}'.format(index)),
                       check=section.get('check', required=True).strip().lower(),
                       params=params,
                       line=section.line)


def _parse_node(section, scenario):
    device_id = section.get('device_id', required=True)
    material = section.get('material', required=True)
    if material not in scenario.materials:
        raise ScenarioError('unknown material {}'.format(material),
                            line=section.line_of('material'), field='node.material')
    section.get('dev_eui', parse_dev_eui, required=True)
    distances = section.get('distance', parse_distances, {})
    known = {g.gateway_id for g in scenario.gateways}
    for gateway_id in distances:
        if gateway_id not in known:
            raise ScenarioError('unknown gateway {}'.format(gateway_id),
                                line=section.line_of('distance'), field='node.distance')
    project = section.get('project', default=None)
    if project is None:
        project = sorted(scenario.projects)[0] if scenario.projects else DEFAULT_PROJECT
    elif project not in scenario.projects:
        raise ScenarioError('unknown project {}'.format(project),
                            line=section.line_of('project'), field='node.project')
    try:
        config = NodeConfig(dev_eui=section.get('dev_eui'),
                            device_id=device_id,
                            material_ref=material,
                            tx_interval=section.get('tx_interval', to_int, 2),
                            distance_to_gateway=distances,
                            antenna_raised=section.get('antenna_raised', to_bool, False),
                            low_power_timer=section.get('low_power_timer', to_bool, False),
                            enclosure_shaded=section.get('enclosure_shaded', to_bool, False))
    except ValueError as err:
        raise ScenarioError(str(err), line=section.line, field='node')
    if not distances:
        LOGGER.warning('Node {} lists no gateway in reach'.format(device_id))
    return NodeSpec(config=config,
                    project=project,
                    location=section.get('location', default=device_id),
                    surface=section.get('surface', default=material),
                    initial_surface_c=section.get('initial_surface_c', float, None),
                    registered=section.get('registered', to_bool, True))


def build_scenario(sections, source=''):
    head = _single(sections, 'scenario')
    scenario = Scenario(name=head.get('name', required=True),
                        duration_h=head.get('duration_h', float, required=True),
                        start_date=head.get('start_date', to_date, DEFAULT_START_DATE),
                        start_minute=head.get('start_time', parse_time_of_day, 0),
                        timezone_offset_min=head.get('timezone_offset_min', to_int, 0),
                        seed=head.get('seed', to_int, 0),
                        source=source)
    if scenario.duration_h < 0:
        raise ScenarioError('duration must not be negative', line=head.line_of('duration_h'),
                            field='scenario.duration_h')
    if not 0 <= scenario.seed < 2 ** 64:
        raise ScenarioError('seed must be a 64-bit unsigned integer', line=head.line_of('seed'),
                            field='scenario.seed')
    if head.has('fit_from') or head.has('fit_to'):
        scenario.fit_window = (head.get('fit_from', parse_time_of_day, required=True),
                               head.get('fit_to', parse_time_of_day, required=True))

    forcing = _single(sections, 'forcing')
    try:
        scenario.forcing = AmbientForcing(
            day_profile=forcing.get('profile', parse_profile, DEFAULT_KNOTS),
            sunrise=forcing.get('sunrise', parse_time_of_day, DEFAULT_SUNRISE),
            sunset=forcing.get('sunset', parse_time_of_day, DEFAULT_SUNSET),
            insolation_peak=forcing.get('insolation_peak', float, 1.0))
    except ValueError as err:
        raise ScenarioError(str(err), line=forcing.line, field='forcing')
    scenario.ambient_floor_c = head.get(
        'ambient_floor_c', float, min(temp for _, temp in scenario.forcing.day_profile))

    scenario.radio, scenario.environment = _parse_radio(_single(sections, 'link'))
    scenario.battery = _parse_numeric_block(_single(sections, 'battery'), DEFAULT_BATTERY)
    scenario.overheat = _parse_numeric_block(_single(sections, 'overheat'), DEFAULT_OVERHEAT)
    if not 0.0 <= scenario.overheat['p_skip'] <= 1.0:
        raise ScenarioError('p_skip must lie in [0, 1]', field='overheat.p_skip',
                            line=_single(sections, 'overheat').line_of('p_skip'))

    weather = [s for s in sections if s.name == 'weather']
    if weather:
        scenario.weather = WeatherSpec(station=weather[0].get('station', default='synthetic'),
                                       cadence=weather[0].get('cadence', to_int, 30))
        if scenario.weather.cadence <= 0:
            raise ScenarioError('cadence must be positive', line=weather[0].line_of('cadence'),
                                field='weather.cadence')

    scenario.users = [s.get('name', required=True) for s in sections if s.name == 'user']
    for section in (s for s in sections if s.name == 'project'):
        name = section.get('name', required=True)
        owner = section.get('owner', default=None)
        if owner is not None and owner not in scenario.users:
            raise ScenarioError('unknown user {}'.format(owner), line=section.line_of('owner'),
                                field='project.owner')
        scenario.projects[name] = owner

    scenario.materials = _parse_materials([s for s in sections if s.name == 'material'])

    for section in (s for s in sections if s.name == 'gateway'):
        gateway_id = section.get('id', required=True)
        if any(g.gateway_id == gateway_id for g in scenario.gateways):
            raise ScenarioError('duplicate gateway {}'.format(gateway_id),
                                line=section.line_of('id'), field='gateway.id')
        scenario.gateways.append(GatewaySpec(gateway_id=gateway_id,
                                             name=section.get('name', default=gateway_id),
                                             position=(section.get('x', float, 0.0),
                                                       section.get('y', float, 0.0))))

    node_sections = [s for s in sections if s.name == 'node']
    for section in node_sections:
        spec = _parse_node(section, scenario)
        if scenario.node(spec.device_id) is not None:
            raise ScenarioError('duplicate device {}'.format(spec.device_id),
                                line=section.line_of('device_id'), field='node.device_id')
        if any(n.config.dev_eui == spec.config.dev_eui for n in scenario.nodes):
            raise ScenarioError('duplicate dev_eui {}'.format(spec.config.eui_hex),
                                line=section.line_of('dev_eui'), field='node.dev_eui')
        scenario.nodes.append(spec)
    if not scenario.projects:
        scenario.projects[DEFAULT_PROJECT] = None
    if not scenario.nodes:
        raise ScenarioError('at least one [node] is required', line=head.line, field='node')
    if not scenario.gateways:
        raise ScenarioError('at least one [gateway] is required', line=head.line,
                            field='gateway')

    for section in (s for s in sections if s.name == 'event'):
        kind = section.get('kind', lambda v: v.strip().upper(), required=True)
        if kind not in EVENT_KINDS:
            raise ScenarioError('kind must be one of {}'.format(', '.join(EVENT_KINDS)),
                                line=section.line_of('kind'), field='event.kind')
        device_id = section.get('node', required=True)
        if scenario.node(device_id) is None:
            raise ScenarioError('unknown node {}'.format(device_id),
                                line=section.line_of('node'), field='event.node')
        at_min = section.get('at_min', to_int, required=True)
        if not 0 <= at_min <= scenario.duration_min:
            raise ScenarioError('event time outside the run', line=section.line_of('at_min'),
                                field='event.at_min')
        scenario.events.append(EventSpec(at_min=at_min, device_id=device_id, kind=kind))
    scenario.events.sort(key=lambda e: (e.at_min, e.device_id, e.kind))

    scenario.expectations = [_parse_expectation(s, i) for i, s in
                             enumerate((s for s in sections if s.name == 'expect'), start=1)]
    return scenario


def parse_scenario_text(text):
    return build_scenario(tokenize(text), source=text)


def parse_scenario(path):
    try:
        with open(str(path)) as file:
            text = file.read()
    except OSError as err:
        raise ScenarioError('cannot read scenario {}: {}'.format(path, err))
    scenario = parse_scenario_text(text)
    LOGGER.info('Loaded scenario {} from {}: {} nodes, {} gateways, {:.1f} h'.format(
        scenario.name, path, len(scenario.nodes), len(scenario.gateways), scenario.duration_h))
    return scenario


def fixture_path(name):
    """Path of a bundled scenario, by name without extension."""
    return os.path.join(os.path.dirname(os.path.realpath(__file__)), 'fixtures',
                        '{}.ini'.format(name))
