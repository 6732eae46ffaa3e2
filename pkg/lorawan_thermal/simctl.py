"""Seeded end-to-end runs of a scenario, and the checks run against their output."""
import datetime
import hashlib
import json
import os
from dataclasses import dataclass, field, replace

import jsonlines
import numpy as np
import singer
from singer import metrics

from lorawan_thermal.analysis import (Series, WeatherSeries, emit_report, excess_by_period,
                                      cooling_fit, load_weather_csv, merge_external,
                                      write_weather_csv)
from lorawan_thermal.app_store import AppStore
from lorawan_thermal.backhaul import (DROPPED, Accounting, DeviceRegistry, GatewayConfig,
                                      NetworkServer, UplinkPacket, gateway_receive)
from lorawan_thermal.end_node import (EMITTED, SKIPPED, BatteryState, NodeState, apply_loss_event,
                                      lifetime_estimate, recharge, run_cycle)
from lorawan_thermal.errors import (ConfigurationError, InsufficientDataError,
                                    InvariantViolationError, NoOverlapError,
                                    NonPositiveExcessError, NotFoundError)
from lorawan_thermal.lora_link import deliver
from lorawan_thermal.scenario import parse_scenario, parse_scenario_text
from lorawan_thermal.thermal_world import ThermalWorld, ambient_at, parse_time_of_day, time_of_day
from lorawan_thermal.transform import epoch_ms

LOGGER = singer.get_logger()

TICK_MINUTES = 1

STORE_FILE = 'store.sqlite'
TRACE_FILE = 'trace.jsonl'
REGISTRY_FILE = 'registry.csv'
SCENARIO_FILE = 'scenario.ini'
ACCOUNTING_FILE = 'accounting.json'
NODES_FILE = 'nodes.json'
WEATHER_FILE = 'weather.csv'
REPORT_DIR = 'report'
REPLAY_STORE_FILE = 'replay.sqlite'

DEFAULT_DAY_WINDOW = ('10:00', '16:00')
DEFAULT_NIGHT_WINDOW = ('00:00', '05:00')


def _key_int(key):
    return int.from_bytes(hashlib.sha256(str(key).encode('utf-8')).digest()[:8], 'little')


def substream(seed, *keys):
    """Independent generator for one named random channel of a run."""
    entropy = [int(seed)] + [_key_int(key) for key in keys]
    return np.random.default_rng(np.random.SeedSequence(entropy))


@dataclass
class RunArtifacts:
    run_dir: str
    accounting: Accounting = field(default_factory=Accounting)
    nodes: dict = field(default_factory=dict)
    report: dict = field(default_factory=dict)

    def path(self, name):
        return os.path.join(self.run_dir, name)

    @property
    def store_path(self):
        return self.path(STORE_FILE)

    @property
    def trace_path(self):
        return self.path(TRACE_FILE)

    @property
    def registry_path(self):
        return self.path(REGISTRY_FILE)

    @property
    def weather_path(self):
        return self.path(WEATHER_FILE)

    def scenario(self):
        return parse_scenario(self.path(SCENARIO_FILE))

    def write_summaries(self):
        with open(self.path(ACCOUNTING_FILE), 'w') as file:
            json.dump(self.accounting.to_dict(), file, indent=2, sort_keys=True)
        with open(self.path(NODES_FILE), 'w') as file:
            json.dump(self.nodes, file, indent=2, sort_keys=True)

    @classmethod
    def load(cls, run_dir):
        artifacts = cls(run_dir=str(run_dir))
        try:
            with open(artifacts.path(ACCOUNTING_FILE)) as file:
                artifacts.accounting = Accounting(**json.load(file))
            with open(artifacts.path(NODES_FILE)) as file:
                artifacts.nodes = json.load(file)
        except OSError as err:
            raise NotFoundError('{} is not a completed run: {}'.format(run_dir, err))
        return artifacts


def bootstrap(store, scenario):
    """Create the project's entities in the store; returns the webhook registry."""
    users = {name: store.upsert_entity('user', {'name': name}) for name in scenario.users}
    projects = {}
    for name, owner in sorted(scenario.projects.items()):
        projects[name] = store.upsert_entity('project', {'name': name,
                                                         'owner_user': users.get(owner)})
    materials = {}
    for name, material in sorted(scenario.materials.items()):
        materials[name] = store.upsert_entity('material', {
            'name': name,
            'k_cool': material.k_cool,
            'solar_gain': material.solar_gain,
            'probe_coupling': material.probe_coupling})
    for gateway in scenario.gateways:
        store.upsert_entity('gateway', {'gateway_id': gateway.gateway_id,
                                        'name': gateway.name,
                                        'position_x': gateway.position[0],
                                        'position_y': gateway.position[1]})

    registry = DeviceRegistry()
    for spec in scenario.nodes:
        if not spec.registered:
            LOGGER.info('Node {} is not registered to any project'.format(spec.device_id))
            continue
        location_id = store.upsert_entity('location', {
            'label': spec.location,
            'surface': spec.surface,
            'distance_to_gateways': dict(spec.config.distance_to_gateway)})
        store.upsert_entity('device', {'dev_eui': spec.config.eui_hex,
                                       'name': spec.device_id,
                                       'project_id': projects[spec.project],
                                       'material_id': materials[spec.config.material_ref],
                                       'location_id': location_id})
        registry.register(spec.config.dev_eui, spec.project, spec.device_id)
    return registry


def _reset(path):
    if os.path.exists(path):
        os.remove(path)
    for suffix in ('-wal', '-shm'):
        if os.path.exists(path + suffix):
            os.remove(path + suffix)


def synthetic_weather(scenario):
    start = scenario.start_utc
    cadence = scenario.weather.cadence
    points = []
    for minute in range(0, scenario.duration_min + 1, cadence):
        points.append((start + datetime.timedelta(minutes=minute),
                       round(ambient_at(scenario.forcing,
                                        time_of_day(minute, scenario.start_minute)), 2)))
    return WeatherSeries(station_name=scenario.weather.station, points=tuple(points),
                         cadence=cadence)


def _node_summary(spec, node, radio, skip_minutes):
    if node.died_at is not None:
        lifetime_h = node.died_at / 60.0
    else:
        lifetime_h = lifetime_estimate(spec.config, replace(node.battery, consumed=0.0), radio)
    return {
        'device_id': spec.device_id,
        'dev_eui': spec.config.eui_hex,
        'material': spec.config.material_ref,
        'registered': spec.registered,
        'tx_interval': spec.config.tx_interval,
        'status': node.status,
        'cycles': node.cycles,
        'frames': node.frames,
        'skips': node.skips,
        'gross_errors': node.gross_errors,
        'skip_minutes': skip_minutes,
        'consumed_mah': round(node.battery.consumed, 6),
        'died_at_h': None if node.died_at is None else round(node.died_at / 60.0, 4),
        'lost_at_h': None if node.lost_at is None else round(node.lost_at / 60.0, 4),
        'lifetime_h': round(lifetime_h, 4),
    }


def run(scenario, out_dir, seed=None):
    """Simulate ``scenario`` minute by minute and write the run directory."""
    seed = scenario.seed if seed is None else int(seed)
    artifacts = RunArtifacts(run_dir=str(out_dir))
    os.makedirs(artifacts.run_dir, exist_ok=True)
    _reset(artifacts.store_path)
    with open(artifacts.path(SCENARIO_FILE), 'w') as file:
        file.write(scenario.source)

    LOGGER.info('START run: {} (seed {}, {} minutes)'.format(scenario.name, seed,
                                                              scenario.duration_min))
    world = ThermalWorld(forcing=scenario.forcing, materials=scenario.materials,
                         start_minute_of_day=scenario.start_minute)
    nodes = {}
    specs = {}
    for spec in sorted(scenario.nodes, key=lambda s: s.device_id):
        node = NodeState(config=spec.config,
                         battery=BatteryState(**scenario.battery),
                         rng=substream(seed, 'node', spec.config.eui_hex),
                         overheat=dict(scenario.overheat))
        world.place(node.key, spec.config.material_ref, scenario.initial_surface(spec))
        nodes[spec.device_id] = node
        specs[spec.device_id] = spec
    link_rngs = {(device_id, gateway_id): substream(seed, 'link', node.key, gateway_id)
                 for device_id, node in nodes.items()
                 for gateway_id in node.config.distance_to_gateway}
    gateways = {g.gateway_id: GatewayConfig(gateway_id=g.gateway_id, name=g.name,
                                            position=g.position) for g in scenario.gateways}
    events = {}
    for event in scenario.events:
        events.setdefault(event.at_min, []).append(event)
    skip_minutes = {device_id: [] for device_id in nodes}

    start_ms = epoch_ms(scenario.start_utc)
    frames_emitted = 0
    with metrics.job_timer('simulation'), \
            AppStore(artifacts.store_path) as store, \
            jsonlines.open(artifacts.trace_path, mode='w') as trace:
        registry = bootstrap(store, scenario)
        with NetworkServer(registry, store, trace_writer=trace) as server:
            for t in range(0, scenario.duration_min, TICK_MINUTES):
                for event in events.get(t, []):
                    if event.kind == 'LOSS':
                        apply_loss_event(nodes[event.device_id], t)
                    else:
                        recharge(nodes[event.device_id], t)

                for device_id, node in nodes.items():
                    if t % node.config.tx_interval:
                        continue
                    outcome = run_cycle(node, world, scenario.radio, t)
                    if outcome.status == SKIPPED:
                        skip_minutes[device_id].append(t)
                    if outcome.status != EMITTED:
                        continue
                    frames_emitted += 1
                    received_at_ms = start_ms + t * 60000 + int(round(outcome.airtime_ms))
                    for gateway_id in sorted(node.config.distance_to_gateway):
                        delivery = deliver(scenario.radio,
                                           scenario.environment,
                                           node.config.distance_to_gateway[gateway_id],
                                           node.config.antenna_raised,
                                           link_rngs[(device_id, gateway_id)],
                                           gateway_id)
                        packet = gateway_receive(gateways[gateway_id], outcome.frame, delivery,
                                                 received_at_ms)
                        if packet == DROPPED:
                            server.radio_drop()
                        else:
                            server.receive(packet)
                world.step(TICK_MINUTES)
        registry.write_csv(artifacts.registry_path)

    artifacts.accounting = server.accounting
    artifacts.accounting.frames_emitted = frames_emitted
    artifacts.nodes = {device_id: _node_summary(specs[device_id], node, scenario.radio,
                                                skip_minutes[device_id])
                       for device_id, node in nodes.items()}
    for summary in artifacts.nodes.values():
        LOGGER.info('Node {}: {} cycles, {} frames, {} skips, {:.1f} mAh, status {}'.format(
            summary['device_id'], summary['cycles'], summary['frames'], summary['skips'],
            summary['consumed_mah'], summary['status']))

    if scenario.weather is not None:
        write_weather_csv(synthetic_weather(scenario), artifacts.weather_path)
    artifacts.write_summaries()
    try:
        artifacts.accounting.check()
    except InvariantViolationError as err:
        LOGGER.critical('Accounting dump: {}'.format(json.dumps(err.accounting, sort_keys=True)))
        raise
    artifacts.report = report(artifacts.run_dir, scenario)
    LOGGER.info('FINISHED run: {}, {} readings stored'.format(scenario.name,
                                                             artifacts.accounting.stored))
    return artifacts


def first_occurrence(scenario, minute_of_day, after=None):
    """UTC datetime of the first local ``minute_of_day`` at or after ``after`` (default start)."""
    start = scenario.start_utc
    reference = time_of_day(0, scenario.start_minute)
    if after is not None:
        offset = int((after - start).total_seconds() // 60)
        reference = time_of_day(offset, scenario.start_minute)
        start = after
    return start + datetime.timedelta(minutes=(minute_of_day - reference) % 1440)


def resolve_window(scenario, from_value, to_value):
    """Local HH:MM pair -> [t0, t1) in UTC; ``to`` is the first occurrence after ``from``."""
    if from_value is None and to_value is None:
        return None, None
    start = scenario.start_utc
    t0 = first_occurrence(scenario, parse_time_of_day(from_value)) if from_value else start
    if to_value is None:
        return t0, None
    t1 = first_occurrence(scenario, parse_time_of_day(to_value), after=t0)
    if t1 == t0:
        t1 += datetime.timedelta(days=1)
    return t0, t1


@dataclass(frozen=True)
class CheckResult:
    name: str
    check: str
    passed: bool
    measured: object = None
    detail: str = ''


def within_bounds(value, params):
    if value is None:
        return False
    if 'lower' in params and value < params['lower']:
        return False
    if 'upper' in params and value > params['upper']:
        return False
    if 'above' in params and not value > params['above']:
        return False
    if 'below' in params and not value < params['below']:
        return False
    return True


class Verifier(object):
    def __init__(self, scenario, artifacts, store):
        self.scenario = scenario
        self.artifacts = artifacts
        self.store = store

    def _device(self, params, key='device', required=True):
        device_id = params.get(key)
        if device_id is None:
            if required:
                raise ConfigurationError('check needs {}'.format(key))
            return None
        if device_id not in self.artifacts.nodes:
            raise ConfigurationError('unknown device {}'.format(device_id))
        return device_id

    def _series(self, device_id, params):
        t0, t1 = resolve_window(self.scenario, params.get('from'), params.get('to'))
        try:
            readings = self.store.query_readings(device_id, t0, t1)
        except NotFoundError:
            readings = []
        return Series.from_readings(device_id, readings)

    def min_temp(self, params):
        series = self._series(self._device(params), params)
        return float(series.temps.min()) if len(series) else None, {}

    def max_temp(self, params):
        series = self._series(self._device(params), params)
        return float(series.temps.max()) if len(series) else None, {}

    def reading_count(self, params):
        device_id = self._device(params, required=False)
        devices = [device_id] if device_id else sorted(self.artifacts.nodes)
        return sum(len(self._series(d, params)) for d in devices), {}

    def delivery_rate(self, params):
        device_id = self._device(params, required=False)
        devices = [device_id] if device_id else sorted(self.artifacts.nodes)
        frames = sum(self.artifacts.nodes[d]['frames'] for d in devices)
        stored = sum(len(self._series(d, {})) for d in devices)
        return (stored / frames) if frames else None, {}

    def lifetime_h(self, params):
        return self.artifacts.nodes[self._device(params)]['lifetime_h'], {}

    def k_order(self, params):
        greater = self._device(params, 'greater')
        lesser = self._device(params, 'lesser')
        window = (params.get('from'), params.get('to'))
        if window == (None, None) and self.scenario.fit_window:
            window = tuple('{:02d}:{:02d}'.format(m // 60, m % 60)
                           for m in self.scenario.fit_window)
        t0, t1 = resolve_window(self.scenario, *window)
        fits = {}
        for device_id in (greater, lesser):
            series = self._series(device_id, {})
            try:
                fits[device_id] = cooling_fit(series, t0, t1, self.scenario.ambient_floor_c)
            except (InsufficientDataError, NonPositiveExcessError) as err:
                return None, {'error': str(err)}
        difference = fits[greater] - fits[lesser]
        params = dict(params)
        params.setdefault('above', 0.0)
        return difference, {'params': params, 'fits': fits}

    def skip_window(self, params):
        device_id = self._device(params)
        allowed = (parse_time_of_day(params.get('from', DEFAULT_DAY_WINDOW[0])),
                   parse_time_of_day(params.get('to', DEFAULT_DAY_WINDOW[1])))
        outside = 0
        for minute in self.artifacts.nodes[device_id]['skip_minutes']:
            local = time_of_day(minute, self.scenario.start_minute)
            if not allowed[0] <= local < allowed[1]:
                outside += 1
        params = dict(params)
        params.setdefault('upper', 0)
        return outside, {'params': params,
                         'skips': len(self.artifacts.nodes[device_id]['skip_minutes'])}

    def skip_count(self, params):
        return self.artifacts.nodes[self._device(params)]['skips'], {}

    def excess(self, params):
        device_id = self._device(params)
        if not os.path.exists(self.artifacts.weather_path):
            return None, {'error': 'run has no weather series'}
        cadence = self.scenario.weather.cadence if self.scenario.weather else 30
        weather = load_weather_csv(self.artifacts.weather_path, cadence=cadence)
        try:
            pairs = merge_external(self._series(device_id, {}), weather)
        except NoOverlapError as err:
            return None, {'error': str(err)}
        period = params.get('period', 'day').strip().lower()
        if period not in ('day', 'night'):
            raise ConfigurationError('excess period must be day or night')
        default = DEFAULT_DAY_WINDOW if period == 'day' else DEFAULT_NIGHT_WINDOW
        window = (params.get('from', default[0]), params.get('to', default[1]))
        kwargs = {'day_window': window} if period == 'day' else {'night_window': window}
        table = excess_by_period(pairs, self.scenario.timezone_offset_min, **kwargs)
        if period == 'day':
            values = table['day_max_excess_c'].dropna()
            return (float(values.min()) if len(values) else None), {}
        values = table['night_min_excess_c'].dropna()
        return (float(values.max()) if len(values) else None), {}

    CHECKS = ('min_temp', 'max_temp', 'reading_count', 'delivery_rate', 'lifetime_h', 'k_order',
              'skip_window', 'skip_count', 'excess')

    def evaluate(self, expectation):
        if expectation.check not in self.CHECKS:
            raise ConfigurationError('unknown check {} in expectation {}'.format(
                expectation.check, expectation.name))
        measured, extra = getattr(self, expectation.check)(expectation.params)
        params = extra.get('params', expectation.params)
        passed = within_bounds(measured, params)
        detail = extra.get('error', '')
        if 'fits' in extra:
            detail = ', '.join('{} k={:.4f}/h'.format(d, k) for d, k in extra['fits'].items())
        return CheckResult(name=expectation.name, check=expectation.check, passed=passed,
                           measured=measured, detail=detail)


def verify(run_dir, scenario=None):
    artifacts = RunArtifacts.load(run_dir)
    scenario = scenario or artifacts.scenario()
    results = []
    with AppStore(artifacts.store_path) as store:
        verifier = Verifier(scenario, artifacts, store)
        for expectation in scenario.expectations:
            result = verifier.evaluate(expectation)
            LOGGER.info('{} {} ({}): measured {}{}'.format(
                'PASS' if result.passed else 'FAIL', result.name, result.check,
                result.measured, ' [{}]'.format(result.detail) if result.detail else ''))
            results.append(result)
    return results


def report(run_dir, scenario=None):
    artifacts = RunArtifacts.load(run_dir) if scenario is None else RunArtifacts(
        run_dir=str(run_dir))
    if scenario is None:
        scenario = artifacts.scenario()
    else:
        with open(artifacts.path(NODES_FILE)) as file:
            artifacts.nodes = json.load(file)
    series = {}
    with AppStore(artifacts.store_path) as store:
        for device_id in store.device_names():
            series[device_id] = Series.from_readings(device_id, store.query_readings(device_id))
    weather = None
    if os.path.exists(artifacts.weather_path):
        weather = load_weather_csv(artifacts.weather_path,
                                   station_name=scenario.weather.station if scenario.weather
                                   else None,
                                   cadence=scenario.weather.cadence if scenario.weather else 30)
    fit_window = None
    if scenario.fit_window:
        fit_window = resolve_window(scenario, *('{:02d}:{:02d}'.format(m // 60, m % 60)
                                                for m in scenario.fit_window))
    return emit_report(scenario.name, series, artifacts.nodes, artifacts.path(REPORT_DIR),
                       weather=weather, fit_window=fit_window,
                       ambient_floor_c=scenario.ambient_floor_c)


def replay(trace_path, registry_path, store_path=None, scenario=None):
    """Feed a packet trace back through dedup, webhook and a fresh store."""
    run_dir = os.path.dirname(os.path.abspath(str(trace_path)))
    if scenario is None:
        scenario = parse_scenario(os.path.join(run_dir, SCENARIO_FILE))
    store_path = store_path or os.path.join(run_dir, REPLAY_STORE_FILE)
    _reset(str(store_path))
    registry = DeviceRegistry.read_csv(registry_path)
    LOGGER.info('START replay: {} into {}'.format(trace_path, store_path))
    with AppStore(store_path) as store:
        bootstrap(store, scenario)
        with NetworkServer(registry, store) as server:
            with jsonlines.open(str(trace_path)) as reader:
                for record in reader:
                    server.receive(UplinkPacket.from_trace(record))
    server.accounting.check()
    LOGGER.info('FINISHED replay: {} readings stored'.format(server.accounting.stored))
    return server.accounting, store_path


def run_text(text, out_dir, seed=None):
    return run(parse_scenario_text(text), out_dir, seed)
