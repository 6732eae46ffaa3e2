import datetime
import os

import pytest
import pytz
from pytest import raises

from lorawan_thermal.errors import ScenarioError
from lorawan_thermal.lora_link import LOS, OBSTRUCTED
from lorawan_thermal.scenario import (DEFAULT_PROJECT, fixture_path, parse_distances,
                                      parse_profile, parse_scenario, parse_scenario_text)
from tests.configuration.fixtures import START, MINIMAL_SCENARIO

BUNDLED = ['concrete_vs_grass', 'playground_materials', 'redbrick_week_with_weather',
           'tin_vs_concrete']


def test_minimal_scenario_takes_defaults():
    scenario = parse_scenario_text(MINIMAL_SCENARIO)
    assert scenario.name == 'minimal'
    assert scenario.duration_min == 120
    assert scenario.seed == 5
    assert scenario.radio.spreading_factor == 7
    assert scenario.environment.mode == LOS
    assert scenario.projects == {DEFAULT_PROJECT: None}
    assert scenario.weather is None
    assert scenario.expectations == []
    assert scenario.ambient_floor_c == 15.0
    node = scenario.node('n1')
    assert node.project == DEFAULT_PROJECT
    assert node.registered
    assert node.config.tx_interval == 2
    assert node.config.distance_to_gateway == {'gw1': 100.0}
    # no initial temperature: the surface starts at ambient
    assert scenario.initial_surface(node) == 15.5


def test_unknown_material_names_line_and_field():
    text = MINIMAL_SCENARIO.replace('material = grass', 'material = tin')
    with raises(ScenarioError) as error:
        parse_scenario_text(text)
    assert error.value.field == 'node.material'
    assert error.value.line == 16


@pytest.mark.parametrize(
    'extra, field',
    [
        pytest.param('colour = blue\n', 'node.colour', id='unknown_key'),
        pytest.param('device_id = n2\n', 'node.device_id', id='duplicate_key'),
        pytest.param('antenna_raised = maybe\n', 'node.antenna_raised', id='bad_boolean'),
        pytest.param('tx_interval = 45\n', 'node', id='interval_out_of_range'),
        pytest.param('[event]\nat_min = 500\nnode = n1\nkind = loss\n', 'event.at_min',
                     id='event_after_end'),
        pytest.param('[event]\nat_min = 10\nnode = n9\nkind = loss\n', 'event.node',
                     id='event_unknown_node'),
        pytest.param('[event]\nat_min = 10\nnode = n1\nkind = reboot\n', 'event.kind',
                     id='event_unknown_kind'),
        pytest.param('[material]\nname = basalt\n', 'material.k_cool', id='material_without_k'),
        pytest.param('[overheat]\np_skip = 1.5\n', 'overheat.p_skip', id='p_skip_above_one'),
        pytest.param('[expect]\nname = nothing_to_check\n', 'expect.check', id='expect_no_check'),
    ],
)
def test_invalid_scenarios(extra, field):
    with raises(ScenarioError) as error:
        parse_scenario_text(MINIMAL_SCENARIO + extra)
    assert error.value.field == field


def test_singleton_section_given_twice():
    with raises(ScenarioError) as error:
        parse_scenario_text(MINIMAL_SCENARIO + '[scenario]\nname = again\n')
    assert error.value.line == 18


def test_unknown_section():
    with raises(ScenarioError) as error:
        parse_scenario_text(MINIMAL_SCENARIO + '[satellite]\n')
    assert 'satellite' in str(error.value)


def test_key_outside_section():
    with raises(ScenarioError):
        parse_scenario_text('name = floating\n' + MINIMAL_SCENARIO)


def test_distance_to_unknown_gateway():
    with raises(ScenarioError) as error:
        parse_scenario_text(MINIMAL_SCENARIO.replace('gw1:100', 'gw9:100'))
    assert error.value.field == 'node.distance'


def test_duration_and_seed_bounds():
    with raises(ScenarioError):
        parse_scenario_text(MINIMAL_SCENARIO.replace('duration_h = 2', 'duration_h = -1'))
    with raises(ScenarioError):
        parse_scenario_text(MINIMAL_SCENARIO.replace('seed = 5', 'seed = {}'.format(2 ** 64)))
    zero = parse_scenario_text(MINIMAL_SCENARIO.replace('duration_h = 2', 'duration_h = 0'))
    assert zero.duration_min == 0


def test_scenario_needs_a_gateway():
    text = MINIMAL_SCENARIO.replace('[gateway]\nid = gw1\n', '').replace(
        'distance = gw1:100', '')
    with raises(ScenarioError) as error:
        parse_scenario_text(text)
    assert error.value.field == 'gateway'


def test_events_are_sorted_and_normalized():
    scenario = parse_scenario_text(MINIMAL_SCENARIO
                                   + '[event]\nat_min = 90\nnode = n1\nkind = recharge\n'
                                   + '[event]\nat_min = 30\nnode = n1\nkind = Loss\n')
    assert [(e.at_min, e.kind) for e in scenario.events] == [(30, 'LOSS'), (90, 'RECHARGE')]


def test_link_overrides():
    scenario = parse_scenario_text(MINIMAL_SCENARIO + '[link]\nspreading_factor = 12\n'
                                   'mode = obstructed\nshadowing_sigma_db = 0\n')
    assert scenario.radio.spreading_factor == 12
    assert scenario.radio.low_datarate_optimize
    assert scenario.environment.mode == OBSTRUCTED
    assert scenario.environment.shadowing_sigma_db == 0.0


def test_profile_and_distance_helpers():
    assert parse_profile('00:00 15.5, 14:00 36') == ((0, 15.5), (840, 36.0))
    assert parse_distances('gw1:300, gw2: 450.5') == {'gw1': 300.0, 'gw2': 450.5}
    with raises(ValueError):
        parse_distances('gw1 300')


@pytest.mark.parametrize('name', BUNDLED)
def test_bundled_scenarios_parse(name):
    path = fixture_path(name)
    assert os.path.basename(path) == '{}.ini'.format(name)
    scenario = parse_scenario(path)
    assert scenario.name == name
    assert scenario.nodes
    assert scenario.expectations


def test_concrete_vs_grass_layout():
    scenario = parse_scenario(fixture_path('concrete_vs_grass'))
    assert [n.device_id for n in scenario.nodes] == ['grass-1', 'concrete-1']
    assert set(scenario.materials) == {'grass', 'concrete'}
    assert scenario.duration_min == 14 * 60
    assert scenario.projects == {'campus-heat': 'researcher'}
    assert scenario.fit_window == (18 * 60 + 30, 22 * 60 + 30)
    # 18:30 at +08:00
    assert scenario.start_utc == START
    assert scenario.start_utc.tzinfo is not None
    assert scenario.start_utc == datetime.datetime(2024, 1, 15, 10, 30, tzinfo=pytz.utc)


def test_playground_has_unregistered_neighbour():
    scenario = parse_scenario(fixture_path('playground_materials'))
    assert [n.device_id for n in scenario.nodes if not n.registered] == ['neighbour-1']
    assert len(scenario.gateways) == 2


def test_weather_section():
    scenario = parse_scenario(fixture_path('redbrick_week_with_weather'))
    assert scenario.weather.station == 'airport'
    assert scenario.weather.cadence == 30
    assert scenario.duration_min == 7 * 24 * 60


def test_missing_scenario_file(tmp_path):
    with raises(ScenarioError):
        parse_scenario(tmp_path / 'nowhere.ini')
