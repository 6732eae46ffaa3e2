import math

import pytest
from pytest import raises

from lorawan_thermal import thermal_world
from lorawan_thermal.thermal_world import (AmbientForcing, MaterialThermalModel, SurfaceState,
                                           ThermalWorld, ambient_at, insolation_at,
                                           parse_time_of_day, probe_reading, step_surface)
from tests.configuration.fixtures import flat_forcing


@pytest.mark.parametrize(
    'minute,expected',
    [
        pytest.param(0, 15.5, id='midnight'),
        pytest.param(300, 15.0, id='dawn_floor'),
        pytest.param(840, 36.0, id='afternoon_peak'),
        pytest.param(1395, 15.75, id='wraps_past_last_knot'),
    ],
)
def test_ambient_interpolates_default_profile(minute, expected):
    assert ambient_at(AmbientForcing(), minute) == pytest.approx(expected)


def test_ambient_rejects_time_outside_day():
    with raises(ValueError):
        ambient_at(AmbientForcing(), 1440)


def test_insolation_follows_half_sine():
    forcing = AmbientForcing()
    assert insolation_at(forcing, forcing.sunrise) == 0.0
    assert insolation_at(forcing, forcing.sunset) == 0.0
    assert insolation_at(forcing, 100) == 0.0
    assert insolation_at(forcing, forcing.solar_noon) == pytest.approx(1.0)


def test_forcing_rejects_sunset_before_sunrise():
    with raises(ValueError):
        AmbientForcing(sunrise=1200, sunset=600)


def test_parse_time_of_day():
    assert parse_time_of_day('18:30') == 1110
    with raises(ValueError):
        parse_time_of_day('24:00')


@pytest.mark.parametrize('dt', [0, -1, 5.5])
def test_step_rejects_out_of_range_dt(dt):
    material = MaterialThermalModel.default('grass')
    with raises(ValueError):
        step_surface(material, SurfaceState(20.0), flat_forcing(), dt)


def test_surface_at_target_stays_put():
    material = MaterialThermalModel.default('concrete')
    state = SurfaceState(20.0)
    for _ in range(30):
        state = step_surface(material, state, flat_forcing(20.0), 1.0)
    assert state.surface_temp == pytest.approx(20.0)
    assert state.time == 30.0


def test_surface_relaxes_geometrically_without_overshoot():
    material = MaterialThermalModel.default('grass')
    state = SurfaceState(25.0)
    previous = state.surface_temp
    for _ in range(60):
        state = step_surface(material, state, flat_forcing(15.0), 1.0)
        assert 15.0 < state.surface_temp < previous
        previous = state.surface_temp
    expected = 15.0 + 10.0 * (1 - material.k_cool / 60.0) ** 60
    assert state.surface_temp == pytest.approx(expected)


@pytest.mark.parametrize(
    'hours, tolerance',
    [
        pytest.param(4, {'abs': 0.1}, id='four_hours'),
        pytest.param(12, {'rel': 0.005}, id='twelve_hours'),
    ],
)
def test_cooling_tracks_exponential_solution(hours, tolerance):
    material = MaterialThermalModel(name='grass', k_cool=0.5)
    state = SurfaceState(28.0)
    for _ in range(hours * 60):
        state = step_surface(material, state, flat_forcing(15.0), 1.0)
    exact = 15.0 + 13.0 * math.exp(-0.5 * hours)
    assert state.surface_temp == pytest.approx(exact, **tolerance)


def test_faster_material_is_never_warmer_at_night():
    forcing = AmbientForcing()
    ranked = sorted(thermal_world.DEFAULT_MATERIALS, key=lambda name: (
        thermal_world.DEFAULT_MATERIALS[name]['k_cool']))
    states = {name: SurfaceState(30.0) for name in ranked}
    # 20:00 to 04:20, after sunset and before sunrise
    for _ in range(500):
        states = {name: step_surface(MaterialThermalModel.default(name), state, forcing, 1.0,
                                     start_minute_of_day=1200)
                  for name, state in states.items()}
        temps = [states[name].surface_temp for name in ranked]
        assert temps == sorted(temps, reverse=True)


def test_largest_step_keeps_fastest_material_stable():
    material = MaterialThermalModel.default('tin')
    state = step_surface(material, SurfaceState(60.0), flat_forcing(15.0), 5.0)
    assert 15.0 < state.surface_temp < 60.0


def test_probe_blends_surface_and_ambient():
    material = MaterialThermalModel(name='probe', k_cool=0.5, probe_coupling=0.25)
    assert probe_reading(material, SurfaceState(40.0), flat_forcing(20.0), 600) == \
        pytest.approx(25.0)


@pytest.mark.parametrize(
    'kwargs',
    [
        pytest.param({'k_cool': 0.0}, id='zero_k'),
        pytest.param({'k_cool': 0.5, 'solar_gain': -1.0}, id='negative_gain'),
        pytest.param({'k_cool': 0.5, 'probe_coupling': 1.5}, id='coupling_above_one'),
    ],
)
def test_material_validation(kwargs):
    with raises(ValueError):
        MaterialThermalModel(name='bad', **kwargs)


def test_default_materials_are_complete():
    for name in thermal_world.DEFAULT_MATERIALS:
        assert MaterialThermalModel.default(name).k_cool > 0
    assert MaterialThermalModel.default('tin').k_cool == 1.2


def test_surface_state_bounds():
    with raises(ValueError):
        SurfaceState(95.0)
    with raises(ValueError):
        SurfaceState(math.nan)


def test_world_steps_every_surface():
    world = ThermalWorld(forcing=flat_forcing(15.0),
                         materials={'grass': MaterialThermalModel.default('grass'),
                                    'concrete': MaterialThermalModel.default('concrete')},
                         start_minute_of_day=1380)
    world.place('a', 'grass', 25.0)
    world.place('b', 'concrete', 25.0)
    for _ in range(120):
        world.step(1.0)
    assert world.elapsed == 120.0
    assert world.time_of_day() == 60.0
    assert world.surface('a') < world.surface('b') < 25.0


def test_world_rejects_unknown_material():
    world = ThermalWorld(forcing=flat_forcing(), materials={})
    with raises(KeyError):
        world.place('a', 'asphalt', 20.0)
