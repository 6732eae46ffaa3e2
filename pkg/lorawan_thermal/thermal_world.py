"""Ground-truth thermal forcing for a deployment.

Ambient dry-bulb temperature follows a piecewise-linear daily profile, the
sun follows a half-sine between sunrise and sunset, and every instrumented
surface relaxes towards ``ambient + solar_gain * insolation`` at its own
cooling rate. A probe above the surface reads a blend of the two.
"""
import math
from dataclasses import dataclass, field, replace

import numpy as np
import singer

LOGGER = singer.get_logger()

MINUTES_PER_DAY = 1440
MAX_STEP_MINUTES = 5.0
SURFACE_BOUNDS_C = (-20.0, 90.0)

# Summer-night defaults; scenario files override every value.
DEFAULT_KNOTS = (
    (0, 15.5),
    (300, 15.0),
    (540, 26.0),
    (840, 36.0),
    (1050, 30.0),
    (1200, 18.0),
    (1350, 16.0),
)
DEFAULT_SUNRISE = 330
DEFAULT_SUNSET = 1170

DEFAULT_MATERIALS = {
    'grass': {'k_cool': 0.5, 'solar_gain': 4.0, 'probe_coupling': 0.6},
    'concrete': {'k_cool': 0.08, 'solar_gain': 10.0, 'probe_coupling': 0.8},
    'red_brick': {'k_cool': 1.0, 'solar_gain': 6.5, 'probe_coupling': 0.8},
    'tin': {'k_cool': 1.2, 'solar_gain': 25.0, 'probe_coupling': 0.7},
    'softfall': {'k_cool': 0.3, 'solar_gain': 12.0, 'probe_coupling': 0.7},
}


def parse_time_of_day(value):
    """'HH:MM' -> minutes after midnight."""
    hours, _, minutes = str(value).strip().partition(':')
    total = int(hours) * 60 + int(minutes or 0)
    if not 0 <= total < MINUTES_PER_DAY:
        raise ValueError('time of day out of range: {}'.format(value))
    return total


@dataclass(frozen=True)
class AmbientForcing:
    day_profile: tuple = DEFAULT_KNOTS
    sunrise: float = DEFAULT_SUNRISE
    sunset: float = DEFAULT_SUNSET
    insolation_peak: float = 1.0

    def __post_init__(self):
        knots = tuple(sorted((float(t), float(c)) for t, c in self.day_profile))
        if len(knots) < 2:
            raise ValueError('day profile needs at least two knots')
        minutes = [t for t, _ in knots]
        if len(set(minutes)) != len(minutes):
            raise ValueError('day profile has repeated knot times')
        if minutes[0] < 0 or minutes[-1] >= MINUTES_PER_DAY:
            raise ValueError('day profile knots must lie in [0, 1440)')
        if not self.sunrise < self.sunset:
            raise ValueError('sunrise must precede sunset')
        if not 0.0 <= self.insolation_peak <= 1.0:
            raise ValueError('insolation_peak must lie in [0, 1]')
        object.__setattr__(self, 'day_profile', knots)

    @property
    def solar_noon(self):
        return (self.sunrise + self.sunset) / 2.0


@dataclass(frozen=True)
class MaterialThermalModel:
    name: str
    k_cool: float
    solar_gain: float = 0.0
    probe_coupling: float = 0.0

    def __post_init__(self):
        if self.k_cool <= 0:
            raise ValueError('{}: k_cool must be positive'.format(self.name))
        if self.solar_gain < 0:
            raise ValueError('{}: solar_gain must not be negative'.format(self.name))
        if not 0.0 <= self.probe_coupling <= 1.0:
            raise ValueError('{}: probe_coupling must lie in [0, 1]'.format(self.name))

    @classmethod
    def default(cls, name):
        return cls(name=name, **DEFAULT_MATERIALS[name])


@dataclass(frozen=True)
class SurfaceState:
    surface_temp: float
    time: float = 0.0

    def __post_init__(self):
        low, high = SURFACE_BOUNDS_C
        if not math.isfinite(self.surface_temp) or not low <= self.surface_temp <= high:
            raise ValueError('surface temperature {} outside [{}, {}]'.format(
                self.surface_temp, low, high))


def ambient_at(forcing, t):
    """Dry-bulb temperature at time of day ``t`` (minutes), wrapping midnight."""
    if not 0 <= t < MINUTES_PER_DAY:
        raise ValueError('time of day {} outside [0, 1440)'.format(t))
    minutes = [k[0] for k in forcing.day_profile]
    temps = [k[1] for k in forcing.day_profile]
    return float(np.interp(t, minutes, temps, period=MINUTES_PER_DAY))


def insolation_at(forcing, t):
    if not 0 <= t < MINUTES_PER_DAY:
        raise ValueError('time of day {} outside [0, 1440)'.format(t))
    if t <= forcing.sunrise or t >= forcing.sunset:
        return 0.0
    phase = (t - forcing.sunrise) / (forcing.sunset - forcing.sunrise)
    return forcing.insolation_peak * math.sin(math.pi * phase)


def target_temp(material, forcing, t):
    return ambient_at(forcing, t) + material.solar_gain * insolation_at(forcing, t)


def time_of_day(elapsed, start_minute_of_day=0):
    return (start_minute_of_day + elapsed) % MINUTES_PER_DAY


def step_surface(material, state, forcing, dt, start_minute_of_day=0):
    """One explicit-Euler step of Newton relaxation towards the sun-shifted target."""
    if not 0 < dt <= MAX_STEP_MINUTES:
        raise ValueError('dt must lie in (0, {}] minutes, got {}'.format(MAX_STEP_MINUTES, dt))
    tod = time_of_day(state.time, start_minute_of_day)
    target = target_temp(material, forcing, tod)
    rate = -material.k_cool * (state.surface_temp - target)
    return replace(state,
                   surface_temp=state.surface_temp + rate * dt / 60.0,
                   time=state.time + dt)


def probe_reading(material, state, forcing, t):
    """Air temperature seen by the probe trailed above the surface at time of day ``t``."""
    ambient = ambient_at(forcing, t)
    return ambient + material.probe_coupling * (state.surface_temp - ambient)


@dataclass
class ThermalWorld:
    """Surfaces under every placed node, stepped together on the master tick."""
    forcing: AmbientForcing
    materials: dict
    start_minute_of_day: int = 0
    elapsed: float = 0.0
    surfaces: dict = field(default_factory=dict)
    placements: dict = field(default_factory=dict)

    def place(self, key, material_name, initial_temp):
        if material_name not in self.materials:
            raise KeyError('unknown material: {}'.format(material_name))
        self.placements[key] = material_name
        self.surfaces[key] = SurfaceState(surface_temp=float(initial_temp), time=self.elapsed)

    def time_of_day(self, elapsed=None):
        return time_of_day(self.elapsed if elapsed is None else elapsed, self.start_minute_of_day)

    def ambient(self, elapsed=None):
        return ambient_at(self.forcing, self.time_of_day(elapsed))

    def insolation(self, elapsed=None):
        return insolation_at(self.forcing, self.time_of_day(elapsed))

    def material_for(self, key):
        return self.materials[self.placements[key]]

    def surface(self, key):
        return self.surfaces[key].surface_temp

    def probe(self, key):
        return probe_reading(self.material_for(key), self.surfaces[key], self.forcing,
                             self.time_of_day())

    def step(self, dt=1.0):
        for key in sorted(self.surfaces):
            self.surfaces[key] = step_surface(self.material_for(key), self.surfaces[key],
                                              self.forcing, dt, self.start_minute_of_day)
        self.elapsed += dt
