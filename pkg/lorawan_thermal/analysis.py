"""Post-run analysis over stored readings.

Series are immutable and time-ordered; every operation returns a new one.
"""
import math
import os
from dataclasses import dataclass

import matplotlib
matplotlib.use('Agg')
import matplotlib.pyplot as plt  # pylint: disable=wrong-import-position
import numpy as np
import pandas as pd
import singer

from lorawan_thermal.end_node import FLAG_LUX_GROSS_ERROR
from lorawan_thermal.errors import (ExportError, InsufficientDataError, NonPositiveExcessError,
                                    NoOverlapError)
from lorawan_thermal.thermal_world import parse_time_of_day
from lorawan_thermal.transform import format_timestamp, local_zone, parse_timestamp

LOGGER = singer.get_logger()

GROSS_MIN_C = -10.0
GROSS_MAX_C = 60.0
GROSS_MAX_JUMP_C_PER_MIN = 5.0
MIN_FIT_POINTS = 10
DEFAULT_WEATHER_CADENCE = 30
DEFAULT_SUNLIT_LUX = 20000

WEATHER_COLUMNS = ['timestamp', 'dry_bulb_c']
SUMMARY_COLUMNS = ['device_id', 'material', 'readings', 'losses', 'k_hat',
                   'battery_consumed_mah', 'lifetime_h']


@dataclass(frozen=True)
class Point:
    timestamp: object
    temp_c: float
    lux: int = 0
    flags: int = 0

    @property
    def lux_gross_error(self):
        return bool(self.flags & FLAG_LUX_GROSS_ERROR)


def _check_increasing(timestamps, strict, name):
    for previous, current in zip(timestamps, timestamps[1:]):
        if current < previous or (strict and current == previous):
            raise ValueError('{} timestamps must be {}increasing'.format(
                name, 'strictly ' if strict else ''))


@dataclass(frozen=True)
class Series:
    device_id: str
    points: tuple = ()

    def __post_init__(self):
        points = tuple(Point(timestamp=parse_timestamp(p.timestamp), temp_c=float(p.temp_c),
                             lux=int(p.lux), flags=int(p.flags)) for p in self.points)
        _check_increasing([p.timestamp for p in points], True, 'series')
        object.__setattr__(self, 'points', points)

    def __len__(self):
        return len(self.points)

    def __iter__(self):
        return iter(self.points)

    @property
    def timestamps(self):
        return [p.timestamp for p in self.points]

    @property
    def temps(self):
        return np.array([p.temp_c for p in self.points], dtype=float)

    def with_points(self, points):
        return Series(device_id=self.device_id, points=tuple(points))

    @classmethod
    def from_readings(cls, device_id, readings):
        return cls(device_id=device_id,
                   points=tuple(Point(timestamp=r.timestamp, temp_c=r.temp_c, lux=r.lux,
                                      flags=r.flags) for r in readings))

    def to_frame(self):
        return pd.DataFrame({
            'timestamp': pd.to_datetime(self.timestamps, utc=True),
            'temp_c': [p.temp_c for p in self.points],
            'lux': [p.lux for p in self.points],
            'flags': [p.flags for p in self.points],
        }, columns=['timestamp', 'temp_c', 'lux', 'flags'])


@dataclass(frozen=True)
class WeatherSeries:
    station_name: str
    points: tuple = ()
    cadence: int = DEFAULT_WEATHER_CADENCE

    def __post_init__(self):
        if self.cadence <= 0:
            raise ValueError('weather cadence must be positive')
        points = tuple((parse_timestamp(ts), float(value)) for ts, value in self.points)
        _check_increasing([ts for ts, _ in points], False, 'weather')
        object.__setattr__(self, 'points', points)

    def __len__(self):
        return len(self.points)

    def to_frame(self):
        return pd.DataFrame({
            'timestamp': pd.to_datetime([ts for ts, _ in self.points], utc=True),
            'dry_bulb_c': [value for _, value in self.points],
        }, columns=WEATHER_COLUMNS)


def write_weather_csv(weather, path):
    frame = pd.DataFrame([[format_timestamp(ts), '{:.2f}'.format(value)]
                          for ts, value in weather.points],
                         columns=WEATHER_COLUMNS, dtype=object)
    try:
        frame.to_csv(str(path), index=False)
    except OSError as err:
        raise ExportError(path, err)
    return len(frame)


def load_weather_csv(path, station_name=None, cadence=DEFAULT_WEATHER_CADENCE):
    try:
        frame = pd.read_csv(str(path), dtype={'timestamp': str})
    except OSError as err:
        raise ExportError(path, err)
    missing = [c for c in WEATHER_COLUMNS if c not in frame.columns]
    if missing:
        raise ExportError(path, 'missing columns: {}'.format(', '.join(missing)))
    return WeatherSeries(station_name=station_name or os.path.basename(str(path)),
                         points=tuple(zip(frame['timestamp'], frame['dry_bulb_c'])),
                         cadence=cadence)


def filter_gross(series, min_c=GROSS_MIN_C, max_c=GROSS_MAX_C,
                 max_jump_c_per_min=GROSS_MAX_JUMP_C_PER_MIN, filter_lux=False):
    """Drop implausible points; returns (clean series, rejected count).

    Jumps are measured against the last kept point, so a rejected spike never
    drags its neighbours out with it and a second pass changes nothing.
    """
    if not min_c < max_c:
        raise ValueError('min_c must be below max_c')
    if max_jump_c_per_min <= 0:
        raise ValueError('max_jump_c_per_min must be positive')

    kept = []
    for point in series:
        if not min_c <= point.temp_c <= max_c:
            continue
        if filter_lux and point.lux_gross_error:
            continue
        if kept:
            minutes = (point.timestamp - kept[-1].timestamp).total_seconds() / 60.0
            if abs(point.temp_c - kept[-1].temp_c) > max_jump_c_per_min * minutes:
                continue
        kept.append(point)
    return series.with_points(kept), len(series) - len(kept)


def slice_period(series, t0=None, t1=None):
    """Points with t0 <= timestamp < t1."""
    lower = parse_timestamp(t0) if t0 is not None else None
    upper = parse_timestamp(t1) if t1 is not None else None
    if lower is not None and upper is not None and lower > upper:
        raise ValueError('t0 must not be after t1')
    return series.with_points(p for p in series
                              if (lower is None or p.timestamp >= lower)
                              and (upper is None or p.timestamp < upper))


def cooling_fit(series, t0, t1, ambient_floor_c):
    """Cooling constant k (1/h) from a log-linear fit of the excess over ``ambient_floor_c``."""
    window = slice_period(series, t0, t1)
    if len(window) < MIN_FIT_POINTS:
        raise InsufficientDataError('{}: {} points in fit window, need {}'.format(
            series.device_id, len(window), MIN_FIT_POINTS))
    temps = window.temps
    if np.any(temps <= ambient_floor_c):
        raise NonPositiveExcessError('{}: readings at or below the ambient floor {}'.format(
            series.device_id, ambient_floor_c))
    origin = window.points[0].timestamp
    hours = np.array([(ts - origin).total_seconds() / 3600.0 for ts in window.timestamps])
    slope, _ = np.polyfit(hours, np.log(temps - ambient_floor_c), 1)
    return float(-slope)


def merge_external(series, weather):
    """Pair each sensor point with the nearest weather point no more than cadence/2 away."""
    if not len(series) or not len(weather):
        raise NoOverlapError('{}: nothing to merge'.format(series.device_id))
    tolerance = pd.Timedelta(minutes=weather.cadence / 2.0)
    first, last = series.points[0].timestamp, series.points[-1].timestamp
    w_first, w_last = weather.points[0][0], weather.points[-1][0]
    if last + tolerance < w_first or w_last + tolerance < first:
        raise NoOverlapError('{}: sensor {}..{} and weather {}..{} do not overlap'.format(
            series.device_id, format_timestamp(first), format_timestamp(last),
            format_timestamp(w_first), format_timestamp(w_last)))

    left = series.to_frame()
    right = weather.to_frame()
    right['weather_timestamp'] = right['timestamp']
    merged = pd.merge_asof(left, right, on='timestamp', direction='nearest',
                           tolerance=tolerance)
    merged = merged.dropna(subset=['dry_bulb_c']).reset_index(drop=True)
    merged['excess_c'] = merged['temp_c'] - merged['dry_bulb_c']
    return merged


def flag_sunlit(series, lux_threshold=DEFAULT_SUNLIT_LUX):
    """True where the light sensor says the node sits in direct sun."""
    return [p.lux >= lux_threshold and not p.lux_gross_error for p in series]


def _in_window(minutes, window):
    start, end = window
    if start <= end:
        return (minutes >= start) & (minutes < end)
    return (minutes >= start) | (minutes < end)


def excess_by_period(pairs, offset_minutes, day_window=('10:00', '16:00'),
                     night_window=('00:00', '06:00')):
    """Per local date: largest daytime and smallest night-time excess over the dry bulb."""
    columns = ['date', 'day_max_excess_c', 'night_min_excess_c']
    if pairs is None or pairs.empty:
        return pd.DataFrame(columns=columns)
    day = tuple(parse_time_of_day(v) for v in day_window)
    night = tuple(parse_time_of_day(v) for v in night_window)

    local = pairs['timestamp'].dt.tz_convert(local_zone(offset_minutes))
    minutes = local.dt.hour * 60 + local.dt.minute
    frame = pd.DataFrame({'date': local.dt.date, 'excess_c': pairs['excess_c'].values})
    day_max = frame[_in_window(minutes, day).values].groupby('date')['excess_c'].max()
    night_min = frame[_in_window(minutes, night).values].groupby('date')['excess_c'].min()
    result = pd.concat([day_max.rename('day_max_excess_c'),
                        night_min.rename('night_min_excess_c')], axis=1)
    return result.reset_index().rename(columns={'index': 'date'})[columns]


def _format_cell(value, pattern='{:.4f}'):
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return ''
    return pattern.format(value)


def summarize_device(series, node, fit_window=None, ambient_floor_c=None):
    k_hat = None
    if fit_window is not None and ambient_floor_c is not None:
        try:
            k_hat = cooling_fit(series, fit_window[0], fit_window[1], ambient_floor_c)
        except (InsufficientDataError, NonPositiveExcessError) as err:
            LOGGER.info('No cooling fit for {}: {}'.format(series.device_id, err))
    return {
        'device_id': series.device_id,
        'material': node.get('material', ''),
        'readings': len(series),
        'losses': max(int(node.get('frames', 0)) - len(series), 0),
        'k_hat': k_hat,
        'battery_consumed_mah': node.get('consumed_mah'),
        'lifetime_h': node.get('lifetime_h'),
    }


def plot_series(name, series_list, path, weather=None):
    fig, ax = plt.subplots(figsize=(10, 4))
    try:
        for series in series_list:
            if len(series):
                ax.plot(series.timestamps, series.temps, label=series.device_id,
                        gid=series.device_id, linewidth=1)
        if weather is not None and len(weather):
            ax.plot([ts for ts, _ in weather.points], [v for _, v in weather.points],
                    label='{} dry bulb'.format(weather.station_name), linestyle='--',
                    color='black', linewidth=1)
        ax.set_title(name)
        ax.set_xlabel('time (UTC)')
        ax.set_ylabel('temperature (°C)')
        ax.legend(loc='best')
        fig.autofmt_xdate()
        fig.savefig(str(path), format='svg')
    except OSError as err:
        raise ExportError(path, err)
    finally:
        plt.close(fig)
    return path


def emit_report(name, series_by_device, nodes, out_dir, weather=None, fit_window=None,
                ambient_floor_c=None):
    """Write ``<name>.svg`` and ``summary.csv`` under ``out_dir``; returns their paths.

    ``nodes`` maps device_id to its run summary (material, frames, consumed_mah,
    lifetime_h); only nodes that ran at least one cycle are summarised.
    """
    try:
        os.makedirs(str(out_dir), exist_ok=True)
    except OSError as err:
        raise ExportError(out_dir, err)

    rows = []
    for device_id in sorted(nodes):
        node = nodes[device_id]
        if not node.get('cycles'):
            continue
        series = series_by_device.get(device_id) or Series(device_id=device_id)
        rows.append(summarize_device(series, node, fit_window, ambient_floor_c))

    summary_path = os.path.join(str(out_dir), 'summary.csv')
    frame = pd.DataFrame([[row['device_id'], row['material'], str(row['readings']),
                           str(row['losses']), _format_cell(row['k_hat']),
                           _format_cell(row['battery_consumed_mah'], '{:.3f}'),
                           _format_cell(row['lifetime_h'], '{:.2f}')] for row in rows],
                         columns=SUMMARY_COLUMNS, dtype=object)
    try:
        frame.to_csv(summary_path, index=False)
    except OSError as err:
        raise ExportError(summary_path, err)

    plot_path = None
    series_list = [series_by_device[d] for d in sorted(series_by_device)]
    if any(len(s) for s in series_list):
        plot_path = plot_series(name, series_list, os.path.join(str(out_dir),
                                                                '{}.svg'.format(name)),
                                weather)
    LOGGER.info('Report for {} written to {}'.format(name, out_dir))
    return {'summary': summary_path, 'plot': plot_path, 'rows': rows}
