"""Solar position from geo-coordinates and time, plus clear-sky irradiance.

The ephemeris is the standard low-precision approximation (Fourier series
for declination and the equation of time), good to a few tenths of a degree,
which is plenty for a feature input. Timestamps are POSIX seconds, UTC.

The clear-sky model is 1095 * cos(z) * exp(-0.057 / cos(z)) with z the solar
zenith angle in degrees, and 0 whenever the sun is at or below the horizon.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from datetime import datetime, timezone
from typing import Callable, Iterable

import numpy as np

SECONDS_PER_DAY = 86_400


@dataclass(frozen=True)
class GeoLocation:
    """Camera site: latitude/longitude in degrees, timezone offset in minutes."""

    latitude: float
    longitude: float
    timezone_offset_min: int = 0

    def __post_init__(self):
        if not -90.0 <= self.latitude <= 90.0:
            raise ValueError(f"latitude {self.latitude} outside [-90, 90]")
        if not -180.0 <= self.longitude <= 180.0:
            raise ValueError(f"longitude {self.longitude} outside [-180, 180]")


@dataclass(frozen=True)
class SolarPosition:
    zenith_deg: float
    azimuth_deg: float  # clockwise from north, [0, 360)
    timestamp: float

    @property
    def above_horizon(self) -> bool:
        return self.zenith_deg < 90.0


def _declination_eqtime(when_utc: float) -> tuple[float, float]:
    """Solar declination (radians) and equation of time (minutes)."""
    dt = datetime.fromtimestamp(when_utc, tz=timezone.utc)
    if not 1950 <= dt.year <= 2100:
        raise ValueError(f"timestamp year {dt.year} outside supported range 1950-2100")
    doy = dt.timetuple().tm_yday
    hours = dt.hour + dt.minute / 60.0 + (dt.second + dt.microsecond * 1e-6) / 3600.0
    g = 2.0 * math.pi / 365.0 * (doy - 1 + (hours - 12.0) / 24.0)
    decl = (0.006918 - 0.399912 * math.cos(g) + 0.070257 * math.sin(g)
            - 0.006758 * math.cos(2 * g) + 0.000907 * math.sin(2 * g)
            - 0.002697 * math.cos(3 * g) + 0.00148 * math.sin(3 * g))
    eqtime = 229.18 * (0.000075 + 0.001868 * math.cos(g) - 0.032077 * math.sin(g)
                       - 0.014615 * math.cos(2 * g) - 0.040849 * math.sin(2 * g))
    return decl, eqtime


def solar_position(loc: GeoLocation, when_utc: float) -> SolarPosition:
    """Zenith and azimuth of the sun at a site and UTC timestamp."""
    decl, eqtime = _declination_eqtime(when_utc)
    dt = datetime.fromtimestamp(when_utc, tz=timezone.utc)
    utc_minutes = dt.hour * 60.0 + dt.minute + (dt.second + dt.microsecond * 1e-6) / 60.0
    true_solar_min = utc_minutes + eqtime + 4.0 * loc.longitude
    ha_deg = (true_solar_min / 4.0 - 180.0 + 180.0) % 360.0 - 180.0
    ha = math.radians(ha_deg)
    lat = math.radians(loc.latitude)
    cos_z = (math.sin(lat) * math.sin(decl)
             + math.cos(lat) * math.cos(decl) * math.cos(ha))
    zenith = math.degrees(math.acos(min(1.0, max(-1.0, cos_z))))
    az_south = math.degrees(math.atan2(
        math.sin(ha), math.cos(ha) * math.sin(lat) - math.tan(decl) * math.cos(lat)))
    azimuth = (az_south + 180.0) % 360.0
    return SolarPosition(zenith, azimuth, when_utc)


def clearsky_irradiance(zenith_deg):
    """Cloudless-sky irradiance in W/m^2; 0 for the sun at or below horizon.

    Accepts a scalar or array of zenith angles in degrees, [0, 180].
    """
    z = np.asarray(zenith_deg, dtype=np.float64)
    if np.any((z < 0.0) | (z > 180.0)):
        raise ValueError("zenith angle must lie in [0, 180] degrees")
    cos_z = np.cos(np.radians(z))
    out = np.zeros_like(cos_z)
    up = cos_z > 0.0
    cz = cos_z[up]
    out[up] = 1095.0 * cz * np.exp(-0.057 / cz)
    if np.isscalar(zenith_deg) or getattr(zenith_deg, "ndim", 1) == 0:
        return float(out)
    return out


def daylight_filter(records: Iterable, loc: GeoLocation,
                    timestamp: Callable = None) -> list:
    """Keep records whose solar zenith is below 90 degrees, preserving order.

    ``timestamp`` extracts the UTC timestamp from a record; by default the
    record's ``timestamp`` attribute is used, falling back to the record
    itself (so plain floats work).
    """
    if timestamp is None:
        timestamp = lambda r: getattr(r, "timestamp", r)
    return [r for r in records
            if solar_position(loc, float(timestamp(r))).above_horizon]


def local_seconds(loc: GeoLocation, when_utc: float) -> float:
    return when_utc + loc.timezone_offset_min * 60.0


def utc_from_local(local_s: float, timezone_offset_min: int) -> float:
    return local_s - timezone_offset_min * 60.0


def time_of_day_fraction(loc: GeoLocation, when_utc: float) -> float:
    """Fraction of the local day in [0, 1)."""
    return (local_seconds(loc, when_utc) % SECONDS_PER_DAY) / SECONDS_PER_DAY


def parse_utc(text: str) -> float:
    """ISO-8601 UTC timestamp to POSIX seconds ('Z' or offset suffix)."""
    dt = datetime.fromisoformat(text.replace("Z", "+00:00"))
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return dt.timestamp()


def format_utc(when_utc: float) -> str:
    dt = datetime.fromtimestamp(when_utc, tz=timezone.utc)
    if dt.microsecond:
        return dt.strftime("%Y-%m-%dT%H:%M:%S.%f") + "Z"
    return dt.strftime("%Y-%m-%dT%H:%M:%S") + "Z"
