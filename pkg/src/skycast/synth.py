"""Deterministic synthetic sky-video scenes with exact irradiance truth.

A scene renders a fisheye-style sky view: a brightness-graded background, a
sun disk placed from the real solar-position code, and Gaussian cloud blobs
advected linearly with toroidal wraparound. The irradiance label couples the
clear-sky value to the total cloud opacity integrated over the sun disk:

    label = max(0, clearsky(z) * (1 - attenuation * occ) + noise)

Noise is drawn per frame from a seed derived from (scene seed, frame index),
so `scene_truth` reproduces generated labels bit-exactly at frame times and
is noiseless (the clean ground truth) everywhere else. Frames are rendered
at 128x128 and written as PNG so they exercise the real decode/resample
path; manifests use the exact dataset-directory layout of `skycast.data`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from PIL import Image

from . import solar
from .data import AUX_HEADER, MANIFEST_HEADER
from .errors import DataError
from .solar import GeoLocation

SUN_SIGMA_PX = 3.0
SUN_OCC_RADIUS_PX = 4.0


@dataclass(frozen=True)
class CloudSpec:
    """One Gaussian opacity blob: center/velocity in render pixels."""

    center: tuple[float, float]  # (x, y) at frame 0
    sigma: tuple[float, float]  # (sx, sy) of the footprint
    rho: float  # correlation of the footprint axes, (-1, 1)
    peak_opacity: float  # in [0, 1]
    velocity: tuple[float, float]  # px per frame

    def __post_init__(self):
        if not 0.0 <= self.peak_opacity <= 1.0:
            raise ValueError(f"peak opacity {self.peak_opacity} outside [0, 1]")
        if not -0.95 <= self.rho <= 0.95:
            raise ValueError(f"cloud rho {self.rho} outside [-0.95, 0.95]")


@dataclass(frozen=True)
class WeatherParams:
    """Slowly varying weather processes; wind couples to cloud speed."""

    wind_base: float = 3.0
    wind_per_px_speed: float = 4.0
    wind_wave_amp: float = 0.8
    wind_wave_period_h: float = 30.0
    wind_jitter: float = 0.15
    temp_base: float = 18.0
    temp_amp: float = 7.0
    humidity_base: float = 45.0
    humidity_amp: float = 18.0
    humidity_period_h: float = 41.0
    pressure_base: float = 1012.0
    pressure_amp: float = 6.0
    pressure_period_h: float = 57.0


@dataclass(frozen=True)
class SceneConfig:
    location: GeoLocation
    first_day: str  # ISO date of the first frame day (local)
    days: int = 1
    day_start_hour: float = 8.0  # local clock hours
    day_end_hour: float = 18.0
    cadence_s: float = 600.0
    clouds: tuple = ()
    attenuation: float = 0.85  # opacity -> irradiance coupling in [0, 1]
    noise_std: float = 2.0  # label noise, W/m^2, truncated at 4 sigma
    weather: WeatherParams = field(default_factory=WeatherParams)
    seed: int = 0
    render_size: int = 128
    sun_brightness: float = 1.0
    station_id: str = "synth"

    def __post_init__(self):
        if self.cadence_s <= 0:
            raise ValueError("cadence must be positive")
        if not 0.0 <= self.attenuation <= 1.0:
            raise ValueError(f"attenuation {self.attenuation} outside [0, 1]")
        if self.day_end_hour <= self.day_start_hour:
            raise ValueError("day_end_hour must exceed day_start_hour")

    @property
    def frames_per_day(self) -> int:
        span = (self.day_end_hour - self.day_start_hour) * 3600.0
        return int(round(span / self.cadence_s))

    @property
    def start_utc(self) -> float:
        local_start = solar.parse_utc(self.first_day + "T00:00:00Z") + self.day_start_hour * 3600.0
        return solar.utc_from_local(local_start, self.location.timezone_offset_min)

    def frame_times(self) -> list[float]:
        t0 = self.start_utc
        return [t0 + d * 86400.0 + k * self.cadence_s
                for d in range(self.days) for k in range(self.frames_per_day)]

    def frame_index(self, when_utc: float) -> float:
        """Continuous frame index; integral exactly at frame times."""
        day = math.floor((when_utc - self.start_utc) / 86400.0)
        day = min(max(day, 0), self.days - 1)
        offset = when_utc - (self.start_utc + day * 86400.0)
        return day * self.frames_per_day + offset / self.cadence_s


def random_clouds(count: int, seed: int, render_size: int = 128,
                  speed_scale: float = 1.0) -> tuple:
    """Seeded cloud population with varied sizes, opacities and velocities."""
    rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(0xC10D,)))
    clouds = []
    for _ in range(count):
        direction = rng.uniform(0.0, 2.0 * math.pi)
        speed = rng.uniform(0.6, 1.8) * speed_scale
        clouds.append(CloudSpec(
            center=(float(rng.uniform(0, render_size)), float(rng.uniform(0, render_size))),
            sigma=(float(rng.uniform(7, 14)), float(rng.uniform(7, 14))),
            rho=float(rng.uniform(-0.4, 0.4)),
            peak_opacity=float(rng.uniform(0.75, 1.0)),
            velocity=(speed * math.cos(direction), speed * math.sin(direction)),
        ))
    return tuple(clouds)


# ---------------------------------------------------------------------------
# closed-form scene state


def _frame_rng(config: SceneConfig, frame: int) -> np.random.Generator:
    return np.random.default_rng(
        np.random.SeedSequence(entropy=config.seed, spawn_key=(int(frame),)))


def cloud_centers(config: SceneConfig, frame_index: float) -> list[tuple[float, float]]:
    size = config.render_size
    return [((c.center[0] + c.velocity[0] * frame_index) % size,
             (c.center[1] + c.velocity[1] * frame_index) % size)
            for c in config.clouds]


def _opacity_at(config: SceneConfig, frame_index: float,
                xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Total cloud opacity at points (xs, ys), clipped to [0, 1].

    The field wraps toroidally, matching the advection wraparound.
    """
    size = config.render_size
    total = np.zeros_like(xs, dtype=np.float64)
    for cloud, (cx, cy) in zip(config.clouds, cloud_centers(config, frame_index)):
        dx = (xs - cx + size / 2.0) % size - size / 2.0
        dy = (ys - cy + size / 2.0) % size - size / 2.0
        sx, sy = cloud.sigma
        rho = cloud.rho
        norm = 1.0 / (1.0 - rho * rho)
        q = norm * ((dx / sx) ** 2 - 2.0 * rho * (dx / sx) * (dy / sy) + (dy / sy) ** 2)
        total += cloud.peak_opacity * np.exp(-0.5 * q)
    return np.clip(total, 0.0, 1.0)


def sun_pixel(config: SceneConfig, when_utc: float) -> tuple[float, float, float]:
    """(x, y, zenith_deg) of the sun on the render grid (fisheye mapping)."""
    pos = solar.solar_position(config.location, when_utc)
    size = config.render_size
    radius = (pos.zenith_deg / 90.0) * (size / 2.0) * 0.92
    az = math.radians(pos.azimuth_deg)
    x = size / 2.0 + radius * math.sin(az)
    y = size / 2.0 - radius * math.cos(az)
    return x, y, pos.zenith_deg


_DISK_OFFSETS = None


def _disk_offsets() -> tuple[np.ndarray, np.ndarray]:
    global _DISK_OFFSETS
    if _DISK_OFFSETS is None:
        r = int(math.ceil(SUN_OCC_RADIUS_PX))
        ys, xs = np.mgrid[-r:r + 1, -r:r + 1]
        keep = xs ** 2 + ys ** 2 <= SUN_OCC_RADIUS_PX ** 2
        _DISK_OFFSETS = (xs[keep].astype(np.float64), ys[keep].astype(np.float64))
    return _DISK_OFFSETS


def occlusion(config: SceneConfig, when_utc: float) -> float:
    """Mean cloud opacity over the sun-disk footprint, in [0, 1]."""
    frame_index = config.frame_index(when_utc)
    sx, sy, _ = sun_pixel(config, when_utc)
    ox, oy = _disk_offsets()
    return float(_opacity_at(config, frame_index, sx + ox, sy + oy).mean())


def _label_noise(config: SceneConfig, frame_index: float) -> float:
    if config.noise_std <= 0.0:
        return 0.0
    nearest = round(frame_index)
    if abs(frame_index - nearest) > 1e-9:
        return 0.0  # between frames the truth is noiseless
    draw = float(_frame_rng(config, int(nearest)).normal(0.0, config.noise_std))
    bound = 4.0 * config.noise_std
    return min(max(draw, -bound), bound)


def scene_truth(config: SceneConfig, when_utc: float) -> tuple[float, float]:
    """(occlusion, irradiance label) at any time.

    At exact frame times this matches `generate_scene` output bit for bit;
    elsewhere the label is the noiseless ground truth.
    """
    occ = occlusion(config, when_utc)
    pos = solar.solar_position(config.location, when_utc)
    clear = solar.clearsky_irradiance(pos.zenith_deg)
    label = clear * (1.0 - config.attenuation * occ)
    label += _label_noise(config, config.frame_index(when_utc))
    return occ, max(0.0, label)


def weather_at(config: SceneConfig, when_utc: float) -> tuple[float, float, float, float]:
    """(wind m/s, humidity %, pressure hPa, temperature C) at a time."""
    w = config.weather
    t_rel = when_utc - config.start_utc
    mean_speed = (np.mean([math.hypot(*c.velocity) for c in config.clouds])
                  if config.clouds else 0.0)
    frame_index = config.frame_index(when_utc)
    nearest = round(frame_index)
    if abs(frame_index - nearest) <= 1e-9:
        rng = _frame_rng(config, int(nearest))
        rng.normal()  # first draw is reserved for the label noise
        jitter = float(rng.normal(0.0, w.wind_jitter))
    else:
        jitter = 0.0
    wind = (w.wind_base + w.wind_per_px_speed * mean_speed
            + w.wind_wave_amp * math.sin(2.0 * math.pi * t_rel / (w.wind_wave_period_h * 3600.0))
            + jitter)
    local_hour = (solar.local_seconds(config.location, when_utc) % 86400.0) / 3600.0
    temp = w.temp_base + w.temp_amp * math.sin(2.0 * math.pi * (local_hour - 9.0) / 24.0)
    humidity = w.humidity_base + w.humidity_amp * math.sin(
        2.0 * math.pi * t_rel / (w.humidity_period_h * 3600.0) + 0.7)
    pressure = w.pressure_base + w.pressure_amp * math.sin(
        2.0 * math.pi * t_rel / (w.pressure_period_h * 3600.0) + 1.9)
    return max(0.0, wind), min(max(humidity, 2.0), 100.0), pressure, temp


# ---------------------------------------------------------------------------
# rendering


def render_frame(config: SceneConfig, when_utc: float) -> np.ndarray:
    """One (H, W, 3) uint8 frame at the given time."""
    size = config.render_size
    ys, xs = np.mgrid[0:size, 0:size].astype(np.float64)
    sun_x, sun_y, zenith = sun_pixel(config, when_utc)
    cos_el = max(math.cos(math.radians(zenith)), 0.0)
    brightness = 0.22 + 0.6 * cos_el
    base = np.array([0.36, 0.55, 0.82]) * brightness
    vertical = 1.0 - 0.18 * (ys / size)
    img = base[None, None, :] * vertical[:, :, None]

    sun_d2 = (xs - sun_x) ** 2 + (ys - sun_y) ** 2
    sun = config.sun_brightness * cos_el * np.exp(-0.5 * sun_d2 / SUN_SIGMA_PX ** 2)
    img += sun[:, :, None] * np.array([1.0, 0.97, 0.88])[None, None, :]

    frame_index = config.frame_index(when_utc)
    opacity = _opacity_at(config, frame_index, xs, ys)
    cloud_col = np.array([0.95, 0.95, 0.97]) * max(0.35, min(1.0, 0.35 + 0.65 * cos_el))
    img = img * (1.0 - opacity[:, :, None]) + cloud_col[None, None, :] * opacity[:, :, None]

    return (np.clip(img, 0.0, 1.0) * 255.0).round().astype(np.uint8)


def generate_scene(config: SceneConfig, out_dir) -> list[float]:
    """Render the scene to a dataset directory; returns the frame times.

    Writes frames/NNNNNN.png, manifest.csv and aux.csv in the exact formats
    the data pipeline ingests. Fully deterministic for a fixed config.
    """
    out = Path(out_dir)
    try:
        (out / "frames").mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise DataError(f"cannot create scene directory {out}: {exc}") from None
    times = config.frame_times()
    manifest_rows = [",".join(MANIFEST_HEADER)]
    aux_rows = [",".join(AUX_HEADER)]
    try:
        for n, t in enumerate(times):
            name = f"frames/{n:06d}.png"
            Image.fromarray(render_frame(config, t)).save(out / name, format="PNG")
            stamp = solar.format_utc(t)
            manifest_rows.append(f"{stamp},{name},{config.station_id}")
            _, label = scene_truth(config, t)
            wind, humidity, pressure, temp = weather_at(config, t)
            aux_rows.append(",".join([stamp] + [repr(float(v)) for v in
                                                (wind, humidity, pressure, temp, label)]))
        (out / "manifest.csv").write_text("\n".join(manifest_rows) + "\n", encoding="utf-8")
        (out / "aux.csv").write_text("\n".join(aux_rows) + "\n", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot write scene to {out}: {exc}") from None
    return times
