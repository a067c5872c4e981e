"""Frame/auxiliary ingestion, image normalization and window construction.

On-disk layout for a dataset directory:

    manifest.csv   header: timestamp,image_path,station_id
    aux.csv        header: timestamp,wind_speed_ms,rel_humidity_pct,
                           pressure_hpa,air_temp_c,irradiance_wm2
    frames/*.png   8-bit images referenced by manifest image_path

Timestamps are ISO-8601 UTC. Image paths are resolved relative to the
directory holding the manifest. The irradiance column of the aux file is the
ground-truth label; solar-geometry features (zenith, clear-sky irradiance,
time-of-day fraction) are always recomputed from the timestamp and location,
never read from a file.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np
from PIL import Image, UnidentifiedImageError

from . import solar
from .errors import DataError, DecodeError
from .solar import GeoLocation

log = logging.getLogger(__name__)

IMAGE_SIZE = 64

AUX_COMPONENTS = (
    "wind_speed_ms",
    "rel_humidity_pct",
    "pressure_hpa",
    "air_temp_c",
    "zenith_deg",
    "clearsky_wm2",
    "time_of_day",
)

MANIFEST_HEADER = ["timestamp", "image_path", "station_id"]
AUX_HEADER = ["timestamp", "wind_speed_ms", "rel_humidity_pct", "pressure_hpa",
              "air_temp_c", "irradiance_wm2"]


@dataclass(frozen=True)
class FrameRecord:
    timestamp: float
    image_path: str
    station_id: str


@dataclass(frozen=True)
class AuxRecord:
    timestamp: float
    wind_speed_ms: float
    rel_humidity_pct: float
    pressure_hpa: float
    air_temp_c: float
    irradiance_wm2: float


@dataclass
class SkySample:
    """One (image, auxiliary vector, irradiance) training triple."""

    image: np.ndarray  # (3, 64, 64) in [0, 1]
    aux: np.ndarray  # (7,) raw AUX_COMPONENTS values
    irradiance: float
    timestamp: float
    image_path: str = ""

    def __post_init__(self):
        if self.image is not None and self.image.shape != (3, IMAGE_SIZE, IMAGE_SIZE):
            raise DataError(f"sample image must be (3, 64, 64), got {self.image.shape}")


@dataclass
class ForecastWindow:
    """A look-back sequence plus the horizon irradiance it must predict."""

    samples: list  # L SkySamples, ascending time
    targets: np.ndarray  # (H,) irradiance
    target_times: np.ndarray  # (H,) timestamps
    start: float  # timestamp of the first look-back frame
    bridged: bool = False  # look-back spans one night seam

    @property
    def end(self) -> float:
        return float(self.target_times[-1])


# ---------------------------------------------------------------------------
# manifest loading


def _parse_rows(path: Path, header: list[str], parsers: list) -> list[tuple]:
    if not path.exists():
        raise DataError(f"missing file: {path}")
    rows: list[tuple] = []
    bad: list[tuple[int, str]] = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        got_header = next(reader, None)
        if got_header is None or [h.strip() for h in got_header] != header:
            raise DataError(f"{path}: expected header {','.join(header)}")
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != len(header):
                bad.append((lineno, f"expected {len(header)} columns, got {len(row)}"))
                continue
            try:
                rows.append(tuple(p(cell.strip()) for p, cell in zip(parsers, row)))
            except (ValueError, OverflowError) as exc:
                bad.append((lineno, str(exc)))
    for lineno, reason in bad[:10]:
        log.warning("%s line %d: %s", path.name, lineno, reason)
    total = len(rows) + len(bad)
    if total and len(bad) / total > 0.01:
        raise DataError(
            f"{path}: {len(bad)} of {total} rows malformed (>1%), first at line {bad[0][0]}")
    return rows


def load_frames_csv(path) -> list[FrameRecord]:
    path = Path(path)
    rows = _parse_rows(path, MANIFEST_HEADER, [solar.parse_utc, str, str])
    records = [FrameRecord(ts, img, station) for ts, img, station in rows]
    records.sort(key=lambda r: (r.timestamp, r.station_id))
    seen: set[tuple[str, float]] = set()
    out = []
    for r in records:
        key = (r.station_id, r.timestamp)
        if key in seen:
            continue
        seen.add(key)
        out.append(r)
    if len(out) < len(records):
        log.warning("%s: dropped %d duplicate frame timestamps", path.name,
                    len(records) - len(out))
    return out


def load_aux_csv(path) -> list[AuxRecord]:
    path = Path(path)
    rows = _parse_rows(path, AUX_HEADER, [solar.parse_utc] + [float] * 5)
    records = [AuxRecord(*row) for row in rows]
    records.sort(key=lambda r: r.timestamp)
    out = []
    last = None
    for r in records:
        if last is not None and r.timestamp == last:
            continue
        last = r.timestamp
        out.append(r)
    return out


def load_manifest(path) -> tuple[list[FrameRecord], list[AuxRecord]]:
    """Load a dataset directory (manifest.csv + aux.csv)."""
    root = Path(path)
    if not root.exists():
        raise DataError(f"missing dataset directory: {root}")
    return load_frames_csv(root / "manifest.csv"), load_aux_csv(root / "aux.csv")


# ---------------------------------------------------------------------------
# image decoding


def _letterbox(arr: np.ndarray) -> np.ndarray:
    h, w = arr.shape[:2]
    side = max(h, w)
    if h == w:
        return arr
    out = np.zeros((side, side, arr.shape[2]), dtype=arr.dtype)
    top = (side - h) // 2
    left = (side - w) // 2
    out[top:top + h, left:left + w] = arr
    return out


def decode_and_normalize(path) -> np.ndarray:
    """Decode an image file to a (3, 64, 64) float64 tensor in [0, 1].

    The shorter side is letterboxed with zeros to a square, then the square
    is area-resampled to 64x64 and scaled by 1/255.
    """
    path = Path(path)
    try:
        with Image.open(path) as img:
            rgb = img.convert("RGB")
    except FileNotFoundError:
        raise DataError(f"missing image file: {path}") from None
    except (UnidentifiedImageError, OSError) as exc:
        raise DecodeError(path, f"could not decode image ({exc})") from None
    arr = _letterbox(np.asarray(rgb, dtype=np.uint8))
    square = Image.fromarray(arr)
    small = square.resize((IMAGE_SIZE, IMAGE_SIZE), resample=Image.Resampling.BOX)
    data = np.asarray(small, dtype=np.float64) / 255.0
    return data.transpose(2, 0, 1)


def encode_image(tensor: np.ndarray, path) -> None:
    """Inverse of decode_and_normalize for already-square 64x64 tensors."""
    arr = np.clip(np.rint(tensor.transpose(1, 2, 0) * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(arr).save(path, format="PNG")


# ---------------------------------------------------------------------------
# auxiliary pairing


def aux_vector(rec: AuxRecord, loc: GeoLocation, timestamp: float) -> np.ndarray:
    """The 7-component auxiliary vector in AUX_COMPONENTS order."""
    pos = solar.solar_position(loc, timestamp)
    return np.array([
        rec.wind_speed_ms,
        rec.rel_humidity_pct,
        rec.pressure_hpa,
        rec.air_temp_c,
        pos.zenith_deg,
        solar.clearsky_irradiance(pos.zenith_deg),
        solar.time_of_day_fraction(loc, timestamp),
    ])


def join_aux(frames: Sequence[FrameRecord], aux_records: Sequence[AuxRecord],
             loc: GeoLocation, max_gap_seconds: float) -> tuple[list[SkySample], int]:
    """Pair each frame with the nearest-in-time aux record within the gap.

    Returns samples without images loaded (image=None) plus the number of
    frames dropped for lack of a close aux record. Both inputs must be
    sorted ascending.
    """
    samples: list[SkySample] = []
    dropped = 0
    times = np.array([a.timestamp for a in aux_records])
    for frame in frames:
        if len(times) == 0:
            dropped += 1
            continue
        idx = int(np.searchsorted(times, frame.timestamp))
        best = None
        for j in (idx - 1, idx):
            if 0 <= j < len(times):
                d = abs(times[j] - frame.timestamp)
                if best is None or d < best[0]:
                    best = (d, j)
        if best is None or best[0] > max_gap_seconds:
            dropped += 1
            continue
        rec = aux_records[best[1]]
        samples.append(SkySample(
            image=None,
            aux=aux_vector(rec, loc, frame.timestamp),
            irradiance=float(rec.irradiance_wm2),
            timestamp=frame.timestamp,
            image_path=frame.image_path,
        ))
    if dropped:
        log.info("join_aux dropped %d of %d frames (gap > %gs)",
                 dropped, len(frames), max_gap_seconds)
    return samples, dropped


def load_images(samples: Sequence[SkySample], root) -> list[SkySample]:
    """Decode each sample's image relative to the dataset root."""
    root = Path(root)
    out = []
    for s in samples:
        image = decode_and_normalize(root / s.image_path)
        out.append(replace(s, image=image))
    return out


def load_samples(path, loc: GeoLocation, max_gap_seconds: float = 900.0,
                 daylight_only: bool = True, with_images: bool = True) -> list[SkySample]:
    """Full ingestion: manifest -> aux pairing -> optional daylight filter
    and image decoding."""
    frames, aux_records = load_manifest(path)
    if daylight_only:
        frames = solar.daylight_filter(frames, loc)
    samples, _ = join_aux(frames, aux_records, loc, max_gap_seconds)
    if with_images:
        samples = load_images(samples, Path(path))
    return samples


# ---------------------------------------------------------------------------
# windows and splits


def contiguous_runs(samples: Sequence[SkySample], gap_tolerance_s: float) -> list[list[SkySample]]:
    runs: list[list[SkySample]] = []
    current: list[SkySample] = []
    for s in samples:
        if current and s.timestamp - current[-1].timestamp > gap_tolerance_s:
            runs.append(current)
            current = []
        current.append(s)
    if current:
        runs.append(current)
    return runs


def _window_from(run: Sequence[SkySample], i: int, lookback: int, horizon: int,
                 bridged: bool = False) -> ForecastWindow:
    look = list(run[i:i + lookback])
    future = run[i + lookback:i + lookback + horizon]
    return ForecastWindow(
        samples=look,
        targets=np.array([s.irradiance for s in future]),
        target_times=np.array([s.timestamp for s in future]),
        start=look[0].timestamp,
        bridged=bridged,
    )


def build_forecast_windows(samples: Sequence[SkySample], cadence_s: float,
                           lookback: int, horizon: int, stride_s: float,
                           gap_tolerance_s: float | None = None,
                           bridge_nights: bool = False) -> list[ForecastWindow]:
    """Slide fixed-length windows over contiguous runs of samples.

    A run breaks wherever the inter-frame gap exceeds the tolerance (default
    1.5x the cadence). Within a run of F frames the window count is
    floor((F - L - H) / S) + 1 for S = stride / cadence. With
    ``bridge_nights`` the look-back may additionally span a single run seam
    (previous evening into next morning); such windows are flagged and their
    horizon lies entirely in the later run.
    """
    if lookback < 1 or horizon < 1:
        raise ValueError("lookback and horizon must be >= 1")
    step_float = stride_s / cadence_s
    step = int(round(step_float))
    if abs(step_float - step) > 1e-9 or step < 1:
        raise ValueError(f"stride {stride_s} is not a multiple of cadence {cadence_s}")
    if gap_tolerance_s is None:
        gap_tolerance_s = 1.5 * cadence_s
    runs = contiguous_runs(samples, gap_tolerance_s)
    windows: list[ForecastWindow] = []
    for run in runs:
        f = len(run)
        i = 0
        while i + lookback + horizon <= f:
            windows.append(_window_from(run, i, lookback, horizon))
            i += step
    if bridge_nights:
        for prev, nxt in zip(runs, runs[1:]):
            seam_gap = nxt[0].timestamp - prev[-1].timestamp
            if seam_gap > 36 * 3600.0:
                continue
            combined = list(prev) + list(nxt)
            seam = len(prev)
            i = 0
            while i + lookback + horizon <= len(combined):
                crosses = i < seam < i + lookback
                if crosses:
                    windows.append(_window_from(combined, i, lookback, horizon, bridged=True))
                i += step
    return windows


def split_by_date(items: Sequence, boundary_utc: float) -> tuple[list, list]:
    """Partition samples or windows at a timestamp boundary.

    A window lands in the test set only if its entire look-back and horizon
    fall at or after the boundary; everything else trains. The partition is
    exhaustive and disjoint.
    """
    train, test = [], []
    for item in items:
        if isinstance(item, ForecastWindow):
            in_test = item.start >= boundary_utc
        else:
            in_test = item.timestamp >= boundary_utc
        (test if in_test else train).append(item)
    return train, test


# ---------------------------------------------------------------------------
# normalization statistics


@dataclass
class AuxStats:
    mean: np.ndarray
    std: np.ndarray

    def transform(self, aux: np.ndarray) -> np.ndarray:
        return (np.asarray(aux) - self.mean) / self.std


@dataclass
class ScalarStats:
    mean: float
    std: float

    def transform(self, x):
        return (np.asarray(x, dtype=np.float64) - self.mean) / self.std

    def inverse(self, z):
        return np.asarray(z, dtype=np.float64) * self.std + self.mean


def normalize_aux(train_samples: Sequence[SkySample]) -> AuxStats:
    """Per-component mean/std over the training set (z-score transform).

    Zero-variance components get their std clamped to 1 with a warning.
    """
    if len(train_samples) == 0:
        raise ValueError("normalize_aux needs a non-empty training set")
    mat = np.stack([s.aux for s in train_samples])
    mean = mat.mean(axis=0)
    std = mat.std(axis=0)
    flat = std == 0.0
    if flat.any():
        names = [AUX_COMPONENTS[i] for i in np.where(flat)[0]]
        log.warning("zero-variance aux components %s: std clamped to 1", names)
        std = np.where(flat, 1.0, std)
    return AuxStats(mean=mean, std=std)


def scalar_stats(values) -> ScalarStats:
    arr = np.asarray(values, dtype=np.float64)
    if arr.size == 0:
        raise ValueError("scalar_stats needs values")
    std = float(arr.std())
    if std == 0.0:
        log.warning("zero-variance target: std clamped to 1")
        std = 1.0
    return ScalarStats(mean=float(arr.mean()), std=std)
