import numpy as np
import numpy.testing as npt
import pytest
from PIL import Image

from skycast import data, solar
from skycast.data import (AuxRecord, FrameRecord, SkySample,
                          build_forecast_windows, decode_and_normalize, join_aux,
                          load_manifest, normalize_aux, split_by_date)
from skycast.errors import DataError, DecodeError
from skycast.solar import GeoLocation

LOC = GeoLocation(40.0, -105.0, timezone_offset_min=-420)
NOON = solar.parse_utc("2015-06-01T19:00:00Z")  # local solar noon-ish


def make_sample(ts, irr=500.0):
    return SkySample(image=None, aux=np.arange(7, dtype=float), irradiance=irr, timestamp=ts)


def write_manifest(tmp_path, frame_rows, aux_rows):
    (tmp_path / "manifest.csv").write_text(
        "timestamp,image_path,station_id\n" + "".join(frame_rows), encoding="utf-8")
    (tmp_path / "aux.csv").write_text(
        "timestamp,wind_speed_ms,rel_humidity_pct,pressure_hpa,air_temp_c,irradiance_wm2\n"
        + "".join(aux_rows), encoding="utf-8")


def test_load_manifest_empty(tmp_path):
    write_manifest(tmp_path, [], [])
    frames, aux = load_manifest(tmp_path)
    assert frames == [] and aux == []


def test_load_manifest_sorts_and_dedups(tmp_path):
    rows = [
        "2015-06-01T12:10:00Z,frames/b.png,s1\n",
        "2015-06-01T12:00:00Z,frames/a.png,s1\n",
        "2015-06-01T12:00:00Z,frames/a2.png,s1\n",
    ]
    aux = ["2015-06-01T12:00:00Z,1.0,50,1010,20,600\n"]
    write_manifest(tmp_path, rows, aux)
    frames, _ = load_manifest(tmp_path)
    assert [f.image_path for f in frames] == ["frames/a.png", "frames/b.png"]


def test_load_manifest_missing_file(tmp_path):
    with pytest.raises(DataError):
        load_manifest(tmp_path / "nope")


def test_load_manifest_malformed_over_1pct(tmp_path):
    rows = ["2015-06-01T12:00:00Z,frames/a.png,s1\n", "garbage-row\n"]
    write_manifest(tmp_path, rows, [])
    with pytest.raises(DataError):
        load_manifest(tmp_path)


def test_load_manifest_count_preserved(tmp_path):
    rows = []
    t0 = solar.parse_utc("2015-06-01T13:00:00Z")
    for day in range(3):
        for i in range(20):
            ts = solar.format_utc(t0 + day * 86400 + i * 600)
            rows.append(f"{ts},frames/{day}_{i}.png,s1\n")
    write_manifest(tmp_path, rows, [])
    frames, _ = load_manifest(tmp_path)
    assert len(frames) == 60


def test_decode_black_and_white(tmp_path):
    black = tmp_path / "black.png"
    Image.fromarray(np.zeros((64, 64, 3), dtype=np.uint8)).save(black)
    npt.assert_array_equal(decode_and_normalize(black), np.zeros((3, 64, 64)))
    white = tmp_path / "white.png"
    Image.fromarray(np.full((64, 64, 3), 255, dtype=np.uint8)).save(white)
    npt.assert_array_equal(decode_and_normalize(white), np.ones((3, 64, 64)))


def test_decode_letterbox_bands(tmp_path):
    # 128 wide x 96 high: 16 zero rows added top and bottom before resampling
    arr = np.full((96, 128, 3), 255, dtype=np.uint8)
    src = tmp_path / "wide.png"
    Image.fromarray(arr).save(src)
    out = decode_and_normalize(src)
    assert out.shape == (3, 64, 64)
    # 16 padded rows of 128 -> 8 rows of 64 at each band
    npt.assert_array_equal(out[:, :8, :], 0.0)
    npt.assert_array_equal(out[:, -8:, :], 0.0)
    npt.assert_array_equal(out[:, 8:56, :], 1.0)


def test_decode_idempotent_within_quantization(tmp_path):
    rng = np.random.default_rng(0)
    tensor = rng.random((3, 64, 64))
    first = tmp_path / "a.png"
    data.encode_image(tensor, first)
    once = decode_and_normalize(first)
    second = tmp_path / "b.png"
    data.encode_image(once, second)
    twice = decode_and_normalize(second)
    assert np.abs(once - twice).max() <= 1.0 / 255.0


def test_decode_error_carries_path(tmp_path):
    bad = tmp_path / "bad.png"
    bad.write_bytes(b"not an image")
    with pytest.raises(DecodeError) as err:
        decode_and_normalize(bad)
    assert "bad.png" in str(err.value)


def aux_row(ts, irr=600.0):
    return AuxRecord(ts, 2.0, 55.0, 1012.0, 21.0, irr)


def test_join_aux_exact_pairing():
    frames = [FrameRecord(NOON + i * 600, f"f{i}.png", "s1") for i in range(5)]
    aux = [aux_row(NOON + i * 600) for i in range(5)]
    samples, dropped = join_aux(frames, aux, LOC, max_gap_seconds=300)
    assert dropped == 0 and len(samples) == 5
    assert samples[0].aux.shape == (7,)


def test_join_aux_boundary_gap():
    frames = [FrameRecord(NOON, "f.png", "s1")]
    aux = [aux_row(NOON + 299.0)]
    samples, dropped = join_aux(frames, aux, LOC, max_gap_seconds=300)
    assert dropped == 0 and len(samples) == 1
    aux = [aux_row(NOON + 301.0)]
    samples, dropped = join_aux(frames, aux, LOC, max_gap_seconds=300)
    assert dropped == 1 and samples == []


def test_join_aux_hour_hole_drops_that_hour():
    t0 = NOON
    frames = [FrameRecord(t0 + i * 600, f"f{i}.png", "s1") for i in range(18)]  # 3 hours
    aux = [aux_row(t0 + i * 600) for i in range(18)
           if not (6 <= i < 12)]  # middle hour missing
    samples, dropped = join_aux(frames, aux, LOC, max_gap_seconds=450)
    assert dropped == 6
    kept = {s.timestamp for s in samples}
    for i in range(6, 12):
        assert t0 + i * 600 not in kept


def test_join_aux_recomputes_solar_features():
    frames = [FrameRecord(NOON, "f.png", "s1")]
    samples, _ = join_aux(frames, [aux_row(NOON)], LOC, max_gap_seconds=300)
    pos = solar.solar_position(LOC, NOON)
    npt.assert_allclose(samples[0].aux[4], pos.zenith_deg)
    npt.assert_allclose(samples[0].aux[5], solar.clearsky_irradiance(pos.zenith_deg))
    npt.assert_allclose(samples[0].aux[6], solar.time_of_day_fraction(LOC, NOON))


def test_window_count_boundary_exact():
    t0 = NOON
    samples = [make_sample(t0 + i * 600) for i in range(10)]
    wins = build_forecast_windows(samples, 600, lookback=6, horizon=4, stride_s=600)
    assert len(wins) == 1
    assert wins[0].start == t0
    npt.assert_array_equal(wins[0].target_times, [t0 + i * 600 for i in range(6, 10)])


def test_window_count_colorado_protocol_day():
    # 72 frames/day at 10-minute cadence, L=36, H=24, stride 1 hour -> 3
    t0 = NOON
    samples = [make_sample(t0 + i * 600) for i in range(72)]
    wins = build_forecast_windows(samples, 600, lookback=36, horizon=24, stride_s=3600)
    assert len(wins) == 3


def test_window_closed_form_random_combinations():
    rng = np.random.default_rng(42)
    t0 = NOON
    for _ in range(50):
        f = int(rng.integers(2, 500))
        lookback = int(rng.integers(1, 30))
        horizon = int(rng.integers(1, 30))
        step = int(rng.integers(1, 10))
        samples = [make_sample(t0 + i * 600) for i in range(f)]
        wins = build_forecast_windows(samples, 600, lookback, horizon, 600 * step)
        expect = (f - lookback - horizon) // step + 1 if f >= lookback + horizon else 0
        assert len(wins) == expect, (f, lookback, horizon, step)


def test_windows_never_span_gaps():
    t0 = NOON
    first = [make_sample(t0 + i * 600) for i in range(10)]
    second = [make_sample(t0 + 10 * 600 + 1800 + i * 600) for i in range(10)]  # 30-min hole
    wins = build_forecast_windows(first + second, 600, lookback=4, horizon=2, stride_s=600)
    for w in wins:
        stamps = [s.timestamp for s in w.samples] + list(w.target_times)
        assert max(np.diff(stamps)) <= 900.0
    assert len(wins) == 2 * ((10 - 6) // 1 + 1)


def test_window_timestamps_strictly_increasing():
    t0 = NOON
    samples = [make_sample(t0 + i * 600) for i in range(30)]
    for w in build_forecast_windows(samples, 600, 6, 4, 1200):
        stamps = [s.timestamp for s in w.samples] + list(w.target_times)
        assert all(a < b for a, b in zip(stamps, stamps[1:]))


def test_bridged_windows_cross_one_night_and_are_flagged():
    t0 = NOON
    evening = [make_sample(t0 + i * 600) for i in range(10)]
    morning = [make_sample(t0 + 16 * 3600 + i * 600) for i in range(10)]
    wins = build_forecast_windows(evening + morning, 600, lookback=6, horizon=2,
                                  stride_s=600, bridge_nights=True)
    bridged = [w for w in wins if w.bridged]
    assert bridged, "expected night-bridging windows"
    for w in bridged:
        look_times = [s.timestamp for s in w.samples]
        assert look_times[0] < morning[0].timestamp <= look_times[-1]
        assert all(t >= morning[0].timestamp for t in w.target_times)
    assert all(not w.bridged for w in wins if w.start >= morning[0].timestamp)


def test_split_by_date_samples():
    t0 = NOON
    samples = [make_sample(t0 + i * 600) for i in range(10)]
    train, test = split_by_date(samples, t0 + 7 * 600)
    assert len(train) == 7 and len(test) == 3
    train, test = split_by_date(samples, t0 + 11 * 600)
    assert len(train) == 10 and test == []


def test_split_by_date_windows_no_leakage():
    t0 = NOON
    samples = [make_sample(t0 + i * 600) for i in range(20)]
    wins = build_forecast_windows(samples, 600, lookback=6, horizon=4, stride_s=600)
    boundary = t0 + 8 * 600
    train, test = split_by_date(wins, boundary)
    assert len(train) + len(test) == len(wins)
    for w in test:
        assert w.start >= boundary
    for w in train:
        assert w.start < boundary


def test_split_proportional_counts():
    t0 = NOON
    samples = [make_sample(t0 + d * 86400) for d in range(10)]
    train, test = split_by_date(samples, t0 + 7 * 86400)
    assert (len(train), len(test)) == (7, 3)


def test_normalize_aux_zscore_and_constant_component():
    rng = np.random.default_rng(1)
    samples = []
    for i in range(50):
        aux = rng.uniform(0, 10, size=7)
        aux[3] = 5.0  # constant component
        samples.append(SkySample(image=None, aux=aux, irradiance=1.0, timestamp=float(i)))
    stats = normalize_aux(samples)
    transformed = np.stack([stats.transform(s.aux) for s in samples])
    npt.assert_allclose(np.abs(transformed.mean(axis=0)).max(), 0.0, atol=1e-9)
    keep = np.arange(7) != 3
    npt.assert_allclose(transformed.std(axis=0)[keep], 1.0, atol=1e-9)
    npt.assert_array_equal(transformed[:, 3], 0.0)
    assert stats.std[3] == 1.0


def test_normalize_aux_reuses_train_statistics():
    train = [make_sample(float(i), irr=100.0) for i in range(5)]
    for i, s in enumerate(train):
        s.aux = np.full(7, float(i))
    stats = normalize_aux(train)
    test_aux = np.full(7, 100.0)
    npt.assert_allclose(stats.transform(test_aux), (100.0 - stats.mean) / stats.std)


def test_normalize_aux_empty_raises():
    with pytest.raises(ValueError):
        normalize_aux([])
