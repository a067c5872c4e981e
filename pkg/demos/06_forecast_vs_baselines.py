"""Two-tier forecaster on an advection scene, against persistence and the
auxiliary-only regression.

Scaled down to finish in a few minutes (short look-back, small hidden sizes,
briefly trained encoder); the acceptance suite runs the full protocol.

Run from the repo root:  python3 demos/06_forecast_vs_baselines.py
"""

from pathlib import Path

import numpy as np

from skycast.data import build_forecast_windows, load_samples
from skycast.forecast import ForecastConfig, build_forecast, train_forecast
from skycast.metrics import (aux_regression, evaluate, forecast_records, nmap,
                             persistence_baseline, window_aux_features)
from skycast.nowcast import NowcastConfig, build_nowcast, train_nowcast
from skycast.optim import AdamConfig, LossConfig
from skycast.solar import GeoLocation
from skycast.synth import SceneConfig, generate_scene, random_clouds

loc = GeoLocation(40.0, -105.0, timezone_offset_min=-420)
scene = SceneConfig(location=loc, first_day="2015-06-01", days=4,
                    day_start_hour=9.0, day_end_hour=16.0, cadence_s=600.0,
                    clouds=random_clouds(3, seed=11), attenuation=0.9,
                    noise_std=1.5, seed=11)
data_dir = Path(__file__).parent / "output" / "forecast_scene"
generate_scene(scene, data_dir)
samples = load_samples(data_dir, loc, max_gap_seconds=60.0)

# stage 1: a briefly trained encoder
encoder = build_nowcast(NowcastConfig(dropout_rate=0.15), seed=0)
train_nowcast(encoder, samples, adam_cfg=AdamConfig(learning_rate=3e-3, decay=0.99),
              loss_cfg=LossConfig(l2_coefficient=1e-6), epochs=2, batch_size=8, seed=0)

# stage 2: 2-hour look-back, 2-hour horizon at 10-minute steps
lookback, horizon = 12, 12
windows = build_forecast_windows(samples, 600.0, lookback, horizon, stride_s=600.0)
print(f"{len(windows)} windows from {len(samples)} frames")

model = build_forecast(ForecastConfig(lookback=lookback, horizon=horizon,
                                      frame_hidden=32, weather_hidden=4,
                                      merge_hidden=16, dropout_rate=0.1),
                       encoder, seed=0)
result = train_forecast(model, windows,
                        loss_cfg=LossConfig(l2_coefficient=1e-6),
                        adam_cfg=AdamConfig(learning_rate=5e-3, decay=0.98),
                        epochs=25, batch_size=8, seed=0)
print("loss first/last:", round(result.loss_history[0], 3),
      round(result.loss_history[-1], 3))

preds = model.forecast_windows(windows)
persist = [persistence_baseline(w) for w in windows]
reg = aux_regression(windows, "forecast")
reg_preds = [reg.predict(window_aux_features(w)) for w in windows]

tz = loc.timezone_offset_min
for name, p in (("model", preds), ("persistence", persist), ("aux-regression", reg_preds)):
    report = evaluate(forecast_records(windows, p), tz)
    hour1 = np.mean([report.by_step[s][0] for s in range(1, 7)])
    print(f"{name:>14}: overall {report.overall:6.2f}%   +1h {hour1:6.2f}%")
