"""Train the nowcast model on a small synthetic scene and evaluate it.

This is a scaled-down run (a few epochs on a short scene) meant to finish in
about two minutes; the acceptance suite drives the full desk-scale protocol.

Run from the repo root:  python3 demos/05_nowcast_training.py
"""

import numpy as np

from skycast import solar
from skycast.data import load_samples, split_by_date
from skycast.metrics import aux_regression, evaluate, nmap, nowcast_records
from skycast.nowcast import NowcastConfig, build_nowcast, train_nowcast
from skycast.optim import AdamConfig, LossConfig
from skycast.solar import GeoLocation
from skycast.synth import SceneConfig, generate_scene, random_clouds
from pathlib import Path

loc = GeoLocation(40.0, -105.0, timezone_offset_min=-420)
scene = SceneConfig(location=loc, first_day="2015-06-01", days=2,
                    day_start_hour=10.0, day_end_hour=15.0, cadence_s=600.0,
                    clouds=random_clouds(2, seed=5, speed_scale=0.8),
                    attenuation=0.75, noise_std=1.0, seed=5)
data_dir = Path(__file__).parent / "output" / "nowcast_scene"
generate_scene(scene, data_dir)
samples = load_samples(data_dir, loc, max_gap_seconds=60.0)
train, test = split_by_date(samples, solar.parse_utc("2015-06-02T00:00:00Z"))
print(f"{len(train)} training samples, {len(test)} test samples")

model = build_nowcast(NowcastConfig(dropout_rate=0.15), seed=0)
print(f"model parameters: {model.parameter_count:,}")
result = train_nowcast(model, train,
                       loss_cfg=LossConfig(l2_coefficient=1e-6),
                       adam_cfg=AdamConfig(learning_rate=3e-3, decay=0.985),
                       epochs=4, batch_size=8, seed=0)
print("epoch losses:", [round(v, 3) for v in result.loss_history])

train_score = nmap([s.irradiance for s in train], model.predict_samples(train))
report = evaluate(nowcast_records(test, model.predict_samples(test)),
                  loc.timezone_offset_min)
print(f"train nMAP {train_score:.2f}%, test nMAP {report.overall:.2f}%")

reg = aux_regression(train, "nowcast")
reg_score = nmap([s.irradiance for s in test],
                 reg.predict(np.stack([s.aux for s in test])))
print(f"auxiliary-only regression test nMAP {reg_score:.2f}%")
print("\nper-hour breakdown:")
print(report.to_table())
