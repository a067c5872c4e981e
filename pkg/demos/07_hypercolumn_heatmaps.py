"""Hypercolumn heatmaps: where the convolutional encoder looks.

Renders a single-cloud scene, trains the encoder briefly, and writes an
overlay strip of consecutive frames with their heatmaps.

Run from the repo root:  python3 demos/07_hypercolumn_heatmaps.py
Writes demos/output/heatmap_strip.png
"""

from pathlib import Path

import numpy as np
from PIL import Image
from matplotlib import colormaps

from skycast.data import load_samples
from skycast.nowcast import NowcastConfig, build_nowcast, train_nowcast
from skycast.optim import AdamConfig, LossConfig
from skycast.solar import GeoLocation
from skycast.synth import SceneConfig, generate_scene, random_clouds

loc = GeoLocation(40.0, -105.0, timezone_offset_min=-420)
scene = SceneConfig(location=loc, first_day="2015-06-01", days=1,
                    day_start_hour=10.0, day_end_hour=14.0, cadence_s=600.0,
                    clouds=random_clouds(1, seed=3), attenuation=0.9,
                    noise_std=1.0, sun_brightness=0.15, seed=3)
data_dir = Path(__file__).parent / "output" / "heatmap_scene"
generate_scene(scene, data_dir)
samples = load_samples(data_dir, loc, max_gap_seconds=60.0)

model = build_nowcast(NowcastConfig(dropout_rate=0.15), seed=0)
train_nowcast(model, samples, adam_cfg=AdamConfig(learning_rate=3e-3, decay=0.99),
              loss_cfg=LossConfig(l2_coefficient=1e-6), epochs=2, batch_size=8, seed=0)

cmap = colormaps["viridis"]
tiles = []
for s in samples[:6]:
    heat = model.hypercolumn_heatmap(s.image)
    frame = s.image.transpose(1, 2, 0)
    overlay = 0.55 * frame + 0.45 * cmap(heat)[:, :, :3]
    tiles.append(np.concatenate([frame, overlay], axis=0))
strip = (np.clip(np.concatenate(tiles, axis=1), 0, 1) * 255).round().astype(np.uint8)
out = Path(__file__).parent / "output" / "heatmap_strip.png"
Image.fromarray(strip).save(out)
print(f"wrote {out} (top row: frames, bottom row: heatmap overlays)")
