"""Generate a small synthetic sky-video and inspect its labels.

Run from the repo root:  python3 demos/04_synthetic_scene.py
Writes a dataset under demos/output/scene plus a label plot.
"""

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from skycast.data import load_manifest, load_samples
from skycast.solar import GeoLocation, clearsky_irradiance, solar_position
from skycast.synth import SceneConfig, generate_scene, random_clouds, scene_truth

loc = GeoLocation(40.0, -105.0, timezone_offset_min=-420)
cfg = SceneConfig(location=loc, first_day="2015-06-01", days=2,
                  day_start_hour=8.0, day_end_hour=17.0, cadence_s=600.0,
                  clouds=random_clouds(3, seed=21), attenuation=0.9,
                  noise_std=2.0, seed=21)

out = Path(__file__).parent / "output" / "scene"
times = generate_scene(cfg, out)
print(f"wrote {len(times)} frames to {out}")

_, aux = load_manifest(out)
labels = np.array([r.irradiance_wm2 for r in aux])
clear = np.array([clearsky_irradiance(solar_position(loc, t).zenith_deg) for t in times])
occ = np.array([scene_truth(cfg, t)[0] for t in times])
print(f"label range {labels.min():.0f}..{labels.max():.0f} W/m^2, "
      f"max occlusion {occ.max():.2f}")

samples = load_samples(out, loc, max_gap_seconds=60.0)
print(f"pipeline kept {len(samples)} daylight samples with (3, 64, 64) images")

hours = (np.array(times) - times[0]) / 3600.0
fig, ax = plt.subplots(figsize=(8, 3.5))
ax.plot(hours, clear, label="clear sky", color="gray", ls="--")
ax.plot(hours, labels, label="scene irradiance", color="tab:orange")
ax.fill_between(hours, 0, occ * labels.max(), alpha=0.15, label="occlusion (scaled)")
ax.set_xlabel("hours since first frame")
ax.set_ylabel("W/m$^2$")
ax.legend()
fig.tight_layout()
fig.savefig(out.parent / "scene_labels.png")
print(f"wrote {out.parent / 'scene_labels.png'}")
