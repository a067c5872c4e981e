"""Sun position over a day and the clear-sky irradiance curve.

Run from the repo root:  python3 demos/03_solar_clearsky.py
Writes demos/output/clearsky_day.png
"""

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from skycast import solar
from skycast.solar import GeoLocation, clearsky_irradiance, solar_position

loc = GeoLocation(40.0, -105.0, timezone_offset_min=-420)
day0 = solar.parse_utc("2015-06-21T07:00:00Z")  # local midnight

minutes = np.arange(0, 1440, 5)
positions = [solar_position(loc, day0 + 60.0 * m) for m in minutes]
zenith = np.array([p.zenith_deg for p in positions])
irr = clearsky_irradiance(np.clip(zenith, 0, 180))

noon_idx = int(zenith.argmin())
print(f"min zenith {zenith.min():.2f} deg at local "
      f"{minutes[noon_idx] // 60:02d}:{minutes[noon_idx] % 60:02d}")
print(f"peak clear-sky irradiance {irr.max():.1f} W/m^2")
print(f"clearsky(0 deg)  = {clearsky_irradiance(0.0):.2f}")
print(f"clearsky(60 deg) = {clearsky_irradiance(60.0):.2f}")
print(f"clearsky(90 deg) = {clearsky_irradiance(90.0):.2f}")

out = Path(__file__).parent / "output"
out.mkdir(exist_ok=True)
fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(7, 5), sharex=True)
ax1.plot(minutes / 60.0, zenith)
ax1.axhline(90.0, color="gray", ls=":")
ax1.set_ylabel("zenith (deg)")
ax2.plot(minutes / 60.0, irr, color="orange")
ax2.set_ylabel("clear-sky W/m$^2$")
ax2.set_xlabel("local hour")
fig.tight_layout()
fig.savefig(out / "clearsky_day.png")
print(f"wrote {out / 'clearsky_day.png'}")
