"""Command-line orchestration: synth, train, eval, predict, heatmap.

One JSON config file per run, with sections mirroring the module configs;
the file is copied verbatim into the output directory next to a fully
resolved copy (defaults merged in), so a run can always be reproduced from
its own artifacts. Exit codes: 0 success, 1 usage/config error, 2 data
error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import copy
import json
import shutil
import sys
from pathlib import Path

import numpy as np

from . import solar
from .data import (build_forecast_windows, load_samples, split_by_date)
from .errors import ConfigError, DataError, MetricError, NumericError
from .forecast import (ForecastConfig, build_forecast, load_forecast,
                       save_forecast, train_forecast)
from .metrics import (EvalReport, aux_regression, evaluate, forecast_records,
                      nowcast_records, persistence_baseline, window_aux_features)
from .nowcast import (NowcastConfig, build_nowcast, load_nowcast, save_nowcast,
                      train_nowcast)
from .optim import AdamConfig, LossConfig
from .solar import GeoLocation
from .synth import SceneConfig, generate_scene, random_clouds

DEFAULTS = {
    "seed": 0,
    "location": {"latitude": 40.0, "longitude": -105.0, "timezone_offset_min": -420},
    "scene": {
        "first_day": "2015-06-01", "days": 2, "day_start_hour": 9.0,
        "day_end_hour": 16.0, "cadence_s": 600.0, "cloud_count": 3,
        "cloud_speed_scale": 1.0, "attenuation": 0.85, "noise_std": 2.0,
        "sun_brightness": 1.0, "render_size": 128, "station_id": "synth",
    },
    "pipeline": {"max_gap_seconds": 900.0, "daylight_only": True},
    "nowcast": {"dropout_rate": 0.3, "aux_zeroed": False},
    "forecast": {
        "lookback": 12, "horizon": 24, "frame_hidden": 128, "weather_hidden": 4,
        "merge_hidden": 64, "merge_mode": "lstm", "dropout_rate": 0.3,
        "encoder_checkpoint": None,
    },
    "windows": {"cadence_s": 600.0, "stride_s": 1800.0, "gap_tolerance_s": None,
                "bridge_nights": False},
    "train": {"epochs": 20, "batch_size": 32, "learning_rate": 1e-3, "decay": 0.95,
              "l2_coefficient": 0.0, "m": 1.0, "target_train_nmap": None,
              "split_boundary": None},
    "eval": {"split_boundary": None, "part": "all", "baselines": True},
    "heatmap": {"limit": 10, "strip_frames": 6},
}


def resolve_config(path: str | None) -> dict:
    """Defaults overlaid with the user file; unknown keys are rejected."""
    resolved = copy.deepcopy(DEFAULTS)
    if path is None:
        return resolved
    p = Path(path)
    if not p.exists():
        raise DataError(f"missing config file: {p}")
    try:
        user = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {p} is not valid JSON: {exc}") from None
    for section, value in user.items():
        if section not in resolved:
            raise ConfigError(f"unknown config key: {section}")
        if isinstance(resolved[section], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"config section {section!r} must be an object")
            for key, v in value.items():
                if key not in resolved[section]:
                    raise ConfigError(f"unknown config key: {section}.{key}")
                resolved[section][key] = v
        else:
            resolved[section] = value
    return resolved


def _prepare_out(args, cfg: dict) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.config:
        shutil.copyfile(args.config, out / "config.used.json")
    (out / "config.resolved.json").write_text(
        json.dumps(cfg, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return out


def _location(cfg: dict) -> GeoLocation:
    loc = cfg["location"]
    return GeoLocation(loc["latitude"], loc["longitude"], loc["timezone_offset_min"])


def _scene_config(cfg: dict, seed: int) -> SceneConfig:
    s = cfg["scene"]
    return SceneConfig(
        location=_location(cfg), first_day=s["first_day"], days=int(s["days"]),
        day_start_hour=float(s["day_start_hour"]), day_end_hour=float(s["day_end_hour"]),
        cadence_s=float(s["cadence_s"]),
        clouds=random_clouds(int(s["cloud_count"]), seed=seed,
                             render_size=int(s["render_size"]),
                             speed_scale=float(s["cloud_speed_scale"])),
        attenuation=float(s["attenuation"]), noise_std=float(s["noise_std"]),
        seed=seed, render_size=int(s["render_size"]),
        sun_brightness=float(s["sun_brightness"]), station_id=s["station_id"])


def _load_dataset(args, cfg: dict):
    pipeline = cfg["pipeline"]
    return load_samples(args.data, _location(cfg),
                        max_gap_seconds=float(pipeline["max_gap_seconds"]),
                        daylight_only=bool(pipeline["daylight_only"]))


def _train_settings(cfg: dict):
    t = cfg["train"]
    loss_cfg = LossConfig(m=float(t["m"]), l2_coefficient=float(t["l2_coefficient"]))
    adam_cfg = AdamConfig(learning_rate=float(t["learning_rate"]), decay=float(t["decay"]))
    return t, loss_cfg, adam_cfg


def _split(items, boundary, part: str):
    if boundary is None:
        return items
    train, test = split_by_date(items, solar.parse_utc(boundary))
    return train if part == "train" else test if part == "test" else items


def _write_history(out: Path, result) -> None:
    lines = ["epoch,mean_loss,train_nmap_pct"]
    for i, loss in enumerate(result.loss_history):
        score = (repr(float(result.nmap_history[i]))
                 if i < len(result.nmap_history) else "")
        lines.append(f"{i},{float(loss)!r},{score}")
    (out / "history.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")


def cmd_synth(args) -> int:
    cfg = resolve_config(args.config)
    seed = args.seed if args.seed is not None else int(cfg["seed"])
    out = _prepare_out(args, cfg)
    scene = _scene_config(cfg, seed)
    times = generate_scene(scene, out)
    print(f"wrote {len(times)} frames to {out} "
          f"({scene.frames_per_day}/day x {scene.days} days)")
    return 0


def cmd_train(args) -> int:
    cfg = resolve_config(args.config)
    seed = args.seed if args.seed is not None else int(cfg["seed"])
    out = _prepare_out(args, cfg)
    train_cfg, loss_cfg, adam_cfg = _train_settings(cfg)
    samples = _load_dataset(args, cfg)
    if not samples:
        raise DataError(f"no usable samples in {args.data}")
    samples = _split(samples, train_cfg["split_boundary"], "train")

    if args.mode == "nowcast":
        n = cfg["nowcast"]
        model = build_nowcast(NowcastConfig(dropout_rate=float(n["dropout_rate"]),
                                            aux_zeroed=bool(n["aux_zeroed"])), seed=seed)
        target = train_cfg["target_train_nmap"]
        result = train_nowcast(model, samples, loss_cfg=loss_cfg, adam_cfg=adam_cfg,
                               epochs=int(train_cfg["epochs"]),
                               batch_size=int(train_cfg["batch_size"]), seed=seed,
                               target_train_nmap=None if target is None else float(target))
        save_nowcast(model, out / "model.ckpt")
    else:
        f = cfg["forecast"]
        encoder_path = args.encoder or f["encoder_checkpoint"]
        if not encoder_path:
            raise ConfigError("forecast training needs forecast.encoder_checkpoint "
                              "or --encoder")
        encoder = load_nowcast(encoder_path)
        w = cfg["windows"]
        gap = w["gap_tolerance_s"]
        windows = build_forecast_windows(
            samples, float(w["cadence_s"]), int(f["lookback"]), int(f["horizon"]),
            float(w["stride_s"]), None if gap is None else float(gap),
            bridge_nights=bool(w["bridge_nights"]))
        if not windows:
            raise DataError("no forecast windows could be built from the data")
        spans = (windows[-1].end - windows[0].start) / 86400.0
        print(f"windows: {len(windows)} ({len(windows) / max(spans, 1e-9):.1f} per day)")
        model = build_forecast(
            ForecastConfig(lookback=int(f["lookback"]), horizon=int(f["horizon"]),
                           frame_hidden=int(f["frame_hidden"]),
                           weather_hidden=int(f["weather_hidden"]),
                           merge_hidden=int(f["merge_hidden"]),
                           merge_mode=f["merge_mode"],
                           dropout_rate=float(f["dropout_rate"]),
                           embedding_size=encoder.config.embedding_size),
            encoder, seed=seed)
        result = train_forecast(model, windows, loss_cfg=loss_cfg, adam_cfg=adam_cfg,
                                epochs=int(train_cfg["epochs"]),
                                batch_size=int(train_cfg["batch_size"]), seed=seed)
        save_forecast(model, out / "model.ckpt")
    _write_history(out, result)
    print(f"trained {result.epochs_run} epochs in {result.seconds:.1f}s; "
          f"checkpoint at {out / 'model.ckpt'}")
    return 0


def _forecast_windows_for_eval(cfg: dict, samples):
    f, w = cfg["forecast"], cfg["windows"]
    gap = w["gap_tolerance_s"]
    return build_forecast_windows(
        samples, float(w["cadence_s"]), int(f["lookback"]), int(f["horizon"]),
        float(w["stride_s"]), None if gap is None else float(gap),
        bridge_nights=bool(w["bridge_nights"]))


def _plot_series(path: Path, series: dict, xlabel: str, ylabel: str, title: str) -> None:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 3.5))
    for label, (xs, ys) in series.items():
        ax.plot(xs, ys, marker="o", label=label)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    if len(series) > 1:
        ax.legend()
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def _emit_report(out: Path, report: EvalReport, tag: str) -> None:
    (out / f"report_{tag}.csv").write_text(report.to_csv(), encoding="utf-8")
    (out / f"report_{tag}.txt").write_text(report.to_table() + "\n", encoding="utf-8")
    if report.by_hour:
        hours = sorted(report.by_hour)
        _plot_series(out / f"hourly_nmap_{tag}.png",
                     {"nMAP": (hours, [report.by_hour[h][0] for h in hours])},
                     "local hour", "nMAP %", f"Hourly nMAP ({tag})")
    if report.by_step:
        steps = sorted(report.by_step)
        _plot_series(out / f"step_nmap_{tag}.png",
                     {"nMAP": (steps, [report.by_step[s][0] for s in steps])},
                     "horizon step", "nMAP %", f"Per-step nMAP ({tag})")


def cmd_eval(args) -> int:
    cfg = resolve_config(args.config)
    out = _prepare_out(args, cfg)
    samples = _load_dataset(args, cfg)
    e = cfg["eval"]
    samples = _split(samples, e["split_boundary"], e["part"])
    if not samples:
        raise DataError("no samples to evaluate after the split")
    tz = int(cfg["location"]["timezone_offset_min"])

    if args.mode == "nowcast":
        model = load_nowcast(args.checkpoint)
        preds = model.predict_samples(samples)
        report = evaluate(nowcast_records(samples, preds), tz)
        _emit_report(out, report, "nowcast")
        if e["baselines"] and len(samples) > 8:
            reg = aux_regression(samples, "nowcast")
            reg_preds = reg.predict(np.stack([s.aux for s in samples]))
            _emit_report(out, evaluate(nowcast_records(samples, reg_preds), tz),
                         "aux_regression")
        print(f"nowcast nMAP {report.overall:.2f}% over {report.count} samples")
    else:
        model = load_forecast(args.checkpoint)
        windows = _forecast_windows_for_eval(cfg, samples)
        if not windows:
            raise DataError("no forecast windows could be built from the data")
        if len(windows[0].samples) != model.config.lookback:
            raise ConfigError("config windows.lookback does not match checkpoint "
                              f"lookback {model.config.lookback}")
        preds = model.forecast_windows(windows)
        report = evaluate(forecast_records(windows, preds), tz)
        _emit_report(out, report, "forecast")
        if e["baselines"]:
            persist = [persistence_baseline(w) for w in windows]
            _emit_report(out, evaluate(forecast_records(windows, persist), tz),
                         "persistence")
            if len(windows) > 16:
                reg = aux_regression(windows, "forecast")
                reg_preds = [reg.predict(window_aux_features(w)) for w in windows]
                _emit_report(out, evaluate(forecast_records(windows, reg_preds), tz),
                             "aux_regression")
        print(f"forecast nMAP {report.overall:.2f}% over {report.count} "
              f"(window, step) pairs")
    return 0


def cmd_predict(args) -> int:
    cfg = resolve_config(args.config)
    out = _prepare_out(args, cfg)
    samples = _load_dataset(args, cfg)
    if not samples:
        raise DataError("no samples to predict")
    if args.mode == "nowcast":
        model = load_nowcast(args.checkpoint)
        preds = model.predict_samples(samples)
        lines = ["timestamp,prediction_wm2"]
        for s, p in zip(samples, preds):
            lines.append(f"{solar.format_utc(s.timestamp)},{float(p)!r}")
        (out / "predictions.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
        print(f"wrote {len(preds)} predictions")
    else:
        model = load_forecast(args.checkpoint)
        windows = _forecast_windows_for_eval(cfg, samples)
        if not windows:
            raise DataError("no forecast windows could be built from the data")
        lines = ["window_start,step,valid_time,prediction_wm2"]
        for w in windows:
            pred = model.forecast(w)
            for step, (t, p) in enumerate(zip(w.target_times, pred), start=1):
                lines.append(f"{solar.format_utc(w.start)},{step},"
                             f"{solar.format_utc(float(t))},{float(p)!r}")
        (out / "predictions.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
        print(f"wrote {len(windows)} windows x {model.config.horizon} steps")
    return 0


def _overlay(frame: np.ndarray, heat: np.ndarray) -> np.ndarray:
    from matplotlib import colormaps

    rgba = colormaps["viridis"](heat)[:, :, :3]
    blend = 0.55 * frame.transpose(1, 2, 0) + 0.45 * rgba
    return (np.clip(blend, 0.0, 1.0) * 255.0).round().astype(np.uint8)


def cmd_heatmap(args) -> int:
    from PIL import Image

    cfg = resolve_config(args.config)
    out = _prepare_out(args, cfg)
    model = load_nowcast(args.checkpoint)
    samples = _load_dataset(args, cfg)
    if not samples:
        raise DataError("no frames for heatmaps")
    h = cfg["heatmap"]
    limit = args.limit if args.limit is not None else int(h["limit"])
    samples = samples[:limit]
    overlays = []
    for i, s in enumerate(samples):
        heat = model.hypercolumn_heatmap(s.image)
        gray = (heat * 255.0).round().astype(np.uint8)
        Image.fromarray(gray, mode="L").save(out / f"heatmap_{i:06d}.png")
        overlays.append(_overlay(s.image, heat))
    strip = np.concatenate(overlays[: int(h["strip_frames"])], axis=1)
    Image.fromarray(strip).save(out / "overlay_strip.png")
    print(f"wrote {len(samples)} heatmaps and an overlay strip to {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="skycast",
        description="Sky-camera solar-irradiance nowcasting and forecasting")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, data=True, checkpoint=False):
        p.add_argument("--config", default=None, help="JSON run config")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=int, default=None)
        if data:
            p.add_argument("--data", required=True, help="dataset directory")
        if checkpoint:
            p.add_argument("--checkpoint", required=True)

    p = sub.add_parser("synth", help="generate a synthetic sky-video dataset")
    common(p, data=False)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train a nowcast or forecast model")
    common(p)
    p.add_argument("--mode", choices=("nowcast", "forecast"), required=True)
    p.add_argument("--encoder", default=None,
                   help="stage-1 checkpoint for forecast training")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint and emit reports")
    common(p, checkpoint=True)
    p.add_argument("--mode", choices=("nowcast", "forecast"), required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("predict", help="write per-sample or per-window predictions")
    common(p, checkpoint=True)
    p.add_argument("--mode", choices=("nowcast", "forecast"), required=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("heatmap", help="emit hypercolumn heatmaps and an overlay strip")
    common(p, checkpoint=True)
    p.add_argument("--limit", type=int, default=None)
    p.set_defaults(func=cmd_heatmap)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 1
    try:
        return args.func(args)
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3
    except (DataError, MetricError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
