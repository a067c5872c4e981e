from dataclasses import dataclass

import numpy as np
import numpy.testing as npt
import pytest

from skycast import optim
from skycast import tensor as T
from skycast.data import AuxStats, ForecastWindow, ScalarStats
from skycast.errors import ConfigError
from skycast.forecast import (ForecastConfig, build_forecast,
                              load_forecast, save_forecast, train_forecast)
from skycast.nowcast import NowcastConfig, build_nowcast
from skycast.tensor import Tensor


@dataclass
class FakeSample:
    image: np.ndarray
    aux: np.ndarray
    irradiance: float
    timestamp: float


def trained_tiny_encoder(seed=0):
    model = build_nowcast(NowcastConfig.tiny(), seed=seed)
    cfg = model.config
    model.aux_stats = AuxStats(mean=np.zeros(cfg.aux_size), std=np.ones(cfg.aux_size))
    model.target_stats = ScalarStats(mean=400.0, std=150.0)
    return model


def tiny_forecast(lookback=4, horizon=3, seed=0, **kw):
    encoder = trained_tiny_encoder()
    cfg = ForecastConfig(lookback=lookback, horizon=horizon, frame_hidden=6,
                         weather_hidden=3, merge_hidden=5, dropout_rate=0.0,
                         embedding_size=encoder.config.embedding_size, **kw)
    return build_forecast(cfg, encoder, seed=seed)


def fake_windows(n, lookback, horizon, cfg, seed=0, cadence=600.0):
    rng = np.random.default_rng(seed)
    windows = []
    t0 = 1.4e9
    for i in range(n):
        start = t0 + i * 3600.0
        samples = []
        for k in range(lookback):
            samples.append(FakeSample(
                image=rng.random((cfg.input_channels, cfg.image_size, cfg.image_size)),
                aux=rng.uniform(0, 5, size=cfg.aux_size),
                irradiance=float(rng.uniform(200, 800)),
                timestamp=start + k * cadence))
        targets = rng.uniform(200, 800, size=horizon)
        target_times = start + cadence * (lookback + np.arange(horizon))
        windows.append(ForecastWindow(samples=samples, targets=targets,
                                      target_times=target_times, start=start))
    return windows


def test_config_validation():
    with pytest.raises(ConfigError):
        ForecastConfig(lookback=0, horizon=4)
    with pytest.raises(ConfigError):
        ForecastConfig(lookback=4, horizon=4, merge_mode="sum")


def test_encoder_embedding_size_must_match():
    encoder = trained_tiny_encoder()
    cfg = ForecastConfig(lookback=3, horizon=2, embedding_size=512)
    with pytest.raises(ConfigError):
        build_forecast(cfg, encoder)


def test_build_requires_trained_encoder():
    encoder = build_nowcast(NowcastConfig.tiny(), seed=0)  # no stats yet
    cfg = ForecastConfig(lookback=3, horizon=2,
                         embedding_size=encoder.config.embedding_size)
    with pytest.raises(ValueError):
        build_forecast(cfg, encoder)


def test_frame_track_parameter_count_512_to_128():
    encoder = build_nowcast(seed=0)
    encoder.aux_stats = AuxStats(mean=np.zeros(7), std=np.ones(7))
    model = build_forecast(ForecastConfig(lookback=4, horizon=2), encoder, seed=0)
    frame_params = sum(p.tensor.size for p in model.frame_lstm.parameters())
    assert frame_params == 4 * (512 + 128 + 1) * 128 == 328_192
    weather_params = sum(p.tensor.size for p in model.weather_lstm.parameters())
    assert weather_params == 4 * (7 + 4 + 1) * 4 == 192


def test_build_deterministic_and_seed_sensitivity():
    a = tiny_forecast(seed=5)
    b = tiny_forecast(seed=5)
    c = tiny_forecast(seed=6)
    for pa, pb in zip(a.parameters(), b.parameters()):
        assert pa.tensor.data.tobytes() == pb.tensor.data.tobytes()
    assert any(pa.tensor.data.tobytes() != pc.tensor.data.tobytes()
               for pa, pc in zip(a.parameters(), c.parameters()))


def test_forecast_shapes_nonnegative_deterministic():
    model = tiny_forecast(lookback=4, horizon=3)
    model.target_stats = ScalarStats(mean=400.0, std=150.0)
    windows = fake_windows(2, 4, 3, model.encoder.config, seed=1)
    out = model.forecast(windows[0])
    assert out.shape == (3,)
    assert np.all(out >= 0.0)
    npt.assert_array_equal(out, model.forecast(windows[0]))
    with pytest.raises(ValueError):
        model.forecast(fake_windows(1, 5, 3, model.encoder.config)[0])


def test_track_state_sizes():
    model = tiny_forecast(lookback=3, horizon=2)
    windows = fake_windows(1, 3, 2, model.encoder.config, seed=2)
    emb_seq, aux_seq = model._window_inputs(windows)
    from skycast.layers import lstm_sequence
    _, frame_final = lstm_sequence(emb_seq, model.frame_lstm)
    _, weather_final = lstm_sequence(aux_seq, model.weather_lstm)
    assert frame_final.shape == (1, model.config.frame_hidden)
    assert weather_final.shape == (1, model.config.weather_hidden)
    assert np.all(np.isfinite(frame_final.data))
    assert np.all(np.isfinite(weather_final.data))


def test_frozen_encoder_unchanged_by_training():
    model = tiny_forecast(lookback=3, horizon=2)
    frozen = {p.name: p.tensor.data.copy() for p in model.encoder.parameters()}
    windows = fake_windows(6, 3, 2, model.encoder.config, seed=3)
    train_forecast(model, windows, epochs=3, batch_size=3, seed=1)
    for p in model.encoder.parameters():
        npt.assert_array_equal(p.tensor.data, frozen[p.name])


def test_train_zero_epochs_keeps_parameters():
    model = tiny_forecast(lookback=3, horizon=2)
    before = {p.name: p.tensor.data.copy() for p in model.parameters()}
    result = train_forecast(model, fake_windows(4, 3, 2, model.encoder.config),
                            epochs=0)
    assert result.loss_history == []
    for p in model.parameters():
        npt.assert_array_equal(p.tensor.data, before[p.name])


def test_training_descends_and_reproducible():
    histories = []
    for _ in range(2):
        model = tiny_forecast(lookback=3, horizon=2, seed=9)
        windows = fake_windows(10, 3, 2, model.encoder.config, seed=4)
        # learnable structure: horizon repeats the mean of look-back irradiance
        for w in windows:
            w.targets = np.full(2, np.mean([s.irradiance for s in w.samples]))
        result = train_forecast(model, windows, epochs=8, batch_size=5, seed=2,
                                adam_cfg=optim.AdamConfig(learning_rate=3e-3, decay=1.0))
        histories.append(result.loss_history)
    assert histories[0] == histories[1]
    assert histories[0][-1] < histories[0][0]


def test_merge_concat_mode_works():
    model = tiny_forecast(lookback=3, horizon=2, merge_mode="concat")
    assert model.merge_lstm is None
    model.target_stats = ScalarStats(mean=400.0, std=150.0)
    out = model.forecast(fake_windows(1, 3, 2, model.encoder.config)[0])
    assert out.shape == (2,)


@pytest.mark.parametrize("seed", range(3))
def test_merge_and_head_grad_check_tiny(seed):
    # L=3, H=2, embedding 8: gradient flow through both tracks and the merge
    rng = np.random.default_rng(100 + seed)
    model = tiny_forecast(lookback=3, horizon=2, seed=seed)
    emb_seq = [Tensor(rng.uniform(-1, 1, size=(1, 8))) for _ in range(3)]
    aux_seq = [Tensor(rng.uniform(-1, 1, size=(1, 7))) for _ in range(3)]
    target = Tensor(rng.uniform(-1, 1, size=(1, 2)))

    def loss_fn(*params):
        pred = model.forward_sequences(emb_seq, aux_seq)
        return optim.logcosh_loss(target, pred)

    probes = [model.merge_lstm.w_x.tensor, model.merge_lstm.w_h.tensor,
              model.head.weights.tensor, model.head.bias.tensor]
    assert T.grad_check(loss_fn, probes) < 1e-4


def test_checkpoint_roundtrip_bit_exact(tmp_path):
    model = tiny_forecast(lookback=3, horizon=2, seed=13)
    windows = fake_windows(6, 3, 2, model.encoder.config, seed=5)
    train_forecast(model, windows, epochs=2, batch_size=3, seed=7)
    path = tmp_path / "forecast.ckpt"
    save_forecast(model, path)
    again = load_forecast(path)
    for pa, pb in zip(model.parameters(), again.parameters()):
        assert pa.tensor.data.tobytes() == pb.tensor.data.tobytes()
    for pa, pb in zip(model.encoder.parameters(), again.encoder.parameters()):
        assert pa.tensor.data.tobytes() == pb.tensor.data.tobytes()
    assert model.target_stats == again.target_stats
    npt.assert_array_equal(model.forecast(windows[0]), again.forecast(windows[0]))
    path2 = tmp_path / "forecast2.ckpt"
    save_forecast(again, path2)
    assert path.read_bytes() == path2.read_bytes()
