"""Stage-2 model: two-tier recurrence over frame embeddings and weather.

A frozen copy of the stage-1 encoder turns each look-back frame into its
512-vector full-sky representation. One LSTM track (hidden 128) consumes
those embeddings, a second track (hidden 4) consumes the 7 weather features;
their per-step hidden states are concatenated (132 values) and fed to a
third, merging LSTM whose final state drives a dropout plus dense head that
emits the whole horizon vector at once. Setting ``merge_mode="concat"``
instead concatenates only the two final states directly into the head.

Because the encoder is frozen, embeddings are computed once per frame and
cached by timestamp, so training cost scales with frames rather than with
windows times look-back length.
"""

from __future__ import annotations

import time
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from . import layers as L
from . import tensor as T
from .checkpoint import load_checkpoint, save_checkpoint
from .data import ForecastWindow, ScalarStats, scalar_stats
from .errors import ConfigError, NumericError
from .metrics import nmap
from .nowcast import NowcastConfig, NowcastModel, TrainResult
from .optim import Adam, AdamConfig, LossConfig, l2_penalty, logcosh_loss
from .tensor import Tape, Tensor


@dataclass(frozen=True)
class ForecastConfig:
    lookback: int
    horizon: int
    frame_hidden: int = 128
    weather_hidden: int = 4
    merge_hidden: int = 64
    merge_mode: str = "lstm"  # "lstm" or "concat"
    dropout_rate: float = 0.3
    embedding_size: int = 512
    aux_size: int = 7

    def __post_init__(self):
        if self.lookback < 1 or self.horizon < 1:
            raise ConfigError("lookback and horizon must be >= 1")
        if self.merge_mode not in ("lstm", "concat"):
            raise ConfigError(f"unknown merge_mode {self.merge_mode!r}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ConfigError(f"dropout rate {self.dropout_rate} outside [0, 1)")


class ForecastModel:
    def __init__(self, config: ForecastConfig, encoder: NowcastModel, seed: int = 0):
        if encoder.config.embedding_size != config.embedding_size:
            raise ConfigError(
                f"encoder embedding size {encoder.config.embedding_size} does not "
                f"match forecast config {config.embedding_size}")
        self.config = config
        self.encoder = encoder
        rng = np.random.default_rng(seed)
        c = config
        self.frame_lstm = L.LSTM(c.embedding_size, c.frame_hidden,
                                 name="forecast.frame_lstm", rng=rng)
        self.weather_lstm = L.LSTM(c.aux_size, c.weather_hidden,
                                   name="forecast.weather_lstm", rng=rng)
        track_size = c.frame_hidden + c.weather_hidden
        if c.merge_mode == "lstm":
            self.merge_lstm = L.LSTM(track_size, c.merge_hidden,
                                     name="forecast.merge_lstm", rng=rng)
            head_in = c.merge_hidden
        else:
            self.merge_lstm = None
            head_in = track_size
        self.head = L.Dense(head_in, c.horizon, name="forecast.head", rng=rng)
        self.dropout = L.Dropout(c.dropout_rate)
        self.target_stats: ScalarStats | None = None
        self._embed_cache: dict[float, np.ndarray] = {}

    def parameters(self) -> list[T.Parameter]:
        """Trainable parameters only; the encoder stays frozen."""
        params = (self.frame_lstm.parameters() + self.weather_lstm.parameters()
                  + self.head.parameters())
        if self.merge_lstm is not None:
            params += self.merge_lstm.parameters()
        return params

    @property
    def parameter_count(self) -> int:
        return sum(p.tensor.size for p in self.parameters())

    # -- embeddings ---------------------------------------------------------

    def embed_frame(self, sample) -> np.ndarray:
        cached = self._embed_cache.get(sample.timestamp)
        if cached is None:
            cached = self.encoder.encode_frame(sample.image)
            self._embed_cache[sample.timestamp] = cached
        return cached

    def precompute_embeddings(self, windows: Sequence[ForecastWindow]) -> int:
        """Fill the timestamp-keyed cache; returns the unique frame count."""
        for w in windows:
            for s in w.samples:
                self.embed_frame(s)
        return len(self._embed_cache)

    # -- forward ------------------------------------------------------------

    def forward_sequences(self, emb_seq: Sequence[Tensor], aux_seq: Sequence[Tensor],
                          training: bool = False,
                          rng: np.random.Generator | None = None) -> Tensor:
        """Normalized-space horizon prediction, shape (batch, horizon)."""
        frame_states, frame_final = L.lstm_sequence(emb_seq, self.frame_lstm)
        weather_states, weather_final = L.lstm_sequence(aux_seq, self.weather_lstm)
        if self.merge_lstm is not None:
            merged = [T.concat([f, w], axis=1)
                      for f, w in zip(frame_states, weather_states)]
            _, features = L.lstm_sequence(merged, self.merge_lstm)
        else:
            features = T.concat([frame_final, weather_final], axis=1)
        features = self.dropout(features, training=training, rng=rng)
        return self.head(features)

    def _window_inputs(self, windows: Sequence[ForecastWindow]) -> tuple[list, list]:
        c = self.config
        stats = self.encoder.aux_stats
        if stats is None:
            raise ValueError("encoder has no aux statistics; train stage 1 first")
        emb_seq, aux_seq = [], []
        for t in range(c.lookback):
            emb_seq.append(Tensor(np.stack([self.embed_frame(w.samples[t]) for w in windows])))
            aux_seq.append(Tensor(np.stack([stats.transform(w.samples[t].aux)
                                            for w in windows])))
        return emb_seq, aux_seq

    def forecast(self, window: ForecastWindow) -> np.ndarray:
        """Horizon irradiance in W/m^2, nonnegative, one value per step."""
        if len(window.samples) != self.config.lookback:
            raise ValueError(f"window look-back {len(window.samples)} != "
                             f"configured {self.config.lookback}")
        emb_seq, aux_seq = self._window_inputs([window])
        out = self.forward_sequences(emb_seq, aux_seq)
        z = out.data[0]
        values = self.target_stats.inverse(z) if self.target_stats else z
        return np.maximum(values, 0.0)

    def forecast_windows(self, windows: Sequence[ForecastWindow]) -> np.ndarray:
        return np.stack([self.forecast(w) for w in windows])

    # -- persistence --------------------------------------------------------

    def state_arrays(self) -> dict:
        arrays = {f"param/{p.name}": p.tensor.data for p in self.parameters()}
        arrays.update(self.encoder.state_arrays())
        if self.target_stats is not None:
            arrays["stats/forecast_target"] = np.array(
                [self.target_stats.mean, self.target_stats.std])
        return arrays


def build_forecast(config: ForecastConfig, nowcast: NowcastModel,
                   seed: int = 0) -> ForecastModel:
    """Fresh recurrent/head parameters over a frozen copy of the encoder."""
    if nowcast.aux_stats is None:
        raise ValueError("stage-1 model must be trained (missing aux statistics)")
    encoder = NowcastModel(nowcast.config, seed=0)
    for src, dst in zip(nowcast.parameters(), encoder.parameters()):
        dst.tensor.data = src.tensor.data.copy()
        dst.tensor.requires_grad = False
    encoder.aux_stats = nowcast.aux_stats
    encoder.target_stats = nowcast.target_stats
    return ForecastModel(config, encoder, seed=seed)


def save_forecast(model: ForecastModel, path) -> None:
    config = {
        "kind": "forecast",
        "config": asdict(model.config),
        "encoder_config": asdict(model.encoder.config),
    }
    config["encoder_config"]["conv_plan"] = [list(p) for p in
                                             model.encoder.config.conv_plan]
    save_checkpoint(path, config, model.state_arrays())


def load_forecast(path) -> ForecastModel:
    header, arrays = load_checkpoint(path)
    if header.get("kind") != "forecast":
        raise ConfigError(f"checkpoint kind {header.get('kind')!r} is not 'forecast'")
    enc_cfg = dict(header["encoder_config"])
    enc_cfg["conv_plan"] = tuple(tuple(p) for p in enc_cfg["conv_plan"])
    encoder = NowcastModel(NowcastConfig(**enc_cfg), seed=0)
    for p in encoder.parameters():
        p.tensor.data = arrays[f"param/{p.name}"]
        p.tensor.requires_grad = False
    from .data import AuxStats
    if "stats/aux_mean" in arrays:
        encoder.aux_stats = AuxStats(mean=arrays["stats/aux_mean"],
                                     std=arrays["stats/aux_std"])
    if "stats/target" in arrays:
        mean, std = arrays["stats/target"]
        encoder.target_stats = ScalarStats(mean=float(mean), std=float(std))
    model = ForecastModel(ForecastConfig(**header["config"]), encoder, seed=0)
    for p in model.parameters():
        key = f"param/{p.name}"
        if key not in arrays:
            raise ConfigError(f"checkpoint missing parameter {p.name}")
        p.tensor.data = arrays[key]
    if "stats/forecast_target" in arrays:
        mean, std = arrays["stats/forecast_target"]
        model.target_stats = ScalarStats(mean=float(mean), std=float(std))
    return model


# ---------------------------------------------------------------------------
# training


def train_forecast(model: ForecastModel, windows: Sequence[ForecastWindow],
                   loss_cfg: LossConfig | None = None,
                   adam_cfg: AdamConfig | None = None,
                   epochs: int = 60, batch_size: int = 8, seed: int = 0) -> TrainResult:
    """Adam on the mean log-cosh across horizon steps, plus L2.

    The loss applies to z-scored targets (statistics from the training
    windows, stored with the model). Reproducible for a fixed seed; a NaN
    batch loss aborts with epoch/batch in the message.
    """
    loss_cfg = loss_cfg or LossConfig()
    adam_cfg = adam_cfg or AdamConfig()
    windows = list(windows)
    if not windows:
        raise ValueError("train_forecast needs a non-empty window set")
    for w in windows:
        if len(w.samples) != model.config.lookback:
            raise ValueError("window look-back length does not match the model")
    if model.target_stats is None:
        model.target_stats = scalar_stats(np.concatenate([w.targets for w in windows]))

    model.precompute_embeddings(windows)
    params = model.parameters()
    opt = Adam(params, adam_cfg)
    rng = np.random.default_rng(seed)
    targets_z = [model.target_stats.transform(w.targets) for w in windows]

    start = time.perf_counter()
    history: list[float] = []
    for epoch in range(epochs):
        order = rng.permutation(len(windows))
        lr = opt.learning_rate_for_epoch(epoch)
        epoch_losses = []
        for b0 in range(0, len(order), batch_size):
            batch = [windows[i] for i in order[b0:b0 + batch_size]]
            batch_targets = Tensor(np.stack([targets_z[i] for i in order[b0:b0 + batch_size]]))
            for p in params:
                p.tensor.grad = None
            with Tape() as tape:
                emb_seq, aux_seq = model._window_inputs(batch)
                pred = model.forward_sequences(emb_seq, aux_seq, training=True, rng=rng)
                loss = logcosh_loss(batch_targets, pred, loss_cfg)
                if loss_cfg.l2_coefficient > 0.0:
                    loss = T.add(loss, l2_penalty(params, loss_cfg.l2_coefficient))
                value = loss.item()
                if np.isnan(value):
                    raise NumericError(f"NaN loss at epoch {epoch} batch {b0 // batch_size}")
                tape.backward(loss)
            grads = {p.name: (p.tensor.grad if p.tensor.grad is not None
                              else np.zeros_like(p.tensor.data)) for p in params}
            for p in params:
                p.tensor.grad = None
            opt.step(grads, lr)
            epoch_losses.append(value)
        history.append(float(np.mean(epoch_losses)))
    return TrainResult(loss_history=history, nmap_history=[],
                       epochs_run=len(history), seconds=time.perf_counter() - start)
