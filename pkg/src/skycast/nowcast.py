"""Stage-1 model: dilated-convolution sky encoder fused with weather features.

The encoder opens with 128 dilated 7x7 filters (dilation 4, receptive field
25x25), continues through 3x3 blocks of 64/128/256 filters with 2x2 pooling
placed so a 64x64 input reaches a 2x2x256 map, and flattens into a dense
512-vector, the full-sky representation of one frame. That embedding is
concatenated with the 7 auxiliary weather features (519 total) and a dropout
plus one dense layer predict instantaneous irradiance.

Training z-scores both the auxiliary vector and the irradiance target with
statistics from the training split; the statistics travel with the model in
its checkpoint, so callers always pass raw values.
"""

from __future__ import annotations

import time
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from . import layers as L
from . import tensor as T
from .checkpoint import load_checkpoint, save_checkpoint
from .data import AuxStats, ScalarStats, SkySample, normalize_aux, scalar_stats
from .errors import ConfigError, NumericError, ShapeError
from .metrics import nmap
from .optim import Adam, AdamConfig, LossConfig, l2_penalty, logcosh_loss
from .tensor import Tape, Tensor

# (filters, pool_after) per 3x3 layer behind the stem; one pool after the 64
# block, one after the second 128, one after each 256: 64->32->16->8->4->2.
DEFAULT_CONV_PLAN = ((64, True), (128, False), (128, True),
                     (256, True), (256, True), (256, True))


@dataclass(frozen=True)
class NowcastConfig:
    input_channels: int = 3
    image_size: int = 64
    stem_filters: int = 128
    stem_kernel: int = 7
    stem_dilation: int = 4
    conv_plan: tuple = DEFAULT_CONV_PLAN
    embedding_size: int = 512
    aux_size: int = 7
    dropout_rate: float = 0.3
    head_size: int = 1
    aux_zeroed: bool = False  # ablation: feed zeros instead of weather
    enforce_standard_fusion: bool = True

    def __post_init__(self):
        if self.enforce_standard_fusion and self.embedding_size + self.aux_size != 519:
            raise ConfigError(
                f"fused vector must be 519-dimensional, got "
                f"{self.embedding_size} + {self.aux_size}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ConfigError(f"dropout rate {self.dropout_rate} outside [0, 1)")

    @property
    def fused_size(self) -> int:
        return self.embedding_size + self.aux_size

    def spatial_map(self) -> tuple[int, int]:
        """(side, channels) of the final feature map before flattening."""
        side = self.image_size
        channels = self.stem_filters
        for filters, pool in self.conv_plan:
            channels = filters
            if pool:
                if side < 2:
                    raise ConfigError("conv plan pools below 1x1")
                side //= 2
        return side, channels

    @classmethod
    def tiny(cls, image_size: int = 8, width: int = 6, embedding: int = 8,
             dropout_rate: float = 0.0) -> "NowcastConfig":
        """Small same-topology config for gradient checks."""
        return cls(image_size=image_size, stem_filters=width,
                   conv_plan=((width, True), (width, False), (width, True),
                              (width, True), (width, False), (width, False)),
                   embedding_size=embedding, dropout_rate=dropout_rate,
                   enforce_standard_fusion=False)


class NowcastModel:
    def __init__(self, config: NowcastConfig, seed: int = 0):
        self.config = config
        rng = np.random.default_rng(seed)
        c = config
        self.stem = L.Conv2D(c.input_channels, c.stem_filters, c.stem_kernel,
                             dilation=c.stem_dilation, name="encoder.stem", rng=rng)
        self.convs = []
        in_ch = c.stem_filters
        for i, (filters, _) in enumerate(c.conv_plan, start=1):
            self.convs.append(L.Conv2D(in_ch, filters, 3, name=f"encoder.conv{i}", rng=rng))
            in_ch = filters
        side, channels = c.spatial_map()
        self.flatten_size = side * side * channels
        self.embed = L.Dense(self.flatten_size, c.embedding_size, name="encoder.embed", rng=rng)
        self.head = L.Dense(c.fused_size, c.head_size, name="head", rng=rng)
        self.dropout = L.Dropout(c.dropout_rate)
        self.aux_stats: AuxStats | None = None
        self.target_stats: ScalarStats | None = None

    # -- parameters ---------------------------------------------------------

    def parameters(self) -> list[T.Parameter]:
        params = self.stem.parameters()
        for conv in self.convs:
            params += conv.parameters()
        params += self.embed.parameters() + self.head.parameters()
        return params

    @property
    def parameter_count(self) -> int:
        return sum(p.tensor.size for p in self.parameters())

    def encoder_parameters(self) -> list[T.Parameter]:
        params = self.stem.parameters()
        for conv in self.convs:
            params += conv.parameters()
        return params + self.embed.parameters()

    # -- forward ------------------------------------------------------------

    def _check_image(self, image: np.ndarray) -> None:
        want = (self.config.input_channels, self.config.image_size, self.config.image_size)
        if tuple(image.shape) != want:
            raise ShapeError(f"expected image shape {want}, got {tuple(image.shape)}")

    def _embed(self, x: Tensor, activations: list | None = None) -> Tensor:
        h = T.relu(self.stem(x))
        if activations is not None:
            activations.append(h.data[0])
        for conv, (_, pool) in zip(self.convs, self.config.conv_plan):
            h = T.relu(conv(h))
            if activations is not None:
                activations.append(h.data[0])
            if pool:
                h = L.maxpool2d(h)
        flat = T.reshape(h, (h.shape[0], self.flatten_size))
        return T.relu(self.embed(flat))

    def forward(self, image: Tensor, aux_normalized: Tensor, training: bool = False,
                rng: np.random.Generator | None = None) -> Tensor:
        """Prediction in normalized-target space, shape (1, 1)."""
        if image.ndim == 3:
            image = T.reshape(image, (1,) + image.shape)
        emb = self._embed(image)
        if aux_normalized.ndim == 1:
            aux_normalized = T.reshape(aux_normalized, (1, aux_normalized.shape[0]))
        fused = T.concat([emb, aux_normalized], axis=1)
        fused = self.dropout(fused, training=training, rng=rng)
        return self.head(fused)

    def _aux_input(self, aux_raw: np.ndarray) -> np.ndarray:
        if self.aux_stats is None:
            raise ValueError("model has no aux statistics yet; train or load first")
        if self.config.aux_zeroed:
            return np.zeros(self.config.aux_size)
        return self.aux_stats.transform(aux_raw)

    def encode_frame(self, image: np.ndarray) -> np.ndarray:
        """The 512-component full-sky representation of one frame."""
        self._check_image(image)
        emb = self._embed(Tensor(image.reshape((1,) + image.shape)))
        return emb.data[0].copy()

    def predict(self, image: np.ndarray, aux_raw: np.ndarray) -> float:
        """Irradiance in W/m^2, clamped at 0 from below."""
        self._check_image(image)
        out = self.forward(Tensor(image), Tensor(self._aux_input(aux_raw)))
        value = self.target_stats.inverse(out.data[0, 0]) if self.target_stats else out.data[0, 0]
        return max(0.0, float(value))

    def predict_samples(self, samples: Sequence[SkySample]) -> np.ndarray:
        return np.array([self.predict(s.image, s.aux) for s in samples])

    def hypercolumn_heatmap(self, image: np.ndarray) -> np.ndarray:
        """Mean of channel-averaged conv activations, upsampled to the input
        grid and min-max normalized to [0, 1]."""
        self._check_image(image)
        activations: list = []
        self._embed(Tensor(image.reshape((1,) + image.shape)), activations=activations)
        size = self.config.image_size
        maps = [bilinear_resize(act.mean(axis=0), size) for act in activations]
        heat = np.mean(maps, axis=0)
        span = heat.max() - heat.min()
        if span == 0.0:
            return np.zeros_like(heat)
        return (heat - heat.min()) / span

    # -- persistence --------------------------------------------------------

    def state_arrays(self) -> dict:
        arrays = {f"param/{p.name}": p.tensor.data for p in self.parameters()}
        if self.aux_stats is not None:
            arrays["stats/aux_mean"] = self.aux_stats.mean
            arrays["stats/aux_std"] = self.aux_stats.std
        if self.target_stats is not None:
            arrays["stats/target"] = np.array([self.target_stats.mean, self.target_stats.std])
        return arrays


def save_nowcast(model: NowcastModel, path) -> None:
    config = asdict(model.config)
    config["conv_plan"] = [list(pair) for pair in model.config.conv_plan]
    save_checkpoint(path, {"kind": "nowcast", "config": config}, model.state_arrays())


def load_nowcast(path) -> NowcastModel:
    header, arrays = load_checkpoint(path)
    if header.get("kind") != "nowcast":
        raise ConfigError(f"checkpoint kind {header.get('kind')!r} is not 'nowcast'")
    cfg_dict = dict(header["config"])
    cfg_dict["conv_plan"] = tuple(tuple(pair) for pair in cfg_dict["conv_plan"])
    model = NowcastModel(NowcastConfig(**cfg_dict), seed=0)
    for p in model.parameters():
        key = f"param/{p.name}"
        if key not in arrays:
            raise ConfigError(f"checkpoint missing parameter {p.name}")
        if arrays[key].shape != p.tensor.data.shape:
            raise ConfigError(f"checkpoint parameter {p.name} has shape "
                              f"{arrays[key].shape}, model expects {p.tensor.data.shape}")
        p.tensor.data = arrays[key]
    if "stats/aux_mean" in arrays:
        model.aux_stats = AuxStats(mean=arrays["stats/aux_mean"], std=arrays["stats/aux_std"])
    if "stats/target" in arrays:
        mean, std = arrays["stats/target"]
        model.target_stats = ScalarStats(mean=float(mean), std=float(std))
    return model


def build_nowcast(config: NowcastConfig | None = None, seed: int = 0) -> NowcastModel:
    """Deterministically initialized model; same seed, same bits."""
    return NowcastModel(config or NowcastConfig(), seed=seed)


def bilinear_resize(arr: np.ndarray, size: int) -> np.ndarray:
    """Bilinear upsampling of a square 2-D map (corner-aligned)."""
    h, w = arr.shape
    if (h, w) == (size, size):
        return arr.astype(np.float64)
    def axis_coords(n):
        if n == 1:
            return np.zeros(size)
        return np.linspace(0.0, n - 1.0, size)
    ys = axis_coords(h)
    xs = axis_coords(w)
    y0 = np.clip(np.floor(ys).astype(int), 0, max(h - 2, 0))
    x0 = np.clip(np.floor(xs).astype(int), 0, max(w - 2, 0))
    wy = (ys - y0)[:, None]
    wx = (xs - x0)[None, :]
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    a = arr[np.ix_(y0, x0)]
    b = arr[np.ix_(y0, x1)]
    c = arr[np.ix_(y1, x0)]
    d = arr[np.ix_(y1, x1)]
    return (a * (1 - wy) * (1 - wx) + b * (1 - wy) * wx
            + c * wy * (1 - wx) + d * wy * wx)


# ---------------------------------------------------------------------------
# training


@dataclass
class TrainResult:
    loss_history: list
    nmap_history: list
    epochs_run: int
    seconds: float
    stopped_early: bool = False


def train_nowcast(model: NowcastModel, samples: Sequence[SkySample],
                  loss_cfg: LossConfig | None = None,
                  adam_cfg: AdamConfig | None = None,
                  epochs: int = 100, batch_size: int = 32, seed: int = 0,
                  target_train_nmap: float | None = None) -> TrainResult:
    """Adam on mean log-cosh loss (normalized targets) plus L2.

    Deterministic for a fixed seed and sample order. Stops early once the
    training-set nMAP drops below ``target_train_nmap`` (if given). A NaN
    batch loss aborts with the epoch/batch in the message.
    """
    loss_cfg = loss_cfg or LossConfig()
    adam_cfg = adam_cfg or AdamConfig()
    samples = list(samples)
    if not samples:
        raise ValueError("train_nowcast needs a non-empty training set")
    if model.aux_stats is None:
        model.aux_stats = normalize_aux(samples)
    if model.target_stats is None:
        model.target_stats = scalar_stats([s.irradiance for s in samples])

    params = model.parameters()
    opt = Adam(params, adam_cfg)
    rng = np.random.default_rng(seed)
    aux_inputs = [model._aux_input(s.aux) for s in samples]
    targets_z = [float(model.target_stats.transform(s.irradiance)) for s in samples]

    start = time.perf_counter()
    history: list[float] = []
    nmap_history: list[float] = []
    stopped = False
    for epoch in range(epochs):
        order = rng.permutation(len(samples))
        lr = opt.learning_rate_for_epoch(epoch)
        epoch_losses = []
        for b0 in range(0, len(order), batch_size):
            batch = order[b0:b0 + batch_size]
            for p in params:
                p.tensor.grad = None
            batch_loss = 0.0
            for idx in batch:
                s = samples[idx]
                with Tape() as tape:
                    pred = model.forward(Tensor(s.image), Tensor(aux_inputs[idx]),
                                         training=True, rng=rng)
                    loss = logcosh_loss(Tensor(np.array([[targets_z[idx]]])), pred, loss_cfg)
                    tape.backward(loss)
                batch_loss += loss.item()
            scale = 1.0 / len(batch)
            grads = {}
            for p in params:
                grads[p.name] = (p.tensor.grad * scale if p.tensor.grad is not None
                                 else np.zeros_like(p.tensor.data))
                p.tensor.grad = None
            if loss_cfg.l2_coefficient > 0.0:
                with Tape() as tape:
                    pen = l2_penalty(params, loss_cfg.l2_coefficient)
                    for name, g in tape.gradients(pen, params).items():
                        grads[name] += g
                batch_loss += pen.item() * len(batch)
            mean_loss = batch_loss * scale
            if np.isnan(mean_loss):
                raise NumericError(f"NaN loss at epoch {epoch} batch {b0 // batch_size}")
            opt.step(grads, lr)
            epoch_losses.append(mean_loss)
        history.append(float(np.mean(epoch_losses)))
        if target_train_nmap is not None:
            preds = model.predict_samples(samples)
            score = nmap([s.irradiance for s in samples], preds)
            nmap_history.append(score)
            if score < target_train_nmap:
                stopped = True
                break
    return TrainResult(loss_history=history, nmap_history=nmap_history,
                       epochs_run=len(history), seconds=time.perf_counter() - start,
                       stopped_early=stopped)
