"""Neural-network layers on top of the tensor engine.

Dilated 2-D convolution, non-overlapping max pooling, dense layers, inverted
dropout and LSTM cells/sequences. Convolution is the only place in the
package with a hand-rolled backward rule of any size; everything else is a
composition of tested primitives.
"""

from __future__ import annotations

import threading
from typing import Sequence

import numpy as np

from . import tensor as T
from .errors import ShapeError
from .tensor import Array, Parameter, Tensor, active_tape

_COL_CACHE_LIMIT = 256 * 1024 * 1024  # bytes of im2col kept alive per conv node

# Large scratch buffers (im2col matrices, padded planes) are pooled: fresh
# multi-megabyte allocations go through mmap and cost more in page faults
# than the arithmetic they carry. A buffer is reused only after its previous
# holder explicitly returns it, so aliasing is impossible.
_POOL: dict[tuple, list[Array]] = {}
_POOL_LOCK = threading.Lock()
_POOL_DEPTH = 4


def _take(shape: tuple) -> Array:
    with _POOL_LOCK:
        stack = _POOL.get(shape)
        if stack:
            return stack.pop()
    return np.empty(shape)


def _give(arr: Array) -> None:
    with _POOL_LOCK:
        stack = _POOL.setdefault(arr.shape, [])
        if len(stack) < _POOL_DEPTH:
            stack.append(arr)


def _pair(v) -> tuple[int, int]:
    if isinstance(v, (tuple, list)):
        a, b = v
        return int(a), int(b)
    return int(v), int(v)


def _same_pads(k: int, dil: int) -> tuple[int, int]:
    total = (k - 1) * dil
    return total // 2, total - total // 2


def conv2d(x: Tensor, kernel: Tensor, bias: Tensor | None = None,
           dilation=(1, 1), stride=(1, 1), padding: str = "same") -> Tensor:
    """Dilated 2-D convolution (cross-correlation form).

    Output(p) sums input(p + dilation * t) * kernel(t) over kernel taps t, so
    dilation (1, 1) is ordinary convolution and a kernel zero-inflated by the
    dilation factor reproduces the dilated result exactly. The input is
    (C, H, W) or (N, C, H, W); same padding zero-pads so the spatial size is
    preserved (stride must then be 1).
    """
    squeeze = x.ndim == 3
    if squeeze:
        x = T.reshape(x, (1,) + x.shape)
    if x.ndim != 4:
        raise ShapeError(f"conv2d input must be (C,H,W) or (N,C,H,W), got {x.shape}")
    if kernel.ndim != 4:
        raise ShapeError(f"conv2d kernel must be (O,C,kh,kw), got {kernel.shape}")
    n, c, h, w = x.shape
    o, ck, kh, kw = kernel.shape
    if ck != c:
        raise ShapeError(f"channel mismatch: input has {c}, kernel expects {ck}")
    lh, lw = _pair(dilation)
    sh, sw = _pair(stride)
    if min(lh, lw) < 1 or min(sh, sw) < 1:
        raise ShapeError("dilation and stride must be >= 1")
    ext_h, ext_w = (kh - 1) * lh + 1, (kw - 1) * lw + 1
    if padding == "same":
        if (sh, sw) != (1, 1):
            raise ShapeError("same padding requires stride (1, 1)")
        pt, pb = _same_pads(kh, lh)
        pl, pr = _same_pads(kw, lw)
    elif padding == "valid":
        pt = pb = pl = pr = 0
    else:
        raise ShapeError(f"unknown padding {padding!r}")
    hp, wp = h + pt + pb, w + pl + pr
    if ext_h > hp or ext_w > wp:
        raise ShapeError(
            f"dilated kernel extent ({ext_h}x{ext_w}) exceeds padded input ({hp}x{wp})")
    ho = (hp - ext_h) // sh + 1
    wo = (wp - ext_w) // sw + 1

    recording = active_tape() is not None and (x.requires_grad or kernel.requires_grad
                                               or (bias is not None and bias.requires_grad))
    # All-zero taps contribute exactly +-0.0, so the dilated kernel and its
    # zero-inflated dilation-1 form reduce to the same gemm when skipped.
    # Skipping is only safe without gradients: a zero weight still has a
    # nonzero weight gradient.
    kd = kernel.data
    if recording:
        taps = [(i, j) for i in range(kh) for j in range(kw)]
    else:
        taps = [(i, j) for i in range(kh) for j in range(kw) if np.any(kd[:, :, i, j])]
    t_count = len(taps)

    wmat = np.empty((o, t_count * c))
    for t, (i, j) in enumerate(taps):
        wmat[:, t * c:(t + 1) * c] = kd[:, :, i, j]

    def tap_slices(i: int, j: int) -> tuple[slice, slice]:
        return (slice(i * lh, i * lh + (ho - 1) * sh + 1, sh),
                slice(j * lw, j * lw + (wo - 1) * sw + 1, sw))

    def build_col(sample: Array) -> Array:
        xpad = _take((c, hp, wp))
        xpad.fill(0.0)
        xpad[:, pt:pt + h, pl:pl + w] = sample
        col = _take((t_count * c, ho * wo))
        col4 = col.reshape(t_count, c, ho, wo)
        for t, (i, j) in enumerate(taps):
            si, sj = tap_slices(i, j)
            col4[t] = xpad[:, si, sj]
        _give(xpad)
        return col

    out_data = np.empty((n, o, ho, wo))
    cache_cols = recording and n * t_count * c * ho * wo * 8 <= _COL_CACHE_LIMIT
    cols: list[Array] = []
    for i in range(n):
        col = build_col(x.data[i])
        np.dot(wmat, col, out=out_data[i].reshape(o, ho * wo))
        if bias is not None:
            out_data[i] += bias.data[:, None, None]
        if cache_cols:
            cols.append(col)
        else:
            _give(col)
    out = Tensor(out_data)

    if recording:
        ti = np.array([i for i, _ in taps])
        tj = np.array([j for _, j in taps])

        def rule(g: Array):
            g2 = g.reshape(n, o, ho * wo)
            gk = np.zeros_like(kd) if kernel.requires_grad else None
            gb = g2.sum(axis=(0, 2)) if bias is not None and bias.requires_grad else None
            gx = np.empty_like(x.data) if x.requires_grad else None
            wmat_t = np.ascontiguousarray(wmat.T) if gx is not None else None
            for i in range(n):
                col = cols[i] if cache_cols else build_col(x.data[i])
                if gk is not None:
                    dwm = (g2[i] @ col.T).reshape(o, t_count, c).transpose(0, 2, 1)
                    gk[:, :, ti, tj] += dwm
                _give(col)
                if gx is not None:
                    dcol = _take((t_count * c, ho * wo))
                    np.dot(wmat_t, g2[i], out=dcol)
                    dcol4 = dcol.reshape(t_count, c, ho, wo)
                    dxp = _take((c, hp, wp))
                    dxp.fill(0.0)
                    for t, (ki, kj) in enumerate(taps):
                        si, sj = tap_slices(ki, kj)
                        dxp[:, si, sj] += dcol4[t]
                    gx[i] = dxp[:, pt:pt + h, pl:pl + w]
                    _give(dcol)
                    _give(dxp)
            cols.clear()
            return gx, gk, (None if bias is None else gb)

        inputs = (x, kernel, bias) if bias is not None else (x, kernel)
        if bias is None:
            T._record(inputs, out, lambda g: rule(g)[:2])
        else:
            T._record(inputs, out, rule)

    if squeeze:
        return T.reshape(out, out.shape[1:])
    return out


def zero_inflate_kernel(kernel: Array, dilation=(1, 1)) -> Array:
    """Spread kernel taps ``dilation`` apart, filling the gaps with zeros."""
    lh, lw = _pair(dilation)
    o, c, kh, kw = kernel.shape
    out = np.zeros((o, c, (kh - 1) * lh + 1, (kw - 1) * lw + 1))
    out[:, :, ::lh, ::lw] = kernel
    return out


def maxpool2d(x: Tensor, window=(2, 2), stride=(2, 2)) -> Tensor:
    """Non-overlapping max pooling; odd trailing rows/columns are dropped."""
    wh, ww = _pair(window)
    sh, sw = _pair(stride)
    if (wh, ww) != (sh, sw):
        raise ShapeError("maxpool2d supports non-overlapping windows only")
    squeeze = x.ndim == 3
    if squeeze:
        x = T.reshape(x, (1,) + x.shape)
    n, c, h, w = x.shape
    if h < wh or w < ww:
        raise ShapeError(f"spatial dims {h}x{w} smaller than window {wh}x{ww}")
    ho, wo = h // wh, w // ww
    tiles = (x.data[:, :, :ho * wh, :wo * ww]
             .reshape(n, c, ho, wh, wo, ww)
             .transpose(0, 1, 2, 4, 3, 5)
             .reshape(n, c, ho, wo, wh * ww))
    idx = tiles.argmax(axis=-1)
    out = Tensor(np.take_along_axis(tiles, idx[..., None], axis=-1)[..., 0])

    def rule(g: Array):
        buf = np.zeros((n, c, ho, wo, wh * ww))
        np.put_along_axis(buf, idx[..., None], g[..., None], axis=-1)
        gx = np.zeros_like(x.data)
        gx[:, :, :ho * wh, :wo * ww] = (buf.reshape(n, c, ho, wo, wh, ww)
                                        .transpose(0, 1, 2, 4, 3, 5)
                                        .reshape(n, c, ho * wh, wo * ww))
        return (gx,)

    T._record((x,), out, rule)
    if squeeze:
        return T.reshape(out, out.shape[1:])
    return out


def dense(x: Tensor, weights: Tensor, bias: Tensor) -> Tensor:
    """Affine map: weights (m, n) applied to x (n,) or a batch (N, n)."""
    if weights.ndim != 2 or bias.ndim != 1 or weights.shape[0] != bias.shape[0]:
        raise ShapeError(f"bad dense parameters: weights {weights.shape}, bias {bias.shape}")
    squeeze = x.ndim == 1
    if squeeze:
        x = T.reshape(x, (1, x.shape[0]))
    if x.ndim != 2 or x.shape[1] != weights.shape[1]:
        raise ShapeError(f"dense input {x.shape} does not match weights {weights.shape}")
    out = Tensor(x.data @ weights.data.T + bias.data)

    def rule(g: Array):
        gx = g @ weights.data if x.requires_grad else None
        gw = g.T @ x.data if weights.requires_grad else None
        gb = g.sum(axis=0) if bias.requires_grad else None
        return gx, gw, gb

    T._record((x, weights, bias), out, rule)
    if squeeze:
        return T.reshape(out, (out.shape[1],))
    return out


def dropout(x: Tensor, rate: float, training: bool, rng: np.random.Generator | None = None) -> Tensor:
    """Inverted dropout: survivors are rescaled by 1/(1-rate) in training."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return x
    if rng is None:
        raise ValueError("training-mode dropout needs an rng")
    mask = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return T.multiply(x, Tensor(mask))


# ---------------------------------------------------------------------------
# layer objects


class Conv2D:
    """Dilated convolution layer with its kernel and bias parameters."""

    def __init__(self, in_channels: int, out_channels: int, kernel_size,
                 dilation=1, stride=1, padding: str = "same",
                 name: str = "conv", rng: np.random.Generator | None = None):
        kh, kw = _pair(kernel_size)
        rng = rng or np.random.default_rng(0)
        self.dilation = _pair(dilation)
        self.stride = _pair(stride)
        self.padding = padding
        shape = (out_channels, in_channels, kh, kw)
        self.kernel = Parameter(f"{name}.kernel", Tensor(T.fan_uniform(shape, rng)))
        self.bias = Parameter(f"{name}.bias", Tensor(np.zeros(out_channels)), decay=False)

    def parameters(self) -> list[Parameter]:
        return [self.kernel, self.bias]

    def __call__(self, x: Tensor) -> Tensor:
        return conv2d(x, self.kernel.tensor, self.bias.tensor,
                      dilation=self.dilation, stride=self.stride, padding=self.padding)


class Dense:
    def __init__(self, in_size: int, out_size: int, name: str = "dense",
                 rng: np.random.Generator | None = None):
        rng = rng or np.random.default_rng(0)
        self.weights = Parameter(f"{name}.weights",
                                 Tensor(T.fan_uniform((out_size, in_size), rng)))
        self.bias = Parameter(f"{name}.bias", Tensor(np.zeros(out_size)), decay=False)

    def parameters(self) -> list[Parameter]:
        return [self.weights, self.bias]

    def __call__(self, x: Tensor) -> Tensor:
        return dense(x, self.weights.tensor, self.bias.tensor)


class Dropout:
    def __init__(self, rate: float):
        if not 0.0 <= rate < 1.0:
            raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
        self.rate = rate

    def __call__(self, x: Tensor, training: bool = False,
                 rng: np.random.Generator | None = None) -> Tensor:
        return dropout(x, self.rate, training, rng)


class LSTM:
    """Single LSTM layer; gates are stored fused in (input, forget, cell,
    output) order: w_x is (input_size, 4*hidden), w_h is (hidden, 4*hidden)."""

    def __init__(self, input_size: int, hidden_size: int, name: str = "lstm",
                 rng: np.random.Generator | None = None):
        rng = rng or np.random.default_rng(0)
        self.input_size = input_size
        self.hidden_size = hidden_size
        self.w_x = Parameter(f"{name}.w_x",
                             Tensor(T.fan_uniform((input_size, 4 * hidden_size), rng)))
        self.w_h = Parameter(f"{name}.w_h",
                             Tensor(T.fan_uniform((hidden_size, 4 * hidden_size), rng)))
        self.bias = Parameter(f"{name}.bias", Tensor(np.zeros(4 * hidden_size)), decay=False)

    def parameters(self) -> list[Parameter]:
        return [self.w_x, self.w_h, self.bias]

    def step(self, x: Tensor, h_prev: Tensor, c_prev: Tensor) -> tuple[Tensor, Tensor]:
        hs = self.hidden_size
        z = T.add(T.add(T.matmul(x, self.w_x.tensor), T.matmul(h_prev, self.w_h.tensor)),
                  self.bias.tensor)
        gate_i = T.sigmoid(T.narrow(z, 1, 0, hs))
        gate_f = T.sigmoid(T.narrow(z, 1, hs, hs))
        gate_g = T.tanh(T.narrow(z, 1, 2 * hs, hs))
        gate_o = T.sigmoid(T.narrow(z, 1, 3 * hs, hs))
        c = T.add(T.multiply(gate_f, c_prev), T.multiply(gate_i, gate_g))
        h = T.multiply(gate_o, T.tanh(c))
        return h, c


def lstm_sequence(inputs: Sequence[Tensor], layer: LSTM) -> tuple[list[Tensor], Tensor]:
    """Run the recurrence over a sequence with zero initial state.

    Each input is (input_size,) or (N, input_size). Returns all hidden states
    and the final one.
    """
    if len(inputs) == 0:
        raise ValueError("lstm_sequence needs a non-empty input sequence")
    xs = []
    for x in inputs:
        if x.ndim == 1:
            x = T.reshape(x, (1, x.shape[0]))
        if x.ndim != 2 or x.shape[1] != layer.input_size:
            raise ShapeError(f"lstm input {x.shape} does not match input_size {layer.input_size}")
        xs.append(x)
    n = xs[0].shape[0]
    h = Tensor(np.zeros((n, layer.hidden_size)))
    c = Tensor(np.zeros((n, layer.hidden_size)))
    states = []
    for x in xs:
        h, c = layer.step(x, h, c)
        states.append(h)
    return states, h
