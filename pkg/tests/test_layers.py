import numpy as np
import numpy.testing as npt
import pytest

from skycast import layers as L
from skycast import tensor as T
from skycast.errors import ShapeError
from skycast.tensor import Tape, Tensor


def naive_conv2d(x, kernel, bias, dilation=(1, 1), padding="same"):
    """Direct-summation reference convolution, stride 1."""
    c, h, w = x.shape
    o, _, kh, kw = kernel.shape
    lh, lw = dilation
    if padding == "same":
        th, tw = (kh - 1) * lh, (kw - 1) * lw
        pt, pl = th // 2, tw // 2
        xp = np.zeros((c, h + th, w + tw))
        xp[:, pt:pt + h, pl:pl + w] = x
        ho, wo = h, w
    else:
        xp = x
        ho, wo = h - (kh - 1) * lh, w - (kw - 1) * lw
    out = np.zeros((o, ho, wo))
    for oc in range(o):
        for p in range(ho):
            for q in range(wo):
                acc = 0.0
                for ic in range(c):
                    for i in range(kh):
                        for j in range(kw):
                            acc += xp[ic, p + i * lh, q + j * lw] * kernel[oc, ic, i, j]
                out[oc, p, q] = acc + bias[oc]
    return out


def test_conv2d_scalar_kernel_scales_input():
    rng = np.random.default_rng(0)
    x = Tensor(rng.standard_normal((1, 5, 5)))
    k = Tensor(np.array([[[[2.0]]]]))
    b = Tensor(np.zeros(1))
    out = L.conv2d(x, k, b)
    npt.assert_array_equal(out.data, 2.0 * x.data)


@pytest.mark.parametrize("padding", ["same", "valid"])
def test_conv2d_matches_naive(padding):
    rng = np.random.default_rng(1)
    x = Tensor(rng.standard_normal((2, 7, 8)))
    k = Tensor(rng.standard_normal((3, 2, 3, 3)))
    b = Tensor(rng.standard_normal(3))
    got = L.conv2d(x, k, b, dilation=(2, 2), padding=padding)
    want = naive_conv2d(x.data, k.data, b.data, dilation=(2, 2), padding=padding)
    npt.assert_allclose(got.data, want, rtol=1e-12, atol=1e-12)


def test_conv2d_dilated_equals_zero_inflated_exactly():
    rng = np.random.default_rng(2)
    x = Tensor(rng.standard_normal((1, 9, 9)))
    k = rng.standard_normal((2, 1, 3, 3))
    b = Tensor(rng.standard_normal(2))
    dil = L.conv2d(x, Tensor(k), b, dilation=(2, 2), padding="same")
    inflated = L.zero_inflate_kernel(k, (2, 2))
    ord_ = L.conv2d(x, Tensor(inflated), b, dilation=(1, 1), padding="same")
    assert dil.data.tobytes() == ord_.data.tobytes()


def test_conv2d_channel_mismatch():
    x = Tensor(np.zeros((2, 4, 4)))
    k = Tensor(np.zeros((1, 3, 3, 3)))
    with pytest.raises(ShapeError):
        L.conv2d(x, k, Tensor(np.zeros(1)))


def test_conv2d_kernel_extent_exceeds_input():
    x = Tensor(np.zeros((1, 4, 4)))
    k = Tensor(np.zeros((1, 1, 3, 3)))
    with pytest.raises(ShapeError):
        L.conv2d(x, k, Tensor(np.zeros(1)), dilation=(2, 2), padding="valid")


def test_conv2d_receptive_field_25():
    # 7x7 kernel at dilation 4: any output site depends on a 25x25 region
    rng = np.random.default_rng(3)
    k = Tensor(rng.uniform(0.5, 1.0, size=(1, 1, 7, 7)))
    b = Tensor(np.zeros(1))
    base = np.zeros((1, 40, 40))
    out0 = L.conv2d(Tensor(base), k, b, dilation=(4, 4), padding="same").data
    site = (20, 20)
    changed = np.zeros((40, 40), dtype=bool)
    for r in range(40):
        for q in range(40):
            bumped = base.copy()
            bumped[0, r, q] = 1.0
            out = L.conv2d(Tensor(bumped), k, b, dilation=(4, 4), padding="same").data
            changed[r, q] = out[0, site[0], site[1]] != out0[0, site[0], site[1]]
    rows = np.where(changed.any(axis=1))[0]
    cols = np.where(changed.any(axis=0))[0]
    assert rows.min() == site[0] - 12 and rows.max() == site[0] + 12
    assert cols.min() == site[1] - 12 and cols.max() == site[1] + 12
    # taps sit every 4 pixels inside the footprint
    assert changed[site[0] - 12: site[0] + 13: 4, site[1] - 12: site[1] + 13: 4].all()


def test_maxpool_constant_and_definition():
    c = Tensor(np.full((1, 4, 4), 3.5))
    npt.assert_array_equal(L.maxpool2d(c).data, np.full((1, 2, 2), 3.5))
    x = Tensor(np.array([[[1.0, 2.0], [3.0, 4.0]]]))
    npt.assert_array_equal(L.maxpool2d(x).data, [[[4.0]]])


def test_maxpool_shapes_and_odd_trailing():
    x = Tensor(np.random.default_rng(4).standard_normal((2, 64, 64)))
    assert L.maxpool2d(x).shape == (2, 32, 32)
    y = Tensor(np.random.default_rng(4).standard_normal((2, 5, 7)))
    assert L.maxpool2d(y).shape == (2, 2, 3)


def test_maxpool_bounded_by_input_max():
    rng = np.random.default_rng(5)
    x = rng.standard_normal((3, 8, 8))
    out = L.maxpool2d(Tensor(x)).data
    assert out.max() <= x.max()
    windows = x.reshape(3, 4, 2, 4, 2).transpose(0, 1, 3, 2, 4).reshape(3, 4, 4, 4)
    npt.assert_array_equal(out, windows.max(axis=-1))


def test_dense_identity_and_bias():
    x = Tensor(np.array([1.0, -2.0, 3.0]))
    eye = Tensor(np.eye(3))
    zero = Tensor(np.zeros(3))
    npt.assert_array_equal(L.dense(x, eye, zero).data, x.data)
    w0 = Tensor(np.zeros((2, 3)))
    b = Tensor(np.array([5.0, -1.0]))
    npt.assert_array_equal(L.dense(x, w0, b).data, b.data)


def test_dense_parameter_count_1024_512():
    layer = L.Dense(1024, 512, rng=np.random.default_rng(0))
    n = sum(p.tensor.size for p in layer.parameters())
    assert n == 1024 * 512 + 512 == 524800


def test_dropout_rate_zero_and_inference_identity():
    x = Tensor(np.arange(6.0).reshape(2, 3))
    rng = np.random.default_rng(0)
    assert L.dropout(x, 0.0, training=True, rng=rng) is x
    assert L.dropout(x, 0.5, training=False) is x


def test_dropout_preserves_expectation():
    rng = np.random.default_rng(6)
    x = Tensor(np.ones(100_000))
    y = L.dropout(x, 0.5, training=True, rng=rng)
    assert abs(y.data.mean() - 1.0) < 0.01


def test_dropout_rejects_rate_one():
    with pytest.raises(ValueError):
        L.dropout(Tensor(np.ones(3)), 1.0, training=True, rng=np.random.default_rng(0))


def _manual_lstm_cell(x, wx, wh, b, h0, c0, hs):
    z = x @ wx + h0 @ wh + b
    sig = lambda v: 1.0 / (1.0 + np.exp(-v))
    i, f, g, o = (z[:, :hs], z[:, hs:2 * hs], z[:, 2 * hs:3 * hs], z[:, 3 * hs:])
    c = sig(f) * c0 + sig(i) * np.tanh(g)
    h = sig(o) * np.tanh(c)
    return h, c


def test_lstm_single_step_matches_manual_cell():
    rng = np.random.default_rng(7)
    layer = L.LSTM(3, 4, rng=rng)
    x = rng.standard_normal((2, 3))
    states, final = L.lstm_sequence([Tensor(x)], layer)
    want, _ = _manual_lstm_cell(x, layer.w_x.tensor.data, layer.w_h.tensor.data,
                                layer.bias.tensor.data, np.zeros((2, 4)), np.zeros((2, 4)), 4)
    npt.assert_allclose(final.data, want, rtol=1e-12)
    assert len(states) == 1


def test_lstm_zero_weights_zero_inputs_fixed_point():
    layer = L.LSTM(3, 4, rng=np.random.default_rng(0))
    for p in layer.parameters():
        p.tensor.data[:] = 0.0
    _, final = L.lstm_sequence([Tensor(np.zeros((1, 3)))] * 5, layer)
    npt.assert_array_equal(final.data, np.zeros((1, 4)))


def test_lstm_hidden_states_strictly_inside_unit_interval():
    rng = np.random.default_rng(8)
    layer = L.LSTM(5, 6, rng=rng)
    xs = [Tensor(rng.uniform(-3, 3, size=(2, 5))) for _ in range(10)]
    states, final = L.lstm_sequence(xs, layer)
    for h in states + [final]:
        assert np.all(np.abs(h.data) < 1.0)


def test_lstm_rejects_empty_sequence():
    layer = L.LSTM(3, 4)
    with pytest.raises(ValueError):
        L.lstm_sequence([], layer)


def test_lstm_parameter_count_512_128():
    layer = L.LSTM(512, 128, rng=np.random.default_rng(0))
    n = sum(p.tensor.size for p in layer.parameters())
    assert n == 4 * (512 + 128 + 1) * 128 == 328192


@pytest.mark.parametrize("seed", range(5))
def test_conv2d_grad_check(seed):
    rng = np.random.default_rng(seed)
    x = Tensor(rng.uniform(-2, 2, size=(2, 6, 6)))
    k = Tensor(rng.uniform(-2, 2, size=(3, 2, 3, 3)))
    b = Tensor(rng.uniform(-2, 2, size=3))

    def forward(x, k, b):
        return T.reduce_mean(T.multiply(L.conv2d(x, k, b, dilation=(2, 2)), Tensor(np.full((3, 6, 6), 0.5))))

    assert T.grad_check(forward, [x, k, b]) < 1e-4


@pytest.mark.parametrize("seed", range(3))
def test_dense_and_pool_grad_check(seed):
    rng = np.random.default_rng(20 + seed)
    x = Tensor(rng.uniform(-2, 2, size=(1, 6, 6)))
    w = Tensor(rng.uniform(-1, 1, size=(2, 9)))
    b = Tensor(rng.uniform(-1, 1, size=2))

    def forward(x, w, b):
        pooled = L.maxpool2d(x)
        flat = T.reshape(pooled, (1, 9))
        return T.reduce_sum(T.tanh(L.dense(flat, w, b)))

    assert T.grad_check(forward, [x, w, b]) < 1e-4


@pytest.mark.parametrize("seed", range(3))
def test_lstm_grad_check(seed):
    rng = np.random.default_rng(40 + seed)
    layer = L.LSTM(3, 2, rng=rng)
    xs = [Tensor(rng.uniform(-1, 1, size=(1, 3))) for _ in range(3)]

    def forward(wx, wh, b):
        _, final = L.lstm_sequence(xs, layer)
        return T.reduce_sum(T.multiply(final, final))

    err = T.grad_check(forward, [layer.w_x.tensor, layer.w_h.tensor, layer.bias.tensor])
    assert err < 1e-4


def test_conv2d_zero_kernel_trains_with_full_gradient():
    # zero taps must not be skipped when gradients are recorded
    rng = np.random.default_rng(9)
    x = Tensor(rng.standard_normal((1, 4, 4)))
    k = Tensor(np.zeros((1, 1, 3, 3)))
    b = Tensor(np.zeros(1))

    def forward(k):
        return T.reduce_sum(L.conv2d(x, k, b))

    assert T.grad_check(forward, [k]) < 1e-4
    with Tape() as tape:
        out = T.reduce_sum(L.conv2d(x, k, b))
        tape.backward(out)
    assert np.any(k.grad != 0.0)
