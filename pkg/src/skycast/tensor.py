"""Dense float64 tensors with reverse-mode automatic differentiation.

Every value in the package lives in a :class:`Tensor`. While a :class:`Tape`
is active (``with Tape() as tape:``), operations whose inputs require
gradients append a record (inputs, output, backward rule) in execution order;
``tape.backward(loss)`` replays the records once, in reverse, accumulating
gradients into the leaf tensors. Without an active tape the same operations
run as plain forward numerics, which is the inference path.

All arithmetic is 64-bit. There is no broadcasting magic beyond what the
individual operations document.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import DomainError, ShapeError

Array = np.ndarray

_LOG2 = float(np.log(2.0))


class Tensor:
    """N-dimensional float64 array plus an optional same-shape gradient."""

    __slots__ = ("data", "requires_grad", "grad")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad: Array | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def item(self) -> float:
        return float(self.data.reshape(()))

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    # operator sugar; scalars are promoted where it is unambiguous
    def __add__(self, other):
        return add(self, _as_tensor(other))

    def __radd__(self, other):
        return add(_as_tensor(other), self)

    def __sub__(self, other):
        return subtract(self, _as_tensor(other))

    def __rsub__(self, other):
        return subtract(_as_tensor(other), self)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scalar_multiply(self, float(other))
        return multiply(self, other)

    def __rmul__(self, other):
        return self.__mul__(other)

    def __neg__(self):
        return scalar_multiply(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=np.float64))


@dataclass
class Parameter:
    """A named trainable tensor. ``decay`` marks it for L2 regularization."""

    name: str
    tensor: Tensor
    decay: bool = True

    def __post_init__(self):
        self.tensor.requires_grad = True


# A backward rule maps the output gradient to one gradient per input
# (None for inputs that need none).
Rule = Callable[[Array], tuple]

_TAPE_STACK: list["Tape"] = []


def active_tape() -> "Tape | None":
    return _TAPE_STACK[-1] if _TAPE_STACK else None


class Tape:
    """Ordered record of executed operations for one backward pass.

    Records are appended in execution order, so every entry's inputs were
    produced by an earlier entry or are leaves; one reverse sweep therefore
    visits each operation exactly once. A tape is meant to live for a single
    training step and be discarded after ``backward``.
    """

    __slots__ = ("_entries",)

    def __init__(self):
        self._entries: list[tuple[tuple[Tensor, ...], Tensor, Rule]] = []

    def __enter__(self) -> "Tape":
        _TAPE_STACK.append(self)
        return self

    def __exit__(self, *exc) -> None:
        _TAPE_STACK.pop()

    def __len__(self) -> int:
        return len(self._entries)

    def record(self, inputs: tuple[Tensor, ...], output: Tensor, rule: Rule) -> None:
        output.requires_grad = True
        self._entries.append((inputs, output, rule))

    def backward(self, loss: Tensor) -> None:
        """Accumulate d(loss)/d(leaf) into ``.grad`` of every leaf tensor.

        Gradients of tensors used several times add up. Leaves that already
        hold a gradient accumulate into it, so callers zero grads between
        steps.
        """
        if loss.size != 1:
            raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
        produced = {id(out) for _, out, _ in self._entries}
        # rules may return views of the incoming gradient, so accumulation is
        # always out-of-place; buffers here are never mutated
        grads: dict[int, Array] = {id(loss): np.ones_like(loss.data)}
        for inputs, out, rule in reversed(self._entries):
            gout = grads.pop(id(out), None)
            if gout is None:
                continue
            for tensor, g in zip(inputs, rule(gout)):
                if g is None or not tensor.requires_grad:
                    continue
                key = id(tensor)
                grads[key] = grads[key] + g if key in grads else g
        for inputs, _, _ in self._entries:
            for tensor in inputs:
                key = id(tensor)
                if key in grads and tensor.requires_grad and key not in produced:
                    g = grads.pop(key)
                    tensor.grad = g if tensor.grad is None else tensor.grad + g
        self._entries.clear()

    def gradients(self, loss: Tensor, parameters: Iterable[Parameter]) -> dict[str, Array]:
        """Run backward and collect a name -> gradient map.

        Parameters that never appeared on the tape map to zeros.
        """
        params = list(parameters)
        for p in params:
            p.tensor.grad = None
        self.backward(loss)
        out: dict[str, Array] = {}
        for p in params:
            g = p.tensor.grad
            out[p.name] = np.zeros_like(p.tensor.data) if g is None else g
            p.tensor.grad = None
        return out


def _record(inputs: tuple[Tensor, ...], output: Tensor, rule: Rule) -> None:
    tape = active_tape()
    if tape is not None and any(t.requires_grad for t in inputs):
        tape.record(inputs, output, rule)


# ---------------------------------------------------------------------------
# construction


def create(shape: Sequence[int], scheme: str = "zeros", seed: int | None = None,
           value: float = 0.0) -> Tensor:
    """Build a tensor under a named init scheme.

    Schemes: ``zeros``, ``ones``, ``constant`` (uses ``value``) and
    ``fan_uniform`` (uniform with bound sqrt(6/(fan_in+fan_out)), seeded).
    Deterministic for fixed (shape, scheme, seed).
    """
    shape = tuple(int(d) for d in shape)
    if len(shape) == 0:
        raise ShapeError("shape must be non-empty")
    if any(d < 1 for d in shape):
        raise ShapeError(f"all dimensions must be >= 1, got {shape}")
    if scheme == "zeros":
        return Tensor(np.zeros(shape))
    if scheme == "ones":
        return Tensor(np.ones(shape))
    if scheme == "constant":
        return Tensor(np.full(shape, float(value)))
    if scheme == "fan_uniform":
        rng = np.random.default_rng(0 if seed is None else seed)
        return Tensor(fan_uniform(shape, rng))
    raise ValueError(f"unknown init scheme {scheme!r}")


def fan_scales(shape: tuple[int, ...]) -> tuple[int, int]:
    """(fan_in, fan_out) for dense ([out, in]) and conv ([out, in, kh, kw])."""
    if len(shape) == 1:
        return shape[0], shape[0]
    if len(shape) == 2:
        return shape[1], shape[0]
    receptive = int(np.prod(shape[2:]))
    return shape[1] * receptive, shape[0] * receptive


def fan_uniform(shape: Sequence[int], rng: np.random.Generator) -> Array:
    shape = tuple(shape)
    fan_in, fan_out = fan_scales(shape)
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape)


# ---------------------------------------------------------------------------
# elementwise and linear algebra primitives


def _unbroadcast(g: Array, shape: tuple[int, ...]) -> Array:
    """Sum g down to ``shape`` (inverse of numpy broadcasting)."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, d in enumerate(shape) if d == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def _check_broadcast(a: Tensor, b: Tensor, op: str) -> tuple[int, ...]:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} do not broadcast") from None


def add(a: Tensor, b: Tensor) -> Tensor:
    _check_broadcast(a, b, "add")
    out = Tensor(a.data + b.data)
    _record((a, b), out, lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))
    return out


def subtract(a: Tensor, b: Tensor) -> Tensor:
    _check_broadcast(a, b, "subtract")
    out = Tensor(a.data - b.data)
    _record((a, b), out, lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))
    return out


def multiply(a: Tensor, b: Tensor) -> Tensor:
    _check_broadcast(a, b, "multiply")
    out = Tensor(a.data * b.data)

    def rule(g: Array):
        ga = _unbroadcast(g * b.data, a.shape) if a.requires_grad else None
        gb = _unbroadcast(g * a.data, b.shape) if b.requires_grad else None
        return ga, gb

    _record((a, b), out, rule)
    return out


def scalar_multiply(a: Tensor, c: float) -> Tensor:
    c = float(c)
    out = Tensor(a.data * c)
    _record((a,), out, lambda g: (g * c,))
    return out


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul expects 2-D operands, got {a.shape} @ {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul inner dimensions differ: {a.shape} @ {b.shape}")
    out = Tensor(a.data @ b.data)

    def rule(g: Array):
        ga = g @ b.data.T if a.requires_grad else None
        gb = a.data.T @ g if b.requires_grad else None
        return ga, gb

    _record((a, b), out, rule)
    return out


def transpose(a: Tensor) -> Tensor:
    if a.ndim != 2:
        raise ShapeError(f"transpose expects a 2-D tensor, got {a.shape}")
    out = Tensor(a.data.T.copy())
    _record((a,), out, lambda g: (g.T.copy(),))
    return out


def reshape(a: Tensor, shape: Sequence[int]) -> Tensor:
    shape = tuple(int(d) for d in shape)
    if int(np.prod(shape)) != a.size:
        raise ShapeError(f"cannot reshape {a.shape} to {shape}")
    out = Tensor(a.data.reshape(shape))
    _record((a,), out, lambda g: (g.reshape(a.shape),))
    return out


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    if not tensors:
        raise ShapeError("concat needs at least one tensor")
    ref = tensors[0].shape
    for t in tensors[1:]:
        if t.ndim != len(ref):
            raise ShapeError(f"concat rank mismatch: {ref} vs {t.shape}")
        for ax, (da, db) in enumerate(zip(ref, t.shape)):
            if ax != axis % len(ref) and da != db:
                raise ShapeError(f"concat shapes differ off-axis: {ref} vs {t.shape}")
    out = Tensor(np.concatenate([t.data for t in tensors], axis=axis))
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def rule(g: Array):
        return tuple(np.array(p) for p in np.split(g, splits, axis=axis))

    _record(tuple(tensors), out, rule)
    return out


def narrow(a: Tensor, axis: int, start: int, length: int) -> Tensor:
    """Contiguous slice of ``length`` elements along ``axis``."""
    if not (0 <= start and start + length <= a.shape[axis]):
        raise ShapeError(f"narrow [{start}:{start + length}] out of range for {a.shape}")
    index = [slice(None)] * a.ndim
    index[axis] = slice(start, start + length)
    index = tuple(index)
    out = Tensor(a.data[index].copy())

    def rule(g: Array):
        full = np.zeros_like(a.data)
        full[index] = g
        return (full,)

    _record((a,), out, rule)
    return out


def reduce_sum(a: Tensor, axis: int | None = None) -> Tensor:
    out = Tensor(a.data.sum(axis=axis))

    def rule(g: Array):
        if axis is None:
            return (np.broadcast_to(g, a.shape).copy(),)
        return (np.broadcast_to(np.expand_dims(g, axis), a.shape).copy(),)

    _record((a,), out, rule)
    return out


def reduce_mean(a: Tensor, axis: int | None = None) -> Tensor:
    count = a.size if axis is None else a.shape[axis]
    out = Tensor(a.data.mean(axis=axis))

    def rule(g: Array):
        scaled = g / count
        if axis is None:
            return (np.broadcast_to(scaled, a.shape).copy(),)
        return (np.broadcast_to(np.expand_dims(scaled, axis), a.shape).copy(),)

    _record((a,), out, rule)
    return out


def tanh(a: Tensor) -> Tensor:
    y = np.tanh(a.data)
    out = Tensor(y)
    _record((a,), out, lambda g: (g * (1.0 - y * y),))
    return out


def sigmoid(a: Tensor) -> Tensor:
    # split by sign so exp never overflows
    x = a.data
    y = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))),
                 np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))
    out = Tensor(y)
    _record((a,), out, lambda g: (g * y * (1.0 - y),))
    return out


def relu(a: Tensor) -> Tensor:
    out = Tensor(np.maximum(a.data, 0.0))
    if active_tape() is not None and a.requires_grad:
        mask = a.data > 0.0
        _record((a,), out, lambda g: (g * mask,))
    return out


def exp(a: Tensor) -> Tensor:
    y = np.exp(a.data)
    out = Tensor(y)
    _record((a,), out, lambda g: (g * y,))
    return out


def log(a: Tensor) -> Tensor:
    if np.any(a.data <= 0.0):
        raise DomainError("log of a non-positive value")
    out = Tensor(np.log(a.data))
    _record((a,), out, lambda g: (g / a.data,))
    return out


def cosh(a: Tensor) -> Tensor:
    y = np.cosh(a.data)
    out = Tensor(y)
    _record((a,), out, lambda g: (g * np.sinh(a.data),))
    return out


def log_cosh(a: Tensor) -> Tensor:
    """log(cosh(x)) computed as |x| + log1p(exp(-2|x|)) - log 2.

    The identity is exact and never overflows; for |x| > ~30 it reduces to
    |x| - log 2 in 64-bit arithmetic. The derivative is tanh(x).
    """
    ax = np.abs(a.data)
    out = Tensor(ax + np.log1p(np.exp(-2.0 * ax)) - _LOG2)
    _record((a,), out, lambda g: (g * np.tanh(a.data),))
    return out


# ---------------------------------------------------------------------------
# gradient checking


def grad_check(forward_fn: Callable[..., Tensor], inputs: Sequence[Tensor],
               step: float = 1e-5) -> float:
    """Compare taped gradients of a scalar function against central differences.

    Returns the max over coordinates of |analytic - numeric| relative to
    max(|analytic|, |numeric|, 1e-8). Reports rather than raises, so callers
    decide the tolerance.
    """
    inputs = list(inputs)
    for t in inputs:
        t.requires_grad = True
        t.grad = None
    with Tape() as tape:
        out = forward_fn(*inputs)
        tape.backward(out)
    analytic = [np.zeros_like(t.data) if t.grad is None else t.grad.copy() for t in inputs]
    worst = 0.0
    for t, ga in zip(inputs, analytic):
        flat = t.data.reshape(-1)
        gflat = ga.reshape(-1)
        for i in range(flat.size):
            keep = flat[i]
            flat[i] = keep + step
            up = forward_fn(*inputs).item()
            flat[i] = keep - step
            down = forward_fn(*inputs).item()
            flat[i] = keep
            numeric = (up - down) / (2.0 * step)
            denom = max(abs(gflat[i]), abs(numeric), 1e-8)
            worst = max(worst, abs(gflat[i] - numeric) / denom)
    for t in inputs:
        t.grad = None
    return worst
