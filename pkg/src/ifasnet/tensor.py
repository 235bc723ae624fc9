"""Dense float64 tensors with tape-based reverse-mode autodiff.

Every differentiable computation in the package is composed from the
primitives defined here. A :class:`Tape` records primitive applications
while it is active; :func:`backward` replays the record in reverse.

    >>> x = Tensor([1.0, 2.0, 3.0], requires_grad=True)
    >>> with Tape():
    ...     loss = (x * x).sum()
    >>> backward(loss)
    >>> x.grad
    array([2., 4., 6.])
"""

from __future__ import annotations

import threading
from typing import Callable, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

__all__ = [
    "Tensor", "Tape", "NumericError", "ShapeError", "as_tensor", "backward",
    "no_grad", "add", "sub", "mul", "div", "neg", "matmul", "tanh", "sigmoid",
    "exp", "log", "sqrt", "clamp_min", "sum", "mean", "l2norm", "concat",
    "stack", "reshape", "transpose", "getitem", "pad", "unfold", "fold",
    "corr_valid",
]

DTYPE = np.float64


class ShapeError(ValueError):
    """Raised when operand shapes are incompatible with an op."""


class NumericError(FloatingPointError):
    """Raised when an op produces NaN or Inf from finite inputs."""


_state = threading.local()


def _active_tape() -> "Tape | None":
    stack = getattr(_state, "tapes", None)
    if not stack:
        return None
    return stack[-1]


class Tape:
    """Ordered record of executed primitives.

    Used as a context manager. Records are kept after the context exits so the
    tape can be replayed by :func:`backward` any number of times.
    """

    def __init__(self) -> None:
        self.records: list[_Record] = []
        self.open = False

    def __enter__(self) -> "Tape":
        if not hasattr(_state, "tapes"):
            _state.tapes = []
        _state.tapes.append(self)
        self.open = True
        return self

    def __exit__(self, *exc) -> None:
        _state.tapes.pop()
        self.open = False

    def __len__(self) -> int:
        return len(self.records)

    def clear(self) -> None:
        self.records.clear()


class no_grad:
    """Suspend recording, e.g. for inference with trainable parameters."""

    def __enter__(self) -> None:
        if not hasattr(_state, "tapes"):
            _state.tapes = []
        _state.tapes.append(None)

    def __exit__(self, *exc) -> None:
        _state.tapes.pop()


class _Record:
    __slots__ = ("op", "inputs", "output", "vjp", "index")

    def __init__(self, op, inputs, output, vjp, index):
        self.op = op
        self.inputs = inputs
        self.output = output
        self.vjp = vjp
        self.index = index


class Tensor:
    """N-d float64 array that can take part in gradient recording."""

    __slots__ = ("data", "requires_grad", "grad", "_record", "_tape", "name", "__weakref__")
    __array_priority__ = 100

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        arr = np.asarray(data, dtype=DTYPE)
        if not arr.flags.c_contiguous:
            arr = np.ascontiguousarray(arr)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self._record: _Record | None = None
        self._tape: Tape | None = None
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.item())

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    def __len__(self) -> int:
        return len(self.data)

    # operator sugar
    def __add__(self, other): return add(self, other)
    def __radd__(self, other): return add(other, self)
    def __sub__(self, other): return sub(self, other)
    def __rsub__(self, other): return sub(other, self)
    def __mul__(self, other): return mul(self, other)
    def __rmul__(self, other): return mul(other, self)
    def __truediv__(self, other): return div(self, other)
    def __rtruediv__(self, other): return div(other, self)
    def __neg__(self): return neg(self)
    def __matmul__(self, other): return matmul(self, other)
    def __getitem__(self, idx): return getitem(self, idx)

    def sum(self, axis=None, keepdims=False): return sum(self, axis, keepdims)
    def mean(self, axis=None, keepdims=False): return mean(self, axis, keepdims)
    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)
    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes or None)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _emit(op: str, inputs: Sequence[Tensor], out: np.ndarray, vjp: Callable) -> Tensor:
    if not np.all(np.isfinite(out)):
        if all(np.all(np.isfinite(t.data)) for t in inputs):
            raise NumericError(f"{op}: non-finite output from finite inputs")
    needs = any(t.requires_grad for t in inputs)
    result = Tensor(out, requires_grad=needs)
    if needs:
        tape = _active_tape()
        if tape is not None:
            rec = _Record(op, tuple(inputs), result, vjp, len(tape.records))
            tape.records.append(rec)
            result._record = rec
            result._tape = tape
    return result


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


def _check_broadcast(op: str, a: np.ndarray, b: np.ndarray) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: cannot broadcast shapes {a.shape} and {b.shape}") from None


# ---------------------------------------------------------------------------
# elementwise


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("add", a.data, b.data)
    sa, sb = a.shape, b.shape
    return _emit("add", (a, b), a.data + b.data,
                 lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("sub", a.data, b.data)
    sa, sb = a.shape, b.shape
    return _emit("sub", (a, b), a.data - b.data,
                 lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb)))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("mul", a.data, b.data)
    ad, bd = a.data, b.data

    def vjp(g):
        return (_unbroadcast(g * bd, ad.shape) if a.requires_grad else None,
                _unbroadcast(g * ad, bd.shape) if b.requires_grad else None)
    return _emit("mul", (a, b), ad * bd, vjp)


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("div", a.data, b.data)
    ad, bd = a.data, b.data
    with np.errstate(divide="ignore", invalid="ignore"):
        out = ad / bd
    if not np.all(np.isfinite(out)):
        raise NumericError("div: division produced non-finite values")

    def vjp(g):
        ga = _unbroadcast(g / bd, ad.shape) if a.requires_grad else None
        gb = _unbroadcast(-g * out / bd, bd.shape) if b.requires_grad else None
        return ga, gb
    return _emit("div", (a, b), out, vjp)


def neg(a) -> Tensor:
    a = as_tensor(a)
    return _emit("neg", (a,), -a.data, lambda g: (-g,))


def tanh(a) -> Tensor:
    a = as_tensor(a)
    out = np.tanh(a.data)
    return _emit("tanh", (a,), out, lambda g: (g * (1.0 - out * out),))


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    x = a.data
    # split to avoid overflow in exp for large |x|
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return _emit("sigmoid", (a,), out, lambda g: (g * out * (1.0 - out),))


def exp(a) -> Tensor:
    a = as_tensor(a)
    with np.errstate(over="ignore"):  # overflow surfaces as NumericError in _emit
        out = np.exp(a.data)
    return _emit("exp", (a,), out, lambda g: (g * out,))


def log(a) -> Tensor:
    a = as_tensor(a)
    if np.any(a.data <= 0):
        raise NumericError("log: non-positive input")
    x = a.data
    return _emit("log", (a,), np.log(x), lambda g: (g / x,))


def sqrt(a) -> Tensor:
    a = as_tensor(a)
    if np.any(a.data < 0):
        raise NumericError("sqrt: negative input")
    out = np.sqrt(a.data)

    def vjp(g):
        safe = np.where(out > 0, out, 1.0)
        return (np.where(out > 0, 0.5 * g / safe, 0.0),)
    return _emit("sqrt", (a,), out, vjp)


def clamp_min(a, floor: float) -> Tensor:
    """max(a, floor) with gradient passed only where a > floor."""
    a = as_tensor(a)
    mask = a.data > floor
    return _emit("clamp_min", (a,), np.where(mask, a.data, floor), lambda g: (g * mask,))


# ---------------------------------------------------------------------------
# reductions


def _norm_axis(axis, ndim):
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(ax % ndim for ax in axis)


def _expand_back(g, shape, axes, keepdims):
    if not keepdims:
        for ax in sorted(axes):
            g = np.expand_dims(g, ax)
    return np.broadcast_to(g, shape)


def sum(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    axes = _norm_axis(axis, a.ndim)
    shape = a.shape
    out = a.data.sum(axis=axes, keepdims=keepdims)
    return _emit("sum", (a,), out, lambda g: (_expand_back(g, shape, axes, keepdims),))


def sorted_sum(a, axis: int) -> Tensor:
    """Sum along one axis in ascending-value order.

    The result is bitwise independent of the order of the summed entries,
    which makes channel pooling exactly permutation invariant.
    """
    a = as_tensor(a)
    ax = axis % a.ndim
    out = np.sort(a.data, axis=ax).sum(axis=ax)
    shape = a.shape
    return _emit("sorted_sum", (a,), out, lambda g: (np.broadcast_to(np.expand_dims(g, ax), shape),))


def mean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    axes = _norm_axis(axis, a.ndim)
    shape = a.shape
    count = int(np.prod([shape[ax] for ax in axes])) if axes else 1
    out = a.data.mean(axis=axes, keepdims=keepdims) if axes else a.data.copy()
    return _emit("mean", (a,), out,
                 lambda g: (_expand_back(g, shape, axes, keepdims) / count,))


def l2norm(a, axis=-1, keepdims: bool = False) -> Tensor:
    """Euclidean norm along ``axis``; the gradient at the zero vector is 0."""
    a = as_tensor(a)
    x = a.data
    axes = _norm_axis(axis, a.ndim)
    nk = np.sqrt(np.sum(x * x, axis=axes, keepdims=True))
    out = nk if keepdims else np.squeeze(nk, axis=axes)

    def vjp(g):
        gk = g if keepdims else np.expand_dims(g, axes)
        safe = np.where(nk > 0, nk, 1.0)
        return (np.where(nk > 0, gk * x / safe, 0.0),)
    return _emit("l2norm", (a,), out, vjp)


# ---------------------------------------------------------------------------
# linear algebra


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    ad, bd = a.data, b.data
    if ad.ndim < 2 or bd.ndim < 2:
        raise ShapeError(f"matmul: operands must be at least 2-d, got {ad.shape} and {bd.shape}")
    if ad.shape[-1] != bd.shape[-2]:
        raise ShapeError(f"matmul: inner dimensions differ, {ad.shape} @ {bd.shape}")
    try:
        out = np.matmul(ad, bd)
    except ValueError as exc:
        raise ShapeError(f"matmul: {exc}") from None

    def vjp(g):
        ga = _unbroadcast(g @ np.swapaxes(bd, -1, -2), ad.shape) if a.requires_grad else None
        gb = _unbroadcast(np.swapaxes(ad, -1, -2) @ g, bd.shape) if b.requires_grad else None
        return ga, gb
    return _emit("matmul", (a, b), out, vjp)


def corr_valid(x, h) -> Tensor:
    """Sliding dot product along the last axis, valid part only.

    ``out[..., j] = sum_k x[..., j + k] * h[..., k]`` with output length
    ``len(x) - len(h) + 1``. Leading axes broadcast.
    """
    x, h = as_tensor(x), as_tensor(h)
    xd, hd = x.data, h.data
    n, k = xd.shape[-1], hd.shape[-1]
    if k > n:
        raise ShapeError(f"corr_valid: kernel length {k} exceeds input length {n}")
    _check_broadcast("corr_valid", xd[..., :1], hd[..., :1])
    win = sliding_window_view(xd, k, axis=-1)  # (..., n-k+1, k)
    out = np.einsum("...jk,...k->...j", win, hd)

    def vjp(g):
        gx = gh = None
        if x.requires_grad:
            # adjoint: full convolution of g with h
            gpad = np.zeros(np.broadcast_shapes(g.shape[:-1], hd.shape[:-1]) + (n + k - 1,))
            gpad[..., k - 1:k - 1 + g.shape[-1]] = g
            gw = sliding_window_view(gpad, k, axis=-1)  # (..., n, k)
            gx = np.einsum("...jk,...k->...j", gw, hd[..., ::-1])
            gx = _unbroadcast(gx, xd.shape)
        if h.requires_grad:
            gh = np.einsum("...jk,...j->...k", win, g)
            gh = _unbroadcast(gh, hd.shape)
        return gx, gh
    return _emit("corr_valid", (x, h), out, vjp)


# ---------------------------------------------------------------------------
# shape manipulation


def concat(tensors: Sequence, axis: int = -1) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    try:
        out = np.concatenate([t.data for t in ts], axis=axis)
    except ValueError as exc:
        raise ShapeError(f"concat: {exc}") from None
    ax = axis % out.ndim
    bounds = np.cumsum([0] + [t.shape[ax] for t in ts])

    def vjp(g):
        return tuple(np.take(g, np.arange(bounds[i], bounds[i + 1]), axis=ax)
                     for i in range(len(ts)))
    return _emit("concat", ts, out, vjp)


def stack(tensors: Sequence, axis: int = 0) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    try:
        out = np.stack([t.data for t in ts], axis=axis)
    except ValueError as exc:
        raise ShapeError(f"stack: {exc}") from None
    ax = axis % out.ndim
    return _emit("stack", ts, out,
                 lambda g: tuple(np.take(g, i, axis=ax) for i in range(len(ts))))


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    old = a.shape
    try:
        out = a.data.reshape(shape)
    except ValueError as exc:
        raise ShapeError(f"reshape: {exc}") from None
    return _emit("reshape", (a,), out, lambda g: (g.reshape(old),))


def transpose(a, axes=None) -> Tensor:
    a = as_tensor(a)
    out = np.ascontiguousarray(np.transpose(a.data, axes))
    inv = None if axes is None else np.argsort(axes)
    return _emit("transpose", (a,), out, lambda g: (np.transpose(g, inv),))


def _is_basic(idx) -> bool:
    items = idx if isinstance(idx, tuple) else (idx,)
    return all(isinstance(i, (int, np.integer, slice)) or i is None or i is Ellipsis
               for i in items)


def getitem(a, idx) -> Tensor:
    """Indexing; the gradient scatters back into a zero buffer."""
    a = as_tensor(a)
    shape = a.shape
    try:
        out = a.data[idx]
    except IndexError as exc:
        raise ShapeError(f"getitem: {exc}") from None
    basic = _is_basic(idx)

    def vjp(g):
        buf = np.zeros(shape)
        if basic:
            buf[idx] += g
        else:
            np.add.at(buf, idx, g)
        return (buf,)
    return _emit("getitem", (a,), np.array(out, dtype=DTYPE), vjp)


def pad(a, widths: Sequence[tuple[int, int]]) -> Tensor:
    """Zero padding; ``widths`` has one (before, after) pair per axis."""
    a = as_tensor(a)
    if len(widths) != a.ndim:
        raise ShapeError(f"pad: got {len(widths)} width pairs for a {a.ndim}-d tensor")
    out = np.pad(a.data, widths)
    sl = tuple(slice(lo, lo + n) for (lo, _), n in zip(widths, a.shape))
    return _emit("pad", (a,), out, lambda g: (g[sl],))


def _fold_np(frames: np.ndarray, step: int, length: int) -> np.ndarray:
    """Overlap-add ``(..., n_frames, size)`` windows placed ``step`` apart."""
    *lead, nf, size = frames.shape
    out = np.zeros((*lead, length))
    if size % step == 0:
        nb = size // step
        need = (nf - 1 + nb) * step
        buf = np.zeros((*lead, max(need, length) // step + 1, step))
        blocks = frames.reshape(*lead, nf, nb, step)
        for b in range(nb):
            buf[..., b:b + nf, :] += blocks[..., b, :]
        flat = buf.reshape(*lead, -1)
        out[...] = flat[..., :length]
        return out
    full = np.zeros((*lead, max((nf - 1) * step + size, length)))
    for t in range(nf):
        full[..., t * step:t * step + size] += frames[..., t, :]
    out[...] = full[..., :length]
    return out


def unfold(a, size: int, step: int) -> Tensor:
    """Windows of ``size`` samples every ``step`` along the last axis.

    Output shape ``(..., n_frames, size)`` with ``n_frames = (n - size) // step + 1``.
    """
    a = as_tensor(a)
    n = a.shape[-1]
    if size > n:
        raise ShapeError(f"unfold: window {size} longer than axis {n}")
    if step < 1:
        raise ShapeError("unfold: step must be positive")
    win = sliding_window_view(a.data, size, axis=-1)[..., ::step, :]
    out = np.ascontiguousarray(win)
    return _emit("unfold", (a,), out, lambda g: (_fold_np(g, step, n),))


def fold(a, step: int, length: int) -> Tensor:
    """Overlap-add frames ``(..., n_frames, size)`` into a signal of ``length``.

    Samples past ``length`` are discarded; this is the adjoint of :func:`unfold`
    when the frames tile the signal exactly.
    """
    a = as_tensor(a)
    nf, size = a.shape[-2], a.shape[-1]
    out = _fold_np(a.data, step, length)

    def vjp(g):
        span = (nf - 1) * step + size
        gp = g if span <= length else np.concatenate(
            [g, np.zeros(g.shape[:-1] + (span - length,))], axis=-1)
        win = sliding_window_view(gp, size, axis=-1)[..., ::step, :][..., :nf, :]
        return (np.ascontiguousarray(win),)
    return _emit("fold", (a,), out, vjp)


# ---------------------------------------------------------------------------
# reverse pass


def backward(loss: Tensor) -> None:
    """Populate ``.grad`` on every leaf that requires grad.

    Gradients accumulate across calls; clear them with ``zero_grad``.
    """
    if loss.size != 1:
        raise ShapeError(f"backward: loss must be scalar, got shape {loss.shape}")
    if not loss.requires_grad:
        raise ValueError("backward: loss does not depend on any tensor requiring grad")
    tape = loss._tape
    if tape is None or loss._record is None:
        raise RuntimeError("backward: loss was not produced on an active tape")
    grads: dict[int, np.ndarray] = {id(loss): np.ones(loss.shape)}
    for rec in reversed(tape.records[:loss._record.index + 1]):
        g = grads.pop(id(rec.output), None)
        if g is None:
            continue
        in_grads = rec.vjp(g)
        for t, gi in zip(rec.inputs, in_grads):
            if gi is None or not t.requires_grad:
                continue
            if t._record is None:
                # leaf
                gi = np.array(gi, dtype=DTYPE).reshape(t.shape)
                t.grad = gi.copy() if t.grad is None else t.grad + gi
            else:
                key = id(t)
                prev = grads.get(key)
                grads[key] = gi if prev is None else prev + gi
