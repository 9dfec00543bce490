"""Dense NHWC tensors with tape-based reverse-mode differentiation.

Array storage and the raw arithmetic are delegated to numpy; this module owns
the op set the network needs, the shape checks, and the analytic backward
rules.  Gradients are only recorded while a :class:`GradientProgram` is
active, so inference pays nothing for autodiff bookkeeping.

Layout convention: images and feature maps are ``[B, H, W, C]``.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping, Sequence, Union

import numpy as np

__all__ = [
    "ShapeError",
    "NumericError",
    "Tensor",
    "GradientProgram",
    "ComplexSpectrum",
    "tensor",
    "parameter",
    "gradient",
    "elementwise",
    "add",
    "sub",
    "mul",
    "div",
    "neg",
    "exp",
    "log",
    "sqrt",
    "absolute",
    "relu",
    "tanh",
    "gelu",
    "softplus",
    "clamp_min",
    "matmul",
    "linear",
    "reshape",
    "permute",
    "sum",
    "mean",
    "slice_axis",
    "pad2d",
    "softmax",
    "conv2d",
    "conv_transpose2d",
    "depthwise_conv2d",
    "avg_pool2d",
    "fft2",
    "ifft2",
    "fft_amplitude",
    "spectral_filter",
    "stop_gradient",
]


class ShapeError(ValueError):
    """Operand shapes are incompatible with the requested op."""


class NumericError(ArithmeticError):
    """Non-finite input or an exact division by zero in 64-bit mode."""


ArrayLike = Union["Tensor", np.ndarray, float, int, Sequence]


class Tensor:
    """Immutable-by-convention wrapper around a float ndarray.

    ``requires_grad`` marks leaves whose derivatives can be queried; op
    results inherit it when recorded on an active program.
    """

    __slots__ = ("data", "requires_grad", "name", "__weakref__")
    __array_priority__ = 100

    def __init__(self, data, requires_grad: bool = False, dtype=None, name: str | None = None):
        if isinstance(data, Tensor):
            data = data.data
        arr = np.asarray(data, dtype=dtype)
        if not np.issubdtype(arr.dtype, np.floating):
            arr = arr.astype(np.float64)
        self.data = arr
        self.requires_grad = requires_grad
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def __repr__(self) -> str:
        tag = f", name={self.name!r}" if self.name else ""
        return f"Tensor(shape={list(self.shape)}, dtype={self.dtype}{tag})"

    def __len__(self) -> int:
        return self.shape[0]

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def sum(self, axis=None, keepdims=False):
        return sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis=axis, keepdims=keepdims)


def tensor(data, dtype=None) -> Tensor:
    return Tensor(data, dtype=dtype)


def parameter(data, name: str | None = None, dtype=None) -> Tensor:
    """A leaf tensor whose derivative is tracked."""
    return Tensor(np.array(data, dtype=dtype), requires_grad=True, name=name)


# --------------------------------------------------------------------------
# Recording
# --------------------------------------------------------------------------

_local = threading.local()


def _active() -> "GradientProgram | None":
    stack = getattr(_local, "stack", None)
    return stack[-1] if stack else None


class GradientProgram:
    """Ordered record of primitive ops applied to tracked tensors.

    Use as a context manager; ops executed inside the block whose inputs
    require gradients are appended to :attr:`nodes`.  After the block exits
    the record is read-only and :meth:`gradient` may be called repeatedly.

    >>> x = parameter([1.0, 2.0])
    >>> with GradientProgram() as prog:
    ...     y = sum(mul(x, x))
    >>> prog.gradient(y, [x])[0].data
    array([2., 4.])
    """

    def __init__(self):
        self.nodes: list[tuple[Tensor, tuple[Tensor, ...], Callable]] = []

    def __enter__(self) -> "GradientProgram":
        if not hasattr(_local, "stack"):
            _local.stack = []
        _local.stack.append(self)
        return self

    def __exit__(self, *exc) -> None:
        _local.stack.pop()

    def __len__(self) -> int:
        return len(self.nodes)

    def gradient(self, output: Tensor, params):
        """Derivatives of scalar ``output`` w.r.t. ``params``.

        ``params`` may be a sequence (a list is returned) or a mapping of
        names to tensors (a dict is returned).  Parameters that do not reach
        ``output`` get a zero tensor.
        """
        if output.size != 1:
            raise ShapeError(f"gradient needs a scalar output, got shape {list(output.shape)}")
        grads: dict[int, np.ndarray] = {id(output): np.ones_like(output.data)}
        for out, inputs, backward in reversed(self.nodes):
            g = grads.pop(id(out), None)
            if g is None:
                continue
            for inp, gi in zip(inputs, backward(g)):
                if gi is None or not inp.requires_grad:
                    continue
                key = id(inp)
                if key in grads:
                    grads[key] = grads[key] + gi
                else:
                    grads[key] = gi

        def lookup(p: Tensor) -> Tensor:
            g = grads.get(id(p))
            if g is None:
                g = np.zeros_like(p.data)
            return Tensor(np.asarray(g, dtype=p.dtype).reshape(p.shape))

        if isinstance(params, Mapping):
            return {k: lookup(p) for k, p in params.items()}
        return [lookup(p) for p in params]


def gradient(program: GradientProgram, output: Tensor, params):
    return program.gradient(output, params)


def _result(data: np.ndarray, inputs: tuple[Tensor, ...], backward: Callable) -> Tensor:
    out = Tensor(data)
    prog = _active()
    if prog is not None and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        prog.nodes.append((out, inputs, backward))
    return out


def _as_tensor(x, like: Tensor | None = None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    dtype = like.dtype if like is not None else None
    return Tensor(np.asarray(x, dtype=dtype))


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def _broadcast_shape(a: tuple[int, ...], b: tuple[int, ...]) -> tuple[int, ...]:
    try:
        return np.broadcast_shapes(a, b)
    except ValueError:
        raise ShapeError(f"cannot broadcast shapes {list(a)} and {list(b)}") from None


# --------------------------------------------------------------------------
# Elementwise
# --------------------------------------------------------------------------


def add(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = _binary(a, b)
    _broadcast_shape(a.shape, b.shape)
    sa, sb = a.shape, b.shape
    return _result(a.data + b.data, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def sub(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = _binary(a, b)
    _broadcast_shape(a.shape, b.shape)
    sa, sb = a.shape, b.shape
    return _result(a.data - b.data, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb)))


def mul(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = _binary(a, b)
    _broadcast_shape(a.shape, b.shape)
    ad, bd = a.data, b.data
    return _result(
        ad * bd,
        (a, b),
        lambda g: (_unbroadcast(g * bd, ad.shape), _unbroadcast(g * ad, bd.shape)),
    )


def div(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = _binary(a, b)
    _broadcast_shape(a.shape, b.shape)
    ad, bd = a.data, b.data
    if bd.dtype == np.float64 and np.any(bd == 0):
        raise NumericError("division by exact zero")
    out = ad / bd
    return _result(
        out,
        (a, b),
        lambda g: (_unbroadcast(g / bd, ad.shape), _unbroadcast(-g * out / bd, bd.shape)),
    )


def _binary(a, b) -> tuple[Tensor, Tensor]:
    if isinstance(a, Tensor):
        return a, _as_tensor(b, a)
    b = _as_tensor(b)
    return _as_tensor(a, b), b


def neg(x: Tensor) -> Tensor:
    return _result(-x.data, (x,), lambda g: (-g,))


def exp(x: Tensor) -> Tensor:
    out = np.exp(x.data)
    return _result(out, (x,), lambda g: (g * out,))


def log(x: Tensor) -> Tensor:
    d = x.data
    return _result(np.log(d), (x,), lambda g: (g / d,))


def sqrt(x: Tensor) -> Tensor:
    out = np.sqrt(x.data)
    return _result(out, (x,), lambda g: (g * 0.5 / out,))


def absolute(x: Tensor) -> Tensor:
    d = x.data
    return _result(np.abs(d), (x,), lambda g: (g * np.sign(d),))


def tanh(x: Tensor) -> Tensor:
    out = np.tanh(x.data)
    return _result(out, (x,), lambda g: (g * (1 - out * out),))


def relu(x: Tensor) -> Tensor:
    d = x.data
    return _result(np.maximum(d, 0), (x,), lambda g: (g * (d > 0),))


_GELU_C = float(np.sqrt(2.0 / np.pi))


def gelu(x: Tensor) -> Tensor:
    """Tanh-approximated GELU."""
    d = x.data
    d2 = d * d
    t = np.tanh(_GELU_C * d * (1 + 0.044715 * d2))
    out = 0.5 * d * (1 + t)

    def backward(g):
        dinner = _GELU_C * (1 + 3 * 0.044715 * d2)
        return (g * (0.5 * (1 + t) + 0.5 * d * (1 - t * t) * dinner),)

    return _result(out, (x,), backward)


def softplus(x: Tensor) -> Tensor:
    d = x.data
    out = np.log1p(np.exp(-np.abs(d))) + np.maximum(d, 0)
    return _result(out, (x,), lambda g: (g / (1 + np.exp(-d)),))


def clamp_min(x: Tensor, floor: float) -> Tensor:
    d = x.data
    return _result(np.maximum(d, floor), (x,), lambda g: (g * (d >= floor),))


_UNARY = {
    "exp": exp,
    "log": log,
    "neg": neg,
    "abs": absolute,
    "relu": relu,
    "tanh": tanh,
    "gelu": gelu,
    "softplus": softplus,
    "sqrt": sqrt,
}
_BINARY = {"add": add, "sub": sub, "mul": mul, "div": div}


def elementwise(kind: str, a: ArrayLike, b: ArrayLike | None = None) -> Tensor:
    """Dispatch a pointwise op by name (``"add"``, ``"exp"``, ...)."""
    if kind in _BINARY:
        if b is None:
            raise ValueError(f"{kind} needs two operands")
        return _BINARY[kind](a, b)
    if kind in _UNARY:
        return _UNARY[kind](_as_tensor(a))
    raise ValueError(f"unknown elementwise op {kind!r}")


# --------------------------------------------------------------------------
# Linear algebra and shape algebra
# --------------------------------------------------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Batched matrix product over the last two axes."""
    a, b = _binary(a, b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul shapes {list(a.shape)} and {list(b.shape)} do not align")
    ad, bd = a.data, b.data

    def backward(g):
        ga = g @ np.swapaxes(bd, -1, -2)
        gb = np.swapaxes(ad, -1, -2) @ g
        return _unbroadcast(ga, ad.shape), _unbroadcast(gb, bd.shape)

    return _result(ad @ bd, (a, b), backward)


def linear(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    """Pointwise (1x1) channel mixing: ``x[..., Cin] @ w[Cin, Cout] + b``."""
    if w.ndim != 2 or x.shape[-1] != w.shape[0]:
        raise ShapeError(f"linear: input channels {x.shape[-1]} vs weight {list(w.shape)}")
    xd, wd = x.data, w.data
    out = xd @ wd
    if b is not None:
        out = out + b.data
    inputs = (x, w) if b is None else (x, w, b)

    def backward(g):
        g2 = g.reshape(-1, g.shape[-1])
        gx = g @ wd.T
        gw = xd.reshape(-1, xd.shape[-1]).T @ g2
        if b is None:
            return gx, gw
        return gx, gw, g2.sum(axis=0)

    return _result(out, inputs, backward)


def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    shape = tuple(int(s) for s in shape)
    if -1 not in shape and int(np.prod(shape)) != x.size:
        raise ShapeError(f"cannot reshape {list(x.shape)} to {list(shape)}")
    src = x.shape
    try:
        out = x.data.reshape(shape)
    except ValueError as e:
        raise ShapeError(str(e)) from None
    return _result(out, (x,), lambda g: (g.reshape(src),))


def permute(x: Tensor, axes: Sequence[int]) -> Tensor:
    axes = tuple(axes)
    if sorted(axes) != list(range(x.ndim)):
        raise ShapeError(f"invalid permutation {axes} for rank {x.ndim}")
    inv = tuple(np.argsort(axes))
    return _result(np.transpose(x.data, axes), (x,), lambda g: (np.transpose(g, inv),))


def sum(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001
    src = x.shape

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, src).copy(),)

    return _result(np.sum(x.data, axis=axis, keepdims=keepdims), (x,), backward)


def mean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    if axis is None:
        n = x.size
    else:
        axes = (axis,) if isinstance(axis, int) else axis
        n = int(np.prod([x.shape[a] for a in axes]))
    return mul(sum(x, axis=axis, keepdims=keepdims), 1.0 / n)


def slice_axis(x: Tensor, axis: int, start: int, stop: int, step: int = 1) -> Tensor:
    idx = [slice(None)] * x.ndim
    idx[axis] = slice(start, stop, step)
    idx = tuple(idx)
    src, dtype = x.shape, x.dtype

    def backward(g):
        gx = np.zeros(src, dtype=dtype)
        gx[idx] = g
        return (gx,)

    return _result(x.data[idx], (x,), backward)


def pad2d(x: Tensor, pad: int | tuple[int, int, int, int], mode: str = "zero") -> Tensor:
    """Pad the H and W axes of a ``[B, H, W, C]`` tensor.

    ``pad`` is either one int or ``(top, bottom, left, right)``.  Reflect mode
    mirrors without repeating the edge sample.
    """
    if isinstance(pad, int):
        pad = (pad, pad, pad, pad)
    top, bottom, left, right = pad
    if x.ndim != 4:
        raise ShapeError(f"pad2d expects [B,H,W,C], got {list(x.shape)}")
    if not any(pad):
        return x
    _, H, W, _ = x.shape
    if mode == "zero":
        out = np.pad(x.data, ((0, 0), (top, bottom), (left, right), (0, 0)))

        def backward(g):
            return (g[:, top : top + H, left : left + W, :],)

        return _result(out, (x,), backward)
    if mode != "reflect":
        raise ValueError(f"unknown padding mode {mode!r}")
    if max(top, bottom) >= H or max(left, right) >= W:
        raise ShapeError(f"reflect padding {pad} too large for {H}x{W}")
    rows = np.pad(np.arange(H), (top, bottom), mode="reflect")
    cols = np.pad(np.arange(W), (left, right), mode="reflect")
    out = x.data[:, rows][:, :, cols]

    def backward(g):
        gw = np.zeros(g.shape[:2] + (W, g.shape[3]), dtype=g.dtype)
        np.add.at(gw, (slice(None), slice(None), cols), g)
        gx = np.zeros(x.shape, dtype=g.dtype)
        np.add.at(gx, (slice(None), rows), gw)
        return (gx,)

    return _result(out, (x,), backward)


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    d = x.data
    e = np.exp(d - d.max(axis=axis, keepdims=True))
    out = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return _result(out, (x,), backward)


def stop_gradient(x: Tensor) -> Tensor:
    return Tensor(x.data)


# --------------------------------------------------------------------------
# Convolutions (NHWC, weights [kh, kw, Cin, Cout])
# --------------------------------------------------------------------------


def _out_extent(n: int, k: int, stride: int) -> int:
    if n < k:
        raise ShapeError(f"kernel extent {k} larger than padded input extent {n}")
    return (n - k) // stride + 1


def conv2d(
    x: Tensor,
    w: Tensor,
    bias: Tensor | None = None,
    stride: int = 1,
    padding: int = 0,
    padding_mode: str = "zero",
) -> Tensor:
    """2-D cross-correlation; output extent ``floor((H + 2p - kh) / s) + 1``."""
    if x.ndim != 4 or w.ndim != 4 or x.shape[3] != w.shape[2]:
        raise ShapeError(f"conv2d: input {list(x.shape)} vs weight {list(w.shape)}")
    if stride < 1 or min(w.shape[:2]) < 1:
        raise ShapeError("conv2d: stride and kernel extents must be >= 1")
    if padding:
        x = pad2d(x, padding, padding_mode)
    out = _conv_valid(x, w, stride)
    if bias is not None:
        out = add(out, bias)
    return out


def _conv_valid(x: Tensor, w: Tensor, stride: int) -> Tensor:
    xd, wd = x.data, w.data
    B, H, W, _ = xd.shape
    kh, kw, cin, cout = wd.shape
    Ho, Wo = _out_extent(H, kh, stride), _out_extent(W, kw, stride)
    hs, ws = stride * (Ho - 1) + 1, stride * (Wo - 1) + 1
    if kh == 1 and kw == 1 and stride == 1:
        out = xd @ wd[0, 0]
    else:
        out = np.zeros((B, Ho, Wo, cout), dtype=np.result_type(xd, wd))
        for i in range(kh):
            for j in range(kw):
                out += xd[:, i : i + hs : stride, j : j + ws : stride, :] @ wd[i, j]

    def backward(g):
        gx = np.zeros_like(xd, dtype=g.dtype)
        gw = np.empty_like(wd, dtype=g.dtype)
        g2 = g.reshape(-1, cout)
        for i in range(kh):
            for j in range(kw):
                win = xd[:, i : i + hs : stride, j : j + ws : stride, :]
                gw[i, j] = win.reshape(-1, cin).T @ g2
                gx[:, i : i + hs : stride, j : j + ws : stride, :] += g @ wd[i, j].T
        return gx, gw

    return _result(out, (x, w), backward)


def conv_transpose2d(x: Tensor, w: Tensor, bias: Tensor | None = None, stride: int = 1) -> Tensor:
    """Adjoint of :func:`conv2d` without padding.

    ``w`` has the conv2d layout ``[kh, kw, Cout, Cin]`` from the point of view
    of this op: an input with ``Cin`` channels produces ``Cout`` channels and
    spatial extent ``(H - 1) * stride + kh``.
    """
    if x.ndim != 4 or w.ndim != 4 or x.shape[3] != w.shape[3]:
        raise ShapeError(f"conv_transpose2d: input {list(x.shape)} vs weight {list(w.shape)}")
    if stride < 1:
        raise ShapeError("conv_transpose2d: stride must be >= 1")
    xd, wd = x.data, w.data
    B, H, W, cin = xd.shape
    kh, kw, cout, _ = wd.shape
    Ho, Wo = (H - 1) * stride + kh, (W - 1) * stride + kw
    hs, ws = stride * (H - 1) + 1, stride * (W - 1) + 1
    out = np.zeros((B, Ho, Wo, cout), dtype=np.result_type(xd, wd))
    for i in range(kh):
        for j in range(kw):
            out[:, i : i + hs : stride, j : j + ws : stride, :] += xd @ wd[i, j].T

    def backward(g):
        gx = np.zeros_like(xd, dtype=g.dtype)
        gw = np.empty_like(wd, dtype=g.dtype)
        x2 = xd.reshape(-1, cin)
        for i in range(kh):
            for j in range(kw):
                gwin = g[:, i : i + hs : stride, j : j + ws : stride, :]
                gx += gwin @ wd[i, j]
                gw[i, j] = gwin.reshape(-1, cout).T @ x2
        return gx, gw

    y = _result(out, (x, w), backward)
    if bias is not None:
        y = add(y, bias)
    return y


def depthwise_conv2d(
    x: Tensor,
    w: Tensor,
    bias: Tensor | None = None,
    padding: int = 0,
    padding_mode: str = "zero",
) -> Tensor:
    """Per-channel stride-1 correlation with weights ``[kh, kw, C]``."""
    if x.ndim != 4 or w.ndim != 3 or x.shape[3] != w.shape[2]:
        raise ShapeError(f"depthwise_conv2d: input {list(x.shape)} vs weight {list(w.shape)}")
    if padding:
        x = pad2d(x, padding, padding_mode)
    xd, wd = x.data, w.data
    _, H, W, _ = xd.shape
    kh, kw, _ = wd.shape
    Ho, Wo = _out_extent(H, kh, 1), _out_extent(W, kw, 1)
    out = np.zeros(xd.shape[:1] + (Ho, Wo) + xd.shape[3:], dtype=np.result_type(xd, wd))
    for i in range(kh):
        for j in range(kw):
            out += xd[:, i : i + Ho, j : j + Wo, :] * wd[i, j]

    def backward(g):
        gx = np.zeros_like(xd, dtype=g.dtype)
        gw = np.empty_like(wd, dtype=g.dtype)
        for i in range(kh):
            for j in range(kw):
                gw[i, j] = (xd[:, i : i + Ho, j : j + Wo, :] * g).sum(axis=(0, 1, 2))
                gx[:, i : i + Ho, j : j + Wo, :] += g * wd[i, j]
        return gx, gw

    y = _result(out, (x, w), backward)
    if bias is not None:
        y = add(y, bias)
    return y


def avg_pool2d(x: Tensor, factor: int) -> Tensor:
    """Non-overlapping area average by an integer factor."""
    if factor == 1:
        return x
    B, H, W, C = x.shape
    if H % factor or W % factor:
        raise ShapeError(f"{H}x{W} not divisible by pooling factor {factor}")
    y = reshape(x, (B, H // factor, factor, W // factor, factor, C))
    return mean(y, axis=(2, 4))


# --------------------------------------------------------------------------
# Fourier transforms over the (H, W) axes
# --------------------------------------------------------------------------

_FFT_AXES = (-3, -2)


@dataclass(frozen=True)
class ComplexSpectrum:
    """Polar form of a per-channel 2-D spectrum (``[..., H, W, C]``)."""

    amplitude: np.ndarray
    phase: np.ndarray

    def to_complex(self) -> np.ndarray:
        return self.amplitude * np.exp(1j * self.phase)


def _check_finite(d: np.ndarray, what: str) -> None:
    if not np.all(np.isfinite(d)):
        raise NumericError(f"{what}: non-finite input")


def fft2(x: ArrayLike) -> ComplexSpectrum:
    """Unscaled forward transform of every channel of ``[..., H, W, C]``."""
    d = _as_tensor(x).data
    if d.ndim < 3:
        raise ShapeError(f"fft2 expects [..., H, W, C], got {list(d.shape)}")
    _check_finite(d, "fft2")
    X = np.fft.fft2(d, axes=_FFT_AXES)
    return ComplexSpectrum(np.abs(X), np.angle(X))


def ifft2(spectrum: ComplexSpectrum) -> Tensor:
    """Inverse of :func:`fft2`, scaled by ``1/(H*W)``; returns the real part."""
    X = spectrum.to_complex()
    _check_finite(X, "ifft2")
    return Tensor(np.fft.ifft2(X, axes=_FFT_AXES).real)


def _half_weights(W: int) -> np.ndarray:
    """How many full-spectrum columns each half-spectrum column stands for."""
    c = np.full(W // 2 + 1, 2.0)
    c[0] = 1.0
    if W % 2 == 0:
        c[-1] = 1.0
    return c[:, None]


def fft_amplitude(x: Tensor) -> Tensor:
    """``|rfft2(x)|``: amplitude of the half spectrum, ``[..., H, W//2+1, C]``.

    Bins with zero amplitude get zero slope.
    """
    _check_finite(x.data, "fft_amplitude")
    H, W = x.shape[-3], x.shape[-2]
    X = np.fft.rfft2(x.data, axes=_FFT_AXES)
    amp = np.abs(X)

    def backward(g):
        unit = np.divide(X, amp, out=np.zeros_like(X), where=amp > 0)
        v = g * unit / _half_weights(W)
        return ((H * W) * np.fft.irfft2(v, s=(H, W), axes=_FFT_AXES).astype(g.dtype),)

    return _result(amp.astype(x.dtype), (x,), backward)


def spectral_filter(x: Tensor, gain: Tensor) -> Tensor:
    """``irfft2(rfft2(x) * gain)`` for a real half-spectrum ``gain``.

    Equivalent to filtering the full spectrum with the Hermitian extension of
    ``gain``, so the output is real by construction.
    """
    H, W = x.shape[-3], x.shape[-2]
    half = x.shape[:-2] + (W // 2 + 1, x.shape[-1])
    if gain.shape != half:
        raise ShapeError(f"spectral_filter: gain {list(gain.shape)} vs half spectrum {list(half)}")
    X = np.fft.rfft2(x.data, axes=_FFT_AXES)
    gd = gain.data
    out = np.fft.irfft2(X * gd, s=(H, W), axes=_FFT_AXES).astype(x.dtype)

    def backward(g):
        G = np.fft.rfft2(g, axes=_FFT_AXES)
        gx = np.fft.irfft2(G * gd, s=(H, W), axes=_FFT_AXES)
        gg = _half_weights(W) * (X * np.conj(G)).real / (H * W)
        return gx.astype(g.dtype), gg.astype(g.dtype)

    return _result(out, (x, gain), backward)
