"""Dense float32 tensors, the math kernels the engine is built from, and a reverse-mode tape.

Every kernel is a plain function of its inputs. When a :class:`Tape` is active and at least
one input requires a gradient, the kernel records a node holding its parents and a
vector-Jacobian closure over the saved activations. :func:`backward` replays those nodes
in reverse recording order.
"""
from __future__ import annotations

import contextvars
import os
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .exception import ContractError, DimensionError, NumericError
from .logger_config import get_logger

logger = get_logger()

DTYPE = np.float32

_active_tape: contextvars.ContextVar[Optional["Tape"]] = contextvars.ContextVar("active_tape", default=None)
_debug = os.getenv("INPAINTX_DEBUG", "") not in ("", "0")


def set_debug(enabled: bool):
    global _debug
    _debug = bool(enabled)


def debug_enabled() -> bool:
    return _debug


class Tensor:
    __slots__ = ("data", "requires_grad", "grad_id", "_tape", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.require(np.asarray(data, dtype=DTYPE), requirements="C")
        if any(dim < 1 for dim in self.data.shape):
            raise DimensionError(f"tensor dimensions must be >= 1, got shape {self.data.shape}")
        self.requires_grad = requires_grad
        self.grad_id: int | None = None
        self._tape: Tape | None = None
        self.name = name

    @classmethod
    def parameter(cls, data, name: str | None = None) -> "Tensor":
        return cls(data, requires_grad=True, name=name)

    @property
    def shape(self) -> tuple:
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
        if self.data.size != 1:
            raise ContractError(f"item() needs a single element, got shape {self.shape}")
        return float(self.data.reshape(()))

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes) -> "Tensor":
        return transpose(self, axes or None)

    def sum(self, axis=None, keepdims=False) -> "Tensor":
        return reduce_sum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False) -> "Tensor":
        return reduce_mean(self, axis, keepdims)

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

    def __repr__(self):
        label = f" name={self.name}" if self.name else ""
        return f"<Tensor shape={self.shape}{label} requires_grad={self.requires_grad}>"


@dataclass
class Node:
    op: str
    out: Tensor
    parents: tuple
    vjp: Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]


@dataclass
class Tape:
    """Single-owner record of differentiable operations, in topological (recording) order."""

    nodes: list = field(default_factory=list)
    leaves: dict = field(default_factory=dict)
    _token: object = field(default=None, repr=False)

    def __enter__(self) -> "Tape":
        self._token = _active_tape.set(self)
        return self

    def __exit__(self, exc_type, exc_val, exc_tb):
        _active_tape.reset(self._token)
        self._token = None

    def record(self, op: str, out: Tensor, parents: tuple, vjp):
        for parent in parents:
            if parent.requires_grad and parent.grad_id is None:
                self.leaves.setdefault(id(parent), parent)
        out.requires_grad = True
        out.grad_id = len(self.nodes)
        out._tape = self
        self.nodes.append(Node(op, out, parents, vjp))


def active_tape() -> Optional[Tape]:
    return _active_tape.get()


def _as_tensor(value) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(value)


def _emit(op: str, data: np.ndarray, parents: tuple, vjp) -> Tensor:
    if _debug and not np.all(np.isfinite(data)):
        logger.error(f"{op} produced non-finite values")
        raise NumericError(f"{op} produced non-finite values")
    out = Tensor(data)
    tape = _active_tape.get()
    if tape is not None and any(parent.requires_grad for parent in parents):
        tape.record(op, out, parents, vjp)
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(axis for axis, dim in enumerate(shape) if dim == 1 and grad.shape[axis] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def _broadcast_shape(op: str, a: Tensor, b: Tensor) -> tuple:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise DimensionError(f"{op}: shapes {a.shape} and {b.shape} do not broadcast") from None


# ---------------------------------------------------------------------------
# elementwise
# ---------------------------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _broadcast_shape("add", a, b)

    def vjp(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _emit("add", a.data + b.data, (a, b), vjp)


def sub(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _broadcast_shape("sub", a, b)

    def vjp(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _emit("sub", a.data - b.data, (a, b), vjp)


def mul(a, b) -> Tensor:
    """Hadamard product with numpy broadcasting."""
    a, b = _as_tensor(a), _as_tensor(b)
    _broadcast_shape("mul", a, b)

    def vjp(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _emit("mul", a.data * b.data, (a, b), vjp)


def div(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _broadcast_shape("div", a, b)
    out = a.data / b.data

    def vjp(g):
        return _unbroadcast(g / b.data, a.shape), _unbroadcast(-g * out / b.data, b.shape)

    return _emit("div", out, (a, b), vjp)


def neg(x: Tensor) -> Tensor:
    return _emit("neg", -x.data, (x,), lambda g: (-g,))


def scale(x: Tensor, factor: float) -> Tensor:
    factor = DTYPE(factor)
    return _emit("scale", x.data * factor, (x,), lambda g: (g * factor,))


def shift(x: Tensor, offset: float) -> Tensor:
    return _emit("shift", x.data + DTYPE(offset), (x,), lambda g: (g,))


def reciprocal(x: Tensor) -> Tensor:
    out = 1.0 / x.data
    return _emit("reciprocal", out, (x,), lambda g: (-g * out * out,))


def exp(x: Tensor) -> Tensor:
    out = np.exp(x.data)
    return _emit("exp", out, (x,), lambda g: (g * out,))


def absolute(x: Tensor) -> Tensor:
    sign = np.sign(x.data)
    return _emit("abs", np.abs(x.data), (x,), lambda g: (g * sign,))


def relu(x: Tensor) -> Tensor:
    positive = x.data > 0
    return _emit("relu", np.where(positive, x.data, 0).astype(DTYPE), (x,), lambda g: (g * positive,))


def leaky_relu(x: Tensor, alpha: float = 0.2) -> Tensor:
    slope = np.where(x.data > 0, 1.0, alpha).astype(DTYPE)
    return _emit("leaky_relu", x.data * slope, (x,), lambda g: (g * slope,))


def elu(x: Tensor) -> Tensor:
    positive = x.data > 0
    expm = np.expm1(np.minimum(x.data, 0))
    out = np.where(positive, x.data, expm).astype(DTYPE)
    slope = np.where(positive, 1.0, expm + 1.0).astype(DTYPE)
    return _emit("elu", out, (x,), lambda g: (g * slope,))


def sigmoid(x: Tensor) -> Tensor:
    out = (0.5 * (1.0 + np.tanh(0.5 * x.data))).astype(DTYPE)
    return _emit("sigmoid", out, (x,), lambda g: (g * out * (1.0 - out),))


def tanh(x: Tensor) -> Tensor:
    out = np.tanh(x.data)
    return _emit("tanh", out, (x,), lambda g: (g * (1.0 - out * out),))


# ---------------------------------------------------------------------------
# structural
# ---------------------------------------------------------------------------

def reshape(x: Tensor, shape) -> Tensor:
    shape = tuple(shape)
    try:
        out = x.data.reshape(shape)
    except ValueError:
        raise DimensionError(f"reshape: cannot view shape {x.shape} as {shape}") from None
    return _emit("reshape", out, (x,), lambda g: (g.reshape(x.shape),))


def transpose(x: Tensor, axes=None) -> Tensor:
    axes = tuple(range(x.ndim))[::-1] if axes is None else tuple(axes)
    if sorted(axes) != list(range(x.ndim)):
        raise DimensionError(f"transpose: axes {axes} are not a permutation of {x.ndim} axes")
    inverse = tuple(np.argsort(axes))
    return _emit("transpose", x.data.transpose(axes), (x,), lambda g: (g.transpose(inverse),))


def concat(tensors: Sequence[Tensor], axis: int = 1) -> Tensor:
    tensors = tuple(_as_tensor(t) for t in tensors)
    if not tensors:
        raise DimensionError("concat: nothing to concatenate")
    ndim = tensors[0].ndim
    for t in tensors:
        if t.ndim != ndim or any(t.shape[i] != tensors[0].shape[i] for i in range(ndim) if i != axis):
            raise DimensionError(f"concat: shapes {[t.shape for t in tensors]} disagree off axis {axis}")
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def vjp(g):
        return tuple(np.split(g, splits, axis=axis))

    return _emit("concat", np.concatenate([t.data for t in tensors], axis=axis), tensors, vjp)


def slice_axis(x: Tensor, axis: int, start: int, stop: int) -> Tensor:
    if not 0 <= start < stop <= x.shape[axis]:
        raise DimensionError(f"slice: [{start}:{stop}] out of range for axis {axis} of size {x.shape[axis]}")
    index = [slice(None)] * x.ndim
    index[axis] = slice(start, stop)
    index = tuple(index)

    def vjp(g):
        full = np.zeros(x.shape, dtype=DTYPE)
        full[index] = g
        return (full,)

    return _emit("slice", x.data[index], (x,), vjp)


def _check_image(op: str, x: Tensor):
    if x.ndim != 4:
        raise DimensionError(f"{op}: expected N×C×H×W input, got shape {x.shape}")


def nearest_upsample(x: Tensor, factor: int = 2) -> Tensor:
    _check_image("nearest_upsample", x)
    if factor == 1:
        return x
    n, c, h, w = x.shape
    out = x.data.repeat(factor, axis=2).repeat(factor, axis=3)

    def vjp(g):
        return (g.reshape(n, c, h, factor, w, factor).sum(axis=(3, 5)),)

    return _emit("nearest_upsample", out, (x,), vjp)


def avg_pool(x: Tensor, factor: int = 2) -> Tensor:
    _check_image("avg_pool", x)
    if factor == 1:
        return x
    n, c, h, w = x.shape
    if h % factor or w % factor:
        raise DimensionError(f"avg_pool: height/width {h}×{w} not divisible by {factor}")
    out = x.data.reshape(n, c, h // factor, factor, w // factor, factor).mean(axis=(3, 5))
    area = DTYPE(factor * factor)

    def vjp(g):
        return ((g / area).repeat(factor, axis=2).repeat(factor, axis=3),)

    return _emit("avg_pool", out.astype(DTYPE), (x,), vjp)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul: inner axes of {a.shape} and {b.shape} disagree")
    out = np.matmul(a.data, b.data)

    def vjp(g):
        ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
        gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return _emit("matmul", out, (a, b), vjp)


def gather_rows(x: Tensor, indices: np.ndarray) -> Tensor:
    """Row gather along axis 1: ``out[n, i] = x[n, indices[n, i]]`` for ``x`` of shape [N, L, D]."""
    indices = np.asarray(indices, dtype=np.int64)
    if x.ndim != 3 or indices.ndim != 2 or indices.shape[0] != x.shape[0]:
        raise DimensionError(f"gather_rows: indices {indices.shape} do not address rows of {x.shape}")
    if indices.size and (indices.min() < 0 or indices.max() >= x.shape[1]):
        raise DimensionError(f"gather_rows: index out of range for {x.shape[1]} rows")
    out = np.take_along_axis(x.data, indices[:, :, None], axis=1)

    def vjp(g):
        full = np.zeros(x.shape, dtype=DTYPE)
        for n in range(x.shape[0]):
            np.add.at(full[n], indices[n], g[n])
        return (full,)

    return _emit("gather_rows", out, (x,), vjp)


# ---------------------------------------------------------------------------
# reductions
# ---------------------------------------------------------------------------

def _normalize_axes(axis, ndim: int):
    if axis is None:
        return tuple(range(ndim))
    axes = (axis,) if isinstance(axis, (int, np.integer)) else tuple(axis)
    if any(not -ndim <= a < ndim for a in axes):
        raise DimensionError(f"axis {axis} out of range for {ndim} dimensions")
    return tuple(int(a) % ndim for a in axes)


def _expand_reduced(g: np.ndarray, axes: tuple, keepdims: bool, reduced_shape: tuple) -> np.ndarray:
    g = np.reshape(g, reduced_shape)
    if keepdims:
        return g
    for a in sorted(axes):
        g = np.expand_dims(g, a)
    return g


def reduce_sum(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    axes = _normalize_axes(axis, x.ndim)
    out = x.data.sum(axis=axes, keepdims=keepdims)

    def vjp(g):
        return (np.broadcast_to(_expand_reduced(g, axes, keepdims, out.shape), x.shape).astype(DTYPE),)

    return _emit("reduce_sum", out, (x,), vjp)


def reduce_mean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    axes = _normalize_axes(axis, x.ndim)
    count = DTYPE(int(np.prod([x.shape[a] for a in axes])) if axes else 1)
    out = x.data.mean(axis=axes, keepdims=keepdims, dtype=np.float64).astype(DTYPE)

    def vjp(g):
        return (np.broadcast_to(_expand_reduced(g, axes, keepdims, out.shape) / count, x.shape).astype(DTYPE),)

    return _emit("reduce_mean", out, (x,), vjp)


def reduce_max(x: Tensor, axis: int) -> tuple[Tensor, np.ndarray]:
    """Maximum along one axis plus its argmax; ties resolve to the lowest index.

    The gradient is routed to the argmax element only.
    """
    (axis,) = _normalize_axes(axis, x.ndim)
    indices = np.argmax(x.data, axis=axis)
    values = np.take_along_axis(x.data, np.expand_dims(indices, axis), axis=axis).squeeze(axis)

    def vjp(g):
        full = np.zeros(x.shape, dtype=DTYPE)
        np.put_along_axis(full, np.expand_dims(indices, axis), np.expand_dims(g, axis), axis=axis)
        return (full,)

    return _emit("reduce_max", values, (x,), vjp), indices


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = (e / e.sum(axis=axis, keepdims=True)).astype(DTYPE)

    def vjp(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return _emit("softmax", out, (x,), vjp)


def l2_normalize(x: Tensor, axis: int = -1, eps: float = 1e-12) -> Tensor:
    """Unit-norm rows along ``axis``; rows with norm <= eps map to zero."""
    norm = np.sqrt((x.data.astype(np.float64) ** 2).sum(axis=axis, keepdims=True))
    live = norm > eps
    safe = np.where(live, norm, 1.0)
    out = np.where(live, x.data / safe, 0.0).astype(DTYPE)

    def vjp(g):
        radial = (g * out).sum(axis=axis, keepdims=True)
        return (np.where(live, (g - out * radial) / safe, 0.0).astype(DTYPE),)

    return _emit("l2_normalize", out, (x,), vjp)


# ---------------------------------------------------------------------------
# convolution family
# ---------------------------------------------------------------------------

def output_size(size: int, kernel: int, stride: int, padding: int, dilation: int = 1) -> int:
    return (size + 2 * padding - dilation * (kernel - 1) - 1) // stride + 1


def _im2col(x: np.ndarray, kernel: int, stride: int, padding: int, dilation: int):
    n, c, h, w = x.shape
    ho = output_size(h, kernel, stride, padding, dilation)
    wo = output_size(w, kernel, stride, padding, dilation)
    if ho < 1 or wo < 1:
        raise DimensionError(
            f"window of {kernel}×{kernel} (dilation {dilation}) exceeds padded input {h + 2 * padding}×{w + 2 * padding}"
        )
    padded = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    col = np.empty((n, c, kernel, kernel, ho, wo), dtype=DTYPE)
    for ky in range(kernel):
        y0 = ky * dilation
        y1 = y0 + stride * (ho - 1) + 1
        for kx in range(kernel):
            x0 = kx * dilation
            x1 = x0 + stride * (wo - 1) + 1
            col[:, :, ky, kx] = padded[:, :, y0:y1:stride, x0:x1:stride]
    return col.transpose(0, 4, 5, 1, 2, 3).reshape(n, ho * wo, c * kernel * kernel), (ho, wo)


def _col2im(cols: np.ndarray, shape: tuple, kernel: int, stride: int, padding: int, dilation: int, grid: tuple):
    n, c, h, w = shape
    ho, wo = grid
    col = cols.reshape(n, ho, wo, c, kernel, kernel).transpose(0, 3, 4, 5, 1, 2)
    padded = np.zeros((n, c, h + 2 * padding, w + 2 * padding), dtype=DTYPE)
    for ky in range(kernel):
        y0 = ky * dilation
        y1 = y0 + stride * (ho - 1) + 1
        for kx in range(kernel):
            x0 = kx * dilation
            x1 = x0 + stride * (wo - 1) + 1
            padded[:, :, y0:y1:stride, x0:x1:stride] += col[:, :, ky, kx]
    return padded[:, :, padding:padding + h, padding:padding + w]


def conv2d(x: Tensor, weight: Tensor, bias: Tensor | None = None, stride: int = 1, padding: int = 0,
           dilation: int = 1) -> Tensor:
    _check_image("conv2d", x)
    if weight.ndim != 4 or weight.shape[2] != weight.shape[3]:
        raise DimensionError(f"conv2d: weight must be [C_out, C_in, k, k], got {weight.shape}")
    c_out, c_in, kernel, _ = weight.shape
    if x.shape[1] != c_in:
        raise DimensionError(f"conv2d: input channel axis is {x.shape[1]} but weight C_in axis is {c_in}")
    if bias is not None and bias.shape != (c_out,):
        raise DimensionError(f"conv2d: bias shape {bias.shape} does not match C_out axis {c_out}")
    if stride < 1 or dilation < 1 or padding < 0:
        raise DimensionError(f"conv2d: invalid stride={stride} padding={padding} dilation={dilation}")
    n = x.shape[0]
    cols, grid = _im2col(x.data, kernel, stride, padding, dilation)
    wmat = weight.data.reshape(c_out, -1)
    out = np.matmul(cols, wmat.T)
    if bias is not None:
        out = out + bias.data
    out = out.transpose(0, 2, 1).reshape(n, c_out, grid[0], grid[1])

    def vjp(g):
        g_rows = g.reshape(n, c_out, -1).transpose(0, 2, 1)
        gw = np.tensordot(g_rows, cols, axes=([0, 1], [0, 1])).reshape(weight.shape)
        gx = _col2im(np.matmul(g_rows, wmat), x.shape, kernel, stride, padding, dilation, grid)
        grads = [gx, gw.astype(DTYPE)]
        if bias is not None:
            grads.append(g.sum(axis=(0, 2, 3)))
        return tuple(grads)

    parents = (x, weight) if bias is None else (x, weight, bias)
    return _emit("conv2d", np.ascontiguousarray(out), parents, vjp)


def unfold(x: Tensor, patch: int, stride: int = 1, padding: int = 0) -> Tensor:
    """Sliding patches as rows: output [N, L, C·patch·patch], zero padding at borders."""
    _check_image("unfold", x)
    if patch < 1 or stride < 1:
        raise DimensionError(f"unfold: patch={patch} and stride={stride} must be >= 1")
    cols, grid = _im2col(x.data, patch, stride, padding, 1)
    shape = x.shape

    def vjp(g):
        return (_col2im(g, shape, patch, stride, padding, 1, grid),)

    return _emit("unfold", cols, (x,), vjp)


def fold_counts(out_shape: tuple, patch: int, stride: int, padding: int) -> np.ndarray:
    n, c, h, w = out_shape
    ones = np.ones((1, 1, h, w), dtype=DTYPE)
    cols, grid = _im2col(ones, patch, stride, padding, 1)
    return _col2im(np.ones_like(cols), (1, 1, h, w), patch, stride, padding, 1, grid)


def fold(patches: Tensor, out_shape, patch: int, stride: int = 1, padding: int = 0,
         normalize: bool = True) -> Tensor:
    """Inverse of :func:`unfold`: overlapping contributions are summed, then optionally averaged."""
    out_shape = tuple(out_shape)
    n, c, h, w = out_shape
    grid = (output_size(h, patch, stride, padding), output_size(w, patch, stride, padding))
    expected = (n, grid[0] * grid[1], c * patch * patch)
    if patches.shape != expected:
        raise DimensionError(f"fold: patches {patches.shape} do not match unfold layout {expected} for {out_shape}")
    out = _col2im(patches.data, out_shape, patch, stride, padding, 1, grid)
    if normalize:
        counts = fold_counts(out_shape, patch, stride, padding)
        if np.any(counts == 0):
            raise DimensionError(f"fold: patch={patch} stride={stride} leaves pixels of {h}×{w} uncovered")
        out = out / counts
    else:
        counts = None

    def vjp(g):
        if counts is not None:
            g = g / counts
        cols, _ = _im2col(np.ascontiguousarray(g, dtype=DTYPE), patch, stride, padding, 1)
        return (cols,)

    return _emit("fold", out.astype(DTYPE), (patches,), vjp)


# ---------------------------------------------------------------------------
# differentiation
# ---------------------------------------------------------------------------

def backward(loss: Tensor) -> dict:
    """Gradients of a scalar ``loss`` for every leaf reached on the active tape."""
    if loss.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    tape = _active_tape.get()
    if tape is None or loss._tape is not tape or loss.grad_id is None:
        raise ContractError("loss is not recorded on the active tape")
    grads = {id(loss): np.ones(loss.shape, dtype=DTYPE)}
    for node in reversed(tape.nodes[: loss.grad_id + 1]):
        g = grads.pop(id(node.out), None)
        if g is None:
            continue
        for parent, pg in zip(node.parents, node.vjp(g)):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            pg = np.asarray(pg, dtype=DTYPE)
            grads[key] = grads[key] + pg if key in grads else pg
    return {leaf: Tensor(grads[key]) for key, leaf in tape.leaves.items() if key in grads}


@dataclass
class GradientReport:
    name: str
    max_error: float
    ok: bool


def check_gradients(fn, inputs: Sequence[Tensor], eps: float = 1e-3, rtol: float = 1e-2, seed: int = 0):
    """Compare tape gradients of ``fn(*inputs)`` with central finite differences.

    The output is projected onto a fixed random direction and summed in float64. The error of
    each element is ``|analytic - numeric| / max(|analytic|, |numeric|, 1)``.
    """
    rng = np.random.default_rng(seed)
    for t in inputs:
        t.requires_grad = True
    with Tape():
        out = fn(*inputs)
        direction = np.asarray(rng.standard_normal(out.shape), dtype=DTYPE)
        loss = reduce_sum(mul(out, Tensor(direction)))
        grads = backward(loss)

    def objective() -> float:
        return float(np.sum(fn(*inputs).data.astype(np.float64) * direction))

    reports = []
    for position, t in enumerate(inputs):
        analytic = grads[t].data if t in grads else np.zeros(t.shape, dtype=DTYPE)
        numeric = np.zeros(t.shape, dtype=np.float64)
        flat = t.data.reshape(-1)
        for i in range(flat.size):
            original = flat[i]
            plus = DTYPE(original + eps)
            minus = DTYPE(original - eps)
            flat[i] = plus
            f_plus = objective()
            flat[i] = minus
            f_minus = objective()
            flat[i] = original
            numeric.reshape(-1)[i] = (f_plus - f_minus) / (float(plus) - float(minus))
        error = np.abs(analytic - numeric) / np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1.0)
        worst = float(error.max()) if error.size else 0.0
        reports.append(GradientReport(t.name or f"input{position}", worst, worst < rtol))
    return reports
