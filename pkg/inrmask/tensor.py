"""
Dense tensors with tape-based reverse-mode differentiation.

Every differentiable operation is an ``Op`` subclass registered in ``OpRegistry``.
``Op.apply`` runs the forward kernel on the raw numpy arrays, wraps the result in a
``Tensor`` and, when a ``Tape`` is active and some input requires a gradient,
appends an entry to that tape. ``Tape.backward`` walks the entries in exact
reverse recording order and accumulates gradients into leaf tensors.
"""
from __future__ import annotations

import logging
import threading
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, Type, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import (
    DivisionByZeroError,
    EmptyTensorError,
    NonFiniteError,
    ShapeError,
    TapeError,
)

logger = logging.getLogger(__name__)

DEFAULT_DTYPE = np.float32
ArrayLike = Union[np.ndarray, float, int, Sequence[float], Sequence[Sequence[float]]]
Scalar = Union[float, int]

_FLOAT_TYPES = (np.float32, np.float64)


class Tensor:
    """A float array plus the bookkeeping needed to differentiate through it."""

    def __init__(self, data: ArrayLike, requires_grad: bool = False, dtype: Any = None, name: Optional[str] = None):
        if isinstance(data, Tensor):
            data = data.data
        array = np.asarray(data, dtype=dtype)
        if array.dtype.type not in _FLOAT_TYPES:
            array = array.astype(DEFAULT_DTYPE)
        self.data: np.ndarray = array
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self.name = name
        self._entry: Optional[TapeEntry] = None

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return int(self.data.size)

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    @property
    def is_leaf(self) -> bool:
        return self._entry is None

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy(), requires_grad=False)

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{label}, requires_grad={self.requires_grad})"

    def __len__(self) -> int:
        return self.shape[0]

    def __add__(self, other: Union["Tensor", Scalar]) -> "Tensor":
        return elementwise("add", self, other)

    def __radd__(self, other: Scalar) -> "Tensor":
        return elementwise("add", self, other)

    def __sub__(self, other: Union["Tensor", Scalar]) -> "Tensor":
        return elementwise("sub", self, other)

    def __rsub__(self, other: Scalar) -> "Tensor":
        return elementwise("add", elementwise("neg", self), other)

    def __mul__(self, other: Union["Tensor", Scalar]) -> "Tensor":
        return elementwise("mul", self, other)

    def __rmul__(self, other: Scalar) -> "Tensor":
        return elementwise("mul", self, other)

    def __truediv__(self, other: Union["Tensor", Scalar]) -> "Tensor":
        return elementwise("div", self, other)

    def __neg__(self) -> "Tensor":
        return elementwise("neg", self)

    def __matmul__(self, other: "Tensor") -> "Tensor":
        return matmul(self, other)


class TapeEntry:
    __slots__ = ("op", "inputs", "output")

    def __init__(self, op: "Op", inputs: Tuple[Tensor, ...], output: Tensor):
        self.op = op
        self.inputs = inputs
        self.output = output


class Tape:
    """
    Ordered record of the operations applied to gradient-carrying tensors.

    Tapes nest as context managers; only the innermost one records. The stack is
    thread-local so independent optimizations can run on separate workers.
    """

    _local = threading.local()

    def __init__(self):
        self.entries: List[TapeEntry] = []
        self._consumed = False

    @classmethod
    def _stack(cls) -> List["Tape"]:
        stack = getattr(cls._local, "stack", None)
        if stack is None:
            stack = []
            cls._local.stack = stack
        return stack

    @classmethod
    def current(cls) -> Optional["Tape"]:
        stack = cls._stack()
        return stack[-1] if stack else None

    def __enter__(self) -> "Tape":
        self._stack().append(self)
        return self

    def __exit__(self, *exc: Any) -> None:
        stack = self._stack()
        if stack and stack[-1] is self:
            stack.pop()

    def __len__(self) -> int:
        return len(self.entries)

    def record(self, op: "Op", inputs: Tuple[Tensor, ...], output: Tensor) -> None:
        if self._consumed:
            raise TapeError("Cannot record on a tape that has already been differentiated")
        entry = TapeEntry(op, inputs, output)
        output._entry = entry
        self.entries.append(entry)

    def backward(self, output: Tensor, upstream: Optional[ArrayLike] = None) -> None:
        """Accumulate d(output)/d(leaf) into ``leaf.grad`` for every recorded leaf."""
        if self._consumed:
            raise TapeError("backward() was already called on this tape; record a new one")
        if upstream is None:
            if output.size != 1:
                raise ShapeError(f"backward() needs an explicit upstream gradient for shape {output.shape}")
            seed = np.ones(output.shape, dtype=output.dtype)
        else:
            seed = np.asarray(upstream, dtype=output.dtype)
            if seed.shape != output.shape:
                raise ShapeError(f"Upstream gradient shape {seed.shape} does not match output {output.shape}")

        grads: Dict[int, np.ndarray] = {id(output): seed}
        leaves: Dict[int, Tensor] = {}
        if output.is_leaf and output.requires_grad:
            leaves[id(output)] = output

        for entry in reversed(self.entries):
            grad = grads.pop(id(entry.output), None)
            if grad is None:
                continue
            input_grads = entry.op.backward(grad)
            for tensor, input_grad in zip(entry.inputs, input_grads):
                if input_grad is None or not tensor.requires_grad:
                    continue
                key = id(tensor)
                if key in grads:
                    grads[key] = grads[key] + input_grad
                else:
                    grads[key] = input_grad
                if tensor.is_leaf:
                    leaves[key] = tensor

        for key, leaf in leaves.items():
            grad = grads.get(key)
            if grad is None:
                continue
            grad = np.asarray(grad, dtype=leaf.dtype).reshape(leaf.shape)
            leaf.grad = grad.copy() if leaf.grad is None else leaf.grad + grad

        self._consumed = True


class Op:
    """Base class for differentiable operations."""

    name: str = "op"

    def __init__(self, **params: Any):
        self.params = params
        self.saved: Dict[str, Any] = {}

    def forward(self, *arrays: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def backward(self, grad: np.ndarray) -> Tuple[Optional[np.ndarray], ...]:
        raise NotImplementedError

    @classmethod
    def apply(cls, *inputs: Tensor, **params: Any) -> Tensor:
        return cls.run(*inputs, **params)[1]

    @classmethod
    def run(cls, *inputs: Tensor, **params: Any) -> Tuple["Op", Tensor]:
        """Like ``apply`` but also hands back the op instance and its saved context."""
        for tensor in inputs:
            if not np.all(np.isfinite(tensor.data)):
                raise NonFiniteError(f"{cls.name} received non-finite input")
        op = cls(**params)
        out_data = op.forward(*(tensor.data for tensor in inputs))
        if not np.all(np.isfinite(out_data)):
            raise NonFiniteError(f"{cls.name} produced non-finite values")
        requires_grad = any(tensor.requires_grad for tensor in inputs)
        out = Tensor(out_data, requires_grad=requires_grad)
        if requires_grad:
            tape = Tape.current()
            if tape is not None:
                tape.record(op, inputs, out)
        return op, out


class OpRegistry:
    """Registry of operations by name, so element-wise kinds can be dispatched."""

    _registry: Dict[str, Type[Op]] = {}

    @classmethod
    def register(cls, op_cls: Type[Op]) -> Type[Op]:
        if not issubclass(op_cls, Op):
            raise TypeError("op_cls must subclass Op")
        cls._registry[op_cls.name] = op_cls
        return op_cls

    @classmethod
    def get(cls, name: str) -> Type[Op]:
        try:
            return cls._registry[name]
        except KeyError:
            raise KeyError(f"Unknown operation '{name}'") from None

    @classmethod
    def names(cls) -> List[str]:
        return sorted(cls._registry)


def as_tensor(value: Union[Tensor, ArrayLike], dtype: Any = None) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(value, dtype=dtype)


# ---------------------------------------------------------------------------
# Element-wise operations
# ---------------------------------------------------------------------------

class _Binary(Op):
    """Binary op on two same-shape arrays, or on one array and a ``scalar`` param."""

    def forward(self, a: np.ndarray, b: Optional[np.ndarray] = None) -> np.ndarray:
        if b is None:
            b = np.asarray(self.params["scalar"], dtype=a.dtype)
        elif a.shape != b.shape:
            raise ShapeError(f"{self.name}: shape mismatch {a.shape} vs {b.shape}")
        self.saved["a"], self.saved["b"] = a, b
        self.saved["binary"] = "scalar" not in self.params
        return self.compute(a, b)

    def compute(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def partials(self, grad: np.ndarray, a: np.ndarray, b: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError

    def backward(self, grad: np.ndarray) -> Tuple[Optional[np.ndarray], ...]:
        da, db = self.partials(grad, self.saved["a"], self.saved["b"])
        if self.saved["binary"]:
            return da, db
        return (da,)


@OpRegistry.register
class Add(_Binary):
    name = "add"

    def compute(self, a, b):
        return a + b

    def partials(self, grad, a, b):
        return grad, grad


@OpRegistry.register
class Sub(_Binary):
    name = "sub"

    def compute(self, a, b):
        return a - b

    def partials(self, grad, a, b):
        return grad, -grad


@OpRegistry.register
class Mul(_Binary):
    name = "mul"

    def compute(self, a, b):
        return a * b

    def partials(self, grad, a, b):
        return grad * b, grad * a


@OpRegistry.register
class Div(_Binary):
    name = "div"

    def compute(self, a, b):
        if np.any(b == 0):
            raise DivisionByZeroError("div: zero element in denominator")
        return a / b

    def partials(self, grad, a, b):
        return grad / b, -grad * a / (b * b)


class _Unary(Op):
    def forward(self, a: np.ndarray) -> np.ndarray:
        self.saved["a"] = a
        out = self.compute(a)
        self.saved["out"] = out
        return out

    def compute(self, a: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def derivative(self, a: np.ndarray, out: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def backward(self, grad: np.ndarray) -> Tuple[Optional[np.ndarray], ...]:
        return (grad * self.derivative(self.saved["a"], self.saved["out"]),)


@OpRegistry.register
class Neg(_Unary):
    name = "neg"

    def compute(self, a):
        return -a

    def derivative(self, a, out):
        return -np.ones_like(a)


@OpRegistry.register
class Square(_Unary):
    name = "square"

    def compute(self, a):
        return a * a

    def derivative(self, a, out):
        return 2 * a


@OpRegistry.register
class Relu(_Unary):
    name = "relu"

    def compute(self, a):
        return np.maximum(a, 0)

    def derivative(self, a, out):
        return (a > 0).astype(a.dtype)


@OpRegistry.register
class Sigmoid(_Unary):
    name = "sigmoid"

    def compute(self, a):
        # tanh form: overflow-free and exactly 0.5 at zero; clipped to stay strictly inside (0, 1)
        one = np.ones((), dtype=a.dtype)
        out = 0.5 * (1 + np.tanh(0.5 * a))
        return np.clip(out, np.nextafter(0 * one, one), np.nextafter(one, 0 * one))

    def derivative(self, a, out):
        return out * (1 - out)


@OpRegistry.register
class Sin(_Unary):
    name = "sin"

    def compute(self, a):
        return np.sin(a)

    def derivative(self, a, out):
        return np.cos(a)


@OpRegistry.register
class Cos(_Unary):
    name = "cos"

    def compute(self, a):
        return np.cos(a)

    def derivative(self, a, out):
        return -np.sin(a)


@OpRegistry.register
class Exp(_Unary):
    name = "exp"

    def compute(self, a):
        return np.exp(a)

    def derivative(self, a, out):
        return out


@OpRegistry.register
class Log(_Unary):
    name = "log"

    def compute(self, a):
        if np.any(a <= 0):
            raise NonFiniteError("log: non-positive input")
        return np.log(a)

    def derivative(self, a, out):
        return 1 / a


@OpRegistry.register
class Clamp(_Unary):
    name = "clamp"

    def compute(self, a):
        return np.clip(a, self.params["low"], self.params["high"])

    def derivative(self, a, out):
        # zero at the bounds themselves
        inside = (a > self.params["low"]) & (a < self.params["high"])
        return inside.astype(a.dtype)


_UNARY_KINDS = {"neg", "square", "relu", "sigmoid", "sin", "cos", "exp", "log"}
_BINARY_KINDS = {"add", "sub", "mul", "div"}


def elementwise(
    op_kind: str,
    a: Tensor,
    b: Union[Tensor, Scalar, None] = None,
    *,
    low: Optional[float] = None,
    high: Optional[float] = None,
) -> Tensor:
    """Apply a point-wise operation; ``b`` is a same-shape tensor or a scalar."""
    op_cls = OpRegistry.get(op_kind)
    if op_kind in _BINARY_KINDS:
        if b is None:
            raise ShapeError(f"{op_kind} needs a second operand")
        if isinstance(b, Tensor):
            return op_cls.apply(a, b)
        return op_cls.apply(a, scalar=float(b))
    if op_kind == "clamp":
        return op_cls.apply(a, low=-np.inf if low is None else low, high=np.inf if high is None else high)
    if op_kind in _UNARY_KINDS:
        return op_cls.apply(a)
    raise KeyError(f"'{op_kind}' is not an element-wise operation")


def relu(a: Tensor) -> Tensor:
    return elementwise("relu", a)


def sigmoid(a: Tensor) -> Tensor:
    return elementwise("sigmoid", a)


def square(a: Tensor) -> Tensor:
    return elementwise("square", a)


def clamp(a: Tensor, low: float, high: float) -> Tensor:
    return elementwise("clamp", a, low=low, high=high)


def log(a: Tensor) -> Tensor:
    return elementwise("log", a)


# ---------------------------------------------------------------------------
# Linear algebra and convolution
# ---------------------------------------------------------------------------

@OpRegistry.register
class MatMul(Op):
    name = "matmul"

    def forward(self, a, b):
        if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
            raise ShapeError(f"matmul: cannot multiply {a.shape} by {b.shape}")
        self.saved["a"], self.saved["b"] = a, b
        return a @ b

    def backward(self, grad):
        a, b = self.saved["a"], self.saved["b"]
        return grad @ b.T, a.T @ grad


@OpRegistry.register
class Affine(Op):
    """x·W + b with the bias row added to every row of the product."""

    name = "affine"

    def forward(self, x, w, b):
        if x.ndim != 2 or w.ndim != 2 or x.shape[1] != w.shape[0]:
            raise ShapeError(f"affine: cannot multiply {x.shape} by {w.shape}")
        if b.shape != (w.shape[1],):
            raise ShapeError(f"affine: bias shape {b.shape} does not match {w.shape[1]} outputs")
        self.saved["x"], self.saved["w"] = x, w
        return x @ w + b

    def backward(self, grad):
        x, w = self.saved["x"], self.saved["w"]
        return grad @ w.T, x.T @ grad, grad.sum(axis=0)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    return MatMul.apply(a, b)


def affine(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    return Affine.apply(x, w, b)


@OpRegistry.register
class Conv2d(Op):
    """Cross-correlation of a c×h×w input with an o×c×kh×kw kernel."""

    name = "conv2d"

    def forward(self, x, kernel):
        if x.ndim != 3 or kernel.ndim != 4 or kernel.shape[1] != x.shape[0]:
            raise ShapeError(f"conv2d: incompatible input {x.shape} and kernel {kernel.shape}")
        kh, kw = kernel.shape[2:]
        padding = self.params.get("padding", "valid")
        if padding == "same":
            if kh % 2 == 0 or kw % 2 == 0:
                raise ShapeError("conv2d: 'same' padding needs odd kernel extents")
            ph, pw = kh // 2, kw // 2
        elif padding == "valid":
            ph = pw = 0
        else:
            raise ValueError(f"conv2d: unknown padding '{padding}'")
        padded = np.pad(x, ((0, 0), (ph, ph), (pw, pw))) if ph or pw else x
        if kh > padded.shape[1] or kw > padded.shape[2]:
            raise ShapeError(f"conv2d: kernel {kh}x{kw} larger than padded input {padded.shape[1:]}")
        patches = sliding_window_view(padded, (kh, kw), axis=(1, 2))
        self.saved.update(patches=patches, kernel=kernel, pad=(ph, pw), in_shape=x.shape)
        return np.einsum("chwij,ocij->ohw", patches, kernel, optimize=True)

    def backward(self, grad):
        patches, kernel = self.saved["patches"], self.saved["kernel"]
        (ph, pw), (_, h, w) = self.saved["pad"], self.saved["in_shape"]
        kh, kw = kernel.shape[2:]
        d_kernel = np.einsum("chwij,ohw->ocij", patches, grad, optimize=True)
        padded_grad = np.pad(grad, ((0, 0), (kh - 1, kh - 1), (kw - 1, kw - 1)))
        windows = sliding_window_view(padded_grad, (kh, kw), axis=(1, 2))
        d_padded = np.einsum("ohwij,ocij->chw", windows, kernel[:, :, ::-1, ::-1], optimize=True)
        return d_padded[:, ph:ph + h, pw:pw + w], d_kernel


def conv2d(x: Tensor, kernel: Tensor, padding: str = "valid") -> Tensor:
    return Conv2d.apply(x, kernel, padding=padding)


def _fold_reflect(grad: np.ndarray, pad: int, axis: int) -> np.ndarray:
    """Adjoint of numpy 'reflect' padding along one axis."""
    g = np.moveaxis(grad, axis, 0)
    n = g.shape[0] - 2 * pad
    out = g[pad:pad + n].copy()
    np.add.at(out, pad - np.arange(pad), g[:pad])
    np.add.at(out, n - 2 - np.arange(pad), g[pad + n:])
    return np.moveaxis(out, 0, axis)


@OpRegistry.register
class PadReflect(Op):
    """Reflect-pad the last two axes by ``pad`` pixels."""

    name = "pad_reflect"

    def forward(self, a):
        pad = self.params["pad"]
        if a.ndim < 2:
            raise ShapeError("pad_reflect needs at least two axes")
        if pad >= a.shape[-1] or pad >= a.shape[-2]:
            raise ShapeError(f"pad_reflect: padding {pad} too large for extent {a.shape[-2:]}")
        widths = [(0, 0)] * (a.ndim - 2) + [(pad, pad), (pad, pad)]
        return np.pad(a, widths, mode="reflect")

    def backward(self, grad):
        pad = self.params["pad"]
        if pad == 0:
            return (grad,)
        out = _fold_reflect(grad, pad, grad.ndim - 1)
        return (_fold_reflect(out, pad, grad.ndim - 2),)


def pad_reflect(a: Tensor, pad: int) -> Tensor:
    return PadReflect.apply(a, pad=int(pad))


# ---------------------------------------------------------------------------
# Reductions and normalizations
# ---------------------------------------------------------------------------

@OpRegistry.register
class Reduce(Op):
    name = "reduce"

    def forward(self, a):
        if a.size == 0:
            raise EmptyTensorError("reduce over an empty tensor")
        kind = self.params["kind"]
        self.saved["shape"], self.saved["dtype"] = a.shape, a.dtype
        total = np.sum(a, dtype=np.float64)
        if kind == "mean":
            total = total / a.size
        elif kind != "sum":
            raise KeyError(f"Unknown reduction '{kind}'")
        return np.asarray(total, dtype=a.dtype)

    def backward(self, grad):
        shape = self.saved["shape"]
        scale = 1.0 / int(np.prod(shape)) if self.params["kind"] == "mean" else 1.0
        return (np.full(shape, float(grad) * scale, dtype=self.saved["dtype"]),)


def reduce(op_kind: str, a: Tensor) -> Tensor:
    return Reduce.apply(a, kind=op_kind)


def tsum(a: Tensor) -> Tensor:
    return reduce("sum", a)


def mean(a: Tensor) -> Tensor:
    return reduce("mean", a)


@OpRegistry.register
class GlobalAvgPool(Op):
    """c×h×w -> c, averaging each channel."""

    name = "global_avg_pool"

    def forward(self, a):
        if a.ndim != 3 or a.shape[1] * a.shape[2] == 0:
            raise ShapeError(f"global_avg_pool needs a non-empty c×h×w tensor, got {a.shape}")
        self.saved["shape"] = a.shape
        return a.mean(axis=(1, 2), dtype=np.float64).astype(a.dtype)

    def backward(self, grad):
        c, h, w = self.saved["shape"]
        return (np.broadcast_to((grad / (h * w))[:, None, None], (c, h, w)).copy(),)


def global_avg_pool(a: Tensor) -> Tensor:
    return GlobalAvgPool.apply(a)


@OpRegistry.register
class Softmax(Op):
    name = "softmax"

    def forward(self, logits):
        if logits.ndim != 1:
            raise ShapeError(f"softmax expects a vector, got shape {logits.shape}")
        shifted = np.exp(logits - logits.max())
        out = shifted / np.sum(shifted, dtype=np.float64)
        out = out.astype(logits.dtype)
        self.saved["out"] = out
        return out

    def backward(self, grad):
        s = self.saved["out"]
        return (s * (grad - np.dot(grad, s)),)


def softmax(logits: Tensor) -> Tensor:
    return Softmax.apply(logits)


@OpRegistry.register
class Sort(Op):
    name = "vecsort"

    def forward(self, a):
        if a.ndim != 1:
            raise ShapeError(f"vecsort expects a vector, got shape {a.shape}")
        keys = a if self.params["ascending"] else -a
        perm = np.argsort(keys, kind="stable")
        self.saved["perm"] = perm
        return a[perm]

    def backward(self, grad):
        out = np.empty_like(grad)
        out[self.saved["perm"]] = grad
        return (out,)


def vecsort(a: Tensor, ascending: bool = True) -> Tuple[Tensor, np.ndarray]:
    """Stable sort returning the sorted tensor and ``perm`` with ``sorted == a[perm]``."""
    op, out = Sort.run(a, ascending=ascending)
    return out, op.saved["perm"].copy()


# ---------------------------------------------------------------------------
# Structural operations
# ---------------------------------------------------------------------------

@OpRegistry.register
class Reshape(Op):
    name = "reshape"

    def forward(self, a):
        self.saved["shape"] = a.shape
        try:
            return a.reshape(self.params["shape"])
        except ValueError as e:
            raise ShapeError(f"reshape: {e}") from None

    def backward(self, grad):
        return (grad.reshape(self.saved["shape"]),)


def reshape(a: Tensor, shape: Sequence[int]) -> Tensor:
    return Reshape.apply(a, shape=tuple(shape))


@OpRegistry.register
class Concat(Op):
    name = "concat"

    def forward(self, *arrays):
        axis = self.params["axis"]
        try:
            out = np.concatenate(arrays, axis=axis)
        except ValueError as e:
            raise ShapeError(f"concat: {e}") from None
        self.saved["splits"] = np.cumsum([arr.shape[axis] for arr in arrays])[:-1]
        return out

    def backward(self, grad):
        return tuple(np.split(grad, self.saved["splits"], axis=self.params["axis"]))


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    return Concat.apply(*tensors, axis=axis)


@OpRegistry.register
class ExpandChannels(Op):
    """Repeat an h×w map across ``channels`` leading channels."""

    name = "expand_channels"

    def forward(self, a):
        if a.ndim != 2:
            raise ShapeError(f"expand_channels expects an h×w map, got {a.shape}")
        return np.broadcast_to(a, (self.params["channels"],) + a.shape).copy()

    def backward(self, grad):
        return (grad.sum(axis=0),)


def expand_channels(a: Tensor, channels: int) -> Tensor:
    return ExpandChannels.apply(a, channels=int(channels))


@OpRegistry.register
class UpsampleNearest(Op):
    name = "upsample_nearest"

    def forward(self, a):
        f = self.params["factor"]
        if a.ndim != 2:
            raise ShapeError(f"upsample_nearest expects an h×w map, got {a.shape}")
        return np.repeat(np.repeat(a, f, axis=0), f, axis=1)

    def backward(self, grad):
        f = self.params["factor"]
        h, w = grad.shape[0] // f, grad.shape[1] // f
        return (grad.reshape(h, f, w, f).sum(axis=(1, 3)),)


def upsample_nearest(a: Tensor, factor: int) -> Tensor:
    return UpsampleNearest.apply(a, factor=int(factor))


@OpRegistry.register
class Crop(Op):
    """Keep the top-left ``height``×``width`` window of an h×w map."""

    name = "crop"

    def forward(self, a):
        h, w = self.params["height"], self.params["width"]
        if a.ndim != 2 or h > a.shape[0] or w > a.shape[1]:
            raise ShapeError(f"crop: cannot take {h}x{w} from {a.shape}")
        self.saved["shape"] = a.shape
        return a[:h, :w].copy()

    def backward(self, grad):
        out = np.zeros(self.saved["shape"], dtype=grad.dtype)
        out[:grad.shape[0], :grad.shape[1]] = grad
        return (out,)


def crop(a: Tensor, height: int, width: int) -> Tensor:
    return Crop.apply(a, height=int(height), width=int(width))


@OpRegistry.register
class Take(Op):
    name = "take"

    def forward(self, a):
        index = self.params["index"]
        if a.ndim != 1 or not 0 <= index < a.shape[0]:
            raise ShapeError(f"take: index {index} out of range for shape {a.shape}")
        self.saved["shape"] = a.shape
        return np.asarray(a[index])

    def backward(self, grad):
        out = np.zeros(self.saved["shape"], dtype=grad.dtype)
        out[self.params["index"]] = grad
        return (out,)


def take(a: Tensor, index: int) -> Tensor:
    return Take.apply(a, index=int(index))


# ---------------------------------------------------------------------------
# Gradient checking
# ---------------------------------------------------------------------------

def numerical_gradient(fn: Callable[..., Tensor], arrays: Sequence[np.ndarray], index: int, eps: float = 1e-3) -> np.ndarray:
    """Central finite differences of ``sum(fn(*arrays))`` with respect to ``arrays[index]``."""
    base = [np.array(arr, dtype=np.float64) for arr in arrays]
    target = base[index]
    grad = np.zeros_like(target)
    flat = target.reshape(-1)
    grad_flat = grad.reshape(-1)
    for i in range(flat.size):
        original = flat[i]
        flat[i] = original + eps
        plus = np.sum(fn(*(Tensor(arr) for arr in base)).data, dtype=np.float64)
        flat[i] = original - eps
        minus = np.sum(fn(*(Tensor(arr) for arr in base)).data, dtype=np.float64)
        flat[i] = original
        grad_flat[i] = (plus - minus) / (2 * eps)
    return grad


def gradcheck(
    fn: Callable[..., Tensor],
    arrays: Sequence[np.ndarray],
    eps: float = 1e-3,
    atol: float = 1e-3,
    rtol: float = 1e-4,
) -> Tuple[bool, float]:
    """
    Compare tape gradients of ``sum(fn(*inputs))`` with central differences.

    An element passes when its absolute error is within ``atol`` or its relative
    error within ``rtol``. Returns (passed, worst absolute error).
    """
    inputs = [Tensor(np.array(arr, dtype=np.float64), requires_grad=True) for arr in arrays]
    with Tape() as tape:
        out = fn(*inputs)
        total = tsum(out) if out.size != 1 else out
    tape.backward(total)

    passed, worst = True, 0.0
    for i, tensor in enumerate(inputs):
        analytic = tensor.grad if tensor.grad is not None else np.zeros_like(tensor.data)
        numeric = numerical_gradient(fn, arrays, i, eps)
        abs_err = np.abs(analytic - numeric)
        rel_err = abs_err / np.maximum(np.abs(numeric), 1e-12)
        ok = (abs_err <= atol) | (rel_err <= rtol)
        worst = max(worst, float(abs_err.max(initial=0.0)))
        if not np.all(ok):
            logger.debug("gradcheck failed on input %d: max abs error %.3g", i, abs_err.max())
            passed = False
    return passed, worst
