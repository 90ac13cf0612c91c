"""Dense tensors with tape-based reverse-mode automatic differentiation.

Every op computes its value eagerly with numpy and records a backward
closure on the output node. Calling ``backward()`` on a scalar walks the
recorded graph once in reverse topological order and accumulates
gradients into every reachable node.

Values are float64 by default (float32 can be selected for speed).
Any op that produces a non-finite value raises ``NonFiniteError``
immediately instead of letting NaNs propagate into training.
"""

from __future__ import annotations

import numpy as np

_DEFAULT_DTYPE = np.float64


class ShapeError(ValueError):
    """Raised when operand shapes violate an op's contract."""


class NonFiniteError(FloatingPointError):
    """Raised when an op produces NaN or Inf."""


def set_default_dtype(name: str) -> None:
    """Select the element type for newly created tensors ("float64" or "float32")."""
    global _DEFAULT_DTYPE
    if name not in ("float64", "float32"):
        raise ValueError(f"unsupported dtype {name!r}; use 'float64' or 'float32'")
    _DEFAULT_DTYPE = np.float64 if name == "float64" else np.float32


def default_dtype():
    return _DEFAULT_DTYPE


def _ensure_finite(arr: np.ndarray, op: str) -> None:
    if not np.all(np.isfinite(arr)):
        raise NonFiniteError(f"{op} produced non-finite values")


class Tensor:
    """N-dimensional array plus an optional gradient tape node."""

    __slots__ = ("data", "grad", "requires_grad", "_backward_fn", "_parents")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data, dtype=_DEFAULT_DTYPE)
        _ensure_finite(arr, "tensor construction")
        self.data = arr
        self.grad = None
        self.requires_grad = requires_grad
        self._backward_fn = None
        self._parents = ()

    # ---- introspection -------------------------------------------------

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() requires a single element, got shape {self.shape}")
        return float(self.data.reshape(()))

    def numpy(self) -> np.ndarray:
        return self.data

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # ---- graph handling ------------------------------------------------

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    def zero_grad(self) -> None:
        self.grad = None

    def _accumulate(self, g: np.ndarray) -> None:
        if not self.requires_grad:
            return
        if self.grad is None:
            self.grad = np.array(g, dtype=self.data.dtype, copy=True)
        else:
            self.grad = self.grad + g

    def backward(self) -> None:
        """Populate ``grad`` on every reachable node, starting from this scalar."""
        if self.data.size != 1:
            raise ShapeError(f"backward() requires a scalar loss, got shape {self.shape}")
        if not self.requires_grad:
            return  # constant graph: all gradients stay zero
        topo = []
        visited = set()
        stack = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if id(parent) not in visited:
                    stack.append((parent, False))
        self._accumulate(np.ones_like(self.data))
        for node in reversed(topo):
            if node._backward_fn is not None and node.grad is not None:
                node._backward_fn(node.grad)

    # ---- operator sugar --------------------------------------------------

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

    # ---- method forms ----------------------------------------------------

    def exp(self):
        return exp(self)

    def tanh(self):
        return tanh(self)

    def sqrt(self):
        return sqrt(self)

    def square(self):
        return square(self)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return tmean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        return reshape(self, *shape)

    def transpose(self, *axes):
        return transpose(self, *axes)


class Parameter(Tensor):
    """Trainable leaf tensor identified by a unique name path."""

    __slots__ = ("name", "trainable")

    def __init__(self, data, name: str, trainable: bool = True):
        super().__init__(data, requires_grad=True)
        self.name = name
        self.trainable = trainable
        self.grad = np.zeros_like(self.data)

    def zero_grad(self) -> None:
        self.grad = np.zeros_like(self.data)

    def __repr__(self) -> str:
        return f"Parameter({self.name!r}, shape={self.shape})"


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make_output(data: np.ndarray, parents, backward_fn, op: str) -> Tensor:
    _ensure_finite(data, op)
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    grad_parents = tuple(p for p in parents if p.requires_grad)
    out.requires_grad = bool(grad_parents)
    out._parents = grad_parents
    out._backward_fn = backward_fn if grad_parents else None
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Reduce a broadcast gradient back down to ``shape``."""
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


# ---- elementwise binary ops ---------------------------------------------


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    data = a.data + b.data

    def backward_fn(g):
        a._accumulate(_unbroadcast(g, a.shape))
        b._accumulate(_unbroadcast(g, b.shape))

    return _make_output(data, (a, b), backward_fn, "add")


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    data = a.data - b.data

    def backward_fn(g):
        a._accumulate(_unbroadcast(g, a.shape))
        b._accumulate(_unbroadcast(-g, b.shape))

    return _make_output(data, (a, b), backward_fn, "sub")


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    data = a.data * b.data

    def backward_fn(g):
        a._accumulate(_unbroadcast(g * b.data, a.shape))
        b._accumulate(_unbroadcast(g * a.data, b.shape))

    return _make_output(data, (a, b), backward_fn, "mul")


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    with np.errstate(divide="ignore", invalid="ignore"):
        data = a.data / b.data

    def backward_fn(g):
        a._accumulate(_unbroadcast(g / b.data, a.shape))
        b._accumulate(_unbroadcast(-g * a.data / (b.data * b.data), b.shape))

    return _make_output(data, (a, b), backward_fn, "div")


def neg(a) -> Tensor:
    a = as_tensor(a)

    def backward_fn(g):
        a._accumulate(-g)

    return _make_output(-a.data, (a,), backward_fn, "neg")


# ---- elementwise unary ops ------------------------------------------------


def exp(a) -> Tensor:
    a = as_tensor(a)
    with np.errstate(over="ignore"):
        data = np.exp(a.data)

    def backward_fn(g):
        a._accumulate(g * data)

    return _make_output(data, (a,), backward_fn, "exp")


def tanh(a) -> Tensor:
    a = as_tensor(a)
    data = np.tanh(a.data)

    def backward_fn(g):
        a._accumulate(g * (1.0 - data * data))

    return _make_output(data, (a,), backward_fn, "tanh")


def sqrt(a) -> Tensor:
    a = as_tensor(a)
    data = np.sqrt(a.data)

    def backward_fn(g):
        a._accumulate(g * 0.5 / data)

    return _make_output(data, (a,), backward_fn, "sqrt")


def square(a) -> Tensor:
    a = as_tensor(a)

    def backward_fn(g):
        a._accumulate(g * 2.0 * a.data)

    return _make_output(a.data * a.data, (a,), backward_fn, "square")


# ---- reductions -----------------------------------------------------------


def _normalize_axes(axis, ndim):
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    axes = tuple(ax % ndim for ax in axis)
    if len(set(axes)) != len(axes):
        raise ShapeError(f"duplicate axes {axis}")
    for ax in axes:
        if not 0 <= ax < ndim:
            raise ShapeError(f"axis {ax} out of range for ndim {ndim}")
    return axes


def tsum(a, axis=None, keepdims=False) -> Tensor:
    a = as_tensor(a)
    axes = _normalize_axes(axis, a.ndim)
    data = a.data.sum(axis=axes, keepdims=keepdims)

    def backward_fn(g):
        if not keepdims:
            g = np.expand_dims(g, axes) if axes else g
        a._accumulate(np.broadcast_to(g, a.shape))

    return _make_output(data, (a,), backward_fn, "sum")


def tmean(a, axis=None, keepdims=False) -> Tensor:
    a = as_tensor(a)
    axes = _normalize_axes(axis, a.ndim)
    count = 1
    for ax in axes:
        count *= a.shape[ax]
    if count == 0:
        raise ShapeError("mean over empty axes")
    data = a.data.mean(axis=axes, keepdims=keepdims)

    def backward_fn(g):
        if not keepdims:
            g = np.expand_dims(g, axes) if axes else g
        a._accumulate(np.broadcast_to(g, a.shape) / count)

    return _make_output(data, (a,), backward_fn, "mean")


# ---- shape ops --------------------------------------------------------------


def reshape(a, *shape) -> Tensor:
    a = as_tensor(a)
    if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
        shape = tuple(shape[0])
    try:
        data = a.data.reshape(shape)
    except ValueError as err:
        raise ShapeError(f"cannot reshape {a.shape} to {shape}: {err}") from None

    def backward_fn(g):
        a._accumulate(g.reshape(a.shape))

    return _make_output(data, (a,), backward_fn, "reshape")


def transpose(a, *axes) -> Tensor:
    a = as_tensor(a)
    if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
        axes = tuple(axes[0])
    if not axes:
        axes = tuple(range(a.ndim))[::-1]
    if sorted(ax % a.ndim for ax in axes) != list(range(a.ndim)):
        raise ShapeError(f"invalid permutation {axes} for ndim {a.ndim}")
    axes = tuple(ax % a.ndim for ax in axes)
    data = np.transpose(a.data, axes)
    inverse = tuple(np.argsort(axes))

    def backward_fn(g):
        a._accumulate(np.transpose(g, inverse))

    return _make_output(data, (a,), backward_fn, "transpose")


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    if not tensors:
        raise ShapeError("concat of no tensors")
    ndim = tensors[0].ndim
    ax = axis % ndim
    data = np.concatenate([t.data for t in tensors], axis=ax)
    sizes = [t.shape[ax] for t in tensors]
    offsets = np.cumsum(sizes)[:-1]

    def backward_fn(g):
        pieces = np.split(g, offsets, axis=ax)
        for t, piece in zip(tensors, pieces):
            t._accumulate(piece)

    return _make_output(data, tuple(tensors), backward_fn, "concat")


def strided_slice(a, axis: int, start: int = 0, step: int = 1) -> Tensor:
    """Take elements start, start+step, ... along one axis."""
    a = as_tensor(a)
    ax = axis % a.ndim
    dim = a.shape[ax]
    if step <= 0:
        raise ShapeError(f"strided_slice step must be positive, got {step}")
    if not 0 <= start < dim:
        raise ShapeError(f"strided_slice start {start} out of range for axis size {dim}")
    index = tuple(slice(None) if i != ax else slice(start, None, step) for i in range(a.ndim))
    data = np.ascontiguousarray(a.data[index])

    def backward_fn(g):
        full = np.zeros_like(a.data)
        full[index] = g
        a._accumulate(full)

    return _make_output(data, (a,), backward_fn, "strided_slice")


# ---- linear algebra -------------------------------------------------------


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul requires 2-D or higher operands, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul inner dimensions differ: {a.shape} vs {b.shape}")
    try:
        data = np.matmul(a.data, b.data)
    except ValueError as err:
        raise ShapeError(f"matmul batch dimensions incompatible: {a.shape} vs {b.shape}: {err}") from None

    def backward_fn(g):
        ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
        gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
        a._accumulate(_unbroadcast(ga, a.shape))
        b._accumulate(_unbroadcast(gb, b.shape))

    return _make_output(data, (a, b), backward_fn, "matmul")


def softmax(a, axis: int = -1) -> Tensor:
    """Numerically stable softmax along ``axis`` (max subtraction before exp)."""
    a = as_tensor(a)
    ax = axis % a.ndim
    shifted = a.data - a.data.max(axis=ax, keepdims=True)
    e = np.exp(shifted)
    data = e / e.sum(axis=ax, keepdims=True)

    def backward_fn(g):
        inner = (g * data).sum(axis=ax, keepdims=True)
        a._accumulate(data * (g - inner))

    return _make_output(data, (a,), backward_fn, "softmax")


def conv1d_same(x, w, b) -> Tensor:
    """Single-kernel convolution over the last axis with same-length zero padding.

    ``w`` has shape [k]; ``b`` has shape [1]. The kernel is shared across
    all leading axes, so the op is shape preserving.
    """
    x, w, b = as_tensor(x), as_tensor(w), as_tensor(b)
    if w.ndim != 1 or w.shape[0] < 1:
        raise ShapeError(f"conv1d kernel must be 1-D and non-empty, got shape {w.shape}")
    if b.shape != (1,):
        raise ShapeError(f"conv1d bias must have shape (1,), got {b.shape}")
    k = w.shape[0]
    length = x.shape[-1]
    left = (k - 1) // 2
    right = k - 1 - left
    pad = [(0, 0)] * (x.ndim - 1) + [(left, right)]
    xp = np.pad(x.data, pad)
    windows = np.stack([xp[..., j:j + length] for j in range(k)], axis=-1)  # [..., length, k]
    data = windows @ w.data + b.data

    def backward_fn(g):
        gw = np.tensordot(g.reshape(-1), windows.reshape(-1, k), axes=1)
        gb = np.array([g.sum()])
        gxp = np.zeros_like(xp)
        for j in range(k):
            gxp[..., j:j + length] += w.data[j] * g
        gx = gxp[..., left:left + length]
        x._accumulate(gx)
        w._accumulate(gw)
        b._accumulate(gb)

    return _make_output(data, (x, w, b), backward_fn, "conv1d")
