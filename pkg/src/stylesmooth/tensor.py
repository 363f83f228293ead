"""Dense float64 tensors with reverse-mode automatic differentiation.

Every operation that touches a tensor requiring gradients records a node
holding its parents and a closure mapping the output adjoint to parent
adjoints. ``Tensor.backward`` sorts the recorded nodes topologically, sweeps
them in reverse, deposits gradients on the leaves and then releases the
graph, so a second call without a fresh forward pass is an error.
"""

from __future__ import annotations

import contextlib
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import ContractError, DimensionError, DomainError

EPS = 1e-5

_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    """Disable graph recording inside the block."""
    global _grad_enabled
    previous = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = previous


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "name", "_parents", "_backward", "_released")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        if isinstance(data, Tensor):
            data = data.data
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self.name = name
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable | None = None
        self._released = False

    # -- basic protocol -------------------------------------------------

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
        return self.data.copy()

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        label = f", name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad}{label})"

    def __len__(self) -> int:
        return len(self.data)

    # -- arithmetic sugar -----------------------------------------------

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __pow__(self, exponent: float):
        return power(self, exponent)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return getitem(self, index)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return tmean(self, axis, keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def relu(self):
        return relu(self)

    def exp(self):
        return exp(self)

    def log(self):
        return log(self)

    # -- reverse sweep --------------------------------------------------

    def backward(self) -> None:
        """Propagate d(self)/d(leaf) into ``leaf.grad`` for every leaf."""
        if self._released:
            raise ContractError("graph already consumed by a previous backward(); re-run the forward pass")
        if self.data.size != 1:
            raise ContractError(f"backward() needs a scalar loss, got shape {self.shape}")
        if not self.requires_grad:
            raise ContractError("loss does not depend on any tensor that requires gradients")

        order = _topological_order(self)
        adjoints = {id(self): np.ones_like(self.data)}
        for node in reversed(order):
            g = adjoints.pop(id(node), None)
            if g is None:
                continue
            if not node._parents:
                node.grad = g.copy() if node.grad is None else node.grad + g
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                adjoints[key] = pg if key not in adjoints else adjoints[key] + pg
        for node in order:
            if node._parents:
                node._parents = ()
                node._backward = None
                node._released = True


def _topological_order(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if parent.requires_grad and id(parent) not in seen:
                stack.append((parent, False))
    return order


def as_tensor(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def _node(data: np.ndarray, parents: Sequence[Tensor], backward: Callable) -> Tensor:
    out = Tensor(data)
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def _broadcast_shape(a: Tensor, b: Tensor, opname: str) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise DimensionError(f"{opname}: shapes {a.shape} and {b.shape} do not broadcast") from None


# -- elementwise ---------------------------------------------------------


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "add")
    return _node(a.data + b.data, (a, b), lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "sub")
    return _node(a.data - b.data, (a, b), lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "mul")
    return _node(
        a.data * b.data,
        (a, b),
        lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
    )


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "div")
    if np.any(b.data == 0):
        raise DomainError("div: division by zero")
    out = a.data / b.data
    return _node(
        out,
        (a, b),
        lambda g: (_unbroadcast(g / b.data, a.shape), _unbroadcast(-g * out / b.data, b.shape)),
    )


def neg(a) -> Tensor:
    a = as_tensor(a)
    return _node(-a.data, (a,), lambda g: (-g,))


def power(a, exponent: float) -> Tensor:
    a = as_tensor(a)
    exponent = float(exponent)
    if exponent != int(exponent) and np.any(a.data < 0):
        raise DomainError(f"power: fractional exponent {exponent} of a negative value")
    return _node(a.data**exponent, (a,), lambda g: (g * exponent * a.data ** (exponent - 1),))


def square(a) -> Tensor:
    a = as_tensor(a)
    return _node(a.data * a.data, (a,), lambda g: (2.0 * g * a.data,))


def sqrt(a) -> Tensor:
    a = as_tensor(a)
    if np.any(a.data < 0):
        raise DomainError("sqrt of a negative value")
    out = np.sqrt(a.data)
    return _node(out, (a,), lambda g: (0.5 * g / out,))


def exp(a) -> Tensor:
    a = as_tensor(a)
    out = np.exp(a.data)
    return _node(out, (a,), lambda g: (g * out,))


def log(a) -> Tensor:
    a = as_tensor(a)
    if np.any(a.data <= 0):
        raise DomainError("log of a non-positive value")
    return _node(np.log(a.data), (a,), lambda g: (g / a.data,))


def relu(a) -> Tensor:
    a = as_tensor(a)
    mask = a.data > 0  # relu'(0) = 0
    return _node(a.data * mask, (a,), lambda g: (g * mask,))


def clamp_min(a, floor: float) -> Tensor:
    """``max(a, floor)``; no gradient flows through clamped entries."""
    a = as_tensor(a)
    mask = a.data > floor
    return _node(np.where(mask, a.data, floor), (a,), lambda g: (g * mask,))


# -- reductions and shape ------------------------------------------------


def _norm_axes(axis, ndim):
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(ax % ndim for ax in axis)


def tsum(a, axis=None, keepdims=False) -> Tensor:
    a = as_tensor(a)
    axes = _norm_axes(axis, a.ndim)
    out = a.data.sum(axis=axes, keepdims=keepdims)

    def backward(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, a.shape).copy(),)

    return _node(out, (a,), backward)


def tmean(a, axis=None, keepdims=False) -> Tensor:
    a = as_tensor(a)
    axes = _norm_axes(axis, a.ndim)
    count = int(np.prod([a.shape[ax] for ax in axes])) if axes else 1
    return tsum(a, axes, keepdims) * (1.0 / count)


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    try:
        out = a.data.reshape(shape)
    except ValueError:
        raise DimensionError(f"reshape: cannot view shape {a.shape} as {tuple(shape)}") from None
    return _node(out, (a,), lambda g: (g.reshape(a.shape),))


def transpose(a, axes=None) -> Tensor:
    a = as_tensor(a)
    axes = tuple(range(a.ndim))[::-1] if axes is None else tuple(axes)
    inverse = tuple(np.argsort(axes))
    return _node(a.data.transpose(axes), (a,), lambda g: (g.transpose(inverse),))


def getitem(a, index) -> Tensor:
    a = as_tensor(a)

    def backward(g):
        full = np.zeros_like(a.data)
        np.add.at(full, index, g)
        return (full,)

    return _node(a.data[index], (a,), backward)


def stack(tensors: Iterable[Tensor], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    shapes = {t.shape for t in tensors}
    if len(shapes) != 1:
        raise DimensionError(f"stack: mismatched shapes {sorted(shapes)}")
    out = np.stack([t.data for t in tensors], axis=axis)
    return _node(out, tensors, lambda g: tuple(np.moveaxis(g, axis, 0)))


def pick(logits, labels) -> Tensor:
    """Row-wise gather ``logits[i, labels[i]]`` for a 2-D tensor."""
    logits = as_tensor(logits)
    labels = np.asarray(labels, dtype=np.int64)
    if logits.ndim != 2 or labels.shape != (logits.shape[0],):
        raise DimensionError(f"pick: logits {logits.shape} vs labels {labels.shape}")
    return getitem(logits, (np.arange(len(labels)), labels))


# -- linear algebra ------------------------------------------------------


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    return _node(a.data @ b.data, (a, b), lambda g: (g @ b.data.T, a.data.T @ g))


def _im2col(x: np.ndarray, k: int) -> np.ndarray:
    """Zero-padded (N, C, H, W) input -> (k*k*C, N*H*W) patches ordered (row, col, channel).

    Samples are folded into the column axis so a convolution is a single GEMM.
    """
    p = k // 2
    n, c, h, w = x.shape
    padded = np.zeros((c, n, h + 2 * p, w + 2 * p))
    padded[:, :, p:p + h, p:p + w] = x.transpose(1, 0, 2, 3)
    cols = np.empty((k * k, c, n, h, w))
    for i in range(k):
        for j in range(k):
            cols[i * k + j] = padded[:, :, i:i + h, j:j + w]
    return cols.reshape(k * k * c, n * h * w)


def _unfold(flat: np.ndarray, n: int, h: int, w: int) -> np.ndarray:
    """(C, N*H*W) -> (N, C, H, W)."""
    return flat.reshape(-1, n, h, w).transpose(1, 0, 2, 3)


def conv2d(x, kernels, bias) -> Tensor:
    """Stride-1 'same' convolution (cross-correlation) with zero padding.

    ``x`` is C x H x W or N x C x H x W; ``kernels`` is K x C x k x k with odd k.
    """
    x, kernels, bias = as_tensor(x), as_tensor(kernels), as_tensor(bias)
    if kernels.ndim != 4 or kernels.shape[2] != kernels.shape[3] or kernels.shape[2] % 2 == 0:
        raise DimensionError(f"conv2d: kernels must be K x C x k x k with odd k, got {kernels.shape}")
    out_ch, in_ch, k, _ = kernels.shape
    if bias.shape != (out_ch,):
        raise DimensionError(f"conv2d: bias shape {bias.shape} does not match {out_ch} output channels")
    if x.ndim not in (3, 4):
        raise DimensionError(f"conv2d: input must be rank 3 or 4, got shape {x.shape}")
    single = x.ndim == 3
    xd = x.data[None] if single else x.data
    if xd.shape[1] != in_ch:
        raise DimensionError(f"conv2d: input has {xd.shape[1]} channels, kernels expect {in_ch}")
    n, _, h, w = xd.shape
    cols = _im2col(xd, k)
    wmat = kernels.data.transpose(0, 2, 3, 1).reshape(out_ch, -1)
    out = np.ascontiguousarray(_unfold(wmat @ cols + bias.data[:, None], n, h, w))
    if single:
        out = out[0]

    def backward(g):
        g4 = (g[None] if single else g).reshape(n, out_ch, h, w)
        gflat = g4.transpose(1, 0, 2, 3).reshape(out_ch, n * h * w)
        g_kernels = g_bias = g_x = None
        if kernels.requires_grad:
            gw = gflat @ cols.T
            g_kernels = gw.reshape(out_ch, k, k, in_ch).transpose(0, 3, 1, 2)
        if bias.requires_grad:
            g_bias = gflat.sum(axis=1)
        if x.requires_grad:
            flipped = kernels.data[:, :, ::-1, ::-1].transpose(1, 2, 3, 0).reshape(in_ch, -1)
            g_x = np.ascontiguousarray(_unfold(flipped @ _im2col(g4, k), n, h, w))
            if single:
                g_x = g_x[0]
        return g_x, g_kernels, g_bias

    return _node(out, (x, kernels, bias), backward)


# -- probability helpers -------------------------------------------------


def log_softmax(logits, axis: int = -1) -> Tensor:
    logits = as_tensor(logits)
    shifted = logits.data - logits.data.max(axis=axis, keepdims=True)
    out = shifted - np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    probs = np.exp(out)
    return _node(out, (logits,), lambda g: (g - probs * g.sum(axis=axis, keepdims=True),))


def softmax(logits, axis: int = -1) -> Tensor:
    logits = as_tensor(logits)
    shifted = logits.data - logits.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)
    return _node(out, (logits,), lambda g: (out * (g - (g * out).sum(axis=axis, keepdims=True)),))


# -- statistics ----------------------------------------------------------


def channel_stats(x, eps: float = EPS) -> tuple[Tensor, Tensor]:
    """Per-channel spatial mean and ``sqrt(population variance + eps)``.

    Works on C x H x W or N x C x H x W; reduces the two trailing axes.
    """
    x = as_tensor(x)
    if x.ndim < 3:
        raise DimensionError(f"channel_stats: expected C x H x W (or batched), got shape {x.shape}")
    mu = tmean(x, axis=(-2, -1), keepdims=True)
    centered = x - mu
    var = tmean(square(centered), axis=(-2, -1))
    std = sqrt(var + eps)
    return reshape(mu, mu.shape[:-2]), std


def backward(loss: Tensor, params: Sequence[Tensor]) -> list[np.ndarray]:
    """Run the reverse sweep from ``loss``; return d(loss)/d(param) per param.

    Parameters the loss does not reach get a zero gradient.
    """
    for p in params:
        p.grad = None
    loss.backward()
    return [np.zeros_like(p.data) if p.grad is None else p.grad for p in params]
