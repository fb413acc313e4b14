"""Dense tensor values with reverse-mode automatic differentiation.

A ``Tensor`` wraps a contiguous, read-only numpy buffer. Feature maps use the
4-d layout (batch, channel, height, width) in row-major order: element
(i, j, y, x) lives at flat index ((i*c + j)*h + y)*w + x. Vectors (biases,
attention weights) are lower-rank tensors over the same machinery.

Every operation is a pure function from input tensors to a fresh output
tensor; the op graph is recorded on the outputs so that ``backward`` can
push gradients from a scalar loss to every leaf marked ``requires_grad``.
"""

from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import ContractError, ShapeError

DTYPES = {"float64": np.float64, "float32": np.float32}


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.flags.writeable = False
    return a


class Tensor:
    """Immutable dense array plus the autodiff bookkeeping that produced it."""

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_grad_fn", "_kernel", "_op")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        arr = np.array(data, dtype=dtype, copy=True)
        if not np.issubdtype(arr.dtype, np.floating):
            arr = arr.astype(np.float64)
        self.data = _freeze(arr)
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self._parents: tuple[Tensor, ...] = ()
        self._grad_fn: Callable[[np.ndarray], tuple] | None = None
        self._kernel: Callable[[], np.ndarray] | None = None
        self._op = "leaf"

    @classmethod
    def from_flat(cls, shape: Sequence[int], values, requires_grad: bool = False, dtype=None) -> "Tensor":
        """Build a tensor from a flat row-major buffer of length prod(shape)."""
        flat = np.array(values, dtype=dtype, copy=True).ravel()
        n = int(np.prod(shape)) if len(shape) else 1
        if flat.size != n:
            raise ShapeError(f"flat buffer has {flat.size} elements, shape {tuple(shape)} needs {n}")
        return cls(flat.reshape(tuple(shape)), requires_grad=requires_grad)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        """Read-only view of the underlying buffer."""
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(()))

    def backward(self) -> None:
        backward(self)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, dtype={self.dtype.name}, op={self._op})"


def _record(op: str, out_data: np.ndarray, parents: tuple[Tensor, ...],
            grad_fn: Callable[[np.ndarray], tuple], kernel: Callable[[], np.ndarray]) -> Tensor:
    """Wrap an op result without copying, keeping the graph edge."""
    out = Tensor.__new__(Tensor)
    out.data = _freeze(out_data)
    out.requires_grad = any(p.requires_grad for p in parents)
    out.grad = None
    out._parents = parents
    out._grad_fn = grad_fn
    out._kernel = kernel
    out._op = op
    return out


def _topo_order(root: Tensor) -> list[Tensor]:
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
        for p in node._parents:
            if id(p) not in seen:
                stack.append((p, False))
    return order


class GradTape:
    """The op graph below one root, in topological (leaves-first) order.

    One tape per forward pass; tapes are not shared across concurrent passes.
    ``replay`` recomputes every recorded op from the current leaf buffers and
    must reproduce the original outputs bit-for-bit.
    """

    def __init__(self, root: Tensor):
        self.root = root
        self.nodes = _topo_order(root)

    def leaves(self) -> list[Tensor]:
        return [n for n in self.nodes if n._kernel is None]

    def replay(self) -> np.ndarray:
        for node in self.nodes:
            if node._kernel is not None:
                node.data = _freeze(node._kernel())
        return self.root.data


def backward(loss: Tensor, tape: GradTape | None = None) -> None:
    """Fill ``.grad`` on every requires_grad tensor reachable from ``loss``.

    Gradients are overwritten, not accumulated across calls; within one call
    fan-out contributions sum as usual.
    """
    if loss.data.size != 1:
        raise ContractError(f"loss must be scalar, got shape {loss.shape}")
    if tape is None:
        tape = GradTape(loss)
    elif tape.root is not loss:
        raise ContractError("tape was recorded for a different loss node")
    for node in tape.nodes:
        node.grad = None
    loss.grad = np.ones_like(loss.data)
    for node in reversed(tape.nodes):
        if node._grad_fn is None or node.grad is None:
            continue
        if not node.requires_grad:
            continue
        parent_grads = node._grad_fn(node.grad)
        for parent, g in zip(node._parents, parent_grads):
            if g is None or not parent.requires_grad:
                continue
            if parent.grad is None:
                parent.grad = np.zeros_like(parent.data)
            parent.grad = parent.grad + g


# ---------------------------------------------------------------------------
# elementwise and structural ops
# ---------------------------------------------------------------------------

def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise sum; shapes must match exactly."""
    if a.shape != b.shape:
        raise ShapeError(f"add: shapes {a.shape} and {b.shape} differ")
    return _record(
        "add", a.data + b.data, (a, b),
        lambda g: (g, g),
        lambda: a.data + b.data,
    )


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise product; shapes must match exactly."""
    if a.shape != b.shape:
        raise ShapeError(f"mul: shapes {a.shape} and {b.shape} differ")
    return _record(
        "mul", a.data * b.data, (a, b),
        lambda g: (g * b.data, g * a.data),
        lambda: a.data * b.data,
    )


def scale(x: Tensor, factor: float) -> Tensor:
    """Multiply every element by a python scalar."""
    f = float(factor)
    return _record(
        "scale", x.data * f, (x,),
        lambda g: (g * f,),
        lambda: x.data * f,
    )


def relu(x: Tensor) -> Tensor:
    def kernel():
        return np.maximum(x.data, 0.0)

    mask = x.data > 0
    return _record("relu", kernel(), (x,), lambda g: (g * mask,), kernel)


def sigmoid(x: Tensor) -> Tensor:
    def kernel():
        d = x.data
        out = np.empty_like(d)
        pos = d >= 0
        out[pos] = 1.0 / (1.0 + np.exp(-d[pos]))
        ex = np.exp(d[~pos])
        out[~pos] = ex / (1.0 + ex)
        return out

    s = kernel()
    return _record("sigmoid", s, (x,), lambda g: (g * s * (1.0 - s),), kernel)


def mul_channelwise(x: Tensor, w: Tensor) -> Tensor:
    """Scale every spatial position of channel j by w_j.

    ``x`` is (n, c, h, w); ``w`` is a per-channel vector (c,) shared across
    the batch, or (n, c) with one vector per sample.
    """
    if x.data.ndim != 4:
        raise ShapeError(f"mul_channelwise: x must be 4-d, got shape {x.shape}")
    n, c = x.shape[0], x.shape[1]
    if w.shape == (c,):
        wb = w.data.reshape(1, c, 1, 1)
    elif w.shape == (n, c):
        wb = w.data.reshape(n, c, 1, 1)
    else:
        raise ShapeError(f"mul_channelwise: weight shape {w.shape} does not match {c} channels")

    def grad_fn(g):
        gx = g * wb
        gw = (g * x.data).sum(axis=(2, 3))
        if w.data.ndim == 1:
            gw = gw.sum(axis=0)
        return gx, gw

    def kernel():
        wd = w.data.reshape(wb.shape)
        return x.data * wd

    return _record("mul_channelwise", x.data * wb, (x, w), grad_fn, kernel)


def sum_all(x: Tensor) -> Tensor:
    """Reduce to a rank-0 scalar tensor."""
    def kernel():
        return np.asarray(x.data.sum())

    return _record("sum_all", kernel(), (x,),
                   lambda g: (np.broadcast_to(g, x.shape).copy(),), kernel)


def channel_slice(x: Tensor, start: int, stop: int) -> Tensor:
    """Select channels [start, stop) of a 4-d tensor."""
    if x.data.ndim != 4:
        raise ShapeError(f"channel_slice: x must be 4-d, got shape {x.shape}")
    c = x.shape[1]
    if not (0 <= start < stop <= c):
        raise ShapeError(f"channel_slice: range [{start}, {stop}) invalid for {c} channels")

    def grad_fn(g):
        gx = np.zeros_like(x.data)
        gx[:, start:stop] = g
        return (gx,)

    def kernel():
        return x.data[:, start:stop].copy()

    return _record("channel_slice", kernel(), (x,), grad_fn, kernel)


def broadcast_spatial(x: Tensor, height: int, width: int) -> Tensor:
    """Tile an (n, c, 1, 1) tensor to (n, c, height, width)."""
    if x.data.ndim != 4 or x.shape[2] != 1 or x.shape[3] != 1:
        raise ShapeError(f"broadcast_spatial: expected (n, c, 1, 1), got {x.shape}")
    if height < 1 or width < 1:
        raise ShapeError(f"broadcast_spatial: target extent {height}x{width} invalid")
    n, c = x.shape[0], x.shape[1]

    def kernel():
        return np.broadcast_to(x.data, (n, c, height, width)).copy()

    return _record("broadcast_spatial", kernel(), (x,),
                   lambda g: (g.sum(axis=(2, 3), keepdims=True),), kernel)


def squeeze_spatial(x: Tensor) -> Tensor:
    """Drop trailing unit spatial dims: (n, c, 1, 1) -> (n, c)."""
    if x.data.ndim != 4 or x.shape[2] != 1 or x.shape[3] != 1:
        raise ShapeError(f"squeeze_spatial: expected (n, c, 1, 1), got {x.shape}")
    n, c = x.shape[0], x.shape[1]

    def kernel():
        return x.data.reshape(n, c).copy()

    return _record("squeeze_spatial", kernel(), (x,),
                   lambda g: (g.reshape(n, c, 1, 1),), kernel)


def leaves_of(tensors: Iterable[Tensor]) -> list[Tensor]:
    """All distinct leaf tensors under the given roots, in first-seen order."""
    out: list[Tensor] = []
    seen: set[int] = set()
    for t in tensors:
        for node in _topo_order(t):
            if node._kernel is None and id(node) not in seen:
                seen.add(id(node))
                out.append(node)
    return out
