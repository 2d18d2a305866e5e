"""Minimal reverse-mode autodiff over numpy arrays.

Covers exactly the operation set the embedding networks and losses need:
dense matmul (2-D and batched), elementwise arithmetic with numpy
broadcasting, the usual nonlinearities, axis reductions, row softmax,
row L2 normalization, inverted dropout, indexing and concatenation.
float32 is the training dtype; float64 is used for gradient checking.
"""

from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import DegenerateInputError, ParameterError, ShapeError

Array = np.ndarray


def _unbroadcast(grad: Array, shape: tuple[int, ...]) -> Array:
    """Sum a broadcast gradient back down to the original shape."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    """A dense array plus an optional place in a computation graph.

    Graph nodes hold their parent tensors and a backward rule; leaves
    created with requires_grad=True accumulate into .grad additively, so
    repeated backward calls without zero_grad() sum their contributions.
    """

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(np.float32)
        self.data: Array = arr
        self.requires_grad = bool(requires_grad)
        self.grad: Array | None = None
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[Array], tuple[Array | None, ...]] | None = None

    # -- construction helpers ------------------------------------------------

    @staticmethod
    def _node(data: Array, parents: tuple["Tensor", ...], backward) -> "Tensor":
        out = Tensor.__new__(Tensor)
        out.data = data
        out.grad = None
        if any(p.requires_grad for p in parents):
            out.requires_grad = True
            out._parents = parents
            out._backward = backward
        else:
            out.requires_grad = False
            out._parents = ()
            out._backward = None
        return out

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def astype(self, dtype) -> "Tensor":
        return Tensor(self.data.astype(dtype), requires_grad=self.requires_grad)

    def item(self) -> float:
        return float(self.data)

    # -- autodiff ------------------------------------------------------------

    def backward(self, grad: Array | None = None) -> None:
        """Reverse-topological sweep populating .grad on reachable leaves."""
        if grad is None:
            if self.data.ndim != 0 and self.data.size != 1:
                raise ShapeError(
                    f"backward() needs a scalar loss, got shape {self.shape}"
                )
            grad = np.ones_like(self.data)

        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
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
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))

        grads: dict[int, Array] = {id(self): np.asarray(grad, dtype=self.data.dtype)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                node.grad = g if node.grad is None else node.grad + g
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                if key in grads:
                    grads[key] = grads[key] + pg
                else:
                    grads[key] = pg

    # -- arithmetic ----------------------------------------------------------

    @staticmethod
    def _coerce(other) -> "Tensor":
        return other if isinstance(other, Tensor) else Tensor(other)

    def __add__(self, other) -> "Tensor":
        other = self._coerce(other)
        a, b = self, other
        out = a.data + b.data
        return Tensor._node(
            out,
            (a, b),
            lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)),
        )

    __radd__ = __add__

    def __neg__(self) -> "Tensor":
        return Tensor._node(-self.data, (self,), lambda g: (-g,))

    def __sub__(self, other) -> "Tensor":
        return self + (-self._coerce(other))

    def __rsub__(self, other) -> "Tensor":
        return self._coerce(other) + (-self)

    def __mul__(self, other) -> "Tensor":
        other = self._coerce(other)
        a, b = self, other
        out = a.data * b.data
        return Tensor._node(
            out,
            (a, b),
            lambda g: (
                _unbroadcast(g * b.data, a.shape),
                _unbroadcast(g * a.data, b.shape),
            ),
        )

    __rmul__ = __mul__

    def __truediv__(self, other) -> "Tensor":
        other = self._coerce(other)
        a, b = self, other
        out = a.data / b.data
        return Tensor._node(
            out,
            (a, b),
            lambda g: (
                _unbroadcast(g / b.data, a.shape),
                _unbroadcast(-g * a.data / (b.data * b.data), b.shape),
            ),
        )

    def __rtruediv__(self, other) -> "Tensor":
        return self._coerce(other) / self

    def __pow__(self, exponent: float) -> "Tensor":
        a = self
        out = a.data**exponent
        return Tensor._node(
            out, (a,), lambda g: (g * exponent * a.data ** (exponent - 1),)
        )

    def __matmul__(self, other) -> "Tensor":
        return matmul(self, self._coerce(other))

    def __getitem__(self, key) -> "Tensor":
        a = self
        out = a.data[key]
        parts = key if isinstance(key, tuple) else (key,)
        fancy = any(isinstance(p, (np.ndarray, list)) for p in parts)

        def back(g: Array) -> tuple[Array]:
            full = np.zeros_like(a.data)
            if fancy:
                np.add.at(full, key, g)  # fancy keys may repeat positions
            else:
                full[key] += g
            return (full,)

        return Tensor._node(np.ascontiguousarray(out), (a,), back)

    # -- shape ops -----------------------------------------------------------

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        a = self
        old = a.shape
        return Tensor._node(
            a.data.reshape(shape), (a,), lambda g: (g.reshape(old),)
        )

    def transpose(self, *axes) -> "Tensor":
        a = self
        if not axes:
            axes = tuple(reversed(range(a.ndim)))
        elif len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        inv = tuple(np.argsort(axes))
        return Tensor._node(
            np.ascontiguousarray(a.data.transpose(axes)),
            (a,),
            lambda g: (g.transpose(inv),),
        )

    def swap_last_two(self) -> "Tensor":
        axes = list(range(self.ndim))
        axes[-1], axes[-2] = axes[-2], axes[-1]
        return self.transpose(*axes)

    # -- reductions ----------------------------------------------------------

    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        a = self
        out = a.data.sum(axis=axis, keepdims=keepdims)

        def back(g: Array) -> tuple[Array]:
            if axis is None:
                return (np.broadcast_to(g, a.shape).astype(a.dtype),)
            gg = g
            if not keepdims:
                gg = np.expand_dims(g, axis)
            return (np.broadcast_to(gg, a.shape).astype(a.dtype),)

        return Tensor._node(np.asarray(out), (a,), back)

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        n = self.size if axis is None else self.shape[axis]
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / n)

    def max(self, axis: int, keepdims: bool = False) -> "Tensor":
        """Max along one axis; gradient flows to the first argmax on ties."""
        a = self
        out = a.data.max(axis=axis, keepdims=keepdims)
        idx = a.data.argmax(axis=axis)

        def back(g: Array) -> tuple[Array]:
            full = np.zeros_like(a.data)
            gg = g if keepdims else np.expand_dims(g, axis)
            np.put_along_axis(full, np.expand_dims(idx, axis), gg, axis=axis)
            return (full,)

        return Tensor._node(np.asarray(out), (a,), back)

    # -- nonlinearities --------------------------------------------------------

    def relu(self) -> "Tensor":
        a = self
        mask = a.data > 0
        return Tensor._node(
            np.where(mask, a.data, 0.0).astype(a.dtype), (a,), lambda g: (g * mask,)
        )

    def exp(self) -> "Tensor":
        a = self
        out = np.exp(a.data)
        return Tensor._node(out, (a,), lambda g: (g * out,))

    def log(self) -> "Tensor":
        a = self
        return Tensor._node(np.log(a.data), (a,), lambda g: (g / a.data,))

    def sqrt(self) -> "Tensor":
        a = self
        out = np.sqrt(a.data)
        return Tensor._node(out, (a,), lambda g: (g * (0.5 / out),))

    def tanh(self) -> "Tensor":
        a = self
        out = np.tanh(a.data)
        return Tensor._node(out, (a,), lambda g: (g * (1.0 - out * out),))

    def sigmoid(self) -> "Tensor":
        a = self
        out = 1.0 / (1.0 + np.exp(-a.data))
        return Tensor._node(out, (a,), lambda g: (g * out * (1.0 - out),))


# -- free functions -----------------------------------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product. 2-D or batched with identical leading dims."""
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul needs >=2-D operands, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul inner dims disagree: {a.shape} vs {b.shape}")
    if a.ndim != b.ndim or a.shape[:-2] != b.shape[:-2]:
        if not (a.ndim == 2 and b.ndim == 2):
            raise ShapeError(f"matmul batch dims disagree: {a.shape} vs {b.shape}")
    out = np.matmul(a.data, b.data)

    def back(g: Array) -> tuple[Array, Array]:
        ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
        gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
        return ga, gb

    return Tensor._node(out, (a, b), back)


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    parts = tuple(tensors)
    out = np.concatenate([p.data for p in parts], axis=axis)
    sizes = [p.shape[axis] for p in parts]
    offsets = np.cumsum([0] + sizes)

    def back(g: Array) -> tuple[Array, ...]:
        sl = [slice(None)] * g.ndim
        grads = []
        for i in range(len(parts)):
            sl[axis] = slice(offsets[i], offsets[i + 1])
            grads.append(np.ascontiguousarray(g[tuple(sl)]))
        return tuple(grads)

    return Tensor._node(out, parts, back)


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    expanded = []
    for t in tensors:
        shape = list(t.shape)
        shape.insert(axis if axis >= 0 else t.ndim + 1 + axis, 1)
        expanded.append(t.reshape(shape))
    return concat(expanded, axis=axis)


def softmax_rows(x: Tensor, temperature: float = 1.0) -> Tensor:
    """Softmax along the last axis of logits/temperature, row-max stabilized."""
    if temperature <= 0:
        raise ParameterError(f"softmax temperature must be > 0, got {temperature}")
    z = x.data / temperature
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=-1, keepdims=True)

    def back(g: Array) -> tuple[Array]:
        dot = (g * out).sum(axis=-1, keepdims=True)
        return ((out * (g - dot)) / temperature,)

    return Tensor._node(out, (x,), back)


def l2_normalize_rows(x: Tensor, floor: float = 1e-12) -> Tensor:
    """Unit-normalize each row; rows with norm below the floor pass through."""
    norms = np.linalg.norm(x.data, axis=-1, keepdims=True)
    degenerate = norms < floor
    safe = np.where(degenerate, 1.0, norms)
    out = x.data / safe

    def back(g: Array) -> tuple[Array]:
        dot = (g * out).sum(axis=-1, keepdims=True)
        gx = (g - out * dot) / safe
        return (np.where(degenerate, g, gx),)

    return Tensor._node(out, (x,), back)


def dropout(x: Tensor, p: float, training: bool, rng: np.random.Generator) -> Tensor:
    """Inverted dropout: eval mode and p=0 are exact identities."""
    if not 0.0 <= p < 1.0:
        raise ParameterError(f"dropout rate must lie in [0, 1), got {p}")
    if not training or p == 0.0:
        return x
    mask = (rng.random(x.shape) >= p).astype(x.dtype) / (1.0 - p)
    return x * Tensor(mask)


def reduce(x: Tensor, kind: str, axis: int = 0) -> Tensor:
    """Per-column statistic over one axis: mean, population std, or max."""
    if x.shape[axis] < 1:
        raise DegenerateInputError("reduce needs at least one row")
    if kind == "mean":
        return x.mean(axis=axis)
    if kind == "max":
        return x.max(axis=axis)
    if kind == "std":
        if x.shape[axis] < 2:
            raise DegenerateInputError("std needs at least two rows")
        centered = x - x.mean(axis=axis, keepdims=True)
        return ((centered * centered).mean(axis=axis) + 1e-12).sqrt()
    raise ParameterError(f"unknown reduction {kind!r}")


def finite_diff_check(
    f: Callable[..., Tensor],
    xs: Iterable[Tensor],
    eps: float = 1e-5,
) -> float:
    """Max relative error between analytic and central-difference gradients.

    f must return a scalar Tensor of the given float64 inputs. The numeric
    side never touches the autodiff graph, so it stays an independent oracle.
    """
    if eps <= 0:
        raise ParameterError(f"eps must be > 0, got {eps}")
    xs = list(xs)
    for x in xs:
        x.data = np.ascontiguousarray(x.data)  # flat view below must alias
        x.zero_grad()
    loss = f(*xs)
    if loss.size != 1:
        raise ShapeError(f"finite_diff_check needs a scalar f, got {loss.shape}")
    loss.backward()

    worst = 0.0
    for x in xs:
        analytic = np.zeros_like(x.data) if x.grad is None else x.grad
        flat = x.data.reshape(-1)
        numeric = np.zeros_like(flat)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            hi = float(f(*xs).data)
            flat[i] = orig - eps
            lo = float(f(*xs).data)
            flat[i] = orig
            numeric[i] = (hi - lo) / (2.0 * eps)
        denom = np.maximum(1e-8, np.abs(numeric))
        err = np.abs(analytic.reshape(-1) - numeric) / denom
        worst = max(worst, float(err.max()) if err.size else 0.0)
    return worst
