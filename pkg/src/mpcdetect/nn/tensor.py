"""Reverse-mode automatic differentiation over numpy arrays.

Every op builds a node holding its value, its parents and a closure that
pushes the node's gradient back to the parents. The graph is rebuilt on each
forward pass; :meth:`Tensor.backward` walks it in reverse topological order.
"""

from __future__ import annotations

import contextlib

import numpy as np

from ..errors import ContractError, ShapeError

DTYPE = np.float64

_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    """Disable graph recording inside the block."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def is_grad_enabled():
    return _grad_enabled


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "op", "name")

    def __init__(self, data, requires_grad=False, name=None):
        self.data = np.asarray(data, dtype=DTYPE)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = ()
        self._backward = None
        self.op = "leaf"
        self.name = name

    # -- graph construction ----------------------------------------------

    @classmethod
    def _make(cls, data, parents, backward, op):
        out = cls.__new__(cls)
        out.data = data
        out.grad = None
        out.name = None
        out.op = op
        needs = _grad_enabled and any(p.requires_grad for p in parents)
        out.requires_grad = needs
        if needs:
            out._parents = parents
            out._backward = backward
        else:
            out._parents = ()
            out._backward = None
        return out

    def _accumulate(self, g):
        if not self.requires_grad:
            return
        # never update in place: ``g`` may be shared with sibling parents
        if self.grad is None:
            self.grad = g
        else:
            self.grad = self.grad + g

    def backward(self):
        """Populate ``.grad`` on every node reachable from this scalar."""
        if self.data.size != 1:
            raise ContractError(f"backward() needs a scalar loss, got shape {self.data.shape}")
        order = []
        seen = set()
        stack = [(self, False)]
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
        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)
                if node._parents:
                    # intermediate gradients are not needed once propagated
                    node.grad = None if node is not self else node.grad

    # -- conveniences ----------------------------------------------------

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def numpy(self):
        return self.data

    def item(self):
        return float(self.data)

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.data.shape}, op={self.op}{tag})"

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

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def reshape(self, *shape):
        return reshape(self, shape[0] if len(shape) == 1 and isinstance(shape[0], tuple) else shape)

    def transpose(self, *axes):
        return transpose(self, axes if axes else None)

    def sum(self):
        return sum_all(self)


class Parameter(Tensor):
    """A trainable leaf."""

    __slots__ = ()

    def __init__(self, data, name=None):
        super().__init__(data, requires_grad=True, name=name)


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _unbroadcast(g, shape):
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def _broadcast_shape(a, b, op):
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: cannot broadcast shapes {a.shape} and {b.shape}") from None


# -- elementwise -------------------------------------------------------------


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "add")

    def backward(g):
        a._accumulate(_unbroadcast(g, a.shape))
        b._accumulate(_unbroadcast(g, b.shape))

    return Tensor._make(a.data + b.data, (a, b), backward, "add")


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "sub")

    def backward(g):
        a._accumulate(_unbroadcast(g, a.shape))
        b._accumulate(_unbroadcast(-g, b.shape))

    return Tensor._make(a.data - b.data, (a, b), backward, "sub")


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "mul")

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g * b.data, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g * a.data, b.shape))

    return Tensor._make(a.data * b.data, (a, b), backward, "mul")


def relu(x):
    x = as_tensor(x)
    mask = x.data > 0

    def backward(g):
        x._accumulate(g * mask)

    return Tensor._make(x.data * mask, (x,), backward, "relu")


def _sigmoid(z):
    # tanh form never overflows and avoids masked indexing in the RNN loops
    out = np.multiply(z, 0.5)
    np.tanh(out, out=out)
    out += 1.0
    out *= 0.5
    return out


def sigmoid(x):
    x = as_tensor(x)
    y = _sigmoid(x.data)

    def backward(g):
        x._accumulate(g * y * (1.0 - y))

    return Tensor._make(y, (x,), backward, "sigmoid")


def tanh(x):
    x = as_tensor(x)
    y = np.tanh(x.data)

    def backward(g):
        x._accumulate(g * (1.0 - y * y))

    return Tensor._make(y, (x,), backward, "tanh")


def softmax(x, axis=-1):
    x = as_tensor(x)
    y = x.data - x.data.max(axis=axis, keepdims=True)
    np.exp(y, out=y)
    y /= y.sum(axis=axis, keepdims=True)

    def backward(g):
        gy = g * y
        dot = gy.sum(axis=axis, keepdims=True)
        gy -= y * dot
        x._accumulate(gy)

    return Tensor._make(y, (x,), backward, "softmax")


# -- shape ---------------------------------------------------------------------


def reshape(x, shape):
    x = as_tensor(x)
    old = x.shape
    try:
        y = x.data.reshape(shape)
    except ValueError:
        raise ShapeError(f"reshape: cannot reshape {old} into {tuple(shape)}") from None

    def backward(g):
        x._accumulate(g.reshape(old))

    return Tensor._make(y, (x,), backward, "reshape")


def transpose(x, axes=None):
    x = as_tensor(x)
    if axes is None:
        axes = tuple(reversed(range(x.ndim)))
    inv = np.argsort(axes)

    def backward(g):
        x._accumulate(g.transpose(inv))

    return Tensor._make(x.data.transpose(axes), (x,), backward, "transpose")


def swap_last(x):
    axes = list(range(x.ndim))
    axes[-1], axes[-2] = axes[-2], axes[-1]
    return transpose(x, tuple(axes))


def sum_all(x):
    x = as_tensor(x)
    shape = x.shape

    def backward(g):
        x._accumulate(np.broadcast_to(g, shape))

    return Tensor._make(np.asarray(x.data.sum()), (x,), backward, "sum")


# -- linear algebra ------------------------------------------------------------


def matmul(a, b):
    """Batched matrix product with numpy broadcasting over leading axes."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g @ np.swapaxes(b.data, -1, -2), a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(np.swapaxes(a.data, -1, -2) @ g, b.shape))

    return Tensor._make(a.data @ b.data, (a, b), backward, "matmul")


def linear(x, weight, bias=None):
    """``x @ weight.T + bias`` over the last axis; weight is (out, in)."""
    x, weight = as_tensor(x), as_tensor(weight)
    if x.shape[-1] != weight.shape[1]:
        raise ShapeError(f"linear: input {x.shape} does not match weight {weight.shape}")
    parents = (x, weight) if bias is None else (x, weight, as_tensor(bias))
    y = x.data @ weight.data.T
    if bias is not None:
        y = y + parents[2].data

    def backward(g):
        if x.requires_grad:
            x._accumulate(g @ weight.data)
        g2 = g.reshape(-1, g.shape[-1])
        if weight.requires_grad:
            weight._accumulate(g2.T @ x.data.reshape(-1, x.shape[-1]))
        if bias is not None and parents[2].requires_grad:
            parents[2]._accumulate(g2.sum(axis=0))

    return Tensor._make(y, parents, backward, "linear")


# -- normalization / loss ------------------------------------------------------


def layer_norm(x, gamma, beta, eps=1e-5):
    """Normalize over the last axis, then scale and shift."""
    x, gamma, beta = as_tensor(x), as_tensor(gamma), as_tensor(beta)
    if gamma.shape != (x.shape[-1],) or beta.shape != (x.shape[-1],):
        raise ShapeError(
            f"layer_norm: input {x.shape} needs gamma/beta of shape ({x.shape[-1]},), "
            f"got {gamma.shape} and {beta.shape}"
        )
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    y = xhat * gamma.data + beta.data
    d = x.shape[-1]

    def backward(g):
        lead = tuple(range(g.ndim - 1))
        if gamma.requires_grad:
            gamma._accumulate((g * xhat).sum(axis=lead))
        if beta.requires_grad:
            beta._accumulate(g.sum(axis=lead))
        if x.requires_grad:
            gx = g * gamma.data
            dx = inv / d * (d * gx - gx.sum(axis=-1, keepdims=True)
                            - xhat * (gx * xhat).sum(axis=-1, keepdims=True))
            x._accumulate(dx)

    return Tensor._make(y, (x, gamma, beta), backward, "layer_norm")


def mse_loss(pred, target):
    pred, target = as_tensor(pred), as_tensor(target)
    if pred.shape != target.shape:
        raise ShapeError(f"mse_loss: prediction {pred.shape} vs target {target.shape}")
    diff = pred.data - target.data
    n = diff.size

    def backward(g):
        scale = 2.0 * g / n
        pred._accumulate(scale * diff)
        target._accumulate(-scale * diff)

    return Tensor._make(np.asarray(np.mean(diff * diff)), (pred, target), backward, "mse")


def attention(q, k, v):
    """Fused ``softmax(q k^T / sqrt(d)) v`` over (..., T, d) inputs."""
    q, k, v = as_tensor(q), as_tensor(k), as_tensor(v)
    if not (q.shape[-1] == k.shape[-1] and k.shape[-2] == v.shape[-2] and q.ndim == k.ndim == v.ndim):
        raise ShapeError(f"attention: incompatible q {q.shape}, k {k.shape}, v {v.shape}")
    scale = 1.0 / np.sqrt(q.shape[-1])
    # scaling the small q instead of the (T, T) scores saves a full pass
    p = (q.data * scale) @ np.swapaxes(k.data, -1, -2)
    p -= p.max(axis=-1, keepdims=True)
    np.exp(p, out=p)
    p /= p.sum(axis=-1, keepdims=True)
    out = p @ v.data

    def backward(g):
        if v.requires_grad:
            v._accumulate(np.swapaxes(p, -1, -2) @ g)
        if not (q.requires_grad or k.requires_grad):
            return
        ds = g @ np.swapaxes(v.data, -1, -2)
        ds -= np.einsum("...ij,...ij->...i", ds, p)[..., None]
        ds *= p
        if q.requires_grad:
            q._accumulate((ds @ k.data) * scale)
        if k.requires_grad:
            k._accumulate(np.swapaxes(ds, -1, -2) @ (q.data * scale))

    return Tensor._make(out, (q, k, v), backward, "attention")
