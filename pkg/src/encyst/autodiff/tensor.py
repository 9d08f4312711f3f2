"""Static expression graphs over dense float32 arrays with reverse-mode autodiff.

A model builds its graph once from placeholders and parameters; ``Graph``
caches the topological order and is then evaluated many times with fresh
input bindings. Training calls ``backward`` on a scalar output to populate
``grad`` on every parameter.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


class ShapeError(ValueError):
    """Raised when an operation's inputs do not fit together; names the node."""


class Tensor:
    """A node in the expression graph.

    Leaf nodes are either parameters (``requires_grad=True``), constants, or
    placeholders (``data is None`` until bound by ``Graph.forward``).
    Non-leaf nodes record their operation and parents.
    """

    __slots__ = ("data", "grad", "requires_grad", "name",
                 "_op", "_parents", "_fwd", "_bwd")

    def __init__(self, data=None, requires_grad=False, name=None):
        self.data = None if data is None else np.asarray(data, dtype=np.float32)
        self.grad = None
        self.requires_grad = requires_grad
        self.name = name
        self._op = None
        self._parents = ()
        self._fwd = None
        self._bwd = None

    @property
    def shape(self):
        return None if self.data is None else self.data.shape

    def __repr__(self):
        kind = self._op or ("param" if self.requires_grad else "leaf")
        return f"Tensor({kind}, shape={self.shape}, name={self.name})"

    # -- operator sugar ----------------------------------------------------
    def __add__(self, other):
        return add(self, _ensure(other))

    def __radd__(self, other):
        return add(_ensure(other), self)

    def __sub__(self, other):
        return sub(self, _ensure(other))

    def __rsub__(self, other):
        return sub(_ensure(other), self)

    def __mul__(self, other):
        return mul(self, _ensure(other))

    def __rmul__(self, other):
        return mul(_ensure(other), self)

    def __neg__(self):
        return mul(self, _ensure(-1.0))

    def __truediv__(self, other):
        return div(self, _ensure(other))

    def __rtruediv__(self, other):
        return div(_ensure(other), self)

    def __matmul__(self, other):
        return matmul(self, other)


def _ensure(x):
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=np.float32))


def parameter(array, name=None):
    return Tensor(array, requires_grad=True, name=name)


def placeholder(name=None):
    return Tensor(None, requires_grad=False, name=name)


def _node(op, parents, fwd, bwd, requires_grad=None):
    t = Tensor()
    t._op = op
    t._parents = tuple(parents)
    t._fwd = fwd
    t._bwd = bwd
    if requires_grad is None:
        requires_grad = any(p.requires_grad for p in parents)
    t.requires_grad = requires_grad
    return t


def _unbroadcast(grad, shape):
    """Sum ``grad`` down to ``shape`` (reverse of numpy broadcasting)."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


# -- elementwise and linear ops --------------------------------------------

def add(a, b):
    return _node("add", (a, b),
                 lambda x, y: x + y,
                 lambda g, out, x, y: (_unbroadcast(g, x.shape),
                                       _unbroadcast(g, y.shape)))


def sub(a, b):
    return _node("sub", (a, b),
                 lambda x, y: x - y,
                 lambda g, out, x, y: (_unbroadcast(g, x.shape),
                                       _unbroadcast(-g, y.shape)))


def mul(a, b):
    return _node("mul", (a, b),
                 lambda x, y: x * y,
                 lambda g, out, x, y: (_unbroadcast(g * y, x.shape),
                                       _unbroadcast(g * x, y.shape)))


def div(a, b):
    return _node("div", (a, b),
                 lambda x, y: x / y,
                 lambda g, out, x, y: (_unbroadcast(g / y, x.shape),
                                       _unbroadcast(-g * x / (y * y), y.shape)))


def matmul(a, b):
    return _node("matmul", (a, b),
                 lambda x, y: x @ y,
                 lambda g, out, x, y: (g @ y.T, x.T @ g))


def relu(a):
    return _node("relu", (a,),
                 lambda x: np.maximum(x, 0.0),
                 lambda g, out, x: (g * (out > 0),))


def sigmoid(a):
    def fwd(x):
        return np.where(x >= 0, 1.0 / (1.0 + np.exp(-x)),
                        np.exp(x) / (1.0 + np.exp(x))).astype(np.float32)
    return _node("sigmoid", (a,), fwd,
                 lambda g, out, x: (g * out * (1.0 - out),))


def tanh(a):
    return _node("tanh", (a,),
                 lambda x: np.tanh(x),
                 lambda g, out, x: (g * (1.0 - out * out),))


def exp(a):
    return _node("exp", (a,),
                 lambda x: np.exp(x),
                 lambda g, out, x: (g * out,))


def log(a):
    return _node("log", (a,),
                 lambda x: np.log(x),
                 lambda g, out, x: (g / x,))


def square(a):
    return _node("square", (a,),
                 lambda x: x * x,
                 lambda g, out, x: (2.0 * x * g,))


def sqrt(a):
    return _node("sqrt", (a,),
                 lambda x: np.sqrt(x),
                 lambda g, out, x: (g * 0.5 / out,))


def softmax(a, axis=-1):
    def fwd(x):
        m = x - x.max(axis=axis, keepdims=True)
        e = np.exp(m)
        return e / e.sum(axis=axis, keepdims=True)
    def bwd(g, out, x):
        dot = (g * out).sum(axis=axis, keepdims=True)
        return (out * (g - dot),)
    return _node("softmax", (a,), fwd, bwd)


def log_softmax(a, axis=-1):
    def fwd(x):
        m = x - x.max(axis=axis, keepdims=True)
        return m - np.log(np.exp(m).sum(axis=axis, keepdims=True))
    def bwd(g, out, x):
        return (g - np.exp(out) * g.sum(axis=axis, keepdims=True),)
    return _node("log_softmax", (a,), fwd, bwd)


def logsumexp(a, axis, keepdims=False):
    def fwd(x):
        m = x.max(axis=axis, keepdims=True)
        s = np.log(np.exp(x - m).sum(axis=axis, keepdims=True)) + m
        return s if keepdims else np.squeeze(s, axis=axis)
    def bwd(g, out, x):
        o = out if keepdims else np.expand_dims(out, axis)
        gg = g if keepdims else np.expand_dims(g, axis)
        return (np.exp(x - o) * gg,)
    return _node("logsumexp", (a,), fwd, bwd)


def reshape(a, shape):
    shape = tuple(shape)
    return _node("reshape", (a,),
                 lambda x: x.reshape(shape),
                 lambda g, out, x: (g.reshape(x.shape),))


def tsum(a, axis=None, keepdims=False):
    def bwd(g, out, x):
        if axis is None:
            return (np.broadcast_to(g, x.shape).copy(),)
        gg = g if keepdims else np.expand_dims(g, axis)
        return (np.broadcast_to(gg, x.shape).copy(),)
    return _node("sum", (a,),
                 lambda x: x.sum(axis=axis, keepdims=keepdims), bwd)


def tmean(a, axis=None, keepdims=False):
    def fwd(x):
        return x.mean(axis=axis, keepdims=keepdims)
    def bwd(g, out, x):
        if axis is None:
            n = x.size
            return (np.broadcast_to(g / n, x.shape).copy(),)
        axes = axis if isinstance(axis, tuple) else (axis,)
        n = np.prod([x.shape[i] for i in axes])
        gg = g if keepdims else np.expand_dims(g, axis)
        return (np.broadcast_to(gg / n, x.shape).copy(),)
    return _node("mean", (a,), fwd, bwd)


def stop_gradient(a):
    return _node("stop_gradient", (a,),
                 lambda x: x,
                 lambda g, out, x: (None,),
                 requires_grad=False)


# -- convolution and pooling -----------------------------------------------

def _im2col(x, kh, kw, stride, padding):
    if padding:
        x = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    n, c, h, w = x.shape
    win = sliding_window_view(x, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]
    ho, wo = win.shape[2], win.shape[3]
    cols = win.transpose(0, 1, 4, 5, 2, 3).reshape(n, c * kh * kw, ho * wo)
    return np.ascontiguousarray(cols), ho, wo


def _col2im(cols, x_shape, kh, kw, stride, padding, ho, wo):
    n, c, h, w = x_shape
    hp, wp = h + 2 * padding, w + 2 * padding
    out = np.zeros((n, c, hp, wp), dtype=np.float32)
    cols = cols.reshape(n, c, kh, kw, ho, wo)
    for i in range(kh):
        for j in range(kw):
            out[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride] += cols[:, :, i, j]
    if padding:
        out = out[:, :, padding:-padding, padding:-padding]
    return out


def conv2d(x, w, b=None, stride=1, padding=0):
    """2-D convolution; x is NCHW, w is (out, in, kh, kw)."""
    parents = (x, w) if b is None else (x, w, b)

    def fwd(xa, wa, ba=None):
        if xa.ndim != 4 or wa.ndim != 4 or xa.shape[1] != wa.shape[1]:
            raise ShapeError(f"conv2d: input {xa.shape} vs weight {wa.shape}")
        co, ci, kh, kw = wa.shape
        cols, ho, wo = _im2col(xa, kh, kw, stride, padding)
        out = (wa.reshape(co, -1)[None] @ cols).reshape(xa.shape[0], co, ho, wo)
        if ba is not None:
            out = out + ba.reshape(1, co, 1, 1)
        return out.astype(np.float32)

    def bwd(g, out, xa, wa, ba=None):
        co, ci, kh, kw = wa.shape
        n = xa.shape[0]
        ho, wo = g.shape[2], g.shape[3]
        cols, _, _ = _im2col(xa, kh, kw, stride, padding)
        gr = g.reshape(n, co, ho * wo)
        gw = np.einsum("nol,ncl->oc", gr, cols).reshape(wa.shape)
        gcols = np.einsum("oc,nol->ncl", wa.reshape(co, -1), gr)
        gx = _col2im(gcols, xa.shape, kh, kw, stride, padding, ho, wo)
        if ba is None:
            return gx, gw
        return gx, gw, g.sum(axis=(0, 2, 3))

    return _node("conv2d", parents, fwd, bwd)


def max_pool2d(x, k=2):
    """Non-overlapping max pooling with window and stride ``k``."""
    def fwd(xa):
        n, c, h, w = xa.shape
        if h % k or w % k:
            raise ShapeError(f"max_pool2d: {h}x{w} not divisible by {k}")
        r = xa.reshape(n, c, h // k, k, w // k, k)
        return r.max(axis=(3, 5))

    def bwd(g, out, xa):
        n, c, h, w = xa.shape
        r = xa.reshape(n, c, h // k, k, w // k, k).transpose(0, 1, 2, 4, 3, 5)
        flat = r.reshape(n, c, h // k, w // k, k * k)
        idx = flat.argmax(axis=-1)
        gflat = np.zeros_like(flat)
        np.put_along_axis(gflat, idx[..., None], g[..., None], axis=-1)
        gx = gflat.reshape(n, c, h // k, w // k, k, k).transpose(0, 1, 2, 4, 3, 5)
        return (gx.reshape(xa.shape),)

    return _node("max_pool2d", (x,), fwd, bwd)


# -- graph -----------------------------------------------------------------

def _toposort(outputs):
    order, seen = [], set()
    stack = [(o, False) for o in outputs]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            stack.append((p, False))
    return order


class Graph:
    """A frozen expression graph: one or more outputs over bound placeholders.

    ``forward`` is safe to call concurrently only on distinct Graph objects;
    node ``data`` slots are shared state within a graph.
    """

    def __init__(self, outputs, inputs=()):
        if isinstance(outputs, Tensor):
            outputs = [outputs]
        self.outputs = list(outputs)
        self.inputs = list(inputs)
        self.nodes = _toposort(self.outputs)

    def parameters(self):
        return [n for n in self.nodes if n.requires_grad and n._op is None]

    def forward(self, *arrays):
        """Evaluate outputs given input bindings.

        Values live in a per-call table, so forward passes of a frozen graph
        are safe from concurrent callers. The table from the most recent call
        is kept for ``backward`` (training requires exclusive access anyway).
        """
        if len(arrays) != len(self.inputs):
            raise ShapeError(f"graph expects {len(self.inputs)} inputs, got {len(arrays)}")
        values = {}
        for ph, arr in zip(self.inputs, arrays):
            values[id(ph)] = np.asarray(arr, dtype=np.float32)
        for node in self.nodes:
            if id(node) in values:
                continue
            if node._fwd is None:
                if node.data is None:
                    raise ShapeError(f"unbound placeholder {node.name!r}")
                values[id(node)] = node.data
                continue
            try:
                values[id(node)] = np.asarray(
                    node._fwd(*(values[id(p)] for p in node._parents)),
                    dtype=np.float32)
            except ShapeError:
                raise
            except ValueError as e:
                raise ShapeError(f"{node._op}: {e}") from e
        self._values = values
        if len(self.outputs) == 1:
            return values[id(self.outputs[0])]
        return [values[id(o)] for o in self.outputs]

    def backward(self, output_index=0):
        """Populate ``grad`` on every requires_grad node from a scalar output."""
        values = getattr(self, "_values", None)
        if values is None:
            raise ShapeError("backward requires a prior forward pass")
        out = self.outputs[output_index]
        oval = values[id(out)]
        if oval.size != 1:
            raise ShapeError("backward requires a scalar output")
        grads = {id(out): np.ones_like(oval)}
        for node in reversed(self.nodes):
            g_out = grads.get(id(node))
            if g_out is None or node._bwd is None:
                continue
            if not any(p.requires_grad for p in node._parents):
                continue
            pgrads = node._bwd(g_out, values[id(node)],
                               *(values[id(p)] for p in node._parents))
            for p, g in zip(node._parents, pgrads):
                if g is None or not p.requires_grad:
                    continue
                g = np.asarray(g, dtype=np.float32)
                if id(p) in grads:
                    grads[id(p)] = grads[id(p)] + g
                else:
                    grads[id(p)] = g
        for node in self.nodes:
            if node.requires_grad and node._op is None:
                node.grad = grads.get(id(node))
