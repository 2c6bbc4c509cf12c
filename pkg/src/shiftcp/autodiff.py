"""Minimal dense-matrix reverse-mode differentiation.

Every value is a 2-D float64 matrix; scalars are (1, 1). The op set is
exactly what the models and losses need: dense/sparse matmul, elementwise
add/sub/scale, relu, tanh, row softmax, fused masked cross-entropy, row
selection, column mean, integer power, squared L2 norm, and seeded dropout.
Gradients are accumulated on every node reachable from the output.
"""

import numpy as np


class ShapeError(ValueError):
    pass


class Tensor:
    """Node in the differentiation graph: values, accumulated grad, parents."""

    __slots__ = ("data", "_grad", "_parents", "_bwd", "_backward_run")

    def __init__(self, data, _parents=(), _bwd=None):
        data = np.asarray(data, dtype=np.float64)
        if data.ndim == 0:
            data = data.reshape(1, 1)
        if data.ndim != 2:
            raise ShapeError(f"tensors are 2-D matrices, got shape {data.shape}")
        self.data = data
        self._grad = None
        self._parents = _parents
        self._bwd = _bwd
        self._backward_run = False

    @property
    def shape(self):
        return self.data.shape

    @property
    def grad(self):
        if self._grad is None:
            self._grad = np.zeros_like(self.data)
        return self._grad

    @grad.setter
    def grad(self, value):
        self._grad = value

    def zero_grad(self):
        self._grad = None

    def item(self) -> float:
        if self.data.shape != (1, 1):
            raise ShapeError(f"item() needs a (1, 1) tensor, got {self.data.shape}")
        return float(self.data[0, 0])

    def __repr__(self):
        return f"Tensor(shape={self.data.shape})"

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, c):
        return scale(self, c)

    __rmul__ = __mul__


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def backward(out: Tensor) -> None:
    """Populate grads of everything reachable from a scalar output."""
    if out.data.shape != (1, 1):
        raise ShapeError(f"backward needs a scalar (1, 1) output, got {out.data.shape}")
    if out._backward_run:
        raise RuntimeError("backward already called on this output; rebuild the graph")
    out._backward_run = True

    topo = []
    seen = set()
    stack = [(out, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            topo.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen:
                stack.append((p, False))

    out.grad[...] = 1.0
    for node in reversed(topo):
        if node._bwd is not None:
            node._bwd(node._grad)


def _check_same_cols(name, a, b):
    if a.data.shape[1] != b.data.shape[1]:
        raise ShapeError(
            f"{name}: column counts differ: {a.data.shape} vs {b.data.shape}"
        )


def _broadcast_kind(name, a, b):
    """Return 'same' or 'row' (b is a (1, cols) row vector)."""
    if a.data.shape == b.data.shape:
        return "same"
    if b.data.shape == (1, a.data.shape[1]):
        return "row"
    raise ShapeError(f"{name}: incompatible shapes {a.data.shape} and {b.data.shape}")


def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    kind = _broadcast_kind("add", a, b)
    out = Tensor(a.data + b.data, (a, b))

    def bwd(g):
        a.grad += g
        if kind == "same":
            b.grad += g
        else:
            b.grad += g.sum(axis=0, keepdims=True)

    out._bwd = bwd
    return out


def sub(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    kind = _broadcast_kind("sub", a, b)
    out = Tensor(a.data - b.data, (a, b))

    def bwd(g):
        a.grad += g
        if kind == "same":
            b.grad -= g
        else:
            b.grad -= g.sum(axis=0, keepdims=True)

    out._bwd = bwd
    return out


def scale(a, c) -> Tensor:
    """Multiply by a python scalar constant (no gradient w.r.t. c)."""
    a = _as_tensor(a)
    c = float(c)
    out = Tensor(a.data * c, (a,))

    def bwd(g):
        a.grad += c * g

    out._bwd = bwd
    return out


def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.data.shape[1] != b.data.shape[0]:
        raise ShapeError(f"matmul: inner dims differ: {a.data.shape} @ {b.data.shape}")
    out = Tensor(a.data @ b.data, (a, b))

    def bwd(g):
        a.grad += g @ b.data.T
        b.grad += a.data.T @ g

    out._bwd = bwd
    return out


def spmm(adj, x: Tensor) -> Tensor:
    """NormalizedAdjacency @ dense. The adjacency is symmetric, so the
    backward product reuses the same matrix."""
    x = _as_tensor(x)
    if adj.n != x.data.shape[0]:
        raise ShapeError(f"spmm: adjacency is {adj.n}x{adj.n}, operand {x.data.shape}")
    out = Tensor(adj.matmul(x.data), (x,))

    def bwd(g):
        x.grad += adj.matmul(g)

    out._bwd = bwd
    return out


def relu(x: Tensor) -> Tensor:
    x = _as_tensor(x)
    out = Tensor(np.maximum(x.data, 0.0), (x,))

    def bwd(g):
        x.grad += g * (x.data > 0)

    out._bwd = bwd
    return out


def tanh(x: Tensor) -> Tensor:
    x = _as_tensor(x)
    t = np.tanh(x.data)
    out = Tensor(t, (x,))

    def bwd(g):
        x.grad += g * (1.0 - t * t)

    out._bwd = bwd
    return out


def softmax_rows(x: Tensor) -> Tensor:
    x = _as_tensor(x)
    shifted = x.data - x.data.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=1, keepdims=True)
    out = Tensor(y, (x,))

    def bwd(g):
        x.grad += (g - (g * y).sum(axis=1, keepdims=True)) * y

    out._bwd = bwd
    return out


def cross_entropy_mean(logits: Tensor, labels, idx) -> Tensor:
    """Mean softmax cross-entropy of logits[idx] against labels[idx]."""
    idx = np.asarray(idx, dtype=np.int64)
    if idx.size == 0:
        raise ValueError("cross_entropy_mean: empty index set")
    labels = np.asarray(labels, dtype=np.int64)
    rows = logits.data[idx]
    y = labels[idx]
    shifted = rows - rows.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    z = e.sum(axis=1, keepdims=True)
    log_probs = shifted - np.log(z)
    m = idx.size
    value = -log_probs[np.arange(m), y].mean()
    out = Tensor(np.array([[value]]), (logits,))

    def bwd(g):
        p = e / z
        p[np.arange(m), y] -= 1.0
        contrib = (g[0, 0] / m) * p
        np.add.at(logits.grad, idx, contrib)

    out._bwd = bwd
    return out


def take_rows(x: Tensor, idx) -> Tensor:
    x = _as_tensor(x)
    idx = np.asarray(idx, dtype=np.int64)
    out = Tensor(x.data[idx], (x,))

    def bwd(g):
        np.add.at(x.grad, idx, g)

    out._bwd = bwd
    return out


def col_mean(x: Tensor) -> Tensor:
    x = _as_tensor(x)
    n = x.data.shape[0]
    out = Tensor(x.data.mean(axis=0, keepdims=True), (x,))

    def bwd(g):
        x.grad += g / n

    out._bwd = bwd
    return out


def powi(x: Tensor, k: int) -> Tensor:
    if not isinstance(k, int) or k < 1:
        raise ValueError(f"powi: exponent must be an integer >= 1, got {k!r}")
    x = _as_tensor(x)
    out = Tensor(x.data**k, (x,))

    def bwd(g):
        x.grad += g * k * x.data ** (k - 1)

    out._bwd = bwd
    return out


def sqnorm(x: Tensor) -> Tensor:
    """Squared Frobenius/L2 norm, a (1, 1) scalar."""
    x = _as_tensor(x)
    out = Tensor(np.array([[float(np.sum(x.data * x.data))]]), (x,))

    def bwd(g):
        x.grad += 2.0 * g[0, 0] * x.data

    out._bwd = bwd
    return out


def dropout(x: Tensor, p: float, rng) -> Tensor:
    """Train-mode dropout with inverted scaling; mask drawn from rng."""
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {p}")
    x = _as_tensor(x)
    mask = (rng.random(x.data.shape) >= p) / (1.0 - p)
    out = Tensor(x.data * mask, (x,))

    def bwd(g):
        x.grad += g * mask

    out._bwd = bwd
    return out


class ParamSet:
    """Named trainable leaves."""

    def __init__(self, params=None):
        self._params = {}
        if params:
            for name, value in params.items():
                self.add(name, value)

    def add(self, name: str, value) -> Tensor:
        if name in self._params:
            raise ValueError(f"duplicate parameter name {name!r}")
        t = _as_tensor(value)
        if t._parents:
            raise ValueError(f"parameter {name!r} must be a leaf tensor")
        self._params[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name):
        return name in self._params

    def __iter__(self):
        return iter(self._params)

    def __len__(self):
        return len(self._params)

    def items(self):
        return self._params.items()

    def zero_grad(self):
        for t in self._params.values():
            t.zero_grad()

    def copy(self) -> "ParamSet":
        return ParamSet({k: v.data.copy() for k, v in self._params.items()})

    def to_dict(self):
        return {k: v.data.tolist() for k, v in self._params.items()}

    @classmethod
    def from_dict(cls, d) -> "ParamSet":
        return cls({k: np.asarray(v, dtype=np.float64) for k, v in d.items()})
