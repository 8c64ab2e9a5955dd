"""Dense tensors with reverse-mode automatic differentiation.

Only the operations the phone-augmented transformer needs are provided.
Arrays are numpy; float32 is used for training and inference, float64 for
gradient checking.  Every op records a closure that pushes its output
gradient back to its inputs, and :meth:`Tensor.backward` replays those
closures in reverse topological order.
"""
from contextlib import contextmanager

import numpy as np

_GRAD_ENABLED = True
CHECK_FINITE = True


class ShapeError(ValueError):
    pass


@contextmanager
def no_grad():
    """Run ops without recording a graph (inference)."""
    global _GRAD_ENABLED
    prev, _GRAD_ENABLED = _GRAD_ENABLED, False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False, _parents=(), _backward=None):
        self.data = data if isinstance(data, np.ndarray) else np.asarray(data, dtype=np.float32)
        self.requires_grad = requires_grad
        self.grad = None
        self._parents = _parents
        self._backward = _backward

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.dtype}, requires_grad={self.requires_grad})"

    def zero_grad(self):
        self.grad = None

    def backward(self, grad=None):
        """Accumulate d(self)/d(leaf) into every leaf's ``grad``."""
        if grad is None:
            if self.data.size != 1:
                raise ShapeError(f"backward() without a seed needs a scalar, got shape {self.shape}")
            grad = np.ones_like(self.data)
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
        grads = {id(self): grad}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                node.grad = g if node.grad is None else node.grad + g
                continue
            for parent, pg in node._backward(g):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                grads[key] = pg if key not in grads else grads[key] + pg

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return add(self, scale(other, -1.0))

    def __mul__(self, other):
        return mul(self, other) if isinstance(other, Tensor) else scale(self, other)

    __rmul__ = __mul__

    def __matmul__(self, other):
        return matmul(self, other)


def tensor(data, requires_grad=False, dtype=np.float32):
    return Tensor(np.array(data, dtype=dtype), requires_grad=requires_grad)


def _result(data, parents, backward):
    if CHECK_FINITE and not np.isfinite(data).all():
        raise FloatingPointError(f"non-finite values produced (shape {data.shape})")
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        return Tensor(data, True, parents, backward)
    return Tensor(data)


def _unbroadcast(g, shape):
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def add(a, b):
    out = a.data + b.data

    def back(g):
        return ((a, _unbroadcast(g, a.shape)), (b, _unbroadcast(g, b.shape)))

    return _result(out, (a, b), back)


def mul(a, b):
    out = a.data * b.data

    def back(g):
        return ((a, _unbroadcast(g * b.data, a.shape)), (b, _unbroadcast(g * a.data, b.shape)))

    return _result(out, (a, b), back)


def scale(a, c):
    c = a.data.dtype.type(c)

    def back(g):
        return ((a, g * c),)

    return _result(a.data * c, (a,), back)


def matmul(a, b):
    """Matrix product over the last two axes; leading axes broadcast."""
    if a.data.ndim < 2 or b.data.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
    out = a.data @ b.data

    def back(g):
        ga = g @ np.swapaxes(b.data, -1, -2) if a.requires_grad else None
        gb = None
        if b.requires_grad:
            if b.data.ndim == 2 and a.data.ndim > 2:
                gb = a.data.reshape(-1, a.shape[-1]).T @ g.reshape(-1, g.shape[-1])
            else:
                gb = np.swapaxes(a.data, -1, -2) @ g
        if gb is not None and gb.shape != b.shape:
            gb = _unbroadcast(gb, b.shape)
        if ga is not None and ga.shape != a.shape:
            ga = _unbroadcast(ga, a.shape)
        return ((a, ga), (b, gb))

    return _result(out, (a, b), back)


def reshape(a, shape):
    src = a.shape

    def back(g):
        return ((a, g.reshape(src)),)

    return _result(a.data.reshape(shape), (a,), back)


def transpose(a, axes):
    inv = np.argsort(axes)

    def back(g):
        return ((a, np.transpose(g, inv)),)

    return _result(np.transpose(a.data, axes), (a,), back)


def sum_all(a):
    def back(g):
        return ((a, np.broadcast_to(g, a.shape).copy()),)

    return _result(np.asarray(a.data.sum(), dtype=a.dtype), (a,), back)


def mean_all(a):
    return scale(sum_all(a), 1.0 / a.data.size)


def square(a):
    def back(g):
        return ((a, 2.0 * a.data * g),)

    return _result(a.data * a.data, (a,), back)


def gelu(a):
    x = a.data
    c = x.dtype.type(np.sqrt(2.0 / np.pi))
    inner = c * (x + x.dtype.type(0.044715) * x * x * x)
    t = np.tanh(inner)
    out = 0.5 * x * (1.0 + t)

    def back(g):
        d = 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * c * (1.0 + x.dtype.type(3 * 0.044715) * x * x)
        return ((a, g * d),)

    return _result(out.astype(x.dtype, copy=False), (a,), back)


def softmax(x, mask=None):
    """Softmax over the last axis.  ``mask`` is an additive constant array
    (0 or -inf) broadcast against ``x``."""
    z = x.data if mask is None else x.data + mask
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=-1, keepdims=True)

    def back(g):
        return ((x, y * (g - (g * y).sum(axis=-1, keepdims=True))),)

    return _result(y, (x,), back)


def softmax_rows(x):
    if x.data.ndim != 2:
        raise ShapeError(f"softmax_rows expects a matrix, got {x.shape}")
    return softmax(x)


def layer_norm(x, gain, bias, eps=1e-5):
    if x.shape[-1] < 2:
        raise ShapeError("layer_norm needs at least two features")
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = xhat * gain.data + bias.data

    def back(g):
        dxhat = g * gain.data
        dx = inv * (dxhat - dxhat.mean(axis=-1, keepdims=True)
                    - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True))
        lead = tuple(range(g.ndim - 1))
        return ((x, dx), (gain, (g * xhat).sum(axis=lead)), (bias, g.sum(axis=lead)))

    return _result(out.astype(x.dtype, copy=False), (x, gain, bias), back)


def embedding(table, ids):
    ids = np.asarray(ids)

    def back(g):
        gt = np.zeros_like(table.data)
        np.add.at(gt, ids.reshape(-1), g.reshape(-1, g.shape[-1]))
        return ((table, gt),)

    return _result(table.data[ids], (table,), back)


def dropout(x, rate, rng, training=True):
    """Inverted dropout; identity outside training or at rate 0."""
    if not training or rate <= 0.0:
        return x
    keep = (rng.random(x.shape, dtype=np.float32) >= rate).astype(x.dtype) / x.dtype.type(1.0 - rate)
    return mul(x, Tensor(keep))


def cross_entropy(logits, targets, pad_id=0, smoothing=0.0):
    """Mean negative log-likelihood of ``targets`` over non-pad positions.

    ``logits`` is (N, V) and ``targets`` (N,).  With ``smoothing`` > 0 the
    target distribution puts ``smoothing`` mass uniformly over the vocabulary.
    """
    targets = np.asarray(targets).reshape(-1)
    x = logits.data.reshape(-1, logits.shape[-1])
    keep = targets != pad_id
    n = int(keep.sum())
    if n == 0:
        raise ValueError("cross_entropy: every target is padding")
    if targets.max(initial=0) >= x.shape[1] or targets.min(initial=0) < 0:
        raise ValueError("cross_entropy: target id out of range")
    z = x - x.max(axis=1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=1, keepdims=True))
    logp = z - lse
    rows = np.nonzero(keep)[0]
    nll = -logp[rows, targets[rows]]
    if smoothing > 0.0:
        nll = (1.0 - smoothing) * nll - smoothing * logp[rows].mean(axis=1)
    loss = np.asarray(nll.sum() / n, dtype=x.dtype)

    def back(g):
        p = np.exp(logp)
        d = np.zeros_like(x)
        d[rows] = p[rows]
        d[rows, targets[rows]] -= 1.0 - smoothing
        if smoothing > 0.0:
            d[rows] -= smoothing / x.shape[1]
        return ((logits, (d * (g / n)).reshape(logits.shape)),)

    return _result(loss, (logits,), back)


def causal_mask(n, dtype=np.float32):
    """Additive (n, n) mask: 0 on and below the diagonal, -inf above."""
    m = np.zeros((n, n), dtype=dtype)
    m[np.triu_indices(n, 1)] = -np.inf
    return m


def attention(q, k, v, mask=None, temp=1.0):
    """softmax(q kᵀ / (temp·√d) + mask) v over the last two axes."""
    if temp <= 0:
        raise ValueError(f"attention temperature must be positive, got {temp}")
    d = q.shape[-1]
    if k.shape[-1] != d:
        raise ShapeError(f"query/key width mismatch: {q.shape} vs {k.shape}")
    scores = scale(matmul(q, transpose(k, _swap_last(k.data.ndim))), 1.0 / (temp * np.sqrt(d)))
    return matmul(softmax(scores, mask), v)


def _swap_last(ndim):
    axes = list(range(ndim))
    axes[-1], axes[-2] = axes[-2], axes[-1]
    return tuple(axes)
