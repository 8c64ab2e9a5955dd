"""Parameter containers and the layers PAT is built from."""
import numpy as np

from . import tensor as T
from .tensor import Tensor


class Module:
    """Walks attributes (modules, parameters, lists of modules) to find
    parameters, in a deterministic attribute-order traversal."""

    training = True

    def named_parameters(self, prefix=""):
        for name, value in vars(self).items():
            full = f"{prefix}{name}"
            if isinstance(value, Tensor) and value.requires_grad:
                yield full, value
            elif isinstance(value, Module):
                yield from value.named_parameters(full + ".")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{full}.{i}.")

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def modules(self):
        yield self
        for value in vars(self).values():
            if isinstance(value, Module):
                yield from value.modules()
            elif isinstance(value, (list, tuple)):
                for item in value:
                    if isinstance(item, Module):
                        yield from item.modules()

    def train(self, mode=True):
        for m in self.modules():
            m.training = mode
        return self

    def eval(self):
        return self.train(False)

    def zero_grad(self):
        for p in self.parameters():
            p.grad = None


def xavier_uniform(rng, fan_in, fan_out, dtype):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return Tensor(rng.uniform(-limit, limit, size=(fan_in, fan_out)).astype(dtype), requires_grad=True)


class Linear(Module):
    def __init__(self, rng, d_in, d_out, dtype=np.float32, bias=True):
        self.weight = xavier_uniform(rng, d_in, d_out, dtype)
        self.bias = Tensor(np.zeros(d_out, dtype=dtype), requires_grad=True) if bias else None

    def __call__(self, x):
        y = T.matmul(x, self.weight)
        return T.add(y, self.bias) if self.bias is not None else y


class LayerNorm(Module):
    def __init__(self, d, dtype=np.float32):
        self.gain = Tensor(np.ones(d, dtype=dtype), requires_grad=True)
        self.bias = Tensor(np.zeros(d, dtype=dtype), requires_grad=True)

    def __call__(self, x):
        return T.layer_norm(x, self.gain, self.bias)


class Embedding(Module):
    def __init__(self, rng, n, d, dtype=np.float32):
        self.table = xavier_uniform(rng, n, d, dtype)

    def __call__(self, ids):
        return T.embedding(self.table, ids)
