"""Trainable layers built on EmoFuse.tensor."""
import contextlib
from collections import OrderedDict

import numpy as np

from .defaults import PRELU_INIT, BN_EPS, BN_MOMENTUM
from .errors import ShapeError
from .tensor import (Tensor, get_default_dtype, no_grad, conv2d, batch_norm, prelu, linear,
                     layer_norm, embedding, softmax, gelu)


def init_weight(rng, shape, fan_in, gain=2.0):
    """Zero-mean normal weights with variance gain / fan_in."""
    return rng.normal(0.0, np.sqrt(gain / fan_in), size=shape).astype(get_default_dtype())


def parameter(data, name=None):
    return Tensor(data, requires_grad=True, name=name)


@contextlib.contextmanager
def evaluating(model):
    """Eval mode without graph recording; the previous mode is restored on exit."""
    was_training = model.training
    model.eval()
    try:
        with no_grad():
            yield model
    finally:
        model.train(was_training)


class Module(object):
    """Base class for layers and models.

    Tensor attributes are parameters, Module attributes (or lists of Modules)
    are sub-modules, and numpy arrays registered with ``register_buffer`` are
    non-trainable state such as running statistics. Names follow attribute
    order, so ``state_dict`` keys are stable.
    """

    def __init__(self):
        self.training = True
        self._buffers = OrderedDict()

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    def forward(self, *args, **kwargs):
        raise NotImplementedError

    def register_buffer(self, name, array):
        self._buffers[name] = np.asarray(array, dtype=get_default_dtype())

    def _children(self):
        for key, value in vars(self).items():
            if isinstance(value, Module):
                yield key, value
            elif isinstance(value, (list, tuple)) and value and all(isinstance(v, Module) for v in value):
                for i, v in enumerate(value):
                    yield '{}.{}'.format(key, i), v

    def named_parameters(self, prefix=''):
        out = []
        for key, value in vars(self).items():
            if isinstance(value, Tensor):
                out.append((prefix + key, value))
        for key, child in self._children():
            out.extend(child.named_parameters(prefix + key + '.'))
        return out

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def named_buffers(self, prefix=''):
        out = [(prefix + k, v) for k, v in self._buffers.items()]
        for key, child in self._children():
            out.extend(child.named_buffers(prefix + key + '.'))
        return out

    def modules(self):
        yield self
        for _, child in self._children():
            for m in child.modules():
                yield m

    def state_dict(self):
        """Ordered copy of every parameter and buffer, keyed by dotted name"""
        state = OrderedDict((name, p.data.copy()) for name, p in self.named_parameters())
        state.update((name, b.copy()) for name, b in self.named_buffers())
        return state

    def load_state_dict(self, state, strict=True):
        """Copy arrays into parameters and buffers by name.

        With ``strict`` every name must be present on both sides with equal shapes.
        """
        params = dict(self.named_parameters())
        buffers = dict(self.named_buffers())
        if strict:
            missing = sorted((set(params) | set(buffers)) - set(state))
            unexpected = sorted(set(state) - set(params) - set(buffers))
            if missing or unexpected:
                raise ShapeError("state mismatch, missing {} unexpected {}".format(missing, unexpected))
        for name, array in state.items():
            target = params[name].data if name in params else buffers.get(name)
            if target is None:
                continue
            if target.shape != array.shape:
                raise ShapeError("{}: stored shape {} does not match {}".format(name, array.shape, target.shape))
            target[...] = array

    def train(self, mode=True):
        for m in self.modules():
            m.training = mode
        return self

    def eval(self):
        return self.train(False)

    def zero_grad(self):
        for p in self.parameters():
            p.zero_grad()

    def freeze(self, frozen=True):
        for p in self.parameters():
            p.requires_grad = not frozen
            p.zero_grad()
        return self

    def count_parameters(self):
        return int(sum(p.size for p in self.parameters()))


class Sequential(Module):

    def __init__(self, *layers):
        super().__init__()
        self.layers = list(layers)

    def forward(self, x):
        for layer in self.layers:
            x = layer(x)
        return x


class Linear(Module):

    def __init__(self, n_in, n_out, rng, bias=True, gain=2.0):
        super().__init__()
        self.weight = parameter(init_weight(rng, (n_in, n_out), n_in, gain))
        self.bias = parameter(np.zeros(n_out)) if bias else None

    def forward(self, x):
        return linear(x, self.weight, self.bias)


class Conv2d(Module):

    def __init__(self, n_in, n_out, kernel, rng, stride=1, padding=0, bias=False):
        super().__init__()
        self.stride = stride
        self.padding = padding
        self.weight = parameter(init_weight(rng, (n_out, n_in, kernel, kernel), n_in * kernel * kernel))
        self.bias = parameter(np.zeros(n_out)) if bias else None

    def forward(self, x):
        return conv2d(x, self.weight, self.bias, self.stride, self.padding)


class BatchNorm(Module):
    """Batch normalization over axis 1 for (N, C) or (N, C, H, W) inputs"""

    def __init__(self, channels, momentum=BN_MOMENTUM, eps=BN_EPS):
        super().__init__()
        self.momentum = momentum
        self.eps = eps
        self.gamma = parameter(np.ones(channels))
        self.beta = parameter(np.zeros(channels))
        self.register_buffer('running_mean', np.zeros(channels))
        self.register_buffer('running_var', np.ones(channels))

    def forward(self, x):
        return batch_norm(x, self.gamma, self.beta, self._buffers['running_mean'],
                          self._buffers['running_var'], self.training, self.momentum, self.eps)


class PReLU(Module):

    def __init__(self, channels=1, init=PRELU_INIT):
        super().__init__()
        self.slopes = parameter(np.full(channels, init))

    def forward(self, x):
        return prelu(x, self.slopes)


class LayerNorm(Module):

    def __init__(self, dim):
        super().__init__()
        self.gamma = parameter(np.ones(dim))
        self.beta = parameter(np.zeros(dim))

    def forward(self, x):
        return layer_norm(x, self.gamma, self.beta)


class Embedding(Module):

    def __init__(self, n_rows, dim, rng, std=0.02):
        super().__init__()
        self.weight = parameter(rng.normal(0.0, std, size=(n_rows, dim)))

    def forward(self, ids):
        return embedding(ids, self.weight)


class MultiHeadSelfAttention(Module):
    """Scaled dot-product self-attention over (N, L, D) inputs.

    ``mask`` is an (N, L) boolean array marking real tokens; masked keys get
    exactly zero attention weight.
    """

    def __init__(self, dim, n_heads, rng):
        super().__init__()
        if dim % n_heads:
            raise ShapeError("hidden dim {} is not divisible by {} heads".format(dim, n_heads))
        self.n_heads = n_heads
        self.query = Linear(dim, dim, rng, gain=1.0)
        self.key = Linear(dim, dim, rng, gain=1.0)
        self.value = Linear(dim, dim, rng, gain=1.0)
        self.output = Linear(dim, dim, rng, gain=1.0)
        self.last_weights = None

    def _split(self, x, N, L):
        return x.reshape(N, L, self.n_heads, -1).transpose(0, 2, 1, 3)

    def forward(self, x, mask=None):
        N, L, D = x.shape
        q = self._split(self.query(x), N, L)
        k = self._split(self.key(x), N, L)
        v = self._split(self.value(x), N, L)
        scores = (q @ k.transpose(0, 1, 3, 2)) * (1.0 / np.sqrt(D // self.n_heads))
        weights = softmax(scores, axis=-1, mask=None if mask is None else mask[:, None, None, :])
        self.last_weights = weights.data
        context = (weights @ v).transpose(0, 2, 1, 3).reshape(N, L, D)
        return self.output(context)


class TransformerBlock(Module):
    """Post-norm encoder block: attention and feed-forward, each with a residual and LayerNorm"""

    def __init__(self, dim, n_heads, ffn_dim, rng):
        super().__init__()
        self.attention = MultiHeadSelfAttention(dim, n_heads, rng)
        self.norm1 = LayerNorm(dim)
        self.ffn_in = Linear(dim, ffn_dim, rng)
        self.ffn_out = Linear(ffn_dim, dim, rng, gain=1.0)
        self.norm2 = LayerNorm(dim)

    def forward(self, x, mask=None):
        x = self.norm1(x + self.attention(x, mask))
        return self.norm2(x + self.ffn_out(gelu(self.ffn_in(x))))
