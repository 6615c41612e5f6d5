"""Dense tensors with reverse-mode automatic differentiation.

A :class:`Tensor` wraps a numpy array. Every differentiable operation returns a
new tensor that remembers its parents and a closure propagating the output
gradient back to them; :meth:`Tensor.backward` walks that graph in reverse
topological order. Graph nodes are only recorded when some parent requires a
gradient, so frozen sub-networks cost a plain forward pass.
"""
import contextlib

import numpy as np

from .defaults import BN_EPS, BN_MOMENTUM, LN_EPS, POOL_EPS
from .errors import ShapeError, LabelError, VocabularyError

_state = {'dtype': np.float64, 'grad': True}


def get_default_dtype():
    return _state['dtype']


def set_default_dtype(dtype):
    """Select 32- or 64-bit storage for newly created tensors"""
    dtype = np.dtype(dtype).type
    if dtype not in (np.float32, np.float64):
        raise ValueError("only float32 and float64 tensors are supported")
    _state['dtype'] = dtype


@contextlib.contextmanager
def default_dtype(dtype):
    previous = _state['dtype']
    set_default_dtype(dtype)
    try:
        yield
    finally:
        _state['dtype'] = previous


@contextlib.contextmanager
def no_grad():
    """Disable graph recording, e.g. for scoring"""
    previous = _state['grad']
    _state['grad'] = False
    try:
        yield
    finally:
        _state['grad'] = previous


def _unbroadcast(grad, shape):
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Tensor(object):
    """n-dimensional array with an optional gradient.

    Args:
        data (array_like): values, cast to the default dtype unless ``dtype`` is given
        requires_grad (bool): accumulate gradients into ``grad`` on backward
        name (str): optional label, used by modules for parameter naming

    """

    __slots__ = 'data', 'grad', 'requires_grad', 'name', '_backward', '_prev'

    def __init__(self, data, requires_grad=False, name=None, dtype=None):
        if isinstance(data, Tensor):
            data = data.data
        self.data = np.array(data, dtype=dtype or get_default_dtype())
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self.name = name
        self._backward = None
        self._prev = ()

    @classmethod
    def _from_op(cls, data, parents, backward):
        out = cls.__new__(cls)
        out.data = data
        out.grad = None
        out.name = None
        tracked = tuple(p for p in parents if p.requires_grad) if _state['grad'] else ()
        out.requires_grad = bool(tracked)
        out._prev = tracked
        out._backward = backward if tracked else None
        return out

    def _accum(self, grad):
        if not self.requires_grad:
            return
        grad = _unbroadcast(np.asarray(grad), self.data.shape)
        if self.grad is None:
            self.grad = np.array(grad, dtype=self.data.dtype).reshape(self.data.shape)
        else:
            self.grad = self.grad + grad

    def _topo(self):
        order, seen = [], set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if node in seen:
                continue
            seen.add(node)
            stack.append((node, True))
            for parent in node._prev:
                if parent not in seen:
                    stack.append((parent, False))
        return order

    def backward(self, grad=None):
        """Back-propagate from this tensor (a scalar unless ``grad`` is given)."""
        if not self.requires_grad:
            raise RuntimeError("backward() on a tensor that does not require grad")
        if grad is None:
            if self.data.size != 1:
                raise ShapeError("backward() needs an explicit gradient for shape {}".format(self.shape))
            grad = np.ones_like(self.data)
        self.grad = np.asarray(grad, dtype=self.data.dtype)
        for node in reversed(self._topo()):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    def zero_grad(self):
        self.grad = None

    def detach(self):
        return Tensor(self.data, dtype=self.data.dtype.type)

    def numpy(self):
        return self.data

    def item(self):
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else self.data.item()

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def __len__(self):
        return len(self.data)

    def __repr__(self):
        return "Tensor(shape={}, requires_grad={})".format(self.shape, self.requires_grad)

    def _wrap(self, other):
        if isinstance(other, Tensor):
            return other
        return Tensor(other, dtype=self.data.dtype.type)

    #
    # Elementwise arithmetic (numpy broadcasting)
    #

    def __add__(self, other):
        other = self._wrap(other)

        def backward(g):
            self._accum(g)
            other._accum(g)
        return Tensor._from_op(self.data + other.data, (self, other), backward)

    __radd__ = __add__

    def __neg__(self):
        return self * -1.0

    def __sub__(self, other):
        return self + (-self._wrap(other))

    def __rsub__(self, other):
        return self._wrap(other) + (-self)

    def __mul__(self, other):
        other = self._wrap(other)

        def backward(g):
            self._accum(g * other.data)
            other._accum(g * self.data)
        return Tensor._from_op(self.data * other.data, (self, other), backward)

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = self._wrap(other)

        def backward(g):
            self._accum(g / other.data)
            other._accum(-g * self.data / other.data ** 2)
        return Tensor._from_op(self.data / other.data, (self, other), backward)

    def __rtruediv__(self, other):
        return self._wrap(other) / self

    def __pow__(self, power):
        if isinstance(power, Tensor):
            raise TypeError("only scalar powers are supported")

        def backward(g):
            self._accum(g * power * self.data ** (power - 1))
        return Tensor._from_op(self.data ** power, (self,), backward)

    def __matmul__(self, other):
        other = self._wrap(other)
        if self.ndim < 2 or other.ndim < 2 or self.shape[-1] != other.shape[-2]:
            raise ShapeError("matmul: {} @ {} (inner dims {} and {} differ)".format(
                self.shape, other.shape, self.shape[-1:], other.shape[-2:-1]))

        def backward(g):
            self._accum(g @ np.swapaxes(other.data, -1, -2))
            other._accum(np.swapaxes(self.data, -1, -2) @ g)
        return Tensor._from_op(self.data @ other.data, (self, other), backward)

    def exp(self):
        out = np.exp(self.data)

        def backward(g):
            self._accum(g * out)
        return Tensor._from_op(out, (self,), backward)

    def log(self):
        def backward(g):
            self._accum(g / self.data)
        return Tensor._from_op(np.log(self.data), (self,), backward)

    def tanh(self):
        out = np.tanh(self.data)

        def backward(g):
            self._accum(g * (1.0 - out ** 2))
        return Tensor._from_op(out, (self,), backward)

    def relu(self):
        mask = self.data > 0

        def backward(g):
            self._accum(g * mask)
        return Tensor._from_op(self.data * mask, (self,), backward)

    #
    # Reductions and shape manipulation
    #

    def sum(self, axis=None, keepdims=False):
        def backward(g):
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            self._accum(np.broadcast_to(g, self.data.shape))
        return Tensor._from_op(np.asarray(self.data.sum(axis=axis, keepdims=keepdims)), (self,), backward)

    def mean(self, axis=None, keepdims=False):
        count = self.data.size if axis is None else np.prod([self.data.shape[a] for a in np.atleast_1d(axis)])
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / count)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])

        def backward(g):
            self._accum(g.reshape(self.data.shape))
        return Tensor._from_op(self.data.reshape(shape), (self,), backward)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        axes = axes or tuple(reversed(range(self.ndim)))
        inverse = np.argsort(axes)

        def backward(g):
            self._accum(g.transpose(inverse))
        return Tensor._from_op(self.data.transpose(axes), (self,), backward)

    def __getitem__(self, index):
        def backward(g):
            full = np.zeros_like(self.data)
            np.add.at(full, index, g)
            self._accum(full)
        return Tensor._from_op(np.asarray(self.data[index]), (self,), backward)


def _pair(value):
    return (value, value) if np.isscalar(value) else tuple(value)


def _as_tensor(value):
    return value if isinstance(value, Tensor) else Tensor(value)


#
# Layers
#

def conv2d(x, weight, bias=None, stride=1, padding=0):
    """2-D cross-correlation over (N, C, H, W) inputs with (O, C, kh, kw) kernels."""
    sh, sw = _pair(stride)
    ph, pw = _pair(padding)
    if x.ndim != 4 or weight.ndim != 4:
        raise ShapeError("conv2d expects 4-d input and kernel, got {} and {}".format(x.shape, weight.shape))
    N, C, H, W = x.shape
    O, Ck, kh, kw = weight.shape
    if C != Ck:
        raise ShapeError("conv2d: input has {} channels (dim 1) but kernel expects {} (dim 1)".format(C, Ck))
    Ho = (H + 2 * ph - kh) // sh + 1
    Wo = (W + 2 * pw - kw) // sw + 1
    if Ho < 1 or Wo < 1:
        raise ShapeError("conv2d: input {}x{} (dims 2, 3) too small for kernel {}x{} with padding {}"
                         .format(H, W, kh, kw, (ph, pw)))
    xp = np.pad(x.data, ((0, 0), (0, 0), (ph, ph), (pw, pw))) if (ph or pw) else x.data
    w = weight.data

    def window(i, j):
        return xp[:, :, i:i + sh * Ho:sh, j:j + sw * Wo:sw]

    out = np.zeros((N, Ho, Wo, O), dtype=xp.dtype)
    for i in range(kh):
        for j in range(kw):
            out += np.tensordot(window(i, j), w[:, :, i, j], axes=([1], [1]))
    out = np.ascontiguousarray(out.transpose(0, 3, 1, 2))
    if bias is not None:
        out += bias.data.reshape(1, O, 1, 1)

    def backward(g):
        if weight.requires_grad:
            dw = np.empty_like(w)
            for i in range(kh):
                for j in range(kw):
                    dw[:, :, i, j] = np.tensordot(g, window(i, j), axes=([0, 2, 3], [0, 2, 3]))
            weight._accum(dw)
        if bias is not None:
            bias._accum(g.sum(axis=(0, 2, 3)))
        if x.requires_grad:
            dxp = np.zeros_like(xp)
            for i in range(kh):
                for j in range(kw):
                    contrib = np.tensordot(g, w[:, :, i, j], axes=([1], [0]))
                    dxp[:, :, i:i + sh * Ho:sh, j:j + sw * Wo:sw] += contrib.transpose(0, 3, 1, 2)
            x._accum(dxp[:, :, ph:ph + H, pw:pw + W])

    parents = (x, weight) if bias is None else (x, weight, bias)
    return Tensor._from_op(out, parents, backward)


def batch_norm(x, gamma, beta, running_mean=None, running_var=None, training=True,
               momentum=BN_MOMENTUM, eps=BN_EPS):
    """Per-channel (axis 1) standardization followed by an affine map.

    In training mode batch statistics are used and the running buffers, when
    given, are updated in place; in eval mode the running buffers are used.
    """
    C = x.shape[1]
    axes = (0,) + tuple(range(2, x.ndim))
    shape = (1, C) + (1,) * (x.ndim - 2)
    if training:
        if x.shape[0] < 2:
            raise ShapeError("batch_norm: batch size {} in train mode, need at least 2".format(x.shape[0]))
        mean = x.data.mean(axis=axes)
        var = x.data.var(axis=axes)
        if running_mean is not None:
            running_mean *= 1.0 - momentum
            running_mean += momentum * mean
            running_var *= 1.0 - momentum
            running_var += momentum * var
    else:
        mean = running_mean.astype(x.data.dtype, copy=False)
        var = running_var.astype(x.data.dtype, copy=False)
    inv = (1.0 / np.sqrt(var + eps)).reshape(shape).astype(x.data.dtype)
    xhat = (x.data - mean.reshape(shape)) * inv
    out = xhat * gamma.data.reshape(shape) + beta.data.reshape(shape)

    def backward(g):
        gamma._accum((g * xhat).sum(axis=axes))
        beta._accum(g.sum(axis=axes))
        if x.requires_grad:
            dxhat = g * gamma.data.reshape(shape)
            if training:
                M = x.data.size / C
                dx = inv / M * (M * dxhat - dxhat.sum(axis=axes, keepdims=True)
                                - xhat * (dxhat * xhat).sum(axis=axes, keepdims=True))
            else:
                dx = dxhat * inv
            x._accum(dx)

    return Tensor._from_op(out, (x, gamma, beta), backward)


def prelu(x, slopes):
    """Parametric ReLU: x for x >= 0, a * x otherwise, one slope per channel (axis 1) or shared."""
    n = slopes.size
    if x.ndim > 1 and n not in (1, x.shape[1]):
        raise ShapeError("prelu: {} slopes for {} channels (dim 1)".format(n, x.shape[1]))
    shape = [1] * x.ndim
    if n > 1:
        shape[1] = n
    a = slopes.data.reshape(shape)
    positive = x.data >= 0
    out = np.where(positive, x.data, a * x.data)

    def backward(g):
        x._accum(g * np.where(positive, 1.0, a))
        if slopes.requires_grad:
            slopes._accum(_unbroadcast(g * np.where(positive, 0.0, x.data), tuple(shape)).reshape(slopes.shape))

    return Tensor._from_op(out, (x, slopes), backward)


def linear(x, weight, bias=None):
    """Affine map x @ W + b with W of shape (in, out)."""
    if x.shape[-1] != weight.shape[0]:
        raise ShapeError("linear: input feature dim {} (last dim) does not match weight dim 0 of {}"
                         .format(x.shape[-1], weight.shape))
    out = x.data @ weight.data
    if bias is not None:
        if bias.shape != (weight.shape[1],):
            raise ShapeError("linear: bias shape {} does not match {} outputs".format(bias.shape, weight.shape[1]))
        out = out + bias.data

    def backward(g):
        g2 = g.reshape(-1, weight.shape[1])
        weight._accum(x.data.reshape(-1, weight.shape[0]).T @ g2)
        if bias is not None:
            bias._accum(g2.sum(axis=0))
        x._accum(g @ weight.data.T)

    parents = (x, weight) if bias is None else (x, weight, bias)
    return Tensor._from_op(out, parents, backward)


def stats_pool(x, axis=-2, eps=POOL_EPS):
    """Concatenate per-dimension mean and population std over the frame axis.

    A (..., F, D) input becomes (..., 2D); the std is floored at ``eps``.
    """
    axis = axis % x.ndim
    F = x.shape[axis]
    if F < 1:
        raise ShapeError("stats_pool needs at least one frame")
    mean = x.data.mean(axis=axis, keepdims=True)
    diff = x.data - mean
    std = np.sqrt((diff ** 2).mean(axis=axis, keepdims=True))
    floored = std < eps
    std = np.where(floored, eps, std)
    out = np.concatenate([np.squeeze(mean, axis), np.squeeze(std, axis)], axis=-1)

    def backward(g):
        D = x.shape[-1]
        gm = np.expand_dims(g[..., :D], axis)
        gs = np.expand_dims(g[..., D:], axis)
        x._accum(gm / F + np.where(floored, 0.0, gs / std) * diff / F)

    return Tensor._from_op(out, (x,), backward)


def mean_pool(x, axis=-2):
    """Mean over the frame axis only (the pooling ablation)."""
    return x.mean(axis=axis)


def log_softmax(x, axis=-1):
    """Log-posteriors via the max-shifted log-sum-exp."""
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    out = shifted - np.log(np.exp(shifted).sum(axis=axis, keepdims=True))

    def backward(g):
        x._accum(g - np.exp(out) * g.sum(axis=axis, keepdims=True))

    return Tensor._from_op(out, (x,), backward)


def softmax(x, axis=-1, mask=None):
    """Softmax; positions where ``mask`` is False get exactly zero weight."""
    data = x.data if mask is None else np.where(mask, x.data, -np.inf)
    shifted = data - data.max(axis=axis, keepdims=True)
    e = np.exp(shifted) if mask is None else np.where(mask, np.exp(shifted), 0.0)
    p = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        x._accum(p * (g - (g * p).sum(axis=axis, keepdims=True)))

    return Tensor._from_op(p, (x,), backward)


def cross_entropy(log_posteriors, labels):
    """Mean negative log-likelihood of integer labels.

    Args:
        log_posteriors (Tensor): (C,) or (N, C) log-probabilities
        labels (int or array): class index or (N,) indices in [0, C)
    """
    lp = log_posteriors.data.reshape(-1, log_posteriors.shape[-1])
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    N, C = lp.shape
    if labels.size != N:
        raise ShapeError("cross_entropy: {} labels for {} rows".format(labels.size, N))
    if np.any(labels < 0) or np.any(labels >= C):
        raise LabelError("cross_entropy: labels must lie in [0, {}), got {}".format(C, labels.tolist()))
    rows = np.arange(N)
    loss = -lp[rows, labels].mean()

    def backward(g):
        grad = np.zeros_like(lp)
        grad[rows, labels] = -g / N
        log_posteriors._accum(grad.reshape(log_posteriors.shape))

    return Tensor._from_op(np.asarray(loss, dtype=lp.dtype), (log_posteriors,), backward)


def layer_norm(x, gamma, beta, eps=LN_EPS):
    """Normalize over the last axis, then apply gamma/beta."""
    D = x.shape[-1]
    mean = x.data.mean(axis=-1, keepdims=True)
    var = x.data.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mean) * inv
    out = xhat * gamma.data + beta.data

    def backward(g):
        gamma._accum((g * xhat).reshape(-1, D).sum(axis=0))
        beta._accum(g.reshape(-1, D).sum(axis=0))
        if x.requires_grad:
            dxhat = g * gamma.data
            x._accum(inv / D * (D * dxhat - dxhat.sum(axis=-1, keepdims=True)
                                - xhat * (dxhat * xhat).sum(axis=-1, keepdims=True)))

    return Tensor._from_op(out, (x, gamma, beta), backward)


def embedding(ids, weight):
    """Row lookup ``weight[ids]`` for an integer id array."""
    ids = np.asarray(ids, dtype=np.int64)
    if ids.size and (ids.min() < 0 or ids.max() >= weight.shape[0]):
        raise VocabularyError("token id out of range [0, {})".format(weight.shape[0]))

    def backward(g):
        grad = np.zeros_like(weight.data)
        np.add.at(grad, ids, g)
        weight._accum(grad)

    return Tensor._from_op(weight.data[ids], (weight,), backward)


_GELU_C = np.sqrt(2.0 / np.pi)


def gelu(x):
    """tanh approximation of the Gaussian error linear unit"""
    inner = _GELU_C * (x.data + 0.044715 * x.data ** 3)
    t = np.tanh(inner)
    out = 0.5 * x.data * (1.0 + t)

    def backward(g):
        d_inner = _GELU_C * (1.0 + 3 * 0.044715 * x.data ** 2)
        x._accum(g * (0.5 * (1.0 + t) + 0.5 * x.data * (1.0 - t ** 2) * d_inner))

    return Tensor._from_op(out, (x,), backward)
