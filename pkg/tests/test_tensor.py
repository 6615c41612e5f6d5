import numpy as np
import pytest

from EmoFuse import ShapeError, LabelError
from EmoFuse.nn import BatchNorm, Linear, Module, MultiHeadSelfAttention, PReLU
from EmoFuse.tensor import (Tensor, no_grad, conv2d, batch_norm, prelu, linear, stats_pool, mean_pool,
                            log_softmax, softmax, cross_entropy)
from config import *


def test_conv2d_sum_of_ones(float64):
    out = conv2d(Tensor(np.ones((1, 1, 3, 3))), Tensor(np.ones((1, 1, 2, 2))))
    assert out.shape == (1, 1, 2, 2)
    assert np.all(out.data == 4.0)


def test_conv2d_identity_kernel(float64, rng):
    x = rng.standard_normal((2, 1, 5, 4))
    out = conv2d(Tensor(x), Tensor(np.ones((1, 1, 1, 1))))
    np.testing.assert_array_equal(out.data, x)


def test_conv2d_channel_mismatch():
    with pytest.raises(ShapeError, match='channels'):
        conv2d(Tensor(np.ones((1, 2, 3, 3))), Tensor(np.ones((1, 3, 2, 2))))


def test_batch_norm_zero_variance_channel(float64):
    x = Tensor(np.full((4, 1, 2, 2), 7.0))
    out = batch_norm(x, Tensor(np.ones(1)), Tensor(np.full(1, 3.0)))
    np.testing.assert_allclose(out.data, 3.0)


def test_batch_norm_standardizes(float64, rng):
    x = Tensor(5.0 + 3.0 * rng.standard_normal((8, 3, 4, 4)))
    out = batch_norm(x, Tensor(np.ones(3)), Tensor(np.zeros(3)))
    np.testing.assert_allclose(out.data.mean(axis=(0, 2, 3)), 0.0, atol=1e-10)
    np.testing.assert_allclose(out.data.var(axis=(0, 2, 3)), 1.0, atol=1e-4)


def test_batch_norm_needs_two_examples():
    with pytest.raises(ShapeError, match='batch size 1'):
        BatchNorm(2)(Tensor(np.ones((1, 2))))


def test_batch_norm_eval_uses_running_stats(float64, rng):
    bn = BatchNorm(2)
    bn(Tensor(rng.standard_normal((16, 2)) + 4.0))
    assert np.all(bn._buffers['running_mean'] > 0.1)
    bn.eval()
    single = bn(Tensor(np.full((1, 2), 4.0)))
    assert single.shape == (1, 2)


def test_prelu_branches():
    slopes = Tensor(np.full(1, 0.25))
    assert prelu(Tensor([2.0]), slopes).data[0] == 2.0
    assert prelu(Tensor([-2.0]), slopes).data[0] == -0.5
    assert PReLU(3).slopes.data.tolist() == [0.25, 0.25, 0.25]


def test_linear_identity_and_zero(float64, rng):
    x = rng.standard_normal((3, 4))
    b = rng.standard_normal(4)
    np.testing.assert_array_equal(linear(Tensor(x), Tensor(np.eye(4)), Tensor(np.zeros(4))).data, x)
    np.testing.assert_array_equal(linear(Tensor(x), Tensor(np.zeros((4, 4))), Tensor(b)).data, np.tile(b, (3, 1)))
    with pytest.raises(ShapeError):
        linear(Tensor(x), Tensor(np.eye(3)))


def test_stats_pool_values(float64, rng):
    out = stats_pool(Tensor(np.full((5, 3), 2.5)))
    np.testing.assert_allclose(out.data[:3], 2.5)
    np.testing.assert_allclose(out.data[3:], 0.0, atol=1e-7)
    np.testing.assert_allclose(stats_pool(Tensor([[0.0], [2.0]])).data, [1.0, 1.0])
    frames = rng.standard_normal((7, 4))
    a = stats_pool(Tensor(frames)).data
    b = stats_pool(Tensor(frames[rng.permutation(7)])).data
    np.testing.assert_allclose(a, b, atol=1e-12)
    assert mean_pool(Tensor(frames)).shape == (4,)


def test_log_softmax_uniform_and_shift(float64, rng):
    np.testing.assert_allclose(log_softmax(Tensor(np.zeros(4))).data, np.log(0.25), atol=1e-6)
    z = rng.standard_normal((3, 4))
    np.testing.assert_allclose(log_softmax(Tensor(z + 123.0)).data, log_softmax(Tensor(z)).data, atol=1e-9)
    big = log_softmax(Tensor([1000.0, 0.0])).data
    assert np.all(np.isfinite(big))
    np.testing.assert_allclose(big, [0.0, -1000.0])


def test_softmax_mask_gives_zero_weight():
    mask = np.array([True, True, False])
    p = softmax(Tensor([1.0, 2.0, 50.0]), mask=mask).data
    assert p[2] == 0.0
    assert p.sum() == pytest.approx(1.0)


def test_cross_entropy_values(float64):
    uniform = log_softmax(Tensor(np.zeros((1, 4))))
    assert cross_entropy(uniform, [2]).item() == pytest.approx(np.log(4), abs=1e-6)
    confident = log_softmax(Tensor([[20.0, 0.0, 0.0, 0.0]]))
    assert cross_entropy(confident, [0]).item() < 1e-3
    with pytest.raises(LabelError):
        cross_entropy(uniform, [4])


def test_cross_entropy_gradient_is_softmax_minus_onehot(float64, rng):
    z = Tensor(rng.standard_normal((1, 4)), requires_grad=True)
    cross_entropy(log_softmax(z), [1]).backward()
    p = np.exp(z.data - z.data.max())
    p /= p.sum()
    np.testing.assert_allclose(z.grad, p - np.eye(4)[[1]], atol=1e-6)


def test_gradients_accumulate_across_uses(float64):
    x = Tensor([3.0], requires_grad=True)
    (x * x + x).sum().backward()
    assert x.grad[0] == pytest.approx(7.0)


def test_no_grad_skips_graph(float64):
    x = Tensor([1.0], requires_grad=True)
    with no_grad():
        y = x * 2.0
    assert not y.requires_grad


def test_attention_ignores_masked_keys(float64, rng):
    layer = MultiHeadSelfAttention(8, 2, rng)
    x = rng.standard_normal((1, 5, 8))
    mask = np.array([[True, True, True, False, False]])
    a = layer(Tensor(x), mask).data
    x2 = x.copy()
    x2[0, 3:] = rng.standard_normal((2, 8))
    b = layer(Tensor(x2), mask).data
    np.testing.assert_allclose(a[0, :3], b[0, :3], atol=1e-12)
    assert np.all(layer.last_weights[..., 3:] == 0.0)


class _Pair(Module):

    def __init__(self, rng):
        super().__init__()
        self.first = Linear(3, 2, rng)
        self.norm = BatchNorm(2)


def test_state_dict_round_trip(float64, rng):
    a, b = _Pair(rng), _Pair(rng)
    assert list(a.state_dict()) == ['first.weight', 'first.bias', 'norm.gamma', 'norm.beta',
                                    'norm.running_mean', 'norm.running_var']
    b.load_state_dict(a.state_dict())
    for (name, x), y in zip(a.state_dict().items(), b.state_dict().values()):
        np.testing.assert_array_equal(x, y)
    state = a.state_dict()
    del state['norm.running_var']
    with pytest.raises(ShapeError, match='missing'):
        b.load_state_dict(state)


def test_freeze_stops_gradients(float64, rng):
    layer = Linear(3, 2, rng)
    layer.freeze()
    out = layer(Tensor(rng.standard_normal((2, 3))))
    assert not out.requires_grad
    assert layer.count_parameters() == 8
