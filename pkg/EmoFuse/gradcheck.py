"""Finite-difference verification of the analytic gradients."""
import logging

import numpy as np

from .nn import MultiHeadSelfAttention, TransformerBlock
from .tensor import (Tensor, default_dtype, conv2d, batch_norm, prelu, linear, stats_pool,
                     log_softmax, cross_entropy, layer_norm, gelu)

logger = logging.getLogger(__name__)

GRADCHECK_EPS = 1e-5
GRADCHECK_SEEDS = 10
GRADCHECK_FLOOR = 1e-3


def relative_error(analytic, numeric, floor=GRADCHECK_FLOOR):
    """Elementwise |a - n| / max(|a|, |n|, floor).

    A mixed tolerance: relative for gradients larger than ``floor``, absolute
    error scaled by 1 / floor below it.
    """
    return np.abs(analytic - numeric) / np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)


def grad_check(fn, inputs, eps=GRADCHECK_EPS, seed=0):
    """Compare analytic and central-difference gradients.

    A non-scalar output is reduced to a scalar through a fixed random
    projection, so every output coordinate contributes. Inputs are perturbed
    in place and restored.

    Args:
        fn (callable): maps the input Tensors to an output Tensor
        inputs (list): Tensors; those with requires_grad are checked
        eps (float): finite-difference step

    Returns:
        float: worst relative error over all checked coordinates
    """
    if any(t.dtype != np.float64 for t in inputs):
        raise TypeError("grad_check needs float64 tensors")
    out = fn(*inputs)
    projection = np.random.default_rng(seed).standard_normal(out.shape)

    def scalar():
        return float((fn(*inputs).data * projection).sum())

    for t in inputs:
        t.zero_grad()
    (out * Tensor(projection, dtype=np.float64)).sum().backward()
    worst = 0.0
    for t in inputs:
        if not t.requires_grad:
            continue
        analytic = np.zeros_like(t.data) if t.grad is None else t.grad
        numeric = np.empty_like(t.data)
        flat = t.data.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            up = scalar()
            flat[i] = orig - eps
            down = scalar()
            flat[i] = orig
            numeric.reshape(-1)[i] = (up - down) / (2.0 * eps)
        worst = max(worst, float(relative_error(analytic, numeric).max(initial=0.0)))
    return worst


def _param(rng, *shape, scale=1.0):
    return Tensor(rng.standard_normal(shape) * scale, requires_grad=True)


def _away_from_zero(rng, *shape):
    return Tensor(rng.choice([-1.0, 1.0], size=shape) * rng.uniform(0.5, 2.0, size=shape), requires_grad=True)


def _case_conv2d(rng):
    x, w, b = _param(rng, 2, 2, 5, 6), _param(rng, 3, 2, 3, 3), _param(rng, 3)
    stride = int(rng.integers(1, 3))
    return lambda x, w, b: conv2d(x, w, b, stride=stride, padding=1), [x, w, b]


def _case_batch_norm(rng):
    x, gamma, beta = _param(rng, 4, 3, 2, 3), _param(rng, 3), _param(rng, 3)
    return lambda x, g, b: batch_norm(x, g, b, training=True), [x, gamma, beta]


def _case_prelu(rng):
    x, a = _away_from_zero(rng, 4, 3, 2), Tensor(rng.uniform(0.1, 0.5, size=3), requires_grad=True)
    return prelu, [x, a]


def _case_linear(rng):
    return linear, [_param(rng, 4, 5), _param(rng, 5, 3), _param(rng, 3)]


def _case_stats_pool(rng):
    return stats_pool, [_param(rng, 2, 6, 4)]


def _case_cross_entropy(rng):
    labels = rng.integers(0, 4, size=5)
    return lambda z: cross_entropy(log_softmax(z), labels), [_param(rng, 5, 4)]


def _case_attention(rng):
    layer = MultiHeadSelfAttention(8, 2, rng)
    mask = np.ones((2, 4), dtype=bool)
    mask[1, 3] = False
    x = _param(rng, 2, 4, 8)
    params = layer.parameters()
    return lambda x, *p: layer(x, mask), [x] + params


def _case_transformer_block(rng):
    block = TransformerBlock(8, 2, 16, rng)
    mask = np.ones((2, 3), dtype=bool)
    mask[0, 2] = False
    x = _param(rng, 2, 3, 8)
    params = block.parameters()
    return lambda x, *p: block(x, mask), [x] + params


def _case_layer_norm(rng):
    return layer_norm, [_param(rng, 3, 6), _param(rng, 6), _param(rng, 6)]


def _case_gelu(rng):
    return gelu, [_param(rng, 4, 5)]


# op name -> (case builder, tolerance)
SUITE = {
    'conv2d': (_case_conv2d, 1e-4),
    'batch_norm': (_case_batch_norm, 1e-4),
    'prelu': (_case_prelu, 1e-6),
    'linear': (_case_linear, 1e-6),
    'stats_pool': (_case_stats_pool, 1e-4),
    'log_softmax+cross_entropy': (_case_cross_entropy, 1e-4),
    'attention': (_case_attention, 1e-4),
    'transformer_block': (_case_transformer_block, 1e-4),
    'layer_norm': (_case_layer_norm, 1e-4),
    'gelu': (_case_gelu, 1e-4),
}


def run_suite(seeds=GRADCHECK_SEEDS, ops=None, eps=GRADCHECK_EPS):
    """Grad-check every differentiable op over several seeds in 64-bit mode.

    Returns:
        list: one dict per op with keys op, seeds, max_rel_error, tolerance, passed
    """
    rows = []
    with default_dtype(np.float64):
        for name in (ops or SUITE):
            build, tolerance = SUITE[name]
            worst = 0.0
            for seed in range(seeds):
                rng = np.random.default_rng([seed, len(name)])
                fn, inputs = build(rng)
                worst = max(worst, grad_check(fn, inputs, eps, seed=seed))
            passed = worst < tolerance
            logger.info("grad check %-26s max rel error %.3e (%s)", name, worst, 'ok' if passed else 'FAIL')
            rows.append(dict(op=name, seeds=seeds, max_rel_error=worst, tolerance=tolerance, passed=passed))
    return rows


def format_table(rows):
    """Aligned pass/fail table"""
    lines = ['{:<28}{:>7}{:>16}{:>12}  {}'.format('op', 'seeds', 'max rel error', 'tolerance', 'result')]
    for row in rows:
        lines.append('{:<28}{:>7}{:>16.3e}{:>12.0e}  {}'.format(
            row['op'], row['seeds'], row['max_rel_error'], row['tolerance'], 'PASS' if row['passed'] else 'FAIL'))
    return '\n'.join(lines)
