import numpy as np
import pytest

from EmoFuse import ConfigError, ShapeError
from EmoFuse.optim import (OptimizerState, Optimizer, LrSchedule, sgd_step, adam_step, lr_at,
                           SGD_MOMENTUM_KIND, ADAM_KIND)
from EmoFuse.nn import Module, Linear, PReLU
from EmoFuse.tensor import Tensor, log_softmax, cross_entropy


def _sgd(p):
    return OptimizerState(SGD_MOMENTUM_KIND, [p], momentum=0.9)


def test_sgd_zero_gradient_keeps_params():
    p = np.array([1.0, -2.0])
    sgd_step([p], [np.zeros(2)], _sgd(p), 0.1)
    np.testing.assert_array_equal(p, [1.0, -2.0])


def test_sgd_first_and_second_step():
    p = np.zeros(3)
    g = np.array([1.0, -2.0, 0.5])
    state = _sgd(p)
    sgd_step([p], [g], state, 0.1)
    np.testing.assert_allclose(p, -0.1 * g)
    before = p.copy()
    sgd_step([p], [g], state, 0.1)
    np.testing.assert_allclose(p - before, -0.1 * 1.9 * g)
    assert state.step == 2


def test_sgd_shape_mismatch():
    p = np.zeros(3)
    with pytest.raises(ShapeError, match='gradient shape'):
        sgd_step([p], [np.zeros(2)], _sgd(p), 0.1)


def test_adam_zero_gradient_keeps_params():
    p = np.array([0.3])
    adam_step([p], [np.zeros(1)], OptimizerState(ADAM_KIND, [p]), 0.1)
    assert p[0] == 0.3


def test_adam_first_step_magnitude():
    for scale in (1e-3, 1.0, 1e3):
        p = np.zeros(2)
        adam_step([p], [np.array([scale, -scale])], OptimizerState(ADAM_KIND, [p]), 0.01)
        np.testing.assert_allclose(np.abs(p), 0.01, rtol=1e-4)


def test_adam_minimizes_square():
    x = np.array([1.0])
    state = OptimizerState(ADAM_KIND, [x])
    for _ in range(200):
        adam_step([x], [2.0 * x], state, 0.1)
    assert abs(x[0]) < 0.05


class _TwoLayer(Module):

    def __init__(self, rng):
        super().__init__()
        self.hidden = Linear(2, 8, rng)
        self.act = PReLU(8)
        self.out = Linear(8, 2, rng)

    def forward(self, x):
        return self.out(self.act(self.hidden(x)))


def test_adam_separates_linearly_separable_points(rng, float64):
    normal = np.array([1.0, -1.0]) / np.sqrt(2.0)
    points = rng.uniform(-1.0, 1.0, size=(64, 2))
    labels = (points @ normal > 0).astype(np.int64)
    points = points + np.where(labels == 1, 0.5, -0.5)[:, None] * normal
    model = _TwoLayer(rng)
    optimizer = Optimizer([(model.parameters(), 1.0)], ADAM_KIND)
    accuracy = 0.0
    for _ in range(200):
        log_post = log_softmax(model(Tensor(points)))
        accuracy = float((log_post.data.argmax(axis=1) == labels).mean())
        if accuracy == 1.0:
            break
        loss = cross_entropy(log_post, labels)
        optimizer.zero_grad()
        loss.backward()
        optimizer.step(0.05)
    assert accuracy == 1.0


def test_optimizer_groups_scale_learning_rate():
    head = Tensor([0.0], requires_grad=True)
    body = Tensor([0.0], requires_grad=True)
    frozen = Tensor([0.0], requires_grad=True)
    opt = Optimizer([([head], 1.0), ([body], 0.01), ([frozen], 0.0)], SGD_MOMENTUM_KIND, momentum=0.9)
    for t in (head, body, frozen):
        t.grad = np.array([1.0])
    opt.step(0.1)
    assert head.data[0] == pytest.approx(-0.1)
    assert body.data[0] == pytest.approx(-0.001)
    assert frozen.data[0] == 0.0
    assert opt.state.step == 1


def test_optimizer_state_snapshot_round_trip():
    a = Tensor([1.0, 2.0], requires_grad=True)
    opt = Optimizer([([a], 1.0)], ADAM_KIND)
    a.grad = np.array([0.5, -0.5])
    opt.step(0.01)
    snapshot = dict(kind=ADAM_KIND, hyper=dict(opt.state.hyper), step=opt.state.step,
                    arrays={k: v.copy() for k, v in opt.state.arrays().items()})
    fresh = Optimizer([([Tensor([1.0, 2.0], requires_grad=True)], 1.0)], ADAM_KIND)
    fresh.load_state(snapshot)
    assert fresh.state.step == 1
    for key, array in opt.state.arrays().items():
        np.testing.assert_array_equal(fresh.state.arrays()[key], array)
    with pytest.raises(ConfigError):
        Optimizer([([a], 1.0)], SGD_MOMENTUM_KIND).load_state(snapshot)


def test_lr_schedule_halves_every_other_epoch():
    schedule = LrSchedule(0.1)
    assert [lr_at(schedule, e) for e in range(1, 9)] == [0.1] * 8
    assert lr_at(schedule, 9) == pytest.approx(0.05)
    assert lr_at(schedule, 10) == pytest.approx(0.05)
    assert lr_at(schedule, 12) == pytest.approx(0.025)


def test_lr_schedule_every_epoch_mode():
    schedule = LrSchedule(0.1, mode='every')
    assert lr_at(schedule, 10) == pytest.approx(0.025)


def test_lr_schedule_validation():
    with pytest.raises(ConfigError):
        LrSchedule(0.0)
    with pytest.raises(ConfigError):
        LrSchedule(0.1, mode='cosine')
    with pytest.raises(ValueError):
        lr_at(LrSchedule(0.1), 0)
