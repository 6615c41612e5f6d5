"""SGD with momentum, Adam and the step-halving learning-rate schedule."""
import math

import numpy as np

from .defaults import *
from .errors import ConfigError, ShapeError

SGD_MOMENTUM_KIND = 'sgd_momentum'
ADAM_KIND = 'adam'


class OptimizerState(object):
    """Per-parameter accumulators of an optimizer.

    Args:
        kind (str): "sgd_momentum" or "adam"
        params (list): parameter arrays the accumulators mirror

    Keyword Args:
        momentum (float): SGD momentum
        beta1, beta2, eps (float): Adam constants

    """

    __slots__ = 'kind', 'hyper', 'accumulators', 'step'

    def __init__(self, kind, params, **hyper):
        if kind == SGD_MOMENTUM_KIND:
            self.hyper = dict(momentum=hyper.get('momentum', SGD_MOMENTUM))
            self.accumulators = {'velocity': [np.zeros_like(p) for p in params]}
        elif kind == ADAM_KIND:
            self.hyper = dict(beta1=hyper.get('beta1', ADAM_BETA1), beta2=hyper.get('beta2', ADAM_BETA2),
                              eps=hyper.get('eps', ADAM_EPS))
            self.accumulators = {'m': [np.zeros_like(p) for p in params],
                                 'v': [np.zeros_like(p) for p in params]}
        else:
            raise ConfigError("unknown optimizer kind {!r}".format(kind))
        self.kind = kind
        self.step = 0

    def arrays(self):
        """Flat name -> array view, used by checkpoints"""
        out = {}
        for acc, arrays in sorted(self.accumulators.items()):
            for i, a in enumerate(arrays):
                out['{}.{}'.format(acc, i)] = a
        return out

    def load_arrays(self, arrays):
        for key, array in arrays.items():
            acc, index = key.rsplit('.', 1)
            self.accumulators[acc][int(index)][...] = array


def _check(params, grads, accumulators):
    if len(params) != len(grads):
        raise ShapeError("{} parameters but {} gradients".format(len(params), len(grads)))
    for i, (p, g) in enumerate(zip(params, grads)):
        if p.shape != g.shape:
            raise ShapeError("parameter {}: shape {} but gradient shape {}".format(i, p.shape, g.shape))
        for acc in accumulators:
            if acc[i].shape != p.shape:
                raise ShapeError("parameter {}: shape {} but optimizer state shape {}".format(i, p.shape, acc[i].shape))


def sgd_step(params, grads, state, lr):
    """Classical momentum: v <- mu v + g ; p <- p - lr v. Updates arrays in place."""
    velocity = state.accumulators['velocity']
    _check(params, grads, [velocity])
    mu = state.hyper['momentum']
    for p, g, v in zip(params, grads, velocity):
        v *= mu
        v += g
        p -= lr * v
    state.step += 1
    return params, state


def adam_step(params, grads, state, lr):
    """Bias-corrected Adam. Updates arrays in place."""
    m_acc, v_acc = state.accumulators['m'], state.accumulators['v']
    _check(params, grads, [m_acc, v_acc])
    b1, b2, eps = state.hyper['beta1'], state.hyper['beta2'], state.hyper['eps']
    state.step += 1
    t = state.step
    for p, g, m, v in zip(params, grads, m_acc, v_acc):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        m_hat = m / (1.0 - b1 ** t)
        v_hat = v / (1.0 - b2 ** t)
        p -= lr * m_hat / (np.sqrt(v_hat) + eps)
    return params, state


class Optimizer(object):
    """Drives sgd_step/adam_step over groups of Tensors with their own learning rate.

    Args:
        groups (list): list of (tensors, lr_scale) pairs; the effective rate of a
            group is the schedule rate times its scale
        kind (str): "sgd_momentum" or "adam"

    """

    def __init__(self, groups, kind=SGD_MOMENTUM_KIND, **hyper):
        self.groups = [(list(tensors), float(scale)) for tensors, scale in groups]
        self.kind = kind
        self.state = OptimizerState(kind, [t.data for t in self.tensors], **hyper)

    @property
    def tensors(self):
        return [t for tensors, _ in self.groups for t in tensors]

    def zero_grad(self):
        for t in self.tensors:
            t.zero_grad()

    def load_state(self, snapshot):
        """Restore accumulators saved with checkpoint.optimizer_to_dict"""
        if snapshot['kind'] != self.kind:
            raise ConfigError("checkpoint holds {} state, optimizer is {}".format(snapshot['kind'], self.kind))
        self.state.hyper.update(snapshot['hyper'])
        self.state.step = int(snapshot['step'])
        self.state.load_arrays(snapshot['arrays'])

    def step(self, lr):
        offset = 0
        step_fn = sgd_step if self.kind == SGD_MOMENTUM_KIND else adam_step
        # shared step counter: Adam bias correction advances once per call
        start_step = self.state.step
        for tensors, scale in self.groups:
            n = len(tensors)
            if scale == 0.0 or n == 0:
                offset += n
                continue
            sub = OptimizerState.__new__(OptimizerState)
            sub.kind = self.state.kind
            sub.hyper = self.state.hyper
            sub.step = start_step
            sub.accumulators = {k: v[offset:offset + n] for k, v in self.state.accumulators.items()}
            params = [t.data for t in tensors]
            grads = [t.grad if t.grad is not None else np.zeros_like(t.data) for t in tensors]
            step_fn(params, grads, sub, lr * scale)
            offset += n
        self.state.step = start_step + 1


class LrSchedule(object):
    """Constant learning rate, then halved periodically.

    Args:
        base_lr (float): rate for the first ``constant_epochs`` epochs
        constant_epochs (int): epochs at the base rate
        halving_period (int): epochs per halving afterwards
        mode (str): "every_other" halves once per ``halving_period`` epochs,
            "every" halves every epoch

    """

    __slots__ = 'base_lr', 'constant_epochs', 'halving_period', 'mode'

    def __init__(self, base_lr, constant_epochs=CONSTANT_EPOCHS, halving_period=HALVING_PERIOD,
                 mode=SCHEDULE_EVERY_OTHER):
        if base_lr <= 0:
            raise ConfigError("base_lr must be positive")
        if constant_epochs < 1 or halving_period < 1:
            raise ConfigError("constant_epochs and halving_period must be >= 1")
        if mode not in (SCHEDULE_EVERY_OTHER, SCHEDULE_EVERY):
            raise ConfigError("unknown schedule mode {!r}".format(mode))
        self.base_lr = float(base_lr)
        self.constant_epochs = int(constant_epochs)
        self.halving_period = int(halving_period)
        self.mode = mode

    @classmethod
    def from_dict(cls, section, base_lr):
        return cls(base_lr, section['constant_epochs'], section['halving_period'], section['schedule_mode'])


def lr_at(schedule, epoch):
    """Learning rate for a 1-based epoch."""
    if epoch < 1:
        raise ValueError("epochs are 1-based")
    if epoch <= schedule.constant_epochs:
        return schedule.base_lr
    period = schedule.halving_period if schedule.mode == SCHEDULE_EVERY_OTHER else 1
    halvings = math.ceil((epoch - schedule.constant_epochs) / period)
    return schedule.base_lr * 0.5 ** halvings
