#   Neural Implicit Dictionary
#      Released under the MIT license
#

import numpy as np


class AdamState(object):
    """Adam moments for a named subset of a ParamStore."""

    def __init__(self, names, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.names = list(names)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = dict()
        self.v = dict()


class SgdState(object):
    def __init__(self, names, lr=1e-2):
        self.names = list(names)
        self.lr = lr
        self.t = 0


def _require_grads(params, names):
    for name in names:
        if name not in params.grads:
            raise KeyError('Missing gradient for registered parameter "{}".'.format(name))


def adam_step(params, state):
    """Bias-corrected Adam update in place; consumed gradients are zeroed."""
    _require_grads(params, state.names)
    state.t += 1

    correction1 = 1.0 - state.beta1 ** state.t
    correction2 = 1.0 - state.beta2 ** state.t

    for name in state.names:
        value = params.params[name]
        grad = params.grads[name]

        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(value)
            state.v[name] = np.zeros_like(value)
        v = state.v[name]

        m *= state.beta1
        m += (1.0 - state.beta1) * grad
        v *= state.beta2
        v += (1.0 - state.beta2) * grad * grad

        value -= state.lr * (m / correction1) / (np.sqrt(v / correction2) + state.eps)
        grad[...] = 0

    return params


def sgd_step(params, state):
    _require_grads(params, state.names)
    state.t += 1

    for name in state.names:
        params.params[name] -= state.lr * params.grads[name]
        params.grads[name][...] = 0

    return params


def make_optimizer(kind, names, lr):
    if kind == 'adam':
        return AdamState(names, lr=lr)
    if kind == 'sgd':
        return SgdState(names, lr=lr)
    raise ValueError('Unknown optimizer "{}"'.format(kind))


def optimizer_step(params, state):
    if isinstance(state, AdamState):
        return adam_step(params, state)
    return sgd_step(params, state)


def cosine_lr(base, step, steps, floor=0.01):
    """Cosine annealing from `base` at step 0 to floor·base at the last step."""
    if steps <= 1:
        return base
    progress = min(max(step / (steps - 1), 0.0), 1.0)
    return base * (floor + (1.0 - floor) * 0.5 * (1.0 + np.cos(np.pi * progress)))
