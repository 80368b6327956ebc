#   Neural Implicit Dictionary
#      Released under the MIT license
#

import numpy as np

from .Tape import Tape, backward


def _evaluate(loss_fn, params):
    tape = Tape(dtype=params.dtype)
    return tape, loss_fn(tape)


def finite_diff_check(loss_fn, params, h=1e-5, names=None, atol=0.0):
    """Worst relative error between backward() and central differences.

    `loss_fn(tape)` must build a scalar loss, reading parameters through
    `tape.param(params, name)`. The denominator of each relative error is
    max(|analytic|, |numeric|, 1e-8). Entries whose absolute difference is
    at most `atol` count as exact; use it when some gradients are zero
    analytically and the differences only see roundoff of the loss.
    """
    if not h > 0:
        raise ValueError('finite_diff_check: h must be positive, got {}'.format(h))
    if atol < 0:
        raise ValueError('finite_diff_check: atol must be non-negative, got {}'.format(atol))

    names = list(names) if names is not None else params.names()
    params.zero_grad(names)
    tape, loss = _evaluate(loss_fn, params)
    backward(tape, loss, params)
    analytic = {name: params.grads[name].copy() for name in names}
    params.zero_grad(names)

    worst = 0.0
    for name in names:
        value = params.params[name]
        for index in np.ndindex(value.shape):
            original = value[index]

            value[index] = original + h
            upper = float(_evaluate(loss_fn, params)[1].data)
            value[index] = original - h
            lower = float(_evaluate(loss_fn, params)[1].data)
            value[index] = original

            numeric = (upper - lower) / (2.0 * h)
            exact = float(analytic[name][index])
            if abs(exact - numeric) <= atol:
                continue
            error = abs(exact - numeric) / max(abs(exact), abs(numeric), 1e-8)
            worst = max(worst, error)

    return worst
