#   Neural Implicit Dictionary
#      Released under the MIT license
#

import logging

import numpy as np

from DiffKernel.Optim import make_optimizer, optimizer_step
from DiffKernel.Tape import Tape, backward
from DiffKernel.Tensor import ParamStore
from Measurements.Functionals import functional_for, weighted_loss
from NidLayer.Gating import EncoderGate, GateTable
from NidLayer.Sparse import SparseCode, sparsify_tensor

from .Trainer import instance_summary


L1_FLOOR = 1e-6
BACKTRACKS = 20
REFIT_ITERATIONS = 8
POWER_ITERATIONS = 30
DESIGN_CHUNK = 1 << 22


class FittedField(object):
    """A frozen dictionary combined with one code; callable on [B × m] coordinates."""

    def __init__(self, dictionary, alpha, losses=None):
        self.dictionary = dictionary
        self.alpha = np.asarray(alpha, dtype=np.float64)
        self.losses = list(losses) if losses is not None else []

    def __call__(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        tape = Tape(dtype=self.dictionary.store.dtype)
        return self.dictionary.evaluate(tape, x, self.alpha[None, :]).data[0].astype(np.float64)

    def code(self, k):
        return SparseCode.from_dense(self.alpha, k)


def design_matrix(dictionary, functional, obs):
    """Measurement response of every atom: [t × P·n × C].

    Atoms are evaluated with the identity code, in chunks of observation rows
    sized so that head activations stay bounded.
    """
    width = dictionary.code_width
    points_per_row = max(1, len(functional.points(obs.subset([0]))))
    head_width = dictionary.patches[0].heads.head_width
    rows_per_chunk = max(1, DESIGN_CHUNK // (points_per_row * dictionary.n * head_width))

    identity = np.eye(width)
    blocks = []
    for start in range(0, len(obs), rows_per_chunk):
        chunk = obs.subset(np.arange(start, min(start + rows_per_chunk, len(obs))))
        tape = Tape(dtype=dictionary.store.dtype)
        values = dictionary.evaluate(tape, functional.points(chunk), identity)
        blocks.append(functional.reduce(tape, values, [chunk]).data.astype(np.float64))

    # [W × t × C] -> [t × W × C]
    return np.concatenate(blocks, axis=1).transpose(1, 0, 2)


def hard_threshold(beta, k, blocks):
    """Keep the k largest |beta| per block (lower index on ties)."""
    blocked = beta.reshape(blocks, -1)
    order = np.argsort(-np.abs(blocked), axis=1, kind='stable')[:, :k]
    kept = np.zeros_like(blocked)
    np.put_along_axis(kept, order, np.take_along_axis(blocked, order, axis=1), axis=1)
    return kept.reshape(-1)


def _largest_eigenvalue(design, weights, rng, vector=None):
    """Power iteration for lambda_max(D^T diag(w) D) with D [R × W]."""
    vector = vector if vector is not None else rng.normal(size=design.shape[1])
    value = 0.0
    for _ in range(POWER_ITERATIONS):
        vector = design.T @ (weights * (design @ vector))
        value = np.linalg.norm(vector)
        if value == 0:
            return 0.0, rng.normal(size=design.shape[1])
        vector /= value
    return value, vector


def initial_alpha(model, obs, k, init, instance, rng, noise):
    """Starting code: gate-derived, mean table row, random, or an explicit vector."""
    dictionary, gate = model.dictionary, model.gate
    blocks = dictionary.grid.patch_count

    if isinstance(init, np.ndarray):
        return np.asarray(init, dtype=np.float64)

    if init == 'auto':
        if isinstance(gate, EncoderGate):
            init = 'gate'
        elif isinstance(gate, GateTable) and instance is not None:
            init = 'gate'
        else:
            init = 'random'

    tape = Tape(dtype=np.float64)
    if init == 'gate':
        if isinstance(gate, EncoderGate):
            raw = gate(tape, instance_summary(obs, model.summary_cells())[None, :])
        else:
            raw = gate(tape, [instance])
        return sparsify_tensor(tape, raw, k, blocks=blocks).data[0]
    if init == 'mean':
        raw = gate.mean_row()[None, :]
        return sparsify_tensor(tape, raw, k, blocks=blocks).data[0]
    if init == 'random':
        return hard_threshold(rng.normal(0.0, noise, size=dictionary.code_width), k, blocks)
    raise ValueError('Unknown code initialisation "{}"'.format(init))


def _objective(flat, weights, targets, beta, robust):
    """Weighted l1 or l2 data loss of a column-normalised code."""
    residual = flat @ beta - targets
    return float(np.sum(weights * (np.abs(residual) if robust else residual * residual)))


def _l1_curvature(weights, residual):
    """Weights of the quadratic majoriser of sum w|r|, floored at the median residual."""
    magnitude = np.abs(residual)
    floor = max(float(np.median(magnitude)), L1_FLOOR)
    return weights / np.maximum(magnitude, floor)


def refit_support(flat, weights, targets, support, robust):
    """Least-squares (or reweighted l1) coefficients restricted to `support`."""
    beta = np.zeros(flat.shape[1])
    if support.size == 0:
        return beta

    columns = flat[:, support]
    curvature = weights
    for _ in range(REFIT_ITERATIONS if robust else 1):
        root = np.sqrt(curvature)
        beta[support] = np.linalg.lstsq(columns * root[:, None], targets * root, rcond=None)[0]
        curvature = _l1_curvature(weights, columns @ beta[support] - targets)
    return beta


def thresholding_step(flat, weights, targets, beta, k, blocks, robust, lipschitz, refit, rng, vector=None):
    """One hard-thresholding step; the returned code never has a larger loss.

    The step minimises a quadratic majoriser of the loss over k-sparse codes
    and halves its length until the loss does not increase. With `refit` the
    coefficients are then re-solved on the new support.
    """
    residual = flat @ beta - targets
    if robust:
        curvature = _l1_curvature(weights, residual)
        scale, vector = _largest_eigenvalue(flat, curvature, rng, vector)
    else:
        curvature, scale = 2.0 * weights, lipschitz
    gradient = flat.T @ (curvature * residual)

    current = _objective(flat, weights, targets, beta, robust)
    step_size = 1.0 / scale if scale > 0 else 0.0
    candidate, value = beta, current
    for _ in range(BACKTRACKS):
        trial = hard_threshold(beta - step_size * gradient, k, blocks)
        trial_value = _objective(flat, weights, targets, trial, robust)
        if trial_value <= current:
            candidate, value = trial, trial_value
            break
        step_size *= 0.5

    if refit:
        refined = refit_support(flat, weights, targets, np.flatnonzero(candidate), robust)
        if _objective(flat, weights, targets, refined, robust) <= value:
            candidate = refined
    return candidate, vector


def adapt_code(model, obs, steps, loss='l2', cfg=None, k=None, init='auto', instance=None):
    """Fit a k-sparse code for `obs` against the frozen dictionary.

    Returns (SparseCode, FittedField). The code is not renormalised; the
    dictionary parameters are never written. With the thresholding
    optimizers ('htp', 'iht') the recorded losses never increase.
    """
    k = k if k is not None else (cfg.k if cfg is not None else model.k)
    quadrature = cfg.quadrature if cfg is not None else 256
    optimizer = cfg.adapt_optimizer if cfg is not None else 'htp'
    lr = cfg.lr_adapt if cfg is not None else 1e-2
    seed = cfg.seed if cfg is not None else 0
    noise = cfg.code_init_noise if cfg is not None else 1e-3

    dictionary = model.dictionary
    blocks = dictionary.grid.patch_count
    rng = np.random.default_rng(seed + 3)

    alpha = initial_alpha(model, obs, k, init, instance, rng, noise)
    if steps == 0:
        return SparseCode.from_dense(alpha, k), FittedField(dictionary, alpha)

    functional = functional_for(obs.kind, quadrature)
    design = design_matrix(dictionary, functional, obs)
    targets = obs.values[None]
    weights = functional.weights(obs)
    robust = loss == 'l1'

    # Column-normalised coordinates beta = alpha · norms.
    norms = np.sqrt(np.einsum('twc,tc->w', design * design, weights))
    norms[norms == 0] = 1.0
    normalized = design / norms[None, :, None]
    flat = normalized.transpose(0, 2, 1).reshape(-1, normalized.shape[1])
    flat_weights = weights.reshape(-1)
    flat_targets = obs.values.reshape(-1)

    beta = hard_threshold(alpha * norms, k, blocks)
    thresholding = optimizer in ('htp', 'iht')
    if thresholding:
        gram = flat.T @ (flat_weights[:, None] * flat)
        lipschitz = 2.0 * np.linalg.eigvalsh(gram)[-1]
        vector = None
    else:
        codes = ParamStore(np.float64)
        codes.add('code', beta[None, :])
        state = make_optimizer(optimizer, ['code'], lr)

    losses = []
    for step in range(steps):
        if thresholding:
            losses.append(_objective(flat, flat_weights, flat_targets, beta, robust))
            beta, vector = thresholding_step(flat, flat_weights, flat_targets, beta, k, blocks, robust, lipschitz,
                                             optimizer == 'htp', rng, vector)
        else:
            tape = Tape(dtype=np.float64)
            value = weighted_loss(tape, tape.mix(normalized, tape.param(codes, 'code')), targets, weights, loss)
            backward(tape, value)
            losses.append(float(value.data))
            optimizer_step(codes, state)
            codes['code'] = hard_threshold(codes['code'][0], k, blocks)[None, :]
            beta = codes['code'][0]
        logging.debug('Adaptation step {}/{}: {} loss {:.6g}'.format(step + 1, steps, loss, losses[-1]))

    losses.append(_objective(flat, flat_weights, flat_targets, beta, robust))
    logging.info('Adapted code for instance {} in {} steps: {} loss {:.6g}'.format(obs.instance_id, steps, loss, losses[-1]))

    alpha = beta / norms
    return SparseCode.from_dense(alpha, k), FittedField(dictionary, alpha, losses)
