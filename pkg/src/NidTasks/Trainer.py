#   Neural Implicit Dictionary
#      Released under the MIT license
#

import logging

import numpy as np

from DiffKernel.Optim import AdamState, adam_step
from DiffKernel.Tape import Tape, backward
from DiffKernel.Tensor import DimensionError, NonFiniteError
from Measurements.Functionals import functional_for, weighted_loss
from NidLayer.Gating import EncoderGate, GatingMode, gate_codes, gating_mode, observation_summary
from NidLayer.Sparse import cv_penalty_tensor, l1_penalty_tensor

from .Model import build_model


POINT_BUDGET = 1 << 15


class TrainingDivergedError(RuntimeError):
    def __init__(self, message, last_finite_epoch=None):
        super().__init__(message)
        self.last_finite_epoch = last_finite_epoch


def signal_dims(data):
    """(m, C) shared by every instance of a corpus."""
    kinds = {ms.kind for ms in data}
    channels = {ms.channels for ms in data}
    if len(kinds) != 1:
        raise ValueError('Training instances mix measurement kinds: {}'.format(sorted(kinds)))
    if len(channels) != 1:
        raise DimensionError('Training instances mix channel counts: {}'.format(sorted(channels)))

    kind = kinds.pop()
    m = 2 if kind == 'radon' else data[0].omega.shape[1]
    return m, channels.pop()


def instance_summary(ms, cells):
    """Encoder input of one observation; ray angles are folded into [-1, 1] like coordinates."""
    omega = ms.omega
    if ms.kind == 'radon':
        omega = np.stack([omega[:, 0], np.mod(omega[:, 1], np.pi) / np.pi * 2.0 - 1.0], axis=1)
    return observation_summary(omega, ms.values, cells)


def gate_inputs(model, sets, ids, cells):
    if isinstance(model.gate, EncoderGate):
        return np.stack([instance_summary(ms, cells) for ms in sets])
    return np.asarray(ids, dtype=np.intp)


def data_term(tape, dictionary, functional, sets, codes, loss='l2'):
    """Weighted data loss of a batch, averaged over instances.

    Instances observed at identical points share one trunk pass; equal-size
    point sets evaluate as one per-instance batch; anything else falls back
    to one evaluation per instance.
    """
    points = [functional.points(ms) for ms in sets]
    targets = np.stack([ms.values for ms in sets]) if len({len(ms) for ms in sets}) == 1 else None

    if targets is not None:
        weights = np.stack([functional.weights(ms) for ms in sets])
        if all(np.array_equal(points[0], p) for p in points[1:]):
            values = dictionary.evaluate(tape, points[0], codes)
        elif len({p.shape for p in points}) == 1:
            values = dictionary.evaluate(tape, np.stack(points), codes)
        else:
            values = None

        if values is not None:
            prediction = functional.reduce(tape, values, sets)
            return weighted_loss(tape, prediction, targets, weights, loss)

    total = None
    for i, (ms, p) in enumerate(zip(sets, points)):
        values = dictionary.evaluate(tape, p, tape.take(codes, [i], axis=0))
        prediction = functional.reduce(tape, values, [ms])
        term = weighted_loss(tape, prediction, ms.values[None], functional.weights(ms)[None], loss)
        total = term if total is None else tape.add(total, term)
    return tape.mul(total, 1.0 / len(sets))


def point_chunks(functional, ms, budget=POINT_BUDGET):
    """Row blocks of `ms` whose evaluation points (rays count their quadrature nodes) fit in `budget`."""
    if not len(ms):
        return []
    per_row = max(1, len(functional.points(ms.subset([0]))))
    rows = max(1, budget // per_row)
    return [np.arange(start, min(start + rows, len(ms))) for start in range(0, len(ms), rows)]


def chunked_data_term(dictionary, functional, ms, codes, loss='l2', budget=POINT_BUDGET, backpropagate=True):
    """Data loss of one instance under fixed codes, evaluated one point chunk at a time.

    Each chunk gets its own tape; with `backpropagate` the chunk gradients
    add up in the store, so one optimizer step afterwards sees the
    full-set gradient. Returns the loss value.
    """
    weights = functional.weights(ms)
    total = 0.0
    for rows in point_chunks(functional, ms, budget):
        chunk = ms.subset(rows)
        tape = Tape(dtype=dictionary.store.dtype)
        values = dictionary.evaluate(tape, functional.points(chunk), codes)
        prediction = functional.reduce(tape, values, [chunk])
        value = weighted_loss(tape, prediction, chunk.values[None], weights[rows][None], loss)
        if backpropagate:
            backward(tape, value)
        total += float(value.data)
    return total


def _subsample(ms, count, rng):
    if not count or count >= len(ms):
        return ms
    rows = np.sort(rng.choice(len(ms), size=count, replace=False))
    if ms.labels is not None:
        # Keep both SDF sample families represented.
        on, off = np.flatnonzero(ms.labels), np.flatnonzero(~ms.labels)
        half = max(1, count // 2)
        rows = np.sort(np.concatenate([rng.choice(on, size=min(half, on.size), replace=False),
                                       rng.choice(off, size=min(count - half, off.size), replace=False)]))
    return ms.subset(rows)


def subsample_batch(sets, count, rng):
    """Per-step point subsets of a batch.

    Unlabelled sets observed at the same points keep one shared subset so
    the batch still evaluates the trunk once.
    """
    first = sets[0]
    shared = first.labels is None and all(
        ms.kind == first.kind and len(ms) == len(first) and np.array_equal(ms.omega, first.omega) for ms in sets[1:])
    if shared and count and count < len(first):
        rows = np.sort(rng.choice(len(first), size=count, replace=False))
        return [ms.subset(rows) for ms in sets]
    return [_subsample(ms, count, rng) for ms in sets]


def train_dictionary(data, kind, cfg, model=None):
    """Jointly fit dictionary and gates to a corpus.

    Per batch: data loss + lam·l1_scale·|gates|_1 / I while warming up, then
    top-k gating with lam·cv_scale·CV(codes).
    """
    if not data:
        raise ValueError('Cannot train a dictionary on an empty corpus.')
    if any(ms.kind != kind for ms in data):
        raise ValueError('All training instances must be "{}" measurements.'.format(kind))

    m, channels = signal_dims(data)
    functional = functional_for(kind, cfg.quadrature)
    model = model if model is not None else build_model(cfg, m, channels, len(data))
    dictionary, gate, store = model.dictionary, model.gate, model.store
    blocks = dictionary.grid.patch_count
    cells = model.summary_cells()

    dict_state = AdamState(dictionary.names(), lr=cfg.lr_dict)
    gate_state = AdamState(gate.names(), lr=cfg.lr_code)
    rng = np.random.default_rng(cfg.seed + 2)

    logging.info('Training {} experts (k={}, {} gate) on {} "{}" instances for {} epochs.'.format(
        dictionary.n, cfg.k, gate.kind, len(data), kind, cfg.epochs))

    for epoch in range(cfg.epochs):
        mode = gating_mode(epoch, cfg.warmup_epochs)
        order = rng.permutation(len(data))
        data_sum, penalty_sum, usage = 0.0, 0.0, np.zeros(dictionary.code_width)

        try:
            for start in range(0, len(order), cfg.batch_size):
                ids = order[start:start + cfg.batch_size]
                sets = subsample_batch([data[i] for i in ids], cfg.points_per_step, rng)

                tape = Tape(dtype=store.dtype)
                raw, codes = gate_codes(tape, gate, gate_inputs(model, [data[i] for i in ids], ids, cells),
                                        cfg.k, mode, blocks=blocks, noise=cfg.gate_noise, rng=rng)
                loss = data_term(tape, dictionary, functional, sets, codes, cfg.loss)

                penalty = None
                if cfg.lam > 0:
                    if mode is GatingMode.DENSE_L1:
                        penalty = tape.mul(l1_penalty_tensor(tape, raw), cfg.lam * cfg.l1_scale / len(ids))
                    else:
                        penalty = tape.mul(cv_penalty_tensor(tape, codes, blocks=blocks, absolute=cfg.cv_abs), cfg.lam * cfg.cv_scale)

                objective = loss if penalty is None else tape.add(loss, penalty)
                backward(tape, objective)
                adam_step(store, dict_state)
                adam_step(store, gate_state)

                data_sum += float(loss.data) * len(ids)
                penalty_sum += (0.0 if penalty is None else float(penalty.data)) * len(ids)
                usage += np.abs(codes.data).sum(axis=0)

        except NonFiniteError as e:
            last = model.log.last_finite_epoch()
            raise TrainingDivergedError('Training diverged in epoch {} ({}); last finite epoch: {}'.format(epoch, e, last), last) from e

        total = usage.sum()
        model.log.append(epoch, mode.value, data_sum / len(data), penalty_sum / len(data),
                         usage / total if total > 0 else usage)
        logging.info('Epoch {}/{} [{}]: data loss {:.6g}, penalty {:.6g}'.format(
            epoch + 1, cfg.epochs, mode.value, data_sum / len(data), penalty_sum / len(data)))

    return model


def utilization_shares(model, data, cfg):
    """Each expert's share of sum |alpha| over the corpus under hard top-k gating."""
    tape = Tape(dtype=model.store.dtype)
    ids = np.arange(len(data))
    _, codes = gate_codes(tape, model.gate, gate_inputs(model, data, ids, model.summary_cells()),
                          cfg.k, GatingMode.HARD_TOP_K, blocks=model.dictionary.grid.patch_count)
    usage = np.abs(codes.data).sum(axis=0)
    return usage / usage.sum()
