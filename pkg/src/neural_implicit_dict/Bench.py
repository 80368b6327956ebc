#   Neural Implicit Dictionary
#      Released under the MIT license
#

import logging
import time

import numpy as np

from DiffKernel.Tape import Tape
from Measurements.MeasurementSet import pixel_grid


def bench_code(model, k=None):
    """A fixed k-sparse code using the first k experts of every patch."""
    dictionary = model.dictionary
    k = k if k is not None else model.k
    alpha = np.zeros(dictionary.code_width)
    for p in range(dictionary.grid.patch_count):
        alpha[p * dictionary.n:p * dictionary.n + k] = 1.0 / np.sqrt(k)
    return alpha


def bench_throughput(model, image_size, repetitions, k=None):
    """(images per second, parameter count): median wall clock of full-grid renders after one warm-up."""
    if repetitions < 1:
        raise ValueError('Need at least one timed repetition, got {}'.format(repetitions))

    grid = pixel_grid(image_size)
    codes = bench_code(model, k)[None, :]

    def render():
        tape = Tape(dtype=model.store.dtype)
        return model.dictionary.evaluate(tape, grid, codes)

    render()
    timings = []
    for _ in range(repetitions):
        start = time.perf_counter()
        render()
        timings.append(time.perf_counter() - start)

    median = float(np.median(timings))
    throughput = 1.0 / median if median > 0 else float('inf')
    logging.info('Rendered {}x{} images at {:.2f} images/s ({} parameters).'.format(image_size, image_size, throughput, model.parameter_count()))
    return throughput, model.parameter_count()
