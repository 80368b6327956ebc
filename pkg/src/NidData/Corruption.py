#   Neural Implicit Dictionary
#      Released under the MIT license
#

import numpy as np


def corrupt_occlusion(image, patch_size, seed):
    """Paste a random uniform-colour square at a random position.

    Returns (corrupted, mask). The mask is for evaluation only.
    """
    image = np.asarray(image, dtype=np.float64)
    height, width = image.shape[:2]
    if patch_size < 0 or patch_size > min(height, width):
        raise ValueError('Occlusion patch of {} pixels does not fit a {}x{} image'.format(patch_size, height, width))

    mask = np.zeros((height, width), dtype=bool)
    if patch_size == 0:
        return image.copy(), mask

    rng = np.random.default_rng(seed)
    row = rng.integers(0, height - patch_size + 1)
    col = rng.integers(0, width - patch_size + 1)
    color = rng.uniform(0.0, 1.0, size=image.shape[2:] or None)

    corrupted = image.copy()
    mask[row:row + patch_size, col:col + patch_size] = True
    corrupted[mask] = color
    return corrupted, mask
