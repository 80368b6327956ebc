#   Neural Implicit Dictionary
#      Released under the MIT license
#

import numpy as np

from PIL import Image, UnidentifiedImageError


class ImageFormatError(ValueError):
    pass


def quantize(image):
    """[0, 1] floats to bytes with round-half-up."""
    image = np.asarray(image, dtype=np.float64)
    return np.clip(np.floor(image * 255.0 + 0.5), 0, 255).astype(np.uint8)


def write_image(path, image):
    """Binary PGM (P5) for [H × W] or [H × W × 1] images, PPM (P6) for [H × W × 3]."""
    data = quantize(image)
    if data.ndim == 3 and data.shape[2] == 1:
        data = data[:, :, 0]

    if not (data.ndim == 2 or (data.ndim == 3 and data.shape[2] == 3)):
        raise ImageFormatError('Cannot store an image of shape {} as PGM/PPM'.format(np.shape(image)))

    Image.fromarray(data).save(path, format='PPM')
    return path


def read_image(path):
    """Read a binary PGM/PPM into [0, 1] floats: [H × W] or [H × W × 3]."""
    try:
        with Image.open(path) as image:
            if image.format != 'PPM':
                raise ImageFormatError('"{}" is not a PGM/PPM file (found {})'.format(path, image.format))
            if image.mode not in ('L', 'RGB'):
                raise ImageFormatError('"{}" has unsupported mode {}; expected 8-bit gray or RGB'.format(path, image.mode))
            image.load()
            data = np.asarray(image, dtype=np.uint8)
    except (UnidentifiedImageError, SyntaxError) as e:
        raise ImageFormatError('Malformed image header in "{}": {}'.format(path, e)) from e
    except OSError as e:
        if isinstance(e, FileNotFoundError):
            raise
        raise ImageFormatError('Truncated or unreadable image payload in "{}": {}'.format(path, e)) from e

    return data.astype(np.float64) / 255.0
