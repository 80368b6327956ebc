#   Neural Implicit Dictionary
#      Released under the MIT license
#

import numpy as np

from DiffKernel.Tensor import DimensionError


ON_SURFACE = 'on_surface'
OFF_SURFACE = 'off_surface'

KINDS = ('pixel', 'radon', 'sdf')


class MeasurementSet(object):
    """Observation parameters omega [t × p] and measured values [t × C] of one instance.

    `shape` records the raster (H, W) for pixel sets built from a full grid;
    `labels` carries on/off-surface flags for SDF sets; `time` is the
    normalised time of a video slice.
    """

    def __init__(self, instance_id, omega, values, kind='pixel', labels=None, time=None, shape=None):
        if kind not in KINDS:
            raise ValueError('Unknown measurement kind "{}"'.format(kind))

        self.instance_id = instance_id
        self.omega = np.atleast_2d(np.asarray(omega, dtype=np.float64))
        values = np.asarray(values, dtype=np.float64)
        if values.ndim == 0:
            values = values.reshape(1, 1)
        elif values.ndim == 1:
            values = values[:, None]
        elif values.ndim > 2:
            values = values.reshape(values.shape[0], int(np.prod(values.shape[1:])))
        self.values = values
        self.kind = kind
        self.labels = None if labels is None else np.asarray(labels, dtype=bool)
        self.time = time
        self.shape = shape

        if self.omega.shape[0] != self.values.shape[0]:
            raise DimensionError('Measurement set {} has {} parameter rows but {} value rows'.format(instance_id, self.omega.shape[0], self.values.shape[0]))
        if self.labels is not None and self.labels.shape != (self.omega.shape[0],):
            raise DimensionError('Measurement set {} has {} labels for {} rows'.format(instance_id, self.labels.shape, self.omega.shape[0]))

    def __len__(self):
        return self.omega.shape[0]

    def __repr__(self):
        return 'MeasurementSet(id={}, kind={}, rows={}, channels={})'.format(self.instance_id, self.kind, len(self), self.channels)

    @property
    def channels(self):
        return self.values.shape[1]

    def subset(self, rows):
        rows = np.asarray(rows)
        labels = None if self.labels is None else self.labels[rows]
        return MeasurementSet(self.instance_id, self.omega[rows], self.values[rows], kind=self.kind, labels=labels, time=self.time)

    def with_values(self, values):
        return MeasurementSet(self.instance_id, self.omega, values, kind=self.kind, labels=self.labels, time=self.time, shape=self.shape)


class RaySpec(object):
    """A parallel-beam ray: offset r and angle phi, integrated with Q midpoint samples over its chord."""

    def __init__(self, r, phi, quadrature=256, extent=1.0):
        if quadrature < 2:
            raise ValueError('A ray needs at least 2 quadrature samples, got {}'.format(quadrature))
        if extent < 1.0:
            raise ValueError('Ray extent {} does not cover [-1, 1]^2'.format(extent))

        self.r = float(r)
        self.phi = float(phi)
        self.quadrature = int(quadrature)
        self.extent = float(extent)

    def __repr__(self):
        return 'RaySpec(r={}, phi={}, Q={})'.format(self.r, self.phi, self.quadrature)


class SdfSample(object):
    def __init__(self, point, label, distance=0.0):
        if label not in (ON_SURFACE, OFF_SURFACE):
            raise ValueError('Unknown SDF sample label "{}"'.format(label))
        if label == ON_SURFACE and distance != 0.0:
            raise ValueError('On-surface samples have zero target distance, got {}'.format(distance))
        if not np.isfinite(distance):
            raise ValueError('Off-surface target distance must be finite.')

        self.point = np.asarray(point, dtype=np.float64)
        self.label = label
        self.distance = float(distance)

    @property
    def on_surface(self):
        return self.label == ON_SURFACE


def pixel_grid(height, width=None):
    """Pixel-centre coordinates of an H × W raster in [-1,1]^2; row i·W + j is (x_j, y_i)."""
    width = width if width is not None else height
    xs = -1.0 + (np.arange(width) + 0.5) * 2.0 / width
    ys = -1.0 + (np.arange(height) + 0.5) * 2.0 / height
    gx, gy = np.meshgrid(xs, ys)
    return np.stack([gx.reshape(-1), gy.reshape(-1)], axis=1)


def image_measurements(image, instance_id=0):
    """Full-grid pixel measurement set of an [H × W] or [H × W × C] image."""
    image = np.asarray(image, dtype=np.float64)
    height, width = image.shape[:2]
    values = image.reshape(height * width, -1)
    return MeasurementSet(instance_id, pixel_grid(height, width), values, kind='pixel', shape=(height, width))


def as_image(values, shape):
    """Inverse of image_measurements: [H·W × C] values back to [H × W] or [H × W × C]."""
    values = np.asarray(values)
    height, width = shape
    if values.shape[-1] == 1:
        return values.reshape(height, width)
    return values.reshape(height, width, values.shape[-1])


def sample_pixels(f, coords):
    """Identity functional: the field's values at the given coordinates, as [B × C]."""
    coords = np.atleast_2d(np.asarray(coords, dtype=np.float64))
    values = np.asarray(f(coords), dtype=np.float64)
    return values.reshape(coords.shape[0], -1)


def normalized_time(t, frame_count):
    if frame_count == 1:
        return 0.0
    return -1.0 + 2.0 * t / (frame_count - 1)


def video_slice(frames, t):
    """Pixel measurement set of frame t with its normalised time in [-1, 1] attached."""
    if not 0 <= t < len(frames):
        raise IndexError('Frame {} out of range for a {}-frame video'.format(t, len(frames)))

    frame = frames[t]
    return MeasurementSet(frame.instance_id, frame.omega, frame.values, kind='pixel',
                          time=normalized_time(t, len(frames)), shape=frame.shape)
