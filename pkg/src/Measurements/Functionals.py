#   Neural Implicit Dictionary
#      Released under the MIT license
#

import numpy as np

from DiffKernel.Tensor import DimensionError

from .MeasurementSet import RaySpec, sample_pixels


def ray_chord(r, phi, extent=1.0):
    """Parameter interval (s0, s1) of the line x = r·(cos phi, sin phi) + s·(-sin phi, cos phi) inside [-extent, extent]^2.

    Vectorised over r and phi; rays that miss the square get s0 == s1.
    """
    r, phi = np.broadcast_arrays(np.asarray(r, dtype=np.float64), np.asarray(phi, dtype=np.float64))
    base = np.stack([r * np.cos(phi), r * np.sin(phi)], axis=-1)
    direction = np.stack([-np.sin(phi), np.cos(phi)], axis=-1)

    lower = np.full(r.shape, -np.inf)
    upper = np.full(r.shape, np.inf)
    for axis in range(2):
        d = direction[..., axis]
        p = base[..., axis]
        parallel = np.abs(d) < 1e-15
        with np.errstate(divide='ignore', invalid='ignore'):
            a = (-extent - p) / d
            b = (extent - p) / d
        lower = np.where(parallel, np.where(np.abs(p) <= extent, lower, np.inf), np.maximum(lower, np.minimum(a, b)))
        upper = np.where(parallel, np.where(np.abs(p) <= extent, upper, -np.inf), np.minimum(upper, np.maximum(a, b)))

    hit = upper > lower
    return np.where(hit, lower, 0.0), np.where(hit, upper, 0.0)


def ray_points(r, phi, quadrature, extent=1.0):
    """Midpoint quadrature nodes [R × Q × 2] and weights [R × Q] for a batch of rays.

    Rays missing the domain get zero weights with their nodes parked at the origin.
    """
    r = np.atleast_1d(np.asarray(r, dtype=np.float64))
    phi = np.atleast_1d(np.asarray(phi, dtype=np.float64))
    s0, s1 = ray_chord(r, phi, extent)
    length = s1 - s0

    fractions = (np.arange(quadrature) + 0.5) / quadrature
    s = s0[:, None] + length[:, None] * fractions[None, :]
    base = np.stack([r * np.cos(phi), r * np.sin(phi)], axis=-1)
    direction = np.stack([-np.sin(phi), np.cos(phi)], axis=-1)

    points = base[:, None, :] + s[..., None] * direction[:, None, :]
    points[length <= 0] = 0.0
    weights = np.repeat((length / quadrature)[:, None], quadrature, axis=1)
    return points, weights


def _integrate(f, r, phi, quadrature, extent=1.0):
    points, weights = ray_points(r, phi, quadrature, extent)
    rays = points.shape[0]
    values = sample_pixels(f, points.reshape(-1, 2)).reshape(rays, quadrature, -1)
    return np.einsum('rqc,rq->rc', values, weights)


def radon_project(f, ray):
    """Line integral of f along one ray; 0 when the ray misses the domain."""
    if not isinstance(ray, RaySpec):
        raise TypeError('radon_project expects a RaySpec, got {}'.format(type(ray).__name__))

    value = _integrate(f, [ray.r], [ray.phi], ray.quadrature, ray.extent)[0]
    return float(value[0]) if value.size == 1 else value


def sinogram(f, angles, offsets, quadrature=256):
    """[#angles × #offsets] matrix of projections, one row per angle."""
    angles = np.asarray(angles, dtype=np.float64).reshape(-1)
    offsets = np.asarray(offsets, dtype=np.float64).reshape(-1)
    if not angles.size or not offsets.size:
        raise ValueError('sinogram needs at least one angle and one offset.')
    if quadrature < 2:
        raise ValueError('A ray needs at least 2 quadrature samples, got {}'.format(quadrature))

    phi, r = np.meshgrid(angles, offsets, indexing='ij')
    values = _integrate(f, r.reshape(-1), phi.reshape(-1), quadrature)
    return values[:, 0].reshape(angles.size, offsets.size)


def sdf_losses(f, on_pts, off_pts):
    """Monte-Carlo estimates (mean |f| on the surface, mean |f - d| off it)."""
    if not len(on_pts) or not len(off_pts):
        raise ValueError('sdf_losses needs non-empty on-surface and off-surface sample sets.')

    on = sample_pixels(f, np.stack([s.point for s in on_pts]))[:, 0]
    off = sample_pixels(f, np.stack([s.point for s in off_pts]))[:, 0]
    targets = np.array([s.distance for s in off_pts])
    return float(np.mean(np.abs(on))), float(np.mean(np.abs(off - targets)))


class PixelFunctional(object):
    """R(f|x) = f(x)."""

    kind = 'pixel'
    robust = False

    def points(self, ms):
        return ms.omega

    def reduce(self, tape, values, sets):
        return values

    def weights(self, ms):
        return np.full(ms.values.shape, 1.0 / ms.values.size)


class RadonFunctional(object):
    """R(f|r, phi) = midpoint-rule line integral of f; omega rows are (r, phi)."""

    kind = 'radon'
    robust = False

    def __init__(self, quadrature=256):
        if quadrature < 2:
            raise ValueError('A ray needs at least 2 quadrature samples, got {}'.format(quadrature))
        self.quadrature = quadrature

    def points(self, ms):
        if ms.omega.shape[1] != 2:
            raise DimensionError('Ray parameters must be (r, phi) pairs, got {} columns'.format(ms.omega.shape[1]))
        points, _ = ray_points(ms.omega[:, 0], ms.omega[:, 1], self.quadrature)
        return points.reshape(-1, 2)

    def reduce(self, tape, values, sets):
        """[I × t·Q × C] node values to [I × t × C] ray integrals; one set shared or one per instance."""
        weights = np.stack([ray_points(ms.omega[:, 0], ms.omega[:, 1], self.quadrature)[1] for ms in sets])
        instances, _, channels = values.shape
        per_ray = tape.reshape(values, (instances, len(sets[0]), self.quadrature, channels))
        return tape.sum(tape.mul(per_ray, weights[..., None]), axis=2)

    def weights(self, ms):
        return np.full(ms.values.shape, 1.0 / ms.values.size)


class SdfFunctional(object):
    """Point evaluation with on-surface and off-surface rows averaged separately."""

    kind = 'sdf'
    robust = True

    def points(self, ms):
        return ms.omega

    def reduce(self, tape, values, sets):
        return values

    def weights(self, ms):
        if ms.labels is None:
            raise ValueError('SDF measurement set {} carries no on/off-surface labels'.format(ms.instance_id))

        on = ms.labels
        if not on.any() or on.all():
            raise ValueError('SDF measurement set {} needs both on-surface and off-surface samples'.format(ms.instance_id))
        weights = np.where(on, 1.0 / on.sum(), 1.0 / (~on).sum())
        return np.repeat(weights[:, None], ms.channels, axis=1) / ms.channels


def functional_for(kind, quadrature=256):
    if kind == 'pixel':
        return PixelFunctional()
    if kind == 'radon':
        return RadonFunctional(quadrature)
    if kind == 'sdf':
        return SdfFunctional()
    raise ValueError('Unknown measurement kind "{}"'.format(kind))


def weighted_loss(tape, prediction, targets, weights, loss='l2'):
    """Sum over instances and rows of weights · (pred - y)^2 (or |pred - y| for l1), averaged over instances."""
    if prediction.shape != np.shape(targets):
        raise DimensionError('Prediction is {} but targets are {}'.format(prediction.shape, np.shape(targets)))

    residual = tape.sub(prediction, targets)
    if loss == 'l1':
        per_entry = tape.abs(residual)
    elif loss == 'l2':
        per_entry = tape.square(residual)
    else:
        raise ValueError('Unknown loss "{}"'.format(loss))
    return tape.mul(tape.sum(tape.mul(per_entry, weights)), 1.0 / prediction.shape[0])
