#   Neural Implicit Dictionary
#      Released under the MIT license
#

import numpy as np

from Measurements.MeasurementSet import MeasurementSet, SdfSample, ON_SURFACE, OFF_SURFACE, pixel_grid


class Ellipse(object):
    def __init__(self, center, axes, rotation, intensity):
        self.center = np.asarray(center, dtype=np.float64)
        self.axes = np.asarray(axes, dtype=np.float64)
        self.rotation = float(rotation)
        self.intensity = float(intensity)

    def inside(self, points):
        c, s = np.cos(self.rotation), np.sin(self.rotation)
        d = points - self.center
        u = (c * d[:, 0] + s * d[:, 1]) / self.axes[0]
        v = (-s * d[:, 0] + c * d[:, 1]) / self.axes[1]
        return u * u + v * v <= 1.0


class EllipsePhantom(object):
    """Sum of additive ellipses, clamped to [0, 1]; evaluable at any continuous point."""

    def __init__(self, ellipses, size):
        self.ellipses = ellipses
        self.size = size

    def __call__(self, points):
        points = np.atleast_2d(np.asarray(points, dtype=np.float64))
        total = np.zeros(points.shape[0])
        for ellipse in self.ellipses:
            total += ellipse.intensity * ellipse.inside(points)
        return np.clip(total, 0.0, 1.0)[:, None]

    def raster(self):
        return self(pixel_grid(self.size))[:, 0].reshape(self.size, self.size)


def gen_phantoms(count, size, seed):
    """Random 4-8 ellipse phantoms: a bright outer body with smaller inner structures."""
    if count < 1:
        raise ValueError('Phantom count must be at least 1, got {}'.format(count))

    rng = np.random.default_rng(seed)
    phantoms = []
    for _ in range(count):
        ellipses = [Ellipse(rng.uniform(-0.1, 0.1, size=2), rng.uniform(0.6, 0.85, size=2),
                            rng.uniform(0, np.pi), rng.uniform(0.6, 1.0))]
        for _ in range(rng.integers(3, 8)):
            ellipses.append(Ellipse(rng.uniform(-0.45, 0.45, size=2), rng.uniform(0.05, 0.3, size=2),
                                    rng.uniform(0, np.pi), rng.uniform(-0.4, 0.4)))
        phantoms.append(EllipsePhantom(ellipses, size))
    return phantoms


def gen_blob_images(count, size, seed):
    """Sums of 3-6 anisotropic Gaussian bumps with random RGB tints: [count × D × D × 3]."""
    rng = np.random.default_rng(seed)
    grid = pixel_grid(size)
    images = np.zeros((count, size, size, 3))
    for i in range(count):
        image = np.full((grid.shape[0], 3), 0.0) + rng.uniform(0.0, 0.3, size=3)
        for _ in range(rng.integers(3, 7)):
            center = rng.uniform(-0.8, 0.8, size=2)
            scales = rng.uniform(0.15, 0.6, size=2)
            angle = rng.uniform(0, np.pi)
            c, s = np.cos(angle), np.sin(angle)
            d = grid - center
            u = (c * d[:, 0] + s * d[:, 1]) / scales[0]
            v = (-s * d[:, 0] + c * d[:, 1]) / scales[1]
            image += np.exp(-0.5 * (u * u + v * v))[:, None] * rng.uniform(0.0, 0.8, size=3)
        images[i] = np.clip(image, 0.0, 1.0).reshape(size, size, 3)
    return images


class ConvexPolygon(object):
    """Exact signed distance to a convex polygon; negative inside."""

    def __init__(self, vertices):
        self.vertices = np.asarray(vertices, dtype=np.float64)

    @property
    def edges(self):
        return self.vertices, np.roll(self.vertices, -1, axis=0)

    @property
    def centroid(self):
        return self.vertices.mean(axis=0)

    def contains(self, points):
        a, b = self.edges
        edge = b - a
        rel = points[:, None, :] - a[None, :, :]
        cross = edge[None, :, 0] * rel[..., 1] - edge[None, :, 1] * rel[..., 0]
        return np.all(cross >= 0, axis=1)

    def unsigned_distance(self, points):
        a, b = self.edges
        edge = b - a
        rel = points[:, None, :] - a[None, :, :]
        t = np.clip((rel * edge[None]).sum(axis=-1) / (edge * edge).sum(axis=-1)[None], 0.0, 1.0)
        closest = a[None] + t[..., None] * edge[None]
        return np.linalg.norm(points[:, None, :] - closest, axis=-1).min(axis=1)

    def __call__(self, points):
        points = np.atleast_2d(np.asarray(points, dtype=np.float64))
        distance = self.unsigned_distance(points)
        return np.where(self.contains(points), -distance, distance)[:, None]

    def boundary(self, count, rng):
        """Points on the edges, uniform in arc length, and the outward edge normals there."""
        a, b = self.edges
        lengths = np.linalg.norm(b - a, axis=1)
        edge = rng.choice(len(a), size=count, p=lengths / lengths.sum())
        t = rng.uniform(0.0, 1.0, size=count)
        points = a[edge] + t[:, None] * (b - a)[edge]
        tangent = (b - a)[edge] / lengths[edge, None]
        normals = np.stack([tangent[:, 1], -tangent[:, 0]], axis=1)
        return points, normals

    def sample(self, count, rng, instance_id=0, near=0.05):
        """Labelled SDF set: count on-surface points, count off-surface points (half near the surface)."""
        on, _ = self.boundary(count, rng)
        uniform = rng.uniform(-1.0, 1.0, size=(count - count // 2, 2))
        jitter, _ = self.boundary(count // 2, rng)
        jitter = np.clip(jitter + rng.normal(0.0, near, size=jitter.shape), -1.0, 1.0)
        off = np.concatenate([uniform, jitter], axis=0)

        omega = np.concatenate([on, off], axis=0)
        values = np.concatenate([np.zeros(count), self(off)[:, 0]])
        labels = np.concatenate([np.ones(count, dtype=bool), np.zeros(off.shape[0], dtype=bool)])
        return MeasurementSet(instance_id, omega, values[:, None], kind='sdf', labels=labels)


def sdf_samples(ms):
    """SdfSample view of a labelled measurement set."""
    return [SdfSample(point, ON_SURFACE if label else OFF_SURFACE, 0.0 if label else value)
            for point, label, value in zip(ms.omega, ms.labels, ms.values[:, 0])]


def gen_polygon_sdf(count, seed):
    """Random convex polygons with 5-9 vertices inside [-0.8, 0.8]^2."""
    if count < 1:
        raise ValueError('Polygon count must be at least 1, got {}'.format(count))

    rng = np.random.default_rng(seed)
    polygons = []
    for _ in range(count):
        sides = rng.integers(5, 10)
        angles = np.sort(rng.uniform(0.0, 2.0 * np.pi, size=sides))
        # Keep every vertex gap below pi so the polygon contains its centre.
        while np.max(np.diff(np.concatenate([angles, angles[:1] + 2.0 * np.pi]))) >= np.pi:
            angles = np.sort(rng.uniform(0.0, 2.0 * np.pi, size=sides))

        circle = np.stack([np.cos(angles), np.sin(angles)], axis=1)
        scale = rng.uniform(0.3, 0.6, size=2)
        rotation = rng.uniform(0.0, np.pi)
        c, s = np.cos(rotation), np.sin(rotation)
        transform = np.array([[c, -s], [s, c]]) @ np.diag(scale)
        vertices = circle @ transform.T + rng.uniform(-0.2, 0.2, size=2)
        polygons.append(ConvexPolygon(vertices))
    return polygons


class SpriteVideo(object):
    def __init__(self, frames, background, masks):
        self.frames = frames
        self.background = background
        self.masks = masks

    def __len__(self):
        return len(self.frames)

    def measurements(self):
        grid = pixel_grid(self.background.shape[0], self.background.shape[1])
        shape = self.background.shape[:2]
        return [MeasurementSet(t, grid, frame.reshape(grid.shape[0], -1), kind='pixel', shape=shape)
                for t, frame in enumerate(self.frames)]


def gen_sprite_video(frame_count, size, seed, sprite=None):
    """Smooth static background with one high-contrast square sprite crossing the frame on a linear path."""
    if frame_count < 2:
        raise ValueError('A sprite video needs at least 2 frames, got {}'.format(frame_count))

    rng = np.random.default_rng(seed)
    grid = pixel_grid(size)
    background = np.zeros((grid.shape[0], 3)) + rng.uniform(0.2, 0.5, size=3)
    for _ in range(3):
        frequency = rng.uniform(0.5, 1.5, size=2)
        phase = rng.uniform(0, 2.0 * np.pi)
        wave = 0.5 + 0.5 * np.sin(np.pi * (grid @ frequency) + phase)
        background += 0.15 * wave[:, None] * rng.uniform(0.0, 1.0, size=3)
    background = np.clip(background, 0.0, 1.0).reshape(size, size, 3)

    side = sprite if sprite is not None else max(2, size // 6)
    if not 1 <= side < size:
        raise ValueError('A {}-pixel sprite does not fit a {}x{} frame'.format(side, size, size))

    # Corner region to the opposite corner region.
    span = size - side
    margin = span // 8
    start = rng.integers(0, margin + 1, size=2)
    end = span - rng.integers(0, margin + 1, size=2)
    flip = rng.integers(0, 2, size=2).astype(bool)
    start, end = np.where(flip, span - start, start), np.where(flip, span - end, end)

    mean = background.mean(axis=(0, 1))
    color = np.where(mean < 0.5, rng.uniform(0.8, 1.0, size=3), rng.uniform(0.0, 0.2, size=3))

    frames, masks = [], []
    for t in range(frame_count):
        row, col = np.round(start + (end - start) * t / (frame_count - 1)).astype(int)
        mask = np.zeros((size, size), dtype=bool)
        mask[row:row + side, col:col + side] = True
        frame = background.copy()
        frame[mask] = color
        frames.append(frame)
        masks.append(mask)
    return SpriteVideo(frames, background, masks)
