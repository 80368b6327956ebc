#   Neural Implicit Dictionary
#      Released under the MIT license
#

import csv
import os

import numpy as np

from Measurements.MeasurementSet import MeasurementSet, ON_SURFACE, OFF_SURFACE

from .ImageIO import write_image


def write_rows(path, header, rows):
    with open(path, 'w', newline='', encoding='utf-8') as csv_file:
        writer = csv.writer(csv_file)
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    return path


def read_rows(path):
    with open(path, 'r', newline='', encoding='utf-8') as csv_file:
        reader = csv.reader(csv_file)
        header = next(reader)
        return header, [row for row in reader]


def write_sinogram(path, angles, offsets, values):
    """One `angle,offset,value` row per ray, angle-major."""
    values = np.asarray(values, dtype=np.float64).reshape(len(angles), len(offsets))
    rows = [(phi, r, values[i, j]) for i, phi in enumerate(angles) for j, r in enumerate(offsets)]
    return write_rows(path, ('angle', 'offset', 'value'), rows)


def read_sinogram(path, instance_id=0):
    """Ray measurement set with omega rows (r, phi)."""
    header, rows = read_rows(path)
    if header != ['angle', 'offset', 'value']:
        raise ValueError('"{}" is not a sinogram CSV (header {})'.format(path, header))
    data = np.array(rows, dtype=np.float64).reshape(-1, 3)
    return MeasurementSet(instance_id, data[:, [1, 0]], data[:, 2:], kind='radon')


def sinogram_measurements(angles, offsets, values, instance_id=0):
    phi, r = np.meshgrid(np.asarray(angles, dtype=np.float64), np.asarray(offsets, dtype=np.float64), indexing='ij')
    omega = np.stack([r.reshape(-1), phi.reshape(-1)], axis=1)
    return MeasurementSet(instance_id, omega, np.asarray(values, dtype=np.float64).reshape(-1, 1), kind='radon')


def write_points(path, ms):
    """SDF samples as `x,y[,z],label,distance`."""
    axes = ('x', 'y', 'z')[:ms.omega.shape[1]]
    rows = [tuple(point) + (ON_SURFACE if label else OFF_SURFACE, 0.0 if label else value)
            for point, label, value in zip(ms.omega, ms.labels, ms.values[:, 0])]
    return write_rows(path, axes + ('label', 'distance'), rows)


def read_points(path, instance_id=0):
    header, rows = read_rows(path)
    if header[-2:] != ['label', 'distance']:
        raise ValueError('"{}" is not a point-sample CSV (header {})'.format(path, header))
    dims = len(header) - 2
    omega = np.array([row[:dims] for row in rows], dtype=np.float64).reshape(-1, dims)
    labels = np.array([row[dims] == ON_SURFACE for row in rows], dtype=bool)
    values = np.array([row[dims + 1] for row in rows], dtype=np.float64)
    return MeasurementSet(instance_id, omega, values[:, None], kind='sdf', labels=labels)


def write_training_log(path, log):
    rows = [(entry['epoch'], entry['mode'], entry['data_loss'], entry['penalty'],
             float(entry['utilization'].max()) if entry['utilization'].size else 0.0)
            for entry in log.epochs]
    return write_rows(path, ('epoch', 'mode', 'data_loss', 'penalty', 'max_share'), rows)


def write_video_frames(directory, frames, prefix='frame'):
    """Numbered PPM frames: prefix_0000.ppm, prefix_0001.ppm, ..."""
    os.makedirs(directory, exist_ok=True)
    return [write_image(os.path.join(directory, '{}_{:04d}.ppm'.format(prefix, t)), frame) for t, frame in enumerate(frames)]
