#   Neural Implicit Dictionary
#      Released under the MIT license
#

import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np
import yaml

from Measurements.Functionals import sdf_losses, sinogram
from Measurements.MeasurementSet import as_image, image_measurements, pixel_grid
from NidData.Checkpoint import load_checkpoint, save_checkpoint
from NidData.Corruption import corrupt_occlusion
from NidData.Generators import gen_blob_images, gen_phantoms, gen_polygon_sdf, gen_sprite_video, sdf_samples
from NidData.ImageIO import read_image, write_image
from NidData.Serialization import (sinogram_measurements, write_points, write_rows, write_sinogram,
                                   write_training_log, write_video_frames)
from NidTasks.Adaptation import adapt_code
from NidTasks.Applications import ct_reconstruct, inpaint, sdf_fit, video_decompose, zero_level_points
from NidTasks.Baseline import baseline_fit
from NidTasks.TaskConfig import ConfigError, TaskConfig
from NidTasks.Trainer import train_dictionary

from .Bench import bench_throughput
from .Metrics import MetricReport, capped, chamfer, matched_normal_consistency, psnr, ssim


HELDOUT_SEED_OFFSET = 1000
TASKS = ('image', 'ct', 'sdf')


class Config(object):
    # Keys that can be overridden by environment variables
    ENV_OVERRIDES = {
        'seed': 'NID_SEED',
        'precision': 'NID_PRECISION',
    }

    # Run-level keys next to the TaskConfig fields
    RUN_DEFAULTS = {
        'checkpoint': None,
        'debug': False,
        'task': 'image',
        'train_count': 32,
        'train_samples': 1000,
        'heldout_count': 4,
        'image_size': 32,
        'frames': 16,
        'occlusion': 8,
        'views': [16],
        'sample_counts': [500, 10000],
        'adapt_steps_report': [0, 5, 10],
        'baseline_steps': 200,
    }

    def __init__(self, filename=None, overrides=None):
        # Try to load .env file for environment variables (optional dependency)
        self._load_dotenv()

        self.filename = filename
        self.config = dict()

        if filename is not None:
            logging.info('Reading config file "{}"...'.format(filename))
            try:
                with open(filename, 'r', encoding='utf-8') as config_file:
                    self.config = yaml.safe_load(config_file) or dict()
            except yaml.YAMLError as e:
                raise ConfigError('Config file "{}" is not valid JSON/YAML: {}'.format(filename, e)) from e

            if not isinstance(self.config, dict):
                raise ConfigError('Config file "{}" must hold a flat mapping of keys.'.format(filename))

        for override in overrides or []:
            self.set(override)

        self._validate()

    def _load_dotenv(self):
        """Load environment variables from .env file if python-dotenv is available."""
        try:
            from dotenv import load_dotenv
            env_path = Path.cwd() / '.env'
            if env_path.exists():
                logging.debug('Loading environment variables from {}'.format(env_path))
                load_dotenv(env_path)
            else:
                logging.debug('No .env file found at {}'.format(env_path))
        except ImportError:
            logging.debug('python-dotenv not installed; skipping .env file loading')
        except Exception as e:
            logging.warning('Error loading .env file: {}'.format(e))

    @classmethod
    def known_keys(cls):
        return set(TaskConfig.keys()) | set(cls.RUN_DEFAULTS)

    def _validate(self):
        for key in self.config:
            if key not in self.known_keys():
                raise ConfigError('Unknown config key "{}"'.format(key))

        task = self.get('task')
        if task not in TASKS:
            raise ConfigError('task must be one of {}, got "{}"'.format(list(TASKS), task))

    def set(self, override):
        """Apply one `key=value` override; the value is parsed as YAML."""
        key, sep, value = override.partition('=')
        if not sep or not key:
            raise ConfigError('Override "{}" is not of the form key=value'.format(override))
        if key not in self.known_keys():
            raise ConfigError('Unknown config key "{}"'.format(key))
        self.config[key] = yaml.safe_load(value)

    def get(self, path, default=None):
        if path in self.ENV_OVERRIDES:
            env_value = os.environ.get(self.ENV_OVERRIDES[path])
            if env_value is not None:
                logging.debug('Using environment variable {} for config key "{}"'.format(self.ENV_OVERRIDES[path], path))
                return yaml.safe_load(env_value)

        location = self.config
        for fragment in path.split('/'):
            if not isinstance(location, dict) or fragment not in location:
                return self.RUN_DEFAULTS.get(path, default)
            location = location[fragment]

        return location

    def task_config(self):
        values = {key: self.get(key) for key in TaskConfig.keys() if self.get(key) is not None}
        return TaskConfig.from_mapping(values)

    def resolved(self):
        resolved = self.task_config().to_dict()
        resolved.update({key: self.get(key) for key in self.RUN_DEFAULTS})
        return resolved

    def write_resolved(self, out_dir):
        os.makedirs(out_dir, exist_ok=True)
        path = os.path.join(out_dir, 'resolved_config.json')
        with open(path, 'w', encoding='utf-8') as resolved_file:
            json.dump(self.resolved(), resolved_file, indent=2, sort_keys=True)
        return path


# Corpora

def image_corpus(config, cfg, heldout=False):
    count = config.get('heldout_count') if heldout else config.get('train_count')
    seed = cfg.seed + (HELDOUT_SEED_OFFSET if heldout else 0)
    return gen_blob_images(count, config.get('image_size'), seed)


def phantom_corpus(config, cfg, heldout=False):
    count = config.get('heldout_count') if heldout else config.get('train_count')
    seed = cfg.seed + (HELDOUT_SEED_OFFSET if heldout else 0)
    return gen_phantoms(count, config.get('image_size'), seed)


def polygon_corpus(config, cfg, heldout=False):
    count = config.get('heldout_count') if heldout else config.get('train_count')
    seed = cfg.seed + (HELDOUT_SEED_OFFSET if heldout else 0)
    return gen_polygon_sdf(count, seed)


def training_measurements(config, cfg):
    """(measurement kind, training sets) for the configured task.

    CT dictionaries are fitted to phantom rasters; rays only enter at reconstruction.
    """
    task = config.get('task')
    if task == 'image':
        return 'pixel', [image_measurements(image, i) for i, image in enumerate(image_corpus(config, cfg))]
    if task == 'ct':
        return 'pixel', [image_measurements(phantom.raster(), i) for i, phantom in enumerate(phantom_corpus(config, cfg))]

    rng = np.random.default_rng(cfg.seed)
    samples = config.get('train_samples') // 2
    return 'sdf', [polygon.sample(samples, rng, instance_id=i) for i, polygon in enumerate(polygon_corpus(config, cfg))]


def ray_offsets(cfg):
    return np.linspace(-1.0, 1.0, cfg.ray_count)


def view_angles(views):
    return np.arange(views) * np.pi / views


# Pipelines

def run_train(config, out_dir):
    cfg = config.task_config()
    kind, data = training_measurements(config, cfg)
    model = train_dictionary(data, kind, cfg)

    save_checkpoint(os.path.join(out_dir, 'model.nidc'), model)
    write_training_log(os.path.join(out_dir, 'training_log.csv'), model.log)
    return model


def load_or_train(config, out_dir):
    cfg = config.task_config()
    checkpoint = config.get('checkpoint')
    if checkpoint:
        if not os.path.exists(checkpoint):
            raise FileNotFoundError('Checkpoint not found: {}'.format(checkpoint))
        model = load_checkpoint(checkpoint)
        if model.k != cfg.k:
            logging.warning('Checkpoint "{}" was trained with k={}; using the configured k={}.'.format(checkpoint, model.k, cfg.k))
            model.k = cfg.k
        return model

    logging.info('No checkpoint configured; training a "{}" dictionary first.'.format(config.get('task')))
    return run_train(config, out_dir)


def _map(cfg, fn, items):
    with ThreadPoolExecutor(max_workers=cfg.threads) as executor:
        return list(executor.map(fn, items))


def run_gen_data(config, out_dir):
    cfg = config.task_config()
    size = config.get('image_size')

    image_dir = os.path.join(out_dir, 'images')
    phantom_dir = os.path.join(out_dir, 'phantoms')
    shape_dir = os.path.join(out_dir, 'shapes')
    for directory in (image_dir, phantom_dir, shape_dir):
        os.makedirs(directory, exist_ok=True)

    for i, image in enumerate(image_corpus(config, cfg)):
        write_image(os.path.join(image_dir, 'blob_{:04d}.ppm'.format(i)), image)

    angles = view_angles(config.get('views')[0])
    for i, phantom in enumerate(phantom_corpus(config, cfg)):
        write_image(os.path.join(phantom_dir, 'phantom_{:04d}.pgm'.format(i)), phantom.raster())
        values = sinogram(phantom, angles, ray_offsets(cfg), cfg.quadrature)
        write_sinogram(os.path.join(phantom_dir, 'sinogram_{:04d}.csv'.format(i)), angles, ray_offsets(cfg), values)

    rng = np.random.default_rng(cfg.seed)
    for i, polygon in enumerate(polygon_corpus(config, cfg)):
        write_points(os.path.join(shape_dir, 'shape_{:04d}.csv'.format(i)), polygon.sample(config.get('train_samples') // 2, rng, i))

    video = gen_sprite_video(config.get('frames'), size, cfg.seed)
    write_video_frames(os.path.join(out_dir, 'video'), video.frames)
    write_image(os.path.join(out_dir, 'video', 'background.ppm'), video.background)
    logging.info('Wrote generated corpora to "{}".'.format(out_dir))


def heldout_images(config, cfg):
    """Held-out rasters that `adapt` fits: blob images, or phantom rasters for CT."""
    task = config.get('task')
    if task == 'image':
        return image_corpus(config, cfg, heldout=True)
    if task == 'ct':
        return [phantom.raster() for phantom in phantom_corpus(config, cfg, heldout=True)]
    return None


def _adapt_samples(config, cfg, model, out_dir, steps):
    polygons = polygon_corpus(config, cfg, heldout=True)
    count = max(1, config.get('train_samples') // 2)

    def evaluate(item):
        i, polygon = item
        samples = polygon.sample(count, np.random.default_rng(cfg.seed + HELDOUT_SEED_OFFSET + i), instance_id=i)
        labelled = sdf_samples(samples)
        on_pts = [s for s in labelled if s.on_surface]
        off_pts = [s for s in labelled if not s.on_surface]
        row = dict()
        for steps_taken in steps:
            _, field = adapt_code(model, samples, steps_taken, loss='l1', cfg=cfg)
            row['on_{}'.format(steps_taken)], row['off_{}'.format(steps_taken)] = sdf_losses(field, on_pts, off_pts)
        return i, row

    report = MetricReport(['{}_{}'.format(term, n) for n in steps for term in ('on', 'off')])
    for i, row in _map(cfg, evaluate, list(enumerate(polygons))):
        report.add(i, **row)
    write_rows(os.path.join(out_dir, 'adapt_metrics.csv'), *report.table())
    return report


def run_adapt(config, out_dir):
    cfg = config.task_config()
    model = load_or_train(config, out_dir)
    steps = list(config.get('adapt_steps_report'))
    images = heldout_images(config, cfg)
    if images is None:
        return _adapt_samples(config, cfg, model, out_dir, steps)

    def evaluate(item):
        i, image = item
        obs = image_measurements(image, i)
        row = dict()
        for count in steps:
            _, field = adapt_code(model, obs, count, loss='l2', cfg=cfg)
            restored = np.clip(as_image(field(obs.omega), obs.shape), 0.0, 1.0)
            row['psnr_{}'.format(count)] = psnr(restored, image)
            row['ssim_{}'.format(count)] = ssim(restored, image)
        write_image(os.path.join(out_dir, 'adapted_{:04d}.{}'.format(i, 'ppm' if restored.ndim == 3 else 'pgm')), restored)
        return i, row

    report = MetricReport(['{}_{}'.format(metric, count) for count in steps for metric in ('psnr', 'ssim')])
    for i, row in _map(cfg, evaluate, list(enumerate(images))):
        report.add(i, **row)
    write_rows(os.path.join(out_dir, 'adapt_metrics.csv'), *report.table())
    return report


def run_inpaint(config, out_dir):
    cfg = config.task_config()
    model = load_or_train(config, out_dir)
    images = image_corpus(config, cfg, heldout=True)

    def evaluate(item):
        i, image = item
        corrupted, mask = corrupt_occlusion(image, config.get('occlusion'), cfg.seed + i)
        obs = image_measurements(corrupted, i)
        field, _ = inpaint(model, obs, cfg)
        baseline = baseline_fit(obs, cfg, config.get('baseline_steps'), loss='l1')

        restored = np.clip(as_image(field(obs.omega), obs.shape), 0.0, 1.0)
        overfit = np.clip(as_image(baseline(obs.omega), obs.shape), 0.0, 1.0)
        write_image(os.path.join(out_dir, 'corrupted_{:04d}.ppm'.format(i)), corrupted)
        write_image(os.path.join(out_dir, 'inpainted_{:04d}.ppm'.format(i)), restored)
        return i, dict(psnr=psnr(restored, image), psnr_masked=psnr(restored, image, mask=mask),
                       baseline_psnr=psnr(overfit, image), baseline_psnr_masked=psnr(overfit, image, mask=mask))

    report = MetricReport(['psnr', 'psnr_masked', 'baseline_psnr', 'baseline_psnr_masked'])
    for i, row in _map(cfg, evaluate, list(enumerate(images))):
        report.add(i, **row)
    write_rows(os.path.join(out_dir, 'inpaint_metrics.csv'), *report.table())
    return report


def run_video(config, out_dir):
    cfg = config.task_config()
    video = gen_sprite_video(config.get('frames'), config.get('image_size'), cfg.seed)
    frames = video.measurements()
    result = video_decompose(frames, cfg)

    shape = video.background.shape[:2]
    backgrounds = result.backgrounds()
    residuals = result.residuals()
    write_video_frames(os.path.join(out_dir, 'background'), [np.clip(as_image(b, shape), 0.0, 1.0) for b in backgrounds])
    write_video_frames(os.path.join(out_dir, 'foreground'), [np.clip(np.abs(as_image(r, shape)), 0.0, 1.0) for r in residuals])

    masks = np.stack(video.masks).reshape(len(frames), -1)
    mass = np.abs(residuals).sum(axis=-1)
    report = MetricReport(['background_mae', 'residual_in_mask'])
    report.add(0, background_mae=float(np.mean(np.abs(backgrounds - video.background.reshape(1, -1, 3)))),
               residual_in_mask=float(mass[masks].sum() / mass.sum()) if mass.sum() > 0 else 1.0)
    write_rows(os.path.join(out_dir, 'video_metrics.csv'), *report.table())
    return report


def run_ct(config, out_dir):
    config.set('task=ct')
    cfg = config.task_config()
    model = load_or_train(config, out_dir)
    phantoms = phantom_corpus(config, cfg, heldout=True)
    offsets = ray_offsets(cfg)
    grid = pixel_grid(config.get('image_size'))

    reports = dict()
    for views in config.get('views'):
        angles = view_angles(views)

        def evaluate(item):
            i, phantom = item
            obs = sinogram_measurements(angles, offsets, sinogram(phantom, angles, offsets, cfg.quadrature), i)
            truth = phantom.raster()
            field = ct_reconstruct(model, obs, cfg)
            baseline = baseline_fit(obs, cfg, config.get('baseline_steps'), loss='l2')
            recon = np.clip(field(grid)[:, 0].reshape(truth.shape), 0.0, 1.0)
            control = np.clip(baseline(grid)[:, 0].reshape(truth.shape), 0.0, 1.0)
            write_image(os.path.join(out_dir, 'ct_v{}_{:04d}.pgm'.format(views, i)), recon)
            return i, dict(psnr=psnr(recon, truth), ssim=ssim(recon, truth),
                           baseline_psnr=psnr(control, truth), baseline_ssim=ssim(control, truth))

        report = MetricReport(['psnr', 'ssim', 'baseline_psnr', 'baseline_ssim'])
        for i, row in _map(cfg, evaluate, list(enumerate(phantoms))):
            report.add(i, **row)
        write_rows(os.path.join(out_dir, 'ct_metrics_v{}.csv'.format(views)), *report.table())
        reports[views] = report
    return reports


def run_sdf(config, out_dir):
    config.set('task=sdf')
    cfg = config.task_config()
    model = load_or_train(config, out_dir)
    polygons = polygon_corpus(config, cfg, heldout=True)
    resolution = 4 * config.get('image_size')

    reports = dict()
    for count in config.get('sample_counts'):
        def evaluate(item):
            i, polygon = item
            rng = np.random.default_rng(cfg.seed + HELDOUT_SEED_OFFSET + i)
            samples = polygon.sample(max(1, count // 2), rng, instance_id=i)
            reference, normals = polygon.boundary(2000, rng)

            row = dict()
            for name, field in (('nid', sdf_fit(model, samples, cfg)),
                                ('baseline', baseline_fit(samples, cfg, config.get('baseline_steps'), loss='l1'))):
                points, fitted = zero_level_points(field, resolution)
                if len(points):
                    row[name + '_chamfer'] = chamfer(points, reference)
                    row[name + '_nc'] = matched_normal_consistency(points, fitted, reference, normals)
                else:
                    row[name + '_chamfer'], row[name + '_nc'] = float('inf'), 0.0
            return i, row

        report = MetricReport(['nid_chamfer', 'nid_nc', 'baseline_chamfer', 'baseline_nc'])
        for i, row in _map(cfg, evaluate, list(enumerate(polygons))):
            report.add(i, **row)
        write_rows(os.path.join(out_dir, 'sdf_metrics_n{}.csv'.format(count)),
                   *report.table(scale={'nid_chamfer': 1e3, 'baseline_chamfer': 1e3}))
        reports[count] = report
    return reports


def run_metrics(pred, ref, out_dir):
    a, b = read_image(pred), read_image(ref)
    rows = [('psnr', capped(psnr(a, b))), ('ssim', ssim(a, b))]
    return write_rows(os.path.join(out_dir, 'metrics.csv'), ('metric', 'value'), rows)


def run_bench(config, out_dir):
    cfg = config.task_config()
    model = load_or_train(config, out_dir)
    size = config.get('image_size')

    rows = []
    for k in sorted({1, min(cfg.k, model.arch.n), model.arch.n}):
        before = model.dictionary.head_evaluations
        throughput, parameters = bench_throughput(model, size, 5, k=k)
        rows.append((k, throughput, parameters, (model.dictionary.head_evaluations - before) // 6))
    return write_rows(os.path.join(out_dir, 'bench.csv'), ('k', 'images_per_sec', 'parameters', 'head_evaluations'), rows)
