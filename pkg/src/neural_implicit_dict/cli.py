#!/usr/bin/env python3
"""Command-line front end: one subcommand per pipeline.

Every run writes its outputs, a metrics CSV and `resolved_config.json`
into `--out`.
"""

import argparse
import logging
import os
import sys

from NidTasks.TaskConfig import ConfigError

from . import NidClient
from .NidClient import Config


EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_FAILURE = 3

COMMANDS = {
    'gen-data': NidClient.run_gen_data,
    'train': NidClient.run_train,
    'adapt': NidClient.run_adapt,
    'inpaint': NidClient.run_inpaint,
    'video': NidClient.run_video,
    'ct': NidClient.run_ct,
    'sdf': NidClient.run_sdf,
    'bench': NidClient.run_bench,
}


def _find_config_path(explicit_path=None):
    """Find and validate config file path.

    Search order:
    1. Explicit path via --config argument
    2. config.json, then config.yaml, in the current working directory

    Returns None when no file is found, so built-in defaults apply.

    Raises:
        FileNotFoundError: If an explicit config file does not exist
    """
    if explicit_path:
        if os.path.exists(explicit_path):
            return explicit_path
        raise FileNotFoundError(f"Config file not found: {explicit_path}")

    for name in ('config.json', 'config.yaml'):
        cwd_path = os.path.join(os.getcwd(), name)
        if os.path.exists(cwd_path):
            return cwd_path

    return None


def _parser():
    parser = argparse.ArgumentParser(prog='nid')
    subparsers = parser.add_subparsers(dest='command', required=True)

    for name in list(COMMANDS) + ['metrics']:
        sub = subparsers.add_parser(name)
        sub.add_argument('--config', '-c', help='Path to a JSON/YAML config (optional)')
        sub.add_argument('--set', action='append', default=[], metavar='KEY=VALUE', help='Override one config key')
        sub.add_argument('--out', '-o', default='.', help='Output directory')
        if name == 'metrics':
            sub.add_argument('--pred', required=True, help='Predicted PGM/PPM image')
            sub.add_argument('--ref', required=True, help='Reference PGM/PPM image')

    return parser


def main(argv=None):
    try:
        args = _parser().parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG

    # Loading the config already logs; the handler must exist before that.
    logging.basicConfig(level=logging.INFO)
    try:
        config = Config(_find_config_path(args.config), overrides=args.set)
    except (ConfigError, FileNotFoundError) as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_CONFIG

    # Set logging level based on config debug flag
    logging.getLogger().setLevel(logging.DEBUG if config.get('debug') else logging.INFO)

    try:
        os.makedirs(args.out, exist_ok=True)
        config.task_config()
        config.write_resolved(args.out)

        if args.command == 'metrics':
            NidClient.run_metrics(args.pred, args.ref, args.out)
        else:
            COMMANDS[args.command](config, args.out)
    except (ConfigError, FileNotFoundError) as exc:
        logging.error(str(exc))
        return EXIT_CONFIG
    except Exception:
        logging.exception("Fatal error in nid {}".format(args.command))
        return EXIT_FAILURE

    return EXIT_OK


def run():
    sys.exit(main())


if __name__ == '__main__':
    run()
