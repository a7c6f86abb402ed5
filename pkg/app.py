import argparse
import json
import logging
import sys
from pathlib import Path

from dotenv import load_dotenv
from pydantic import ValidationError

from config import DEFAULT_WORKERS, LOG_LEVEL
from src.errors import ConfigInvalid, VerificationError
from src.models import ExperimentConfig
from src.runner import EXIT_INPUT, ExperimentRunner
from src.validators import COMMANDS, validate_config_document

load_dotenv()

logging.basicConfig(
    level=LOG_LEVEL,
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
)
logger = logging.getLogger(__name__)

# flag destinations that map onto ExperimentConfig fields
PER_COMMAND_FLAGS = {
    'analyze': [('--t-step', float), ('--delta', float), ('--grid-step', float), ('--margin', float),
                ('--sigma-mc-n', int), ('--sigma-mc-paths', int)],
    'simulate': [('--n', int), ('--paths', int)],
    'verify': [('--llt-n-max', int), ('--kernel-steps', int), ('--kernel-max-distance', int),
               ('--kernel-prune', float), ('--fourier-n-max', int), ('--moment-paths', int),
               ('--moment-max-distance', int)],
    'converge': [('--paths', int), ('--reference-paths', int), ('--occupation-paths', int),
                 ('--mesh', int), ('--eps', float), ('--tightness-eps', float), ('--window', float)],
}

LIST_FLAGS = {
    'verify': [('--moment-exact-n', int), ('--moment-mc-n', int)],
    'converge': [('--n-values', int), ('--deltas', float), ('--tail-levels', float)],
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='ltv', description='Local-time verification toolkit for Markov chains')
    sub = parser.add_subparsers(dest='command', required=True)
    for command in COMMANDS:
        p = sub.add_parser(command)
        p.add_argument('--config', type=Path, help='JSON config file or manifest.json of an earlier run')
        p.add_argument('--seed', type=int)
        p.add_argument('--out', type=Path)
        p.add_argument('--workers', type=int)
        if command == 'report':
            p.add_argument('inputs', nargs='*', type=Path)
            continue
        p.add_argument('--chain', dest='chain_file', type=Path)
        for flag, kind in PER_COMMAND_FLAGS.get(command, []):
            p.add_argument(flag, type=kind)
        for flag, kind in LIST_FLAGS.get(command, []):
            p.add_argument(flag, type=kind, nargs='+')
        if command == 'simulate':
            p.add_argument('--full', action='store_true', default=None)
        if command == 'converge':
            p.add_argument('--eval-point', dest='eval_points', type=float, nargs=2, action='append',
                           metavar=('T', 'X'))
    return parser


def _load_config_file(path: Path) -> dict:
    try:
        document = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigInvalid(f"cannot read config file {path}: {e}") from e
    # a manifest carries the full config of the run it describes
    if isinstance(document, dict) and isinstance(document.get('config'), dict):
        document = document['config']
    if not isinstance(document, dict):
        raise ConfigInvalid(f"config file {path} must hold a JSON object")
    return document


def config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    document = {'workers': DEFAULT_WORKERS}
    if args.config is not None:
        document.update(_load_config_file(args.config))
    document['command'] = args.command

    for key, value in vars(args).items():
        if key in ('config', 'command') or value is None:
            continue
        if key == 'inputs' and not value:
            continue
        document[key] = [str(v) for v in value] if key == 'inputs' else value
    for key in ('chain_file', 'out'):
        if key in document and document[key] is not None:
            document[key] = str(document[key])

    is_valid, error = validate_config_document(document)
    if not is_valid:
        raise ConfigInvalid(error)
    try:
        return ExperimentConfig(**document)
    except ValidationError as e:
        raise ConfigInvalid(str(e)) from e


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = config_from_args(args)
        return ExperimentRunner(config).run()
    except VerificationError as e:
        logger.error(f"{type(e).__name__} in '{args.command}': {e}")
        return EXIT_INPUT
    except Exception as e:
        logger.error(f"Unexpected error in '{args.command}': {str(e)}", exc_info=True)
        return EXIT_INPUT


if __name__ == '__main__':
    sys.exit(main())
