"""
btn toolkit command-line entry point

Binary threshold networks: memorizer construction from dataset files,
evaluation, noisy-label learning experiments, closed-form curves,
description-length encoding and the self-check suites.
"""
import argparse
import logging
import logging.config
import sys
from typing import List, Optional

from commands import COMMANDS, run_command
from config.settings import LOGGING_CONFIG

logger = logging.getLogger(__name__)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='btn', description=__doc__.strip().splitlines()[0])
    verbosity = parser.add_mutually_exclusive_group()
    verbosity.add_argument('--verbose', action='store_true', help='log at DEBUG level')
    verbosity.add_argument('--quiet', action='store_true', help='log warnings and errors only')
    sub = parser.add_subparsers(dest='command', required=True)

    p = sub.add_parser('build-memorizer', help='build a zero-training-error network from a .ds file')
    p.add_argument('--dataset', required=True)
    p.add_argument('--out', required=True)
    p.add_argument('--teacher', help='.btn teacher; the memorizer then only stores its label flips')
    p.add_argument('--ternary-first-layer', action='store_true', default=None)
    p.add_argument('--seed', type=int)
    p.add_argument('--max-retries', type=int)

    p = sub.add_parser('eval', help='evaluate a .btn network')
    p.add_argument('--net', required=True)
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument('--input')
    group.add_argument('--all', action='store_true')

    p = sub.add_parser('simulate', help='run a teacher/student experiment config')
    p.add_argument('--config', required=True)
    p.add_argument('--out', required=True)

    p = sub.add_parser('curves', help='write the closed-form risk curves')
    p.add_argument('--out', required=True)
    p.add_argument('--q', type=float, help='add the quantization-Q column')
    p.add_argument('--points', type=int)

    p = sub.add_parser('encode', help='write the bit encoding of a network')
    p.add_argument('--net', required=True)
    p.add_argument('--out', required=True)
    p.add_argument('--depth-known', action='store_true')

    p = sub.add_parser('decode', help='read a .btnbits file back into a network')
    p.add_argument('--bits', required=True)
    p.add_argument('--out', required=True)
    p.add_argument('--depth', type=int, help='depth for streams encoded with --depth-known')

    p = sub.add_parser('verify', help='run the self-check suites')
    p.add_argument('--quick', action='store_true')
    p.add_argument('--mutate', action='store_true', help='corrupt the XOR gadget to check the harness')
    p.add_argument('--seed', type=int)
    return parser


def configure_logging(verbose: bool = False, quiet: bool = False):
    logging.config.dictConfig(LOGGING_CONFIG)
    if verbose:
        logging.getLogger().setLevel(logging.DEBUG)
    elif quiet:
        logging.getLogger().setLevel(logging.WARNING)


def main(argv: Optional[List[str]] = None) -> int:
    """Main entry point"""
    args = build_parser().parse_args(argv)
    configure_logging(args.verbose, args.quiet)
    return run_command(COMMANDS[args.command], args)


if __name__ == '__main__':
    sys.exit(main())
