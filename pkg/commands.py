"""
Command handlers for the btn toolkit

Each cmd_* takes the parsed argparse namespace and returns a process exit
code. Library errors carry their own code (2 inconsistent data, 3 search
budget, 4 shape, 5 malformed stream); anything else exits with 1.
"""
import json
import logging
from argparse import Namespace
from typing import Callable, Optional

from config.settings import NETWORK_CONFIG
from services.bounds_service import curve_grid, tempered_curves
from services.codec_service import decode_file, encode_file, length_bound_check
from services.experiment_service import experiment_config_from_file, run_experiment, write_csv
from services.learning_service import empirical_risk, read_dataset
from services.memorizer_service import MemorizerService, PartialFunction
from services.network_service import evaluate_batch, read_btn, write_btn
from services.verify_service import format_table, run_suites
from utils.errors import BtnError, ShapeError
from utils.helpers import all_inputs, format_bits, parse_bitstring

logger = logging.getLogger(__name__)


def run_command(handler: Callable[[Namespace], int], args: Namespace) -> int:
    """Run a handler and map failures to exit codes"""
    try:
        return handler(args)
    except BtnError as e:
        logger.error(f"{handler.__name__}: {e}")
        return e.exit_code
    except (OSError, ValueError) as e:
        logger.error(f"{handler.__name__}: {e}")
        return 1


def _print_json(data) -> None:
    print(json.dumps(data, indent=2, default=str))


def cmd_build_memorizer(args: Namespace) -> int:
    """Build a network with zero training error on a dataset file"""
    dataset = read_dataset(args.dataset)
    service = MemorizerService(seed=args.seed, ternary_first=args.ternary_first_layer,
                               max_retries=args.max_retries)
    if args.teacher:
        report = service.interpolate(read_btn(args.teacher), dataset)
        net = report.network
        data = report.to_dict()
    else:
        memo = service.build(PartialFunction.from_dataset(dataset))
        net = memo.network
        data = memo.to_dict()
    data['train_risk'] = float(empirical_risk(net, dataset))
    write_btn(net, args.out)
    _print_json(data)
    logger.info(f"Memorizer written to {args.out}: dims={net.dims}, L_S={data['train_risk']}")
    return 0


def cmd_eval(args: Namespace) -> int:
    """Print the network output for one input or for every input"""
    net = read_btn(args.net)
    if args.all:
        if net.d_in > NETWORK_CONFIG['MAX_EVAL_INPUT_BITS']:
            raise ShapeError(f"--all is capped at {NETWORK_CONFIG['MAX_EVAL_INPUT_BITS']} input bits")
        xs = all_inputs(net.d_in)
    else:
        x = parse_bitstring(args.input)
        if len(x) != net.d_in:
            raise ShapeError(f"network reads {net.d_in} bits, input has {len(x)}")
        xs = x[None, :]
    out = evaluate_batch(net, xs)
    for x, y in zip(xs, out):
        print(f"{format_bits(x)} {format_bits(y)}" if args.all else format_bits(y))
    return 0


def cmd_simulate(args: Namespace) -> int:
    """Run an experiment config and write its CSV"""
    config = experiment_config_from_file(args.config)
    rows = run_experiment(config)
    write_csv(rows, args.out)
    failures = sum(row.failures for row in rows)
    if failures:
        logger.warning(f"{failures} trials failed and were left out of the means")
    return 0


def format_curves(points: Optional[int] = None, q: Optional[float] = None) -> str:
    rows = tempered_curves(curve_grid(points), q)
    columns = list(rows[0].to_dict().keys())
    lines = [','.join(columns)]
    for row in rows:
        values = row.to_dict()
        lines.append(','.join(f"{float(values[c]):.10g}" for c in columns))
    return '\n'.join(lines) + '\n'


def cmd_curves(args: Namespace) -> int:
    """Write the closed-form curves over [0, 1/2]"""
    with open(args.out, 'w', newline='\n') as f:
        f.write(format_curves(args.points, args.q))
    logger.info(f"Wrote curves to {args.out}")
    return 0


def cmd_encode(args: Namespace) -> int:
    net = read_btn(args.net)
    report = encode_file(net, args.out, depth_known=args.depth_known)
    print(f"w={report.w} bits={report.bits} bound={report.bound:.1f}")
    return 0


def cmd_decode(args: Namespace) -> int:
    net = decode_file(args.bits, depth=args.depth)
    write_btn(net, args.out)
    report = length_bound_check(net, depth_known=args.depth is not None)
    print(f"w={report.w} bits={report.bits} bound={report.bound:.1f}")
    return 0


def cmd_verify(args: Namespace) -> int:
    """Run the self-check suites; nonzero exit if any fails"""
    results = run_suites(quick=args.quick, mutate=args.mutate, seed=args.seed)
    print(format_table(results))
    return 0 if all(r.passed for r in results) else 1


COMMANDS = {
    'build-memorizer': cmd_build_memorizer,
    'eval': cmd_eval,
    'simulate': cmd_simulate,
    'curves': cmd_curves,
    'encode': cmd_encode,
    'decode': cmd_decode,
    'verify': cmd_verify,
}
