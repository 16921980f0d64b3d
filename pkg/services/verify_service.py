"""
Verify Service

Self-check suites behind cmd_verify. Each suite compares a construction
against an independent reference on exhaustive (or seeded random) inputs
and reports pass/fail with a short detail line.
"""

import itertools
import logging
import time
from dataclasses import dataclass
from typing import Callable, Dict, Any, List, Optional, Tuple

import numpy as np

from config.settings import VERIFY_CONFIG
from services.bounds_service import arbitrary_bound, binary_entropy, clean_to_noisy, noisy_to_clean, phi, phi_tangent_bound
from services.circuit_service import AffineMap2
from services.codec_service import canonicalize, decode, encode, length_bound_check
from services.gadget_service import Interval, affine_network, comparison_dnf, parity_network, xor_compose, xor_gadget
from services.hsg_service import KwiseGen
from services.memorizer_service import MemorizerService, PartialFunction
from services.network_service import (
    Network, evaluate_batch, make_network, obtn_to_btn, random_network, random_obtn, same_parameters,
)
from utils.errors import BtnError
from utils.helpers import all_inputs, ceil_log2, derive_rng

logger = logging.getLogger(__name__)


@dataclass
class SuiteResult:
    name: str
    passed: bool
    detail: str
    seconds: float

    def to_dict(self) -> Dict[str, Any]:
        return {'suite': self.name, 'passed': self.passed, 'detail': self.detail,
                'seconds': round(self.seconds, 3)}


def reference_evaluate(net: Network, xs: np.ndarray) -> np.ndarray:
    """Dense layer-by-layer evaluation without bit packing"""
    h = np.asarray(xs, dtype=np.int64)
    for layer in net.layers:
        pre = layer.scalars.astype(np.int64)[None, :] * (h @ layer.dense().T.astype(np.int64))
        h = (pre + layer.bias[None, :] > 0).astype(np.int64)
    return h.astype(np.uint8)


def _random_dims(rng: np.random.Generator, max_d0: int, max_depth: int = 3, max_width: int = 6) -> List[int]:
    depth = int(rng.integers(1, max_depth + 1))
    dims = [int(rng.integers(1, max_d0 + 1))]
    dims += [int(rng.integers(1, max_width + 1)) for _ in range(depth - 1)]
    return dims + [1]


def check_network(rng: np.random.Generator, quick: bool) -> str:
    for trial in range(25 if quick else 200):
        net = random_network(_random_dims(rng, 6), rng)
        xs = all_inputs(net.d_in)
        if not np.array_equal(evaluate_batch(net, xs), reference_evaluate(net, xs)):
            raise AssertionError(f"packed evaluation differs on {net.dims}")
    return f"{trial + 1} random networks"


def check_parity(rng: np.random.Generator, quick: bool) -> str:
    top = VERIFY_CONFIG['QUICK_PARITY_MAX_D' if quick else 'FULL_PARITY_MAX_D']
    for d in range(1, top + 1):
        xs = all_inputs(d)
        fold = np.bitwise_xor.reduce(xs, axis=1).astype(np.int64)
        for negate in (False, True):
            got = parity_network(d, negate=negate).value(xs)
            if not np.array_equal(got, fold ^ int(negate)):
                raise AssertionError(f"parity d={d} negate={negate}")
    return f"d = 1..{top}"


def check_xor(rng: np.random.Generator, quick: bool, gadget: Optional[Network] = None) -> str:
    gadget = gadget or xor_gadget()
    table = evaluate_batch(gadget, all_inputs(2))[:, 0]
    if table.tolist() != [0, 1, 1, 0]:
        raise AssertionError(f"XOR gadget truth table {table.tolist()}")
    for _ in range(20 if quick else 200):
        h1 = random_network(_random_dims(rng, 5), rng)
        dims2 = _random_dims(rng, 5)
        dims2[0] = h1.d_in
        h2 = random_network(dims2, rng)
        net = xor_compose(h1, h2)
        xs = all_inputs(h1.d_in)
        want = evaluate_batch(h1, xs)[:, 0] ^ evaluate_batch(h2, xs)[:, 0]
        if not np.array_equal(evaluate_batch(net, xs)[:, 0], want):
            raise AssertionError(f"xor_compose {h1.dims} (+) {h2.dims}")
    return 'gadget truth table and random compositions'


def check_comparison(rng: np.random.Generator, quick: bool) -> str:
    top = 16 if quick else 256
    R = 2
    while R <= top:
        nbits = ceil_log2(R)
        xs = all_inputs(nbits)
        z = np.arange(R)
        for lo in range(R + 1):
            for hi in range(lo, R + 1):
                got = comparison_dnf(Interval(lo, hi), R).evaluate_batch(xs)[:, 0]
                if not np.array_equal(got, ((z >= lo) & (z < hi)).astype(np.uint8)):
                    raise AssertionError(f"interval [{lo}, {hi}) for R = {R}")
        R *= 2
    return f"all intervals, R <= {top}"


def check_affine(rng: np.random.Generator, quick: bool) -> str:
    for _ in range(20 if quick else 100):
        d, d_out = int(rng.integers(1, 9)), int(rng.integers(1, 9))
        m = AffineMap2.random(d, d_out, rng)
        xs = all_inputs(d)
        if not np.array_equal(evaluate_batch(affine_network(m), xs), m.apply(xs)):
            raise AssertionError(f"affine map {d} -> {d_out}")
    return 'random maps, exhaustive inputs'


def check_kwise(rng: np.random.Generator, quick: bool) -> str:
    gen = KwiseGen.create(4, 3)
    V = gen.seed_matrix(np.arange(gen.R, dtype=np.uint64)).astype(np.int64)
    outputs = (all_inputs(gen.r).astype(np.int64) @ V.T) & 1
    expected = (1 << gen.r) >> 3
    for triple in itertools.combinations(range(gen.R), 3):
        patterns = outputs[:, triple] @ np.array([4, 2, 1])
        counts = np.bincount(patterns, minlength=8)
        if np.any(counts != expected):
            raise AssertionError(f"coordinates {triple} hit {counts.tolist()}")
    return f"n=4, k=3, every triple {expected} times"


def check_memorizer(rng: np.random.Generator, quick: bool) -> str:
    service = MemorizerService(seed=int(rng.integers(0, 2 ** 31)))
    for _ in range(2 if quick else 10):
        d0 = int(rng.integers(4, 9))
        n = int(rng.integers(4, 17))
        idx = rng.choice(1 << d0, size=n, replace=False)
        domain = all_inputs(d0)[np.sort(idx)]
        report = service.build(PartialFunction(domain=domain, values=rng.integers(0, 2, size=n)))
        if not report.consistent:
            raise AssertionError('memorizer disagrees with its partial function')
    return 'random partial functions built and verified'


def check_codec(rng: np.random.Generator, quick: bool) -> str:
    worst = 0.0
    for _ in range(50 if quick else 500):
        net = random_network(_random_dims(rng, 6), rng)
        canonical = canonicalize(net)
        back = decode(encode(canonical))
        if not same_parameters(back, canonical):
            raise AssertionError(f"round trip changed parameters of {net.dims}")
        xs = all_inputs(net.d_in)
        if not np.array_equal(evaluate_batch(back, xs), evaluate_batch(net, xs)):
            raise AssertionError(f"round trip changed the function of {net.dims}")
        report = length_bound_check(net)
        if not report.within:
            raise AssertionError(f"{report.bits} bits exceed bound {report.bound:.1f}")
        worst = max(worst, report.bits / report.bound)
    return f"max length/bound {worst:.3f}"


def check_closed_forms(rng: np.random.Generator, quick: bool) -> str:
    for eps in np.linspace(0.0, 0.5, 101):
        power = 1.0 if eps == 0 else eps ** eps * (1 - eps) ** (1 - eps)
        if abs(arbitrary_bound(eps) - (1 - power)) > 1e-12:
            raise AssertionError(f"entropy identity at eps={eps}")
        if eps < 0.5:
            for risk in (0.0, 0.25, 0.5, 1.0):
                if abs(noisy_to_clean(clean_to_noisy(risk, eps), eps).value - risk) > 1e-12:
                    raise AssertionError(f"noisy/clean round trip at eps={eps}")
    for eps in (0.1, 0.25, 0.4):
        ts = np.linspace(0.01, 8.0, 400)
        values = np.array([phi(eps, t) for t in ts])
        if np.any(np.diff(values) >= 0) or np.any(np.diff(values, 2) < -1e-9):
            raise AssertionError(f"phi not decreasing and convex at eps={eps}")
        if any(phi_tangent_bound(eps, t) > v + 1e-12 for t, v in zip(ts, values)):
            raise AssertionError(f"tangent bound above phi at eps={eps}")
    if abs(binary_entropy(0.5) - 1.0) > 1e-15:
        raise AssertionError('H(1/2) != 1')
    return 'entropy, noisy/clean and phi identities'


def check_dale(rng: np.random.Generator, quick: bool) -> str:
    for _ in range(20 if quick else 100):
        dims = _random_dims(rng, 6)
        g = random_obtn(dims, rng)
        h, s = obtn_to_btn(g)
        xs = all_inputs(dims[0])
        if not np.array_equal(evaluate_batch(h, xs).astype(np.int64), g.evaluate_batch(xs) + s[None, :]):
            raise AssertionError(f"oBTN conversion {dims}")
        if np.any(s[g.scalars[-1] != -1]):
            raise AssertionError('shift on an output with scalar != -1')
    return 'random oBTNs, exhaustive inputs'


def corrupted_xor_gadget() -> Network:
    return make_network(
        weights=[np.array([[1, 1], [1, 1]]), np.array([[1, 1]])],
        biases=[[0, 2], [0]],
        scalars=[[1, -1], [1]],
    )


SUITES: List[Tuple[str, Callable[[np.random.Generator, bool], str]]] = [
    ('network', check_network),
    ('parity', check_parity),
    ('xor', check_xor),
    ('comparison', check_comparison),
    ('affine', check_affine),
    ('kwise', check_kwise),
    ('memorizer', check_memorizer),
    ('codec', check_codec),
    ('closed_forms', check_closed_forms),
    ('dale', check_dale),
]


def run_suites(quick: bool = False, mutate: bool = False, seed: Optional[int] = None) -> List[SuiteResult]:
    """
    Run every suite

    Args:
        quick: Small exhaustive sizes only
        mutate: Swap in a corrupted XOR gadget; the xor suite must then fail
        seed: Master seed (defaults to VERIFY_CONFIG SEED)
    """
    seed = VERIFY_CONFIG['SEED'] if seed is None else seed
    results = []
    for idx, (name, check) in enumerate(SUITES):
        rng = derive_rng(seed, idx)
        start = time.perf_counter()
        try:
            if name == 'xor' and mutate:
                detail = check_xor(rng, quick, gadget=corrupted_xor_gadget())
            else:
                detail = check(rng, quick)
            passed = True
        except (AssertionError, BtnError) as e:
            detail, passed = str(e), False
        elapsed = time.perf_counter() - start
        results.append(SuiteResult(name, passed, detail, elapsed))
        log = logger.info if passed else logger.error
        log(f"suite {name}: {'pass' if passed else 'FAIL'} ({detail}) in {elapsed:.2f}s")
    return results


def format_table(results: List[SuiteResult]) -> str:
    width = max(len(r.name) for r in results)
    lines = [f"{'suite'.ljust(width)}  result  seconds  detail"]
    for r in results:
        lines.append(f"{r.name.ljust(width)}  {'pass' if r.passed else 'FAIL':6}  "
                     f"{r.seconds:7.2f}  {r.detail}")
    return '\n'.join(lines)
