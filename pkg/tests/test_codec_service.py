import math

import numpy as np
import pytest
from bitarray import bitarray

from services.codec_service import (
    canonicalize, decode, decode_file, encode, encode_file, from_bytes, is_canonical, length_bound,
    length_bound_check, to_bytes,
)
from services.network_service import evaluate_batch, make_network, random_network, same_parameters
from utils.errors import MalformedStreamError, ShapeError
from utils.helpers import all_inputs


def _random_dims(rng):
    depth = int(rng.integers(1, 4))
    return [int(rng.integers(1, 7))] + [int(rng.integers(1, 7)) for _ in range(depth - 1)] + [1]


def test_round_trip_and_length_bound(rng):
    for _ in range(500):
        net = random_network(_random_dims(rng), rng)
        canonical = canonicalize(net)
        assert is_canonical(canonical)
        back = decode(encode(canonical))
        assert same_parameters(back, canonical)
        xs = all_inputs(net.d_in)
        assert np.array_equal(evaluate_batch(back, xs), evaluate_batch(net, xs))
        report = length_bound_check(net)
        assert report.within, report.to_dict()
        assert report.bound == pytest.approx(report.w + 12 * math.sqrt(report.w) * math.log2(report.w + 2) + 64)


def test_ternary_and_wide_bias_round_trip(rng):
    for _ in range(50):
        dims = _random_dims(rng)
        for net in (random_network(dims, rng, ternary_first=True), random_network(dims, rng, wide_bias=True)):
            canonical = canonicalize(net)
            assert same_parameters(decode(encode(canonical)), canonical)


def test_depth_known_streams(net_factory):
    net = canonicalize(net_factory([3, 4, 2, 1]))
    encoding = encode(net, depth_known=True)
    assert encoding.length < encode(net).length
    assert same_parameters(decode(encoding, depth=3), net)
    with pytest.raises(ShapeError):
        decode(encoding)


def test_exact_lengths_on_both_bias_branches():
    # hidden layer wider than its input: pair multiplicities
    wide = canonicalize(make_network([np.array([[1, 0], [0, 1], [1, 1]]), np.array([[1, 1, 0]])],
                                     [[0, 1, 2], [0]], [[1, 1, -1], [1]]))
    assert encode(wide).length == 72
    # narrow hidden layer: one bias and scalar field per neuron
    narrow = make_network([np.array([[1, 1]]), np.array([[1]])], [[-1], [0]], [[1], [1]])
    assert encode(narrow).length == 38


def test_encode_requires_canonical_order():
    net = make_network([np.array([[1, 0], [0, 1]]), np.array([[1, 1]])], [[1, 0], [0]], [[1, 1], [1]])
    assert not is_canonical(net)
    with pytest.raises(ShapeError):
        encode(net)
    canonical = canonicalize(net)
    assert canonical.layers[0].bias.tolist() == [0, 1]
    xs = all_inputs(2)
    assert np.array_equal(evaluate_batch(canonical, xs), evaluate_batch(net, xs))


def test_malformed_streams(net_factory):
    bits = encode(canonicalize(net_factory([3, 3, 1]))).bits
    with pytest.raises(MalformedStreamError) as info:
        decode(bits[:-3])
    assert info.value.exit_code == 5
    with pytest.raises(MalformedStreamError):
        decode(bits + bitarray('0'))
    bad_version = bitarray('1111') + bits[4:]
    with pytest.raises(MalformedStreamError):
        decode(bad_version)
    with pytest.raises(MalformedStreamError):
        decode(bitarray('0001000'))


def test_byte_framing():
    for length in range(0, 30):
        bits = bitarray(('10' * 20)[:length])
        data = to_bytes(bits)
        assert len(data) * 8 >= length + 3
        assert from_bytes(data) == bits
    with pytest.raises(MalformedStreamError):
        from_bytes(b'')


def test_file_round_trip(tmp_path, net_factory):
    net = net_factory([4, 5, 1])
    path = tmp_path / 'net.btnbits'
    report = encode_file(net, path)
    assert report.within and report.bound == pytest.approx(length_bound(net.stats().w))
    back = decode_file(path)
    assert same_parameters(back, canonicalize(net))
