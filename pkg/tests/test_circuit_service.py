import numpy as np
import pytest

from services.circuit_service import CONST0, CONST1, AffineMap2, CircuitBuilder, LtCircuit, lt_to_btn, parity_block
from services.network_service import evaluate_batch
from utils.errors import ShapeError
from utils.helpers import all_inputs


def _run(c0: AffineMap2, c1: LtCircuit, xs: np.ndarray) -> np.ndarray:
    return c1.evaluate_batch(c0.apply(xs))


def test_affine_map_apply():
    m = AffineMap2(np.array([[1, 1, 0], [0, 0, 1]]), np.array([1, 0]))
    assert m.apply(np.array([1, 1, 1])).tolist() == [1, 1]
    assert m.apply(np.array([1, 0, 0])).tolist() == [0, 0]
    with pytest.raises(ShapeError):
        AffineMap2(np.zeros((2, 3)), np.zeros(3))


def test_parity_block_sums_to_parity():
    for d in range(1, 8):
        xs = all_inputs(d).astype(np.int64)
        for offset in (0, 1):
            rows, biases, scalars, kappa = parity_block(range(d), offset)
            total = np.zeros(len(xs), dtype=np.int64)
            for row, b, g in zip(rows, biases, scalars):
                s = xs[:, list(row)].sum(axis=1) if row else np.zeros(len(xs), dtype=np.int64)
                total += (g * s + b > 0)
            assert np.array_equal(total - kappa, (xs.sum(axis=1) + offset) % 2)


def test_builder_gates_and_compile():
    d = 5
    builder = CircuitBuilder(d)
    x = [builder.input_bit(j) for j in range(d)]
    and01 = builder.AND([x[0], x[1]])
    or23 = builder.OR([x[2], x[3]])
    maj = builder.gate([(x[0], 1), (x[2], 1), (x[4], 1)], -1)
    par = builder.parity([and01, or23, x[4]])
    outputs = [and01, or23, builder.NOT(maj), par, CONST1]
    c0, c1 = builder.compile(outputs)
    xs = all_inputs(d)
    got = _run(c0, c1, xs).astype(np.int64)
    x_ = xs.astype(np.int64)
    a = x_[:, 0] & x_[:, 1]
    o = x_[:, 2] | x_[:, 3]
    m = (x_[:, 0] + x_[:, 2] + x_[:, 4] >= 2).astype(np.int64)
    assert np.array_equal(got[:, 0], a)
    assert np.array_equal(got[:, 1], o)
    assert np.array_equal(got[:, 2], 1 - m)
    assert np.array_equal(got[:, 3], a ^ o ^ x_[:, 4])
    assert np.all(got[:, 4] == 1)


def test_builder_folds_constants():
    builder = CircuitBuilder(3)
    x0 = builder.input_bit(0)
    assert builder.AND([x0, CONST0]) == CONST0
    assert builder.OR([x0, CONST1]) == CONST1
    assert builder.AND([x0, CONST1]) == x0
    assert builder.NOT(builder.NOT(x0)) == x0
    assert builder.parity([x0, x0]) == CONST0
    assert builder.affine(0, 1) == CONST1
    with pytest.raises(ShapeError):
        builder.affine(1 << 3)


def test_lt_to_btn_matches_compiled_circuit():
    d = 6
    builder = CircuitBuilder(d)
    x = [builder.input_bit(j) for j in range(d)]
    p = builder.parity(x[:4])
    t = builder.literal_and([(x[4], 1), (x[5], 0), (p, 1)])
    out = builder.OR([t, builder.AND([x[0], builder.NOT(x[5])])])
    c0, c1 = builder.compile([out, p])
    net = lt_to_btn(c0, c1)
    xs = all_inputs(d)
    assert net.depth == c1.depth + 1
    assert np.array_equal(evaluate_batch(net, xs), _run(c0, c1, xs))


def test_lt_to_btn_integer_weights(rng):
    for _ in range(30):
        d_aff, d_in = int(rng.integers(1, 5)), int(rng.integers(1, 6))
        c0 = AffineMap2.random(d_in, d_aff, rng)
        widths = [int(rng.integers(1, 4)) for _ in range(int(rng.integers(1, 3)))]
        weights, biases, prev = [], [], d_aff
        for w in widths:
            weights.append(rng.integers(-2, 3, size=(w, prev)))
            biases.append(rng.integers(-2, 3, size=w))
            prev = w
        c1 = LtCircuit.from_dense(d_aff, weights, biases)
        xs = all_inputs(d_in)
        assert np.array_equal(evaluate_batch(lt_to_btn(c0, c1), xs), _run(c0, c1, xs))


def test_lt_to_btn_rejects_mismatched_stages(rng):
    c0 = AffineMap2.random(3, 2, rng)
    c1 = LtCircuit.from_dense(3, [np.ones((1, 3), dtype=np.int64)], [[0]])
    with pytest.raises(ShapeError):
        lt_to_btn(c0, c1)
