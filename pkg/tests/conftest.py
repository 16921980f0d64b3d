"""Shared fixtures: seeded generators, random networks and tiny distributions"""
from typing import Callable, Sequence

import numpy as np
import pytest

from services.learning_service import DataDistribution
from services.network_service import Network, make_network, random_network


def reference_forward(net: Network, xs: np.ndarray) -> np.ndarray:
    """Recursive evaluator on dense weights, independent of the packed path"""
    xs = np.asarray(xs, dtype=np.int64)
    if xs.ndim == 1:
        xs = xs[None, :]

    def run(h: np.ndarray, l: int) -> np.ndarray:
        if l == net.depth:
            return h
        layer = net.layers[l]
        out = np.zeros((h.shape[0], layer.d_out), dtype=np.int64)
        dense = layer.dense().astype(np.int64)
        for j in range(layer.d_out):
            total = (h * dense[j][None, :]).sum(axis=1)
            out[:, j] = (int(layer.scalars[j]) * total + int(layer.bias[j])) > 0
        return run(out, l + 1)

    return run(xs, 0).astype(np.uint8)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(12345)


@pytest.fixture
def net_factory(rng) -> Callable[[Sequence[int]], Network]:
    def make(dims: Sequence[int], ternary_first: bool = False) -> Network:
        return random_network(list(dims), rng, ternary_first=ternary_first)
    return make


@pytest.fixture
def threshold_teacher() -> Network:
    """Majority of three bits"""
    return make_network([np.array([[1, 1, 1]])], [[-1]], [[1]])


@pytest.fixture
def tiny_distribution(threshold_teacher) -> DataDistribution:
    return DataDistribution(d0=3, teacher=threshold_teacher, eps=0.2)
