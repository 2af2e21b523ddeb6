import json
from pathlib import Path

import numpy as np
import pytest

from vjump.model import VelocityModel, check_irreducible

FIXTURES = Path(__file__).resolve().parents[1] / "src" / "vjump" / "fixtures"


def fixture_doc(name):
    return json.loads((FIXTURES / f"{name}.json").read_text())


def fixture_model(name):
    from vjump.config import parse_config

    return parse_config(fixture_doc(name)).model


def random_connected_rates(rng, n, extra=3):
    """Random spanning tree plus up to ``extra`` further arcs, rates in (0, 1].

    The graphs stay sparse (few independent cycles) so that exhaustive forest
    enumeration remains cheap at n = 10.
    """
    mu = np.zeros((n, n))
    for k in range(1, n):
        j = int(rng.integers(k))
        mu[k, j] = mu[j, k] = 1.0 - rng.random()
    free = [(i, j) for i in range(n) for j in range(i + 1, n) if mu[i, j] == 0]
    if free:
        pick = rng.permutation(len(free))[: int(rng.integers(0, extra + 1))]
        for e in pick:
            i, j = free[e]
            mu[i, j] = mu[j, i] = 1.0 - rng.random()
    return mu


def random_model(rng, n=None, d=None, extra=3, nmax=10):
    n = int(rng.integers(2, nmax + 1)) if n is None else n
    d = int(rng.integers(1, 4)) if d is None else d
    return VelocityModel(rng.standard_normal((n, d)), random_connected_rates(rng, n, extra))


def random_paired_model(rng, pairs, d, zero=False, density=0.7):
    """Opposite velocity pairs with rates invariant under swapping any pair.

    Rates between two different blocks are one constant per block pair, so
    swapping the members of a pair is a graph automorphism; this is what
    makes the pair minor equalities hold.
    """
    blocks = [[2 * l, 2 * l + 1] for l in range(pairs)]
    n = 2 * pairs + int(zero)
    if zero:
        blocks.append([n - 1])
    v = np.zeros((n, d))
    for l in range(pairs):
        w = rng.standard_normal(d)
        v[2 * l], v[2 * l + 1] = w, -w
    while True:
        mu = np.zeros((n, n))
        for i, j in blocks[:pairs]:
            mu[i, j] = mu[j, i] = 1.0 - rng.random()
        for a in range(len(blocks)):
            for b in range(a + 1, len(blocks)):
                if rng.random() < density:
                    c = 1.0 - rng.random()
                    for i in blocks[a]:
                        for j in blocks[b]:
                            mu[i, j] = mu[j, i] = c
        model = VelocityModel(v, mu)
        if check_irreducible(model)[0]:
            return model


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES = []


def record(label, passed, detail):
    line = f"{label} {'PASS' if passed else 'FAIL'} {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
