"""Shared fixtures: canonical transitions and pure-python counting oracles.

The oracles here are deliberately naive (itertools over interpretations or
label vectors) so every fast path in the package can be measured against an
implementation too simple to be wrong.
"""

import itertools

import numpy as np
import pytest

from mipll import (
    LabelSpace,
    TransitionSpace,
    materialize,
    tabulate,
    weighted_sum_space,
)
from mipll.presets import operator_transition, wsum_space


# --- oracles -----------------------------------------------------------------


def oracle_wmc(disjuncts, weights):
    """Sum interpretation masses over all 2^V assignments of the used variables."""
    variables = sorted({v for d in disjuncts for v in d})
    total = 0.0
    for bits in itertools.product((0, 1), repeat=len(variables)):
        assign = dict(zip(variables, bits))
        if not any(all(assign[v] for v in d) for d in disjuncts):
            continue
        mass = 1.0
        for v, b in zip(variables, bits):
            mass *= weights[v] if b else 1.0 - weights[v]
        total += mass
    return total


def oracle_wmc_exclusive(disjuncts, rows):
    """Keep only interpretations with exactly one true label per position.

    ``rows[pos]`` maps each label of that position's universe to its weight;
    the mass of a surviving interpretation still follows the independent
    Bernoulli measure over every variable of the universe.
    """
    positions = sorted(rows)
    total = 0.0
    for combo in itertools.product(*(sorted(rows[p]) for p in positions)):
        chosen = dict(zip(positions, combo))
        if not any(all(chosen.get(p) == y for p, y in d) for d in disjuncts):
            continue
        mass = 1.0
        for p in positions:
            for y, w in sorted(rows[p].items()):
                mass *= w if chosen[p] == y else 1.0 - w
        total += mass
    return total


def oracle_topk(score_rows, t, s, k):
    """Preimage vectors of s sorted by product probability, lexicographic ties."""
    pre = [tuple(int(x) for x in row) for row in t.preimages[s]]
    scored = []
    for vec in pre:
        p = 1.0
        for pos, y in enumerate(vec):
            p *= float(score_rows[pos][y])
        scored.append((p, vec))
    scored.sort(key=lambda item: (-item[0], item[1]))
    return [vec for _, vec in scored[:k]]


@pytest.fixture(scope="session")
def oracles():
    return {
        "wmc": oracle_wmc,
        "wmc_exclusive": oracle_wmc_exclusive,
        "topk": oracle_topk,
    }


# --- canonical transitions -----------------------------------------------------


@pytest.fixture(scope="session")
def sum2():
    return materialize("y1 + y2", arity=2, space=LabelSpace(10), name="sum2")


@pytest.fixture(scope="session")
def sum3():
    return materialize("y1 + y2 + y3", arity=3, space=LabelSpace(10), name="sum3")


@pytest.fixture(scope="session")
def sum4():
    return materialize(
        "y1 + y2 + y3 + y4", arity=4, space=LabelSpace(10), name="sum4"
    )


@pytest.fixture(scope="session")
def product2():
    return materialize("y1 * y2", arity=2, space=LabelSpace(10), name="product2")


@pytest.fixture(scope="session")
def product3():
    return materialize(
        "y1 * y2 * y3", arity=3, space=LabelSpace(10), name="product3"
    )


@pytest.fixture(scope="session")
def xor2():
    return materialize("y1 != y2", arity=2, space=LabelSpace(2), name="xor")


@pytest.fixture(scope="session")
def cyclic3():
    # diagonal-injective yet every per-position law is uniform
    return tabulate(
        lambda a, b, c: (2 * a + b + c) % 3, [(3, LabelSpace(3))], name="cyclic3"
    )


@pytest.fixture(scope="session")
def equality2():
    return materialize("y1 == y2", arity=2, space=LabelSpace(2), name="equality")


@pytest.fixture(scope="session")
def operator19():
    return operator_transition(1, 9)


@pytest.fixture(scope="session")
def operator39():
    return operator_transition(3, 9)


@pytest.fixture(scope="session")
def wsum_grid():
    return wsum_space(1, 5)


@pytest.fixture(scope="session")
def wsum_pm3():
    grid = [
        (a, b)
        for a in range(-3, 4)
        for b in range(-3, 4)
        if (a, b) != (0, 0)
    ]
    return weighted_sum_space(grid, arity=2, space=LabelSpace(10))


@pytest.fixture(scope="session")
def quartic_pair():
    # both candidates vanish identically on {0,1}: y - y*y == 0 for y in {0,1}
    space = LabelSpace(2)
    sigma = materialize(
        "y1 - y1*y1 + y2 - y2*y2", arity=2, space=space, name="quartic+"
    )
    sigma2 = materialize(
        "y1 - y1*y1 - y2 + y2*y2", arity=2, space=space, name="quartic-"
    )
    return TransitionSpace((sigma, sigma2))


# --- misc helpers ----------------------------------------------------------------


def random_rows(rng, sizes):
    """One random probability row per position (Dirichlet, strictly interior)."""
    return [rng.dirichlet(np.ones(c)) for c in sizes]


@pytest.fixture(scope="session")
def score_sampler():
    return random_rows
