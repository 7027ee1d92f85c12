"""Small benchmark networks and random instances used by tests and the CLI."""
from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from aois.model import BayesianNetwork, Cpt, Evidence, Variable
from aois.proposal import FactoredProposal


def _rows(rng: np.random.Generator, n_rows: int, card: int, alpha: float = 1.0) -> np.ndarray:
    return rng.dirichlet(np.full(card, alpha), size=n_rows)


def network_from_parents(
    parents: Sequence[Sequence[int]],
    rng: np.random.Generator,
    cards: Sequence[int] | None = None,
    alpha: float = 1.0,
) -> BayesianNetwork:
    n = len(parents)
    cards = list(cards) if cards is not None else [2] * n
    cpts = []
    for v, pa in enumerate(parents):
        rows = math.prod(cards[p] for p in pa)
        table = _rows(rng, rows, cards[v], alpha).reshape(-1)
        # exact row sums keep the 1e-9 invariant independent of Dirichlet rounding
        table = (table.reshape(rows, cards[v]) / table.reshape(rows, cards[v]).sum(1, keepdims=True)).reshape(-1)
        cpts.append(Cpt(v, tuple(pa), table))
    return BayesianNetwork(tuple(Variable(i, c) for i, c in enumerate(cards)), tuple(cpts))


def network_from_tables(parents: Sequence[Sequence[int]], tables: Sequence[Sequence[float]], cards=None):
    n = len(parents)
    cards = list(cards) if cards is not None else [2] * n
    cpts = [Cpt(v, tuple(pa), np.asarray(t, dtype=float)) for v, (pa, t) in enumerate(zip(parents, tables))]
    return BayesianNetwork(tuple(Variable(i, c) for i, c in enumerate(cards)), tuple(cpts))


def single_variable(p_one: float = 0.7) -> BayesianNetwork:
    return network_from_tables([[]], [[1 - p_one, p_one]])


def chain(n: int, rng: np.random.Generator, card: int = 2) -> BayesianNetwork:
    return network_from_parents([[]] + [[i - 1] for i in range(1, n)], rng, [card] * n)


FORK = dict(Z=0, X=1, Y=2, A=3, B=4)


def fork(rng: np.random.Generator | None = None) -> tuple[BayesianNetwork, Evidence]:
    """Z -> X -> A and Z -> Y -> B with A, B observed."""
    parents = [[], [0], [0], [1], [2]]
    if rng is None:
        tables = [
            [0.4, 0.6],
            [0.7, 0.3, 0.2, 0.8],
            [0.5, 0.5, 0.9, 0.1],
            [0.8, 0.2, 0.3, 0.7],
            [0.6, 0.4, 0.15, 0.85],
        ]
        net = network_from_tables(parents, tables)
    else:
        net = network_from_parents(parents, rng)
    return net, Evidence({3: 1, 4: 1})


def polytree(rng: np.random.Generator) -> BayesianNetwork:
    """A -> B -> C, C -> D, C -> E."""
    return network_from_parents([[], [0], [1], [2], [2]], rng)


def grid(rows: int, cols: int, rng: np.random.Generator, alpha: float = 1.0) -> BayesianNetwork:
    parents = []
    for r in range(rows):
        for c in range(cols):
            pa = []
            if r:
                pa.append((r - 1) * cols + c)
            if c:
                pa.append(r * cols + c - 1)
            parents.append(pa)
    return network_from_parents(parents, rng, alpha=alpha)


def random_dag(n: int, rng: np.random.Generator, max_parents: int = 2, window: int = 4):
    """Each variable draws up to ``max_parents`` parents among the ``window`` previous ones."""
    parents = [[]]
    for v in range(1, n):
        pool = list(range(max(0, v - window), v))
        k = int(rng.integers(0, min(max_parents, len(pool)) + 1))
        parents.append(sorted(int(p) for p in rng.choice(pool, size=k, replace=False)))
    return parents


def random_network(n: int, rng: np.random.Generator, max_parents: int = 2, window: int = 4, card: int = 2):
    return network_from_parents(random_dag(n, rng, max_parents, window), rng, [card] * n)


def random_evidence(network: BayesianNetwork, k: int, rng: np.random.Generator, leaves_first=True) -> Evidence:
    """Observe ``k`` variables, preferring childless ones, at random values."""
    n = network.n
    leaves = [v for v in range(n) if not network.children(v)]
    pool = leaves if leaves_first and len(leaves) >= k else list(range(n))
    chosen = sorted(int(v) for v in rng.choice(pool, size=k, replace=False))
    return Evidence({v: int(rng.integers(network.variables[v].cardinality)) for v in chosen})


def example_network(rng: np.random.Generator | None = None) -> tuple[BayesianNetwork, Evidence]:
    """Seven binary variables A..G with F and G observed.

    Its moral graph over A..E has edges A-B, A-C, B-C, B-D, C-D, A-E, B-E.
    """
    rng = rng or np.random.default_rng(52)
    #        A   B    C       D       E       F       G
    parents = [[], [0], [0, 1], [1, 2], [0, 1], [2, 3], [4]]
    return network_from_parents(parents, rng), Evidence({5: 1, 6: 0})


EXAMPLE_TREE = "root 0\n1 0\n2 1\n3 2\n4 1\n"
EXAMPLE_NAMES = "ABCDEFG"


def random_proposal(problem, rng: np.random.Generator, alpha: float = 1.0) -> FactoredProposal:
    """Random Q_i conditioned on a random subset of the ancestors in context(X_i)."""
    cards = problem.network.cardinalities
    cond, tables = {}, {}
    for v in problem.pseudo_tree.preorder:
        ctx = list(problem.contexts[v][1:])
        k = int(rng.integers(0, len(ctx) + 1))
        ys = tuple(sorted(int(y) for y in rng.choice(ctx, size=k, replace=False))) if k else ()
        rows = math.prod(cards[y] for y in ys)
        t = _rows(rng, rows, cards[v], alpha)
        cond[v], tables[v] = ys, t / t.sum(1, keepdims=True)
    return FactoredProposal(cards, problem.evidence, problem.pseudo_tree.preorder, cond, tables)
