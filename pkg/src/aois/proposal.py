"""Factored proposal distributions and sampling."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from aois.errors import ParseError, ProposalError
from aois.model import BayesianNetwork, Evidence, LOG_ZERO, _strides, flat_index
from aois.structure import ContextMap, PseudoTree

ROW_TOL = 1e-9


def make_rng(seed: int | np.random.SeedSequence) -> np.random.Generator:
    """Counter-based generator (Philox) so streams are reproducible and splittable."""
    return np.random.Generator(np.random.Philox(seed))


def spawn_rngs(seed: int, count: int) -> list[np.random.Generator]:
    return [make_rng(s) for s in np.random.SeedSequence(seed).spawn(count)]


@dataclass(frozen=True, eq=False)
class FactoredProposal:
    """Q(x) = prod_i Q_i(x_i | y_i), sampled along ``order``.

    ``tables[v]`` has one row per configuration of ``cond[v]`` (first
    conditioning variable slowest) and one column per value of ``v``.
    """

    cardinalities: tuple[int, ...]
    evidence: Evidence
    order: tuple[int, ...]
    cond: Mapping[int, tuple[int, ...]]
    tables: Mapping[int, np.ndarray]
    _log: dict = field(init=False, repr=False)
    _cdf: dict = field(init=False, repr=False)
    _stride: dict = field(init=False, repr=False)

    def __post_init__(self):
        cards = self.cardinalities
        free = [v for v in range(len(cards)) if v not in self.evidence]
        if sorted(self.order) != free:
            raise ProposalError("sampling order must cover exactly the non-evidence variables")
        pos = {v: i for i, v in enumerate(self.order)}
        logs, cdfs, strides = {}, {}, {}
        for v in self.order:
            ys = tuple(self.cond[v])
            for y in ys:
                if y not in pos:
                    raise ProposalError(f"Q({v}|...): conditioning variable {y} is not sampled")
                if pos[y] >= pos[v]:
                    raise ProposalError(f"Q({v}|...): {y} is not sampled before {v}")
            t = np.asarray(self.tables[v], dtype=float)
            shape = (math.prod(cards[y] for y in ys), cards[v])
            if t.shape != shape:
                raise ProposalError(f"Q({v}|...): table shape {t.shape}, expected {shape}")
            if np.any(t < 0) or not np.all(np.isfinite(t)):
                raise ProposalError(f"Q({v}|...): negative or non-finite entry")
            if np.any(np.abs(t.sum(axis=1) - 1.0) > ROW_TOL):
                raise ProposalError(f"Q({v}|...): rows must sum to 1")
            with np.errstate(divide="ignore"):
                logs[v] = np.log(t)
            c = np.cumsum(t, axis=1)
            with np.errstate(invalid="ignore", divide="ignore"):
                cdfs[v] = c / c[:, -1:]
            strides[v] = _strides([cards[y] for y in ys])
        object.__setattr__(self, "cond", {v: tuple(self.cond[v]) for v in self.order})
        object.__setattr__(self, "tables", {v: np.asarray(self.tables[v], float) for v in self.order})
        object.__setattr__(self, "_log", logs)
        object.__setattr__(self, "_cdf", cdfs)
        object.__setattr__(self, "_stride", strides)

    @property
    def n(self) -> int:
        return len(self.cardinalities)

    def check_contexts(self, tree: PseudoTree, contexts: ContextMap):
        check_conditioning(self.cond, tree, contexts)

    def row_index(self, var: int, values: np.ndarray) -> np.ndarray:
        ys = self.cond[var]
        if not ys:
            return np.zeros(len(values), dtype=np.int64)
        return flat_index(values, ys, self._stride[var])

    def log_table(self, var: int) -> np.ndarray:
        return self._log[var]

    def __eq__(self, other):
        if not isinstance(other, FactoredProposal):
            return NotImplemented
        return (
            self.cardinalities == other.cardinalities
            and self.evidence == other.evidence
            and self.order == other.order
            and self.cond == other.cond
            and all(np.array_equal(self.tables[v], other.tables[v]) for v in self.order)
        )

    __hash__ = object.__hash__


def check_conditioning(
    cond: Mapping[int, Sequence[int]], tree: PseudoTree, contexts: ContextMap
):
    """Every conditioning set must sit inside the variable's context."""
    for v in tree.preorder:
        ctx = set(contexts[v][1:])
        for y in cond[v]:
            if y == v or y in tree.subtree(v):
                raise ProposalError(f"Q({v}|...): {y} is not a tree ancestor of {v}")
            if y not in ctx:
                raise ProposalError(f"Q({v}|...): {y} lies outside context({v})")


def prior_proposal(
    network: BayesianNetwork, evidence: Evidence, pseudo_tree: PseudoTree, contexts: ContextMap
) -> FactoredProposal:
    """Likelihood weighting: Q_i = P(X_i | pa(X_i)) with observed parents clamped."""
    cards = network.cardinalities
    cond, tables = {}, {}
    for v in pseudo_tree.preorder:
        cpt = network.cpts[v]
        for p in cpt.parents:
            if p not in evidence and not pseudo_tree.is_ancestor(p, v):
                raise ProposalError(
                    f"parent {p} of {v} is not a pseudo-tree ancestor; "
                    "use an order that respects the network topology"
                )
        t = cpt.table.reshape([cards[u] for u in cpt.scope])
        index = tuple(evidence[u] if u in evidence else slice(None) for u in cpt.parents)
        t = t[index + (slice(None),)].reshape(-1, cards[v])
        sums = t.sum(axis=1, keepdims=True)
        t = np.divide(t, sums, out=np.zeros_like(t), where=sums > 0)
        cond[v] = tuple(p for p in cpt.parents if p not in evidence)
        tables[v] = t
    q = FactoredProposal(cards, evidence, pseudo_tree.preorder, cond, tables)
    q.check_contexts(pseudo_tree, contexts)
    return q


def uniform_proposal(
    network: BayesianNetwork, evidence: Evidence, pseudo_tree: PseudoTree | None = None
) -> FactoredProposal:
    cards = network.cardinalities
    if pseudo_tree is None:
        order = tuple(v for v in range(network.n) if v not in evidence)
    else:
        order = pseudo_tree.preorder
    tables = {v: np.full((1, cards[v]), 1.0 / cards[v]) for v in order}
    return FactoredProposal(cards, evidence, order, {v: () for v in order}, tables)


def load_proposal(
    text: str | bytes,
    network: BayesianNetwork,
    evidence: Evidence,
    pseudo_tree: PseudoTree,
    contexts: ContextMap,
) -> FactoredProposal:
    """Read blocks of ``var X | Y1 ... Yk`` followed by the table entries."""
    if isinstance(text, bytes):
        text = text.decode()
    cards = network.cardinalities
    cond: dict[int, tuple[int, ...]] = {}
    entries: dict[int, list[float]] = {}
    current = None
    for lineno, line in enumerate(text.splitlines(), 1):
        parts = line.split("#", 1)[0].split()
        if not parts:
            continue
        if parts[0] == "var":
            try:
                bar = parts.index("|")
                (x,) = map(int, parts[1:bar])
                ys = tuple(int(y) for y in parts[bar + 1 :])
            except ValueError:
                raise ParseError(f"proposal line {lineno}: expected 'var X | Y...'") from None
            if x in cond:
                raise ParseError(f"proposal line {lineno}: variable {x} defined twice")
            if not 0 <= x < network.n or any(not 0 <= y < network.n for y in ys):
                raise ParseError(f"proposal line {lineno}: variable out of range")
            cond[x], entries[x], current = ys, [], x
        else:
            if current is None:
                raise ParseError(f"proposal line {lineno}: table before any 'var' header")
            try:
                entries[current].extend(float(t) for t in parts)
            except ValueError:
                raise ParseError(f"proposal line {lineno}: non-numeric entry") from None
    missing = [v for v in pseudo_tree.preorder if v not in cond]
    if missing:
        raise ProposalError(f"proposal has no table for variables {missing}")
    extra = [v for v in cond if v in evidence]
    if extra:
        raise ProposalError(f"proposal defines tables for observed variables {extra}")
    tables = {}
    for v, vals in entries.items():
        rows = math.prod(cards[y] for y in cond[v])
        if len(vals) != rows * cards[v]:
            raise ParseError(f"Q({v}|...): {len(vals)} entries, expected {rows * cards[v]}")
        tables[v] = np.array(vals).reshape(rows, cards[v])
    for v in pseudo_tree.preorder:
        for y in cond[v]:
            if y in evidence:
                raise ProposalError(f"Q({v}|...): conditions on observed variable {y}")
    check_conditioning(cond, pseudo_tree, contexts)
    return FactoredProposal(cards, evidence, pseudo_tree.preorder, cond, tables)


def serialize_proposal(q: FactoredProposal) -> str:
    lines = []
    for v in q.order:
        lines.append(" ".join(["var", str(v), "|", *map(str, q.cond[v])]))
        for row in q.tables[v]:
            lines.append(" ".join(repr(float(x)) for x in row))
    return "\n".join(lines) + "\n"


# -- sampling -----------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SampleRecord:
    assignment: np.ndarray  # all n variables, evidence filled in
    log_q: float
    log_q_parts: np.ndarray  # per variable, 0 for observed ones


@dataclass(frozen=True, eq=False)
class SampleBatch:
    values: np.ndarray  # (N, n)
    log_q: np.ndarray  # (N,)
    log_q_parts: np.ndarray  # (N, n)

    def __len__(self) -> int:
        return len(self.values)

    def __getitem__(self, i: int) -> SampleRecord:
        return SampleRecord(self.values[i], float(self.log_q[i]), self.log_q_parts[i])

    def head(self, k: int) -> "SampleBatch":
        return SampleBatch(self.values[:k], self.log_q[:k], self.log_q_parts[:k])

    @classmethod
    def concat(cls, batches: Sequence["SampleBatch"]) -> "SampleBatch":
        return cls(
            np.concatenate([b.values for b in batches]),
            np.concatenate([b.log_q for b in batches]),
            np.concatenate([b.log_q_parts for b in batches]),
        )

    @classmethod
    def from_records(cls, records: Sequence[SampleRecord]) -> "SampleBatch":
        return cls(
            np.array([r.assignment for r in records], dtype=np.int64),
            np.array([r.log_q for r in records], dtype=float),
            np.array([r.log_q_parts for r in records], dtype=float),
        )


def draw_samples(q: FactoredProposal, rng: np.random.Generator, size: int) -> SampleBatch:
    """Draw ``size`` samples. Sample i consumes uniforms [i*m, (i+1)*m) of the
    stream, so splitting a run into batches does not change the samples."""
    m = len(q.order)
    u = rng.random((size, m))
    values = np.zeros((size, q.n), dtype=np.int64, order="F")
    for var, val in q.evidence.assignments.items():
        values[:, var] = val
    parts = np.zeros((size, q.n), order="F")
    log_q = np.zeros(size)
    for j, var in enumerate(q.order):
        row = q.row_index(var, values)
        cdf = q._cdf[var]
        if not np.all(np.isfinite(cdf[row, -1])):
            raise ProposalError(f"Q({var}|...): reached an all-zero row")
        uj = u[:, j]
        x = np.zeros(size, dtype=np.int64)
        for k in range(cdf.shape[1] - 1):
            x += cdf[row, k] <= uj
        values[:, var] = x
        parts[:, var] = q._log[var][row, x]
        log_q += parts[:, var]
    return SampleBatch(values, log_q, parts)


def draw_sample(q: FactoredProposal, rng: np.random.Generator) -> SampleRecord:
    return draw_samples(q, rng, 1)[0]


def density_parts(q: FactoredProposal, values: np.ndarray) -> np.ndarray:
    values = np.atleast_2d(values)
    parts = np.zeros(values.shape, dtype=float)
    for var in q.order:
        parts[:, var] = q._log[var][q.row_index(var, values), values[:, var]]
    return parts


def density(q: FactoredProposal, assignment: Sequence[int]) -> float:
    """log Q(x), accumulated in sampling order exactly as ``draw_samples`` does."""
    parts = density_parts(q, np.asarray(assignment, dtype=np.int64))[0]
    total = 0.0
    for var in q.order:
        total += float(parts[var])
    return total if total != LOG_ZERO else LOG_ZERO


class SampleStream:
    """A proposal bound to one generator; counts how many samples it has produced."""

    def __init__(self, q: FactoredProposal, rng: np.random.Generator):
        self.proposal = q
        self.rng = rng
        self.drawn = 0

    def draw(self, size: int) -> SampleBatch:
        batch = draw_samples(self.proposal, self.rng, size)
        self.drawn += size
        return batch
