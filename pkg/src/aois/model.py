"""Bayesian networks, evidence, assignments and the UAI text formats."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Mapping, Sequence

import numpy as np

from aois.errors import ModelError, ParseError

if TYPE_CHECKING:
    from aois.structure import PseudoTree

log = logging.getLogger(__name__)

LOG_ZERO = float("-inf")
UNASSIGNED = -1

# rows within this distance of 1 are left untouched; up to RENORM_TOL they are rescaled
ROW_TOL = 1e-9
RENORM_TOL = 1e-6


@dataclass(frozen=True)
class Variable:
    id: int
    cardinality: int

    def __post_init__(self):
        if self.cardinality < 1:
            raise ModelError(f"variable {self.id}: cardinality must be >= 1")


@dataclass(frozen=True, eq=False)
class Cpt:
    """P(child | parents) stored flat, parents slowest (declared order), child fastest."""

    child: int
    parents: tuple[int, ...]
    table: np.ndarray

    @property
    def scope(self) -> tuple[int, ...]:
        return self.parents + (self.child,)

    def __eq__(self, other):
        if not isinstance(other, Cpt):
            return NotImplemented
        return (
            self.child == other.child
            and self.parents == other.parents
            and np.array_equal(self.table, other.table)
        )


@dataclass(frozen=True, eq=False)
class BayesianNetwork:
    variables: tuple[Variable, ...]
    cpts: tuple[Cpt, ...]
    log_tables: tuple[np.ndarray, ...] = field(init=False, repr=False)
    strides: tuple[np.ndarray, ...] = field(init=False, repr=False)

    def __post_init__(self):
        n = len(self.variables)
        for i, v in enumerate(self.variables):
            if v.id != i:
                raise ModelError("variable ids must be dense 0..n-1 in order")
        if len(self.cpts) != n:
            raise ModelError(f"expected {n} CPTs, got {len(self.cpts)}")
        if sorted(c.child for c in self.cpts) != list(range(n)):
            raise ModelError("each variable needs exactly one CPT")
        cards = self.cardinalities
        for c in self.cpts:
            for p in c.scope:
                if not 0 <= p < n:
                    raise ModelError(f"CPT of {c.child}: variable {p} out of range")
            if len(set(c.scope)) != len(c.scope):
                raise ModelError(f"CPT of {c.child}: repeated variable in scope")
            size = math.prod(cards[v] for v in c.scope)
            if c.table.shape != (size,):
                raise ModelError(
                    f"CPT of {c.child}: expected {size} entries, got {c.table.size}"
                )
            if np.any(c.table < 0) or np.any(c.table > 1) or not np.all(np.isfinite(c.table)):
                raise ModelError(f"CPT of {c.child}: entries must lie in [0, 1]")
            rows = c.table.reshape(-1, cards[c.child]).sum(axis=1)
            if np.any(np.abs(rows - 1.0) > ROW_TOL):
                raise ModelError(f"CPT of {c.child}: rows must sum to 1")
        # sort CPTs by child so cpts[i] is the CPT of variable i
        object.__setattr__(self, "cpts", tuple(sorted(self.cpts, key=lambda c: c.child)))
        self._check_acyclic()
        with np.errstate(divide="ignore"):
            logs = tuple(np.log(c.table) for c in self.cpts)
        object.__setattr__(self, "log_tables", logs)
        object.__setattr__(
            self, "strides", tuple(_strides([cards[v] for v in c.scope]) for c in self.cpts)
        )

    def _check_acyclic(self):
        state = [0] * self.n  # 0 new, 1 on stack, 2 done
        for start in range(self.n):
            if state[start]:
                continue
            stack = [(start, iter(self.cpts[start].parents))]
            state[start] = 1
            while stack:
                v, it = stack[-1]
                p = next(it, None)
                if p is None:
                    state[v] = 2
                    stack.pop()
                elif state[p] == 1:
                    raise ModelError(f"cycle through variable {p}")
                elif state[p] == 0:
                    state[p] = 1
                    stack.append((p, iter(self.cpts[p].parents)))

    @property
    def n(self) -> int:
        return len(self.variables)

    @property
    def cardinalities(self) -> tuple[int, ...]:
        return tuple(v.cardinality for v in self.variables)

    def parents(self, var: int) -> tuple[int, ...]:
        return self.cpts[var].parents

    def children(self, var: int) -> tuple[int, ...]:
        return tuple(c.child for c in self.cpts if var in c.parents)

    def topological_order(self) -> list[int]:
        """Kahn's algorithm, lowest id first among ready variables."""
        import heapq

        indeg = [len(c.parents) for c in self.cpts]
        kids = [[] for _ in range(self.n)]
        for c in self.cpts:
            for p in c.parents:
                kids[p].append(c.child)
        ready = [v for v in range(self.n) if indeg[v] == 0]
        heapq.heapify(ready)
        order = []
        while ready:
            v = heapq.heappop(ready)
            order.append(v)
            for k in kids[v]:
                indeg[k] -= 1
                if indeg[k] == 0:
                    heapq.heappush(ready, k)
        return order

    def __eq__(self, other):
        if not isinstance(other, BayesianNetwork):
            return NotImplemented
        return self.variables == other.variables and self.cpts == other.cpts

    __hash__ = object.__hash__


@dataclass(frozen=True)
class Evidence:
    assignments: Mapping[int, int] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "assignments", dict(sorted(self.assignments.items())))

    def validate(self, network: BayesianNetwork) -> "Evidence":
        for var, val in self.assignments.items():
            if not 0 <= var < network.n:
                raise ModelError(f"evidence variable {var} out of range")
            if not 0 <= val < network.variables[var].cardinality:
                raise ModelError(f"evidence value {val} out of range for variable {var}")
        return self

    def __contains__(self, var: int) -> bool:
        return var in self.assignments

    def __len__(self) -> int:
        return len(self.assignments)

    def __getitem__(self, var: int) -> int:
        return self.assignments[var]


def _strides(cards: Sequence[int]) -> np.ndarray:
    """Row-major strides: last entry varies fastest."""
    out = np.ones(len(cards), dtype=np.int64)
    for k in range(len(cards) - 2, -1, -1):
        out[k] = out[k + 1] * cards[k + 1]
    return out


def empty_assignment(n: int) -> np.ndarray:
    return np.full(n, UNASSIGNED, dtype=np.int64)


def clamp(assignment: Sequence[int], evidence: Evidence) -> np.ndarray:
    values = np.array(assignment, dtype=np.int64)
    for var, val in evidence.assignments.items():
        values[var] = val
    return values


# -- parsing -----------------------------------------------------------------


class _Tokens:
    def __init__(self, text: str | bytes):
        if isinstance(text, bytes):
            text = text.decode()
        self._toks = text.split()
        self._pos = 0

    def next(self, what: str) -> str:
        if self._pos >= len(self._toks):
            raise ParseError(f"unexpected end of input while reading {what}")
        tok = self._toks[self._pos]
        self._pos += 1
        return tok

    def int(self, what: str) -> int:
        tok = self.next(what)
        try:
            return int(tok)
        except ValueError:
            raise ParseError(f"expected integer for {what}, got {tok!r}") from None

    def float(self, what: str) -> float:
        tok = self.next(what)
        try:
            return float(tok)
        except ValueError:
            raise ParseError(f"expected number for {what}, got {tok!r}") from None

    def done(self) -> bool:
        return self._pos >= len(self._toks)


def parse_network(text: str | bytes) -> BayesianNetwork:
    """Parse a UAI ``BAYES`` file.

    Rows that are off by at most 1e-6 are rescaled with a warning; anything
    further from 1 is rejected.
    """
    toks = _Tokens(text)
    header = toks.next("header")
    if header.upper() != "BAYES":
        raise ParseError(f"expected 'BAYES' header, got {header!r}")
    n = toks.int("variable count")
    if n < 0:
        raise ParseError("negative variable count")
    cards = [toks.int(f"cardinality {i}") for i in range(n)]
    if any(c < 1 for c in cards):
        raise ParseError("cardinalities must be positive")
    n_factors = toks.int("factor count")
    if n_factors != n:
        raise ParseError(f"factor count {n_factors} does not match {n} variables")
    scopes = []
    for f in range(n_factors):
        size = toks.int(f"scope size of factor {f}")
        if size < 1:
            raise ParseError(f"factor {f}: empty scope")
        scope = [toks.int(f"scope of factor {f}") for _ in range(size)]
        for v in scope:
            if not 0 <= v < n:
                raise ParseError(f"factor {f}: variable {v} out of range")
        scopes.append(scope)
    cpts = []
    for f, scope in enumerate(scopes):
        count = toks.int(f"entry count of factor {f}")
        expected = math.prod(cards[v] for v in scope)
        if count != expected:
            raise ParseError(f"factor {f}: {count} entries declared, {expected} expected")
        table = np.array([toks.float(f"entry of factor {f}") for _ in range(count)])
        child = scope[-1]
        table = _check_rows(table, cards[child], f"factor {f} (child {child})")
        cpts.append(Cpt(child=child, parents=tuple(scope[:-1]), table=table))
    if not toks.done():
        raise ParseError("trailing tokens after last table")
    try:
        return BayesianNetwork(tuple(Variable(i, c) for i, c in enumerate(cards)), tuple(cpts))
    except ModelError as exc:
        raise ParseError(str(exc)) from exc


def _check_rows(table: np.ndarray, card: int, where: str) -> np.ndarray:
    if np.any(~np.isfinite(table)) or np.any(table < 0) or np.any(table > 1 + RENORM_TOL):
        raise ParseError(f"{where}: entries must lie in [0, 1]")
    rows = table.reshape(-1, card)
    sums = rows.sum(axis=1)
    off = np.abs(sums - 1.0)
    if np.any(off > RENORM_TOL):
        bad = int(np.argmax(off))
        raise ParseError(f"{where}: row {bad} sums to {sums[bad]!r}")
    if np.any(off > ROW_TOL):
        log.warning("%s: renormalizing rows off by up to %.2e", where, off.max())
        fix = off > ROW_TOL
        rows = rows.copy()
        rows[fix] = rows[fix] / sums[fix, None]
        table = rows.reshape(-1)
    return np.minimum(table, 1.0)


def serialize_network(network: BayesianNetwork) -> str:
    lines = ["BAYES", str(network.n), " ".join(map(str, network.cardinalities)), str(network.n)]
    for c in network.cpts:
        lines.append(" ".join(map(str, (len(c.scope), *c.scope))))
    lines.append("")
    for c in network.cpts:
        lines.append(str(c.table.size))
        card = network.variables[c.child].cardinality
        for row in c.table.reshape(-1, card):
            lines.append(" " + " ".join(repr(float(x)) for x in row))
        lines.append("")
    return "\n".join(lines)


def parse_evidence(text: str | bytes, network: BayesianNetwork | None = None) -> Evidence:
    toks = _Tokens(text)
    if toks.done():
        return Evidence({})
    k = toks.int("evidence count")
    if k < 0:
        raise ParseError("negative evidence count")
    assignments: dict[int, int] = {}
    for _ in range(k):
        var = toks.int("evidence variable")
        val = toks.int("evidence value")
        if var in assignments:
            raise ParseError(f"variable {var} observed twice")
        assignments[var] = val
    if not toks.done():
        raise ParseError("trailing tokens in evidence file")
    ev = Evidence(assignments)
    if network is not None:
        try:
            ev.validate(network)
        except ModelError as exc:
            raise ParseError(str(exc)) from exc
    return ev


def serialize_evidence(evidence: Evidence) -> str:
    parts = [str(len(evidence))]
    for var, val in evidence.assignments.items():
        parts += [str(var), str(val)]
    return " ".join(parts) + "\n"


# -- weights -----------------------------------------------------------------


def joint_weight(network: BayesianNetwork, full: Sequence[int], evidence: Evidence) -> float:
    """log f(x): sum of log CPT entries with evidence clamped.

    Returns ``LOG_ZERO`` as soon as any entry is zero.
    """
    values = clamp(full, evidence).tolist()
    cards = network.cardinalities
    for var in range(network.n):
        if var not in evidence and not 0 <= values[var] < cards[var]:
            raise ModelError(f"variable {var} is unassigned or out of range")
    total = 0.0
    for cpt, logt in zip(network.cpts, network.log_tables):
        idx = 0
        for v in cpt.scope:
            idx = idx * cards[v] + values[v]
        entry = float(logt[idx])
        if entry == LOG_ZERO:
            return LOG_ZERO
        total += entry
    return total


def cpt_log_entries(network: BayesianNetwork, cpt_id: int, values: np.ndarray) -> np.ndarray:
    """Vectorized lookup of log CPT entries for rows of ``values`` (shape (N, n))."""
    return network.log_tables[cpt_id][flat_index(values, network.cpts[cpt_id].scope, network.strides[cpt_id])]


def flat_index(values: np.ndarray, scope: Sequence[int], strides: np.ndarray) -> np.ndarray:
    """Row-major table index of ``values[:, scope]`` (integer matmul is slow in numpy)."""
    idx = np.zeros(len(values), dtype=np.int64)
    for v, st in zip(scope, strides.tolist()):
        idx += values[:, v] * st if st != 1 else values[:, v]
    return idx


@dataclass(frozen=True)
class ScopePartition:
    """Each CPT placed at the deepest tree variable of its unobserved scope.

    CPTs whose whole scope is observed are constants and kept apart.
    """

    assigned: Mapping[int, tuple[int, ...]]
    constant: tuple[int, ...]

    def cpt_ids(self) -> list[int]:
        return sorted([c for ids in self.assigned.values() for c in ids] + list(self.constant))


def exactly_one_scope_partition(
    network: BayesianNetwork, pseudo_tree: "PseudoTree", evidence: Evidence | None = None
) -> ScopePartition:
    evidence = evidence or Evidence({})
    assigned: dict[int, list[int]] = {v: [] for v in pseudo_tree.preorder}
    constant = []
    for cid, cpt in enumerate(network.cpts):
        free = [v for v in cpt.scope if v not in evidence]
        if not free:
            constant.append(cid)
            continue
        missing = [v for v in free if v not in pseudo_tree.depth]
        if missing:
            raise ModelError(f"CPT of {cpt.child}: variables {missing} not in the pseudo-tree")
        deepest = max(free, key=pseudo_tree.depth.__getitem__)
        for v in free:
            if v != deepest and not pseudo_tree.is_ancestor(v, deepest):
                raise ModelError(
                    f"CPT of {cpt.child}: scope is not on one root-to-leaf path of the pseudo-tree"
                )
        assigned[deepest].append(cid)
    return ScopePartition({v: tuple(ids) for v, ids in assigned.items()}, tuple(constant))


def constant_log_weight(network: BayesianNetwork, partition: ScopePartition, evidence: Evidence) -> float:
    values = clamp(empty_assignment(network.n), evidence)
    total = 0.0
    for cid in partition.constant:
        total += float(cpt_log_entries(network, cid, values[None, :])[0])
    return total
