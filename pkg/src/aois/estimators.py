"""Importance-sampling and AND/OR sample-tree / sample-graph estimators.

All three estimators read the same samples. The stores follow the two-phase
shape of AND/OR sampling: inserting a sample only buffers it, and
``finalize`` builds the arc-labelled structure and evaluates every node once,
bottom-up. Node identities are integer ids obtained by compressing keys:

* tree: an AND node of ``X`` is (parent AND node, x), i.e. a trie over paths;
* graph: an AND node of ``X`` is the assignment to ``context(X)``.

In both stores the OR node of ``X`` is keyed by its parent AND node (or by the
replicate group at the virtual root), so arcs are (parent AND node, x) pairs.
Several independent runs can share one store by passing ``groups``; each
group then gets its own virtual root and nothing merges across groups.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from aois.errors import EstimatorError
from aois.model import LOG_ZERO
from aois.problem import SamplingProblem
from aois.proposal import SampleBatch, SampleRecord

WEIGHT_TOL = 1e-12


# -- log-domain helpers ---------------------------------------------------------


def logsumexp(a: np.ndarray) -> float:
    a = np.asarray(a, dtype=float)
    if a.size == 0:
        return LOG_ZERO
    m = a.max()
    if m == LOG_ZERO:
        return LOG_ZERO
    return float(m + np.log(np.exp(a - m).sum()))


def segment_logsumexp(t: np.ndarray, seg: np.ndarray, n: int, starts: np.ndarray | None = None):
    """Per-segment log-sum-exp. With ``starts`` the segments are contiguous and non-empty."""
    if starts is not None:
        m = np.maximum.reduceat(t, starts) if len(t) else np.full(n, LOG_ZERO)
    else:
        m = np.full(n, LOG_ZERO)
        np.maximum.at(m, seg, t)
    shift = np.where(np.isfinite(m), m, 0.0)
    s = np.bincount(seg, weights=np.exp(t - shift[seg]), minlength=n)
    with np.errstate(divide="ignore"):
        return shift + np.log(s)


def _log_weights(log_f: np.ndarray, log_q: np.ndarray) -> np.ndarray:
    log_f = np.asarray(log_f, dtype=float)
    log_q = np.asarray(log_q, dtype=float)
    if np.any(np.isneginf(log_q) & ~np.isneginf(log_f)):
        raise EstimatorError("sample with zero proposal density but nonzero weight")
    with np.errstate(invalid="ignore"):
        return np.where(np.isneginf(log_f), LOG_ZERO, log_f - log_q)


def is_mean(log_f: Sequence[float], log_q: Sequence[float]) -> float:
    """log of (1/N) sum exp(log_f - log_q); zero-weight samples still count in N."""
    w = _log_weights(log_f, log_q)
    if w.size == 0:
        raise EstimatorError("need at least one sample")
    return logsumexp(w) - math.log(w.size)


def is_means(log_f, log_q, groups: np.ndarray, n_groups: int) -> np.ndarray:
    w = _log_weights(log_f, log_q)
    counts = np.bincount(groups, minlength=n_groups)
    if np.any(counts == 0):
        raise EstimatorError("every group needs at least one sample")
    return segment_logsumexp(w, groups, n_groups) - np.log(counts)


class LogMeanAccumulator:
    """Streaming (1/N) sum w in log space."""

    def __init__(self):
        self.log_total = LOG_ZERO
        self.count = 0

    def add(self, log_w: Sequence[float] | float):
        w = np.atleast_1d(np.asarray(log_w, dtype=float))
        self.log_total = float(np.logaddexp(self.log_total, logsumexp(w)))
        self.count += w.size

    @property
    def log_mean(self) -> float:
        if not self.count:
            raise EstimatorError("need at least one sample")
        return self.log_total - math.log(self.count)


# -- key compression -------------------------------------------------------------

_MAX_KEY = 1 << 62


def _compress(keys: np.ndarray, key_range: int) -> tuple[np.ndarray, int]:
    """Map keys to dense ids 0..k-1 preserving key order."""
    if key_range <= max(4 * len(keys), 1 << 16):
        present = np.zeros(key_range, dtype=bool)
        present[keys] = True
        rank = np.cumsum(present) - 1
        return rank[keys], int(rank[-1]) + 1 if key_range else 0
    uniq, ids = np.unique(keys, return_inverse=True)
    return ids.reshape(-1), len(uniq)


def _mixed_radix(columns: Sequence[tuple[np.ndarray, int]], base: np.ndarray, base_range: int):
    keys, key_range = base.astype(np.int64), base_range
    for col, card in columns:
        if key_range * card >= _MAX_KEY:
            keys, key_range = _compress(keys, key_range)
        keys = keys * card + col
        key_range *= card
    return _compress(keys, key_range)


# -- stores ----------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Layer:
    """Nodes and arcs of one variable.

    ``sample_node[i]`` is the AND node sample i passes through. Arcs are
    sorted by parent, and every parent has at least one arc.
    """

    var: int
    sample_node: np.ndarray
    node_x: np.ndarray
    node_log_w: np.ndarray
    arc_parent: np.ndarray
    arc_child: np.ndarray
    arc_count: np.ndarray
    n_parents: int

    @property
    def n_nodes(self) -> int:
        return len(self.node_x)

    @property
    def n_arcs(self) -> int:
        return len(self.arc_parent)


@dataclass(frozen=True)
class NodeRef:
    """``kind`` is "and", "or" or "root". OR nodes are indexed by their parent
    AND node (or group for root variables); the root by group."""

    kind: str
    var: int
    index: int


class AoSampleTree:
    merges_contexts = False

    def __init__(self, problem: SamplingProblem):
        self.problem = problem
        self._chunks: list[tuple[SampleBatch, np.ndarray, np.ndarray | None]] = []
        self._size = 0
        self._built = False

    def __len__(self) -> int:
        return self._size

    def insert(self, sample: SampleRecord, group: int = 0):
        self.extend(
            SampleBatch(sample.assignment[None, :], np.array([sample.log_q]), sample.log_q_parts[None, :]),
            np.array([group]),
        )

    def extend(self, batch: SampleBatch, groups: np.ndarray | None = None, local=None):
        """Add samples. ``local`` may carry precomputed ``problem.local_log_weights``."""
        if groups is None:
            groups = np.zeros(len(batch), dtype=np.int64)
        groups = np.asarray(groups, dtype=np.int64)
        if groups.shape != (len(batch),) or (len(groups) and groups.min() < 0):
            raise EstimatorError("groups must be one non-negative id per sample")
        self._chunks.append((batch, groups, local))
        self._size += len(batch)
        self._built = False

    # -- construction --

    def finalize(self) -> "AoSampleTree":
        if self._built:
            return self
        if not self._size:
            raise EstimatorError("store holds no samples")
        if len(self._chunks) > 1 or self._chunks[0][2] is None:
            local = np.concatenate([
                self.problem.local_log_weights(b.values) if l is None else l
                for b, _, l in self._chunks
            ])
            batch = SampleBatch.concat([b for b, _, _ in self._chunks])
            groups = np.concatenate([g for _, g, _ in self._chunks])
            self._chunks = [(batch, groups, local)]
        batch, groups, local = self._chunks[0]
        n_groups = int(groups.max()) + 1
        if np.any(np.bincount(groups, minlength=n_groups) == 0):
            raise EstimatorError("group ids must be dense: some group has no samples")
        p = self.problem
        cards = p.network.cardinalities
        layers: dict[int, Layer] = {}
        for var in p.pseudo_tree.preorder:
            par = p.pseudo_tree.parent[var]
            if par is None:
                parent_ids, n_parents = groups, n_groups
            else:
                parent_ids, n_parents = layers[par].sample_node, layers[par].n_nodes
            x = batch.values[:, var]
            card = cards[var]
            arc_ids, n_arcs = _compress(parent_ids * card + x, n_parents * card)
            first = np.empty(n_arcs, dtype=np.int64)
            first[arc_ids] = np.arange(len(arc_ids))
            arc_parent = parent_ids[first]
            arc_count = np.bincount(arc_ids, minlength=n_arcs)
            if self.merges_contexts:
                node_ids, n_nodes = self._context_ids(var, batch.values, groups, n_groups)
                arc_child = node_ids[first]
                if not np.array_equal(arc_child[arc_ids], node_ids):
                    raise EstimatorError(
                        f"context of {var} is not determined by its parent node and value"
                    )
            else:
                node_ids, n_nodes, arc_child = arc_ids, n_arcs, np.arange(n_arcs)
            log_w = local[:, var] - batch.log_q_parts[:, var]
            node_log_w = np.empty(n_nodes)
            node_log_w[node_ids] = log_w
            _check_weights(var, log_w, node_log_w[node_ids])
            node_x = np.empty(n_nodes, dtype=np.int64)
            node_x[node_ids] = x
            layers[var] = Layer(
                var, node_ids, node_x, node_log_w, arc_parent, arc_child, arc_count, n_parents
            )
        self.layers = layers
        self.n_groups = n_groups
        self._evaluate()
        self._built = True
        return self

    def _context_ids(self, var, values, groups, n_groups):
        ctx = self.problem.contexts[var]
        cards = self.problem.network.cardinalities
        cols = [(values[:, v], cards[v]) for v in (*reversed(ctx[1:]), var)]
        return _mixed_radix(cols, groups, n_groups)

    def _evaluate(self):
        tree = self.problem.pseudo_tree
        log_and: dict[int, np.ndarray] = {}
        log_or: dict[int, np.ndarray] = {}
        for var in reversed(tree.preorder):
            lay = self.layers[var]
            v = np.zeros(lay.n_nodes)
            for child in tree.children[var]:
                v = v + log_or[child]
            log_and[var] = v
            starts = np.concatenate(([0], np.cumsum(np.bincount(lay.arc_parent, minlength=lay.n_parents))[:-1]))
            with np.errstate(divide="ignore"):
                t = np.log(lay.arc_count) + lay.node_log_w[lay.arc_child] + v[lay.arc_child]
            num = segment_logsumexp(t, lay.arc_parent, lay.n_parents, starts)
            den = np.log(np.bincount(lay.arc_parent, weights=lay.arc_count, minlength=lay.n_parents))
            log_or[var] = num - den
        root = np.full(self.n_groups, self.problem.log_constant)
        for r in tree.roots:
            root = root + log_or[r]
        self._log_and, self._log_or, self._log_root = log_and, log_or, root

    # -- queries --

    def values(self) -> np.ndarray:
        """Log estimate per group."""
        self.finalize()
        return self._log_root.copy()

    def value(self) -> float:
        vals = self.values()
        if len(vals) != 1:
            raise EstimatorError("store holds several groups; use values()")
        return float(vals[0])

    def node_value(self, node: NodeRef) -> float:
        self.finalize()
        if node.kind == "root":
            return float(self._log_root[node.index])
        if node.kind == "and":
            return float(self._log_and[node.var][node.index])
        if node.kind == "or":
            return float(self._log_or[node.var][node.index])
        raise ValueError(f"unknown node kind {node.kind!r}")

    def counts(self) -> dict[str, int]:
        self.finalize()
        and_nodes = sum(l.n_nodes for l in self.layers.values())
        or_nodes = sum(l.n_parents for l in self.layers.values())
        arcs = sum(l.n_arcs for l in self.layers.values())
        return {"and": and_nodes, "or": or_nodes, "arcs": arcs}

    def dump(self, names: Sequence[str] | None = None) -> str:
        """Preorder text rendering, one arc per line: ``X=x <w, #> v=...``.

        Graph nodes reached a second time are marked ``(shared)`` and not expanded.
        """
        self.finalize()
        tree = self.problem.pseudo_tree
        name = (lambda v: names[v]) if names else (lambda v: f"X{v}")
        by_parent = {}
        for var, lay in self.layers.items():
            order = np.argsort(lay.arc_parent, kind="stable")
            starts = np.searchsorted(lay.arc_parent[order], np.arange(lay.n_parents + 1))
            by_parent[var] = (order, starts)
        lines: list[str] = []
        seen: set[tuple[int, int]] = set()

        def emit_or(var, parent_index, depth):
            lay = self.layers[var]
            order, starts = by_parent[var]
            for a in order[starts[parent_index] : starts[parent_index + 1]]:
                node = int(lay.arc_child[a])
                w = math.exp(lay.node_log_w[node])
                v = math.exp(self._log_and[var][node])
                shared = (var, node) in seen
                lines.append(
                    f"{'  ' * depth}{name(var)}={lay.node_x[node]} <{w:.6g}, {lay.arc_count[a]}>"
                    f" v={v:.6g}{' (shared)' if shared else ''}"
                )
                if shared:
                    continue
                seen.add((var, node))
                for child in tree.children[var]:
                    emit_or(child, node, depth + 1)

        for g in range(self.n_groups):
            if self.n_groups > 1:
                lines.append(f"group {g}")
            lines.append(f"root v={math.exp(self._log_root[g]):.6g}")
            for r in tree.roots:
                emit_or(r, g, 1)
        return "\n".join(lines) + "\n"


class AoSampleGraph(AoSampleTree):
    merges_contexts = True


def _check_weights(var: int, log_w: np.ndarray, stored: np.ndarray):
    both_zero = np.isneginf(log_w) & np.isneginf(stored)
    diff = np.where(both_zero, 0.0, np.abs(log_w - stored))
    if np.any(~(diff <= WEIGHT_TOL)):
        raise EstimatorError(
            f"arc weight of variable {var} differs between samples reaching the same node; "
            "the proposal or the CPT partition depends on variables outside the context"
        )


def insert_sample(store: AoSampleTree, sample: SampleRecord) -> AoSampleTree:
    store.insert(sample)
    return store


def ao_value(store: AoSampleTree, node: NodeRef) -> float:
    return store.node_value(node)


def ao_tree_mean(tree: AoSampleTree) -> float:
    return tree.value()


def ao_graph_mean(graph: AoSampleGraph) -> float:
    return graph.value()


# -- convenience -----------------------------------------------------------------

ESTIMATORS = ("is", "aotree", "aograph")


def estimate_all(
    problem: SamplingProblem,
    batch: SampleBatch,
    kinds: Sequence[str] = ESTIMATORS,
    groups: np.ndarray | None = None,
) -> dict[str, np.ndarray]:
    """Log estimates per group for each estimator kind, from one sample batch."""
    if groups is None:
        groups = np.zeros(len(batch), dtype=np.int64)
    n_groups = int(groups.max()) + 1
    local = problem.local_log_weights(batch.values)
    out = {}
    for kind in kinds:
        if kind == "is":
            out[kind] = is_means(problem.log_f(batch.values, local), batch.log_q, groups, n_groups)
        elif kind in ("aotree", "aograph"):
            store = (AoSampleTree if kind == "aotree" else AoSampleGraph)(problem)
            store.extend(batch, groups, local)
            out[kind] = store.values()
        else:
            raise ValueError(f"unknown estimator {kind!r}")
    return out
