"""Bundle a network, evidence, pseudo-tree and proposal into one sampling problem."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from aois.errors import StructureError
from aois.model import (
    BayesianNetwork,
    Evidence,
    ScopePartition,
    constant_log_weight,
    cpt_log_entries,
    exactly_one_scope_partition,
)
from aois.proposal import FactoredProposal, prior_proposal, uniform_proposal
from aois.structure import (
    ContextMap,
    PrimalGraph,
    PseudoTree,
    compute_contexts,
    elimination_order_of,
    induced_width,
    min_fill_order,
    moral_graph,
    pseudo_tree_from_order,
    topological_min_fill_order,
)


@dataclass(frozen=True, eq=False)
class SamplingProblem:
    network: BayesianNetwork
    evidence: Evidence
    graph: PrimalGraph
    order: tuple[int, ...]
    pseudo_tree: PseudoTree
    contexts: ContextMap
    partition: ScopePartition
    proposal: FactoredProposal
    log_constant: float

    @property
    def sampled(self) -> tuple[int, ...]:
        return self.pseudo_tree.preorder

    @property
    def width(self) -> int:
        return induced_width(self.graph, self.order)

    def with_proposal(self, proposal: FactoredProposal) -> "SamplingProblem":
        if proposal.order != self.pseudo_tree.preorder:
            proposal = FactoredProposal(
                proposal.cardinalities,
                proposal.evidence,
                self.pseudo_tree.preorder,
                proposal.cond,
                proposal.tables,
            )
        proposal.check_contexts(self.pseudo_tree, self.contexts)
        return SamplingProblem(
            self.network, self.evidence, self.graph, self.order, self.pseudo_tree,
            self.contexts, self.partition, proposal, self.log_constant,
        )

    def local_log_weights(self, values: np.ndarray) -> np.ndarray:
        """(N, n) array: log of the product of CPTs placed at each variable."""
        out = np.zeros(values.shape, dtype=float, order="F")
        for var, cids in self.partition.assigned.items():
            for cid in cids:
                out[:, var] += cpt_log_entries(self.network, cid, values)
        return out

    def log_f(self, values: np.ndarray, local: np.ndarray | None = None) -> np.ndarray:
        if local is None:
            local = self.local_log_weights(values)
        total = np.full(len(values), self.log_constant)
        for var in self.sampled:
            total += local[:, var]
        return total


def build_problem(
    network: BayesianNetwork,
    evidence: Evidence | None = None,
    order: str | PseudoTree = "topological",
    proposal: str | FactoredProposal = "prior",
    seed: int = 0,
) -> SamplingProblem:
    """``order`` is ``"topological"``, ``"minfill"`` or an explicit pseudo-tree;
    ``proposal`` is ``"prior"``, ``"uniform"`` or a ready proposal."""
    evidence = (evidence or Evidence({})).validate(network)
    graph = moral_graph(network, evidence)
    if isinstance(order, PseudoTree):
        tree = order
        tree.check_back_arcs(graph)
        elim = elimination_order_of(tree)
    elif order == "topological":
        elim = topological_min_fill_order(network, evidence, graph, seed)
        tree = pseudo_tree_from_order(graph, elim)
    elif order == "minfill":
        elim = min_fill_order(graph, seed)
        tree = pseudo_tree_from_order(graph, elim)
    else:
        raise StructureError(f"unknown order kind {order!r}")
    contexts = compute_contexts(tree, graph)
    partition = exactly_one_scope_partition(network, tree, evidence)
    if isinstance(proposal, FactoredProposal):
        q = proposal
    elif proposal == "prior":
        q = prior_proposal(network, evidence, tree, contexts)
    elif proposal == "uniform":
        q = uniform_proposal(network, evidence, tree)
    else:
        raise StructureError(f"unknown proposal kind {proposal!r}")
    problem = SamplingProblem(
        network, evidence, graph, tuple(elim), tree, contexts, partition, q,
        constant_log_weight(network, partition, evidence),
    )
    return problem.with_proposal(q) if isinstance(proposal, FactoredProposal) else problem
