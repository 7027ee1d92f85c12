"""Probability of evidence in Bayesian networks by importance sampling, with
AND/OR sample-tree and sample-graph estimators computed from the same samples."""

from aois.errors import (
    AoisError,
    BoundExceededError,
    EstimatorError,
    ModelError,
    ParseError,
    ProposalError,
    StructureError,
    UndefinedVarianceError,
)
from aois.estimators import (
    ESTIMATORS,
    AoSampleGraph,
    AoSampleTree,
    NodeRef,
    ao_graph_mean,
    ao_tree_mean,
    ao_value,
    estimate_all,
    insert_sample,
    is_mean,
)
from aois.model import (
    BayesianNetwork,
    Cpt,
    Evidence,
    Variable,
    exactly_one_scope_partition,
    joint_weight,
    parse_evidence,
    parse_network,
    serialize_evidence,
    serialize_network,
)
from aois.oracle import (
    empirical_variance,
    estimator_distribution,
    exact_pe_ao_search,
    exact_pe_enumeration,
)
from aois.problem import SamplingProblem, build_problem
from aois.proposal import (
    FactoredProposal,
    SampleStream,
    density,
    draw_sample,
    draw_samples,
    load_proposal,
    make_rng,
    prior_proposal,
    uniform_proposal,
)
from aois.structure import (
    PrimalGraph,
    PseudoTree,
    compute_contexts,
    induced_width,
    min_fill_order,
    moral_graph,
    parse_pseudo_tree,
    pseudo_tree_from_order,
)

__version__ = "0.1.0"
