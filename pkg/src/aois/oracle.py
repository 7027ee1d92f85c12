"""Exact references for checking the estimators on small instances."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable, NamedTuple, Sequence

import numpy as np

from aois.errors import BoundExceededError, UndefinedVarianceError
from aois.estimators import ESTIMATORS, estimate_all, logsumexp
from aois.model import (
    LOG_ZERO,
    BayesianNetwork,
    Evidence,
    clamp,
    exactly_one_scope_partition,
    joint_weight,
)
from aois.problem import SamplingProblem
from aois.proposal import SampleBatch, density_parts, draw_samples, spawn_rngs
from aois.structure import ContextMap, PseudoTree


def exact_pe_enumeration(
    network: BayesianNetwork, evidence: Evidence, max_assignments: int = 1 << 20
) -> float:
    """log P(e) by summing f over every assignment of the unobserved variables."""
    free = [v for v in range(network.n) if v not in evidence]
    total = math.prod(network.variables[v].cardinality for v in free)
    if total > max_assignments:
        raise BoundExceededError(f"{total} assignments exceed the enumeration bound {max_assignments}")
    full = clamp([0] * network.n, evidence)
    terms = []
    for combo in itertools.product(*(range(network.variables[v].cardinality) for v in free)):
        full[free] = combo
        terms.append(joint_weight(network, full, evidence))
    return logsumexp(np.array(terms))


def exact_pe_ao_search(
    network: BayesianNetwork,
    evidence: Evidence,
    pseudo_tree: PseudoTree,
    contexts: ContextMap,
    max_table: int = 1 << 22,
) -> float:
    """log P(e) by depth-first search of the context-minimal AND/OR graph."""
    cards = network.cardinalities
    size = sum(math.prod(cards[a] for a in contexts[v]) for v in pseudo_tree.preorder)
    if size > max_table:
        raise BoundExceededError(f"context tables need {size} entries, bound is {max_table}")
    partition = exactly_one_scope_partition(network, pseudo_tree, evidence)
    assignment = dict(evidence.assignments)

    def entry(cid: int) -> float:
        cpt = network.cpts[cid]
        idx = 0
        for v in cpt.scope:
            idx = idx * cards[v] + assignment[v]
        return float(network.log_tables[cid][idx])

    cache: dict[tuple, float] = {}

    def or_value(var: int) -> float:
        key = (var, tuple(assignment[a] for a in contexts[var][1:]))
        if key in cache:
            return cache[key]
        terms = []
        for x in range(cards[var]):
            assignment[var] = x
            s = sum(entry(c) for c in partition.assigned[var])
            if s == LOG_ZERO:
                continue
            for child in pseudo_tree.children[var]:
                s += or_value(child)
                if s == LOG_ZERO:
                    break
            terms.append(s)
        del assignment[var]
        cache[key] = logsumexp(np.array(terms))
        return cache[key]

    total = sum(entry(c) for c in partition.constant)
    for r in pseudo_tree.roots:
        total += or_value(r)
    return total


# -- estimator distributions -----------------------------------------------------


@dataclass(frozen=True, eq=False)
class EstimatorDistribution:
    """Every possible value of an estimator with its probability."""

    values: np.ndarray
    probs: np.ndarray

    def __post_init__(self):
        if abs(math.fsum(self.probs) - 1.0) > 1e-10:
            raise ValueError("outcome probabilities must sum to 1")

    @property
    def mean(self) -> float:
        return math.fsum(self.probs * self.values)

    @property
    def variance(self) -> float:
        m = self.mean
        return math.fsum(self.probs * (self.values - m) ** 2)


def proposal_support(problem: SamplingProblem, max_points: int = 1 << 16):
    """All assignments with Q > 0, as (values, per-variable log Q, log Q)."""
    q = problem.proposal
    cards = problem.network.cardinalities
    free = list(problem.sampled)
    total = math.prod(cards[v] for v in free)
    if total > max_points:
        raise BoundExceededError(f"{total} assignments exceed the support bound {max_points}")
    grid = np.array(list(itertools.product(*(range(cards[v]) for v in free))), dtype=np.int64)
    values = np.zeros((len(grid), problem.network.n), dtype=np.int64)
    values[:, free] = grid.reshape(len(grid), len(free))
    for var, val in problem.evidence.assignments.items():
        values[:, var] = val
    parts = density_parts(q, values)
    log_q = np.zeros(len(values))
    for var in q.order:
        log_q += parts[:, var]
    keep = np.isfinite(log_q)
    return values[keep], parts[keep], log_q[keep]


def estimator_distribution(
    problem: SamplingProblem,
    n_samples: int,
    kinds: Sequence[str] = ESTIMATORS,
    where: Callable[[np.ndarray], np.ndarray] | None = None,
    max_sequences: int = 10**6,
) -> dict[str, EstimatorDistribution]:
    """Exact distribution of each estimator over all ordered ``n_samples``-sequences.

    The estimators are run on every sequence at once, one replicate group per
    sequence. ``where`` receives the (M, N, n) array of sequences and returns a
    mask; the distribution is then conditioned on that event.
    """
    values, parts, log_q = proposal_support(problem)
    k = len(values)
    m = k**n_samples
    if m > max_sequences:
        raise BoundExceededError(f"{k}^{n_samples} = {m} sequences exceed the bound {max_sequences}")
    idx = np.array(list(itertools.product(range(k), repeat=n_samples)), dtype=np.int64)
    idx = idx.reshape(m, n_samples)
    seq_log_p = log_q[idx].sum(axis=1)
    if where is not None:
        mask = np.asarray(where(values[idx]), dtype=bool)
        if not mask.any():
            raise ValueError("conditioning event has probability zero")
        idx, seq_log_p = idx[mask], seq_log_p[mask]
        m = len(idx)
    probs = np.exp(seq_log_p - logsumexp(seq_log_p))
    flat = idx.reshape(-1)
    batch = SampleBatch(values[flat], log_q[flat], parts[flat])
    groups = np.repeat(np.arange(m), n_samples)
    est = estimate_all(problem, batch, kinds, groups)
    return {kind: EstimatorDistribution(np.exp(v), probs) for kind, v in est.items()}


# -- fork model ---------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ForkModelSpec:
    """Z with two independent children X and Y.

    ``f_xz[j, x]`` and ``q_x[j, x]`` are the factor and proposal of X given
    Z = j; likewise for Y.
    """

    q_z: np.ndarray
    q_x: np.ndarray
    q_y: np.ndarray
    f_z: np.ndarray
    f_xz: np.ndarray
    f_yz: np.ndarray

    @staticmethod
    def _ratio(f, q):
        if np.any((q == 0) & (f > 0)):
            raise ValueError("proposal misses part of the support of f")
        return np.divide(f, q, out=np.zeros_like(f, dtype=float), where=q > 0)

    @property
    def z_ratio(self) -> np.ndarray:
        return self._ratio(self.f_z, self.q_z)

    def _moments(self, f, q):
        r = self._ratio(f, q)
        mu = (q * r).sum(axis=1)
        return mu, (q * r * r).sum(axis=1) - mu**2

    @property
    def x_moments(self):
        return self._moments(self.f_xz, self.q_x)

    @property
    def y_moments(self):
        return self._moments(self.f_yz, self.q_y)

    @property
    def mean(self) -> float:
        (mx, _), (my, _) = self.x_moments, self.y_moments
        return float((self.q_z * self.z_ratio * mx * my).sum())


def fork_spec_from_problem(problem: SamplingProblem) -> ForkModelSpec:
    tree = problem.pseudo_tree
    if len(tree.roots) != 1:
        raise ValueError("fork model needs a single root")
    (z,) = tree.roots
    kids = tree.children[z]
    if len(kids) != 2 or any(tree.children[c] for c in kids):
        raise ValueError("fork model needs a root with exactly two leaf children")
    x, y = kids
    cards = problem.network.cardinalities
    q = problem.proposal
    base = np.zeros(problem.network.n, dtype=np.int64)
    for var, val in problem.evidence.assignments.items():
        base[var] = val

    def local(var, z_val, v_val):
        row = base.copy()
        row[z] = z_val
        row[var] = v_val
        return math.exp(problem.local_log_weights(row[None, :])[0, var])

    def q_table(var):
        rows = np.empty((cards[z], cards[var]))
        for j in range(cards[z]):
            vals = np.tile(base, (cards[var], 1))
            vals[:, z] = j
            vals[:, var] = np.arange(cards[var])
            rows[j] = np.exp(density_parts(q, vals)[:, var])
        return rows

    q_z = q_table(z)[0]
    f_z = np.array([local(z, j, j) for j in range(cards[z])]) * math.exp(problem.log_constant)
    f_xz = np.array([[local(x, j, v) for v in range(cards[x])] for j in range(cards[z])])
    f_yz = np.array([[local(y, j, v) for v in range(cards[y])] for j in range(cards[z])])
    return ForkModelSpec(q_z, q_table(x), q_table(y), f_z, f_xz, f_yz)


class ForkVariance(NamedTuple):
    var_is: float
    var_ao: float


def fork_variance_analytic(
    spec: ForkModelSpec, n_samples: int, counts: Sequence[int] | None = None
) -> ForkVariance:
    """Closed-form variances of the IS and AND/OR sample means on a fork.

    Without ``counts`` both are unconditional. The IS variance is

        (sum_j z_j^2 Q(z_j) E[x^2|z_j] E[y^2|z_j] - mu^2) / N,

    where E[x^2|z] = mu(X|z)^2 + V(X|z). The AND/OR variance replaces the
    V(X|z)V(Y|z) term by its counts-averaged value P(N_j > 0) V V / N.

    With ``counts`` (N_j per value of Z) both are conditional on those counts:
    Q(z_j) becomes N_j / N, the between-Z term vanishes, and the AND/OR
    estimator's V(X|z)V(Y|z) term is divided by N_j.
    """
    n = n_samples
    z = spec.z_ratio
    mx, vx = spec.x_moments
    my, vy = spec.y_moments
    cross = mx**2 * vy + my**2 * vx
    if counts is None:
        second = spec.q_z * z**2 * (mx**2 * my**2 + cross)
        mu2 = spec.mean**2
        var_is = (math.fsum(second + spec.q_z * z**2 * vx * vy) - mu2) / n
        reached = 1.0 - (1.0 - spec.q_z) ** n
        var_ao = (math.fsum(second) - mu2) / n + math.fsum(z**2 * vx * vy * reached) / n**2
        return ForkVariance(var_is, var_ao)
    counts = np.asarray(counts, dtype=float)
    if counts.sum() != n:
        raise ValueError("counts must sum to N")
    empty = (counts == 0) & (spec.q_z > 0)
    if empty.any():
        raise UndefinedVarianceError(
            f"Z values {np.flatnonzero(empty).tolist()} have zero count but positive proposal mass; "
            "the conditional means there are undefined"
        )
    used = counts > 0
    var_is = math.fsum((z**2 * counts * (cross + vx * vy))[used]) / n**2
    var_ao = math.fsum((z**2 * (counts * cross + vx * vy))[used]) / n**2
    return ForkVariance(var_is, var_ao)


def fork_variance_literal(spec: ForkModelSpec, n_samples: int, counts: Sequence[int]) -> ForkVariance:
    """Variant closed forms: no squared-mean term, Q(z_j) weights mixed with a fixed N_j.

    Neither equals an exact variance; kept so the tests can show the gap.
    """
    z = spec.z_ratio
    mx, vx = spec.x_moments
    my, vy = spec.y_moments
    counts = np.asarray(counts, dtype=float)
    mu2 = spec.mean**2
    base = spec.q_z * z**2 * (mx**2 * vy + my**2 * vx)
    var_is = (math.fsum(base + spec.q_z * z**2 * vx * vy) - mu2) / n_samples
    with np.errstate(divide="ignore", invalid="ignore"):
        var_ao = (math.fsum(base + spec.q_z * z**2 * vx * vy / counts) - mu2) / n_samples
    return ForkVariance(var_is, var_ao)


def fork_estimate_by_parts(spec: ForkModelSpec, zs, xs, ys) -> float:
    """(1/N) sum_j N_j (f(z_j)/Q(z_j)) g_X(z_j) g_Y(z_j), with g the per-Z sample averages."""
    zs, xs, ys = map(np.asarray, (zs, xs, ys))
    n = len(zs)
    rx = spec._ratio(spec.f_xz, spec.q_x)
    ry = spec._ratio(spec.f_yz, spec.q_y)
    total = 0.0
    for j in np.unique(zs):
        sel = zs == j
        nj = sel.sum()
        gx = rx[j, xs[sel]].mean()
        gy = ry[j, ys[sel]].mean()
        total += nj * spec.z_ratio[j] * gx * gy
    return total / n


def fork_is_by_groups(spec: ForkModelSpec, zs, xs, ys) -> float:
    """Plain importance sampling regrouped by the value of Z."""
    zs, xs, ys = map(np.asarray, (zs, xs, ys))
    n = len(zs)
    rx = spec._ratio(spec.f_xz, spec.q_x)
    ry = spec._ratio(spec.f_yz, spec.q_y)
    total = 0.0
    for j in np.unique(zs):
        sel = zs == j
        nj = sel.sum()
        total += nj * spec.z_ratio[j] * (rx[j, xs[sel]] * ry[j, ys[sel]]).sum() / nj
    return total / n


# -- replicate studies -----------------------------------------------------------


class ReplicateStats(NamedTuple):
    mean: float
    variance: float
    stderr: float


def replicate_estimates(
    problem: SamplingProblem,
    n_samples: int,
    replicates: int,
    seed: int,
    kinds: Sequence[str] = ESTIMATORS,
    max_rows: int = 1 << 21,
) -> dict[str, np.ndarray]:
    """Linear-domain estimates per replicate; each replicate owns one spawned stream
    and all estimators read the same samples."""
    rngs = spawn_rngs(seed, replicates)
    per_chunk = max(1, max_rows // max(n_samples, 1))
    out = {k: [] for k in kinds}
    for start in range(0, replicates, per_chunk):
        chunk = rngs[start : start + per_chunk]
        batch = SampleBatch.concat([draw_samples(problem.proposal, r, n_samples) for r in chunk])
        groups = np.repeat(np.arange(len(chunk)), n_samples)
        for kind, v in estimate_all(problem, batch, kinds, groups).items():
            out[kind].append(np.exp(v))
    return {k: np.concatenate(v) for k, v in out.items()}


def empirical_variance(
    problem: SamplingProblem,
    n_samples: int,
    replicates: int,
    seed: int,
    kinds: Sequence[str] = ESTIMATORS,
) -> dict[str, ReplicateStats]:
    if replicates < 2:
        raise ValueError("need at least two replicates")
    est = replicate_estimates(problem, n_samples, replicates, seed, kinds)
    out = {}
    for kind, v in est.items():
        var = float(np.var(v, ddof=1))
        out[kind] = ReplicateStats(float(v.mean()), var, math.sqrt(var / len(v)))
    return out
