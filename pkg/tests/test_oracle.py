import itertools
import math

import numpy as np
import pytest

from aois.errors import BoundExceededError, UndefinedVarianceError
from aois.estimators import is_mean
from aois.generators import example_network, fork, grid, random_evidence, random_network
from aois.model import Evidence
from aois.oracle import (
    empirical_variance,
    estimator_distribution,
    exact_pe_ao_search,
    exact_pe_enumeration,
    fork_is_by_groups,
    fork_spec_from_problem,
    fork_variance_analytic,
    fork_variance_literal,
    proposal_support,
)
from aois.problem import build_problem


def _fork_problem(seed=None, proposal="uniform"):
    net, ev = fork(None if seed is None else np.random.default_rng(seed))
    return build_problem(net, ev, proposal=proposal)


def test_fork_exact_value():
    net, ev = fork()
    # hand sum over Z, X, Y of P(z) P(x|z) P(y|z) P(A=1|x) P(B=1|y)
    pa = {0: 0.2, 1: 0.7}
    pb = {0: 0.4, 1: 0.85}
    px = {0: (0.7, 0.3), 1: (0.2, 0.8)}
    py = {0: (0.5, 0.5), 1: (0.9, 0.1)}
    pz = (0.4, 0.6)
    expected = sum(
        pz[z] * sum(px[z][x] * pa[x] for x in range(2)) * sum(py[z][y] * pb[y] for y in range(2)) for z in range(2)
    )
    assert math.exp(exact_pe_enumeration(net, ev)) == pytest.approx(expected, rel=1e-14)


@pytest.mark.parametrize("seed", range(15))
def test_exact_algorithms_agree(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(3, 14))
    net = random_network(n, rng, card=int(rng.integers(2, 4)) if n < 9 else 2)
    ev = random_evidence(net, int(rng.integers(0, 3)), rng)
    p = build_problem(net, ev, order="minfill", proposal="uniform", seed=seed % 3)
    a = exact_pe_enumeration(net, ev)
    b = exact_pe_ao_search(net, ev, p.pseudo_tree, p.contexts)
    assert abs(a - b) <= 1e-12


def test_no_evidence_gives_one(rng):
    net = grid(3, 3, rng)
    p = build_problem(net, Evidence({}))
    assert abs(exact_pe_ao_search(net, Evidence({}), p.pseudo_tree, p.contexts)) <= 1e-12


def test_bounds_are_hard_errors(rng):
    net, ev = example_network()
    with pytest.raises(BoundExceededError):
        exact_pe_enumeration(net, ev, max_assignments=10)
    p = build_problem(net, ev, proposal="uniform")
    with pytest.raises(BoundExceededError):
        exact_pe_ao_search(net, ev, p.pseudo_tree, p.contexts, max_table=4)
    with pytest.raises(BoundExceededError):
        estimator_distribution(p, 5, max_sequences=1000)


def test_distribution_probabilities_sum_to_one():
    p = _fork_problem()
    for d in estimator_distribution(p, 2).values():
        assert abs(math.fsum(d.probs) - 1.0) <= 1e-10


def test_grouped_is_identity_on_every_sequence():
    p = _fork_problem(seed=3)
    spec = fork_spec_from_problem(p)
    values, _, log_q = proposal_support(p)
    f = [p.log_f(values[i : i + 1])[0] for i in range(len(values))]
    for n in (1, 2, 3):
        for seq in itertools.product(range(len(values)), repeat=n):
            v = values[list(seq)]
            direct = math.exp(is_mean([f[i] for i in seq], [log_q[i] for i in seq]))
            grouped = fork_is_by_groups(spec, v[:, 0], v[:, 1], v[:, 2])
            assert grouped == pytest.approx(direct, rel=1e-13)


@pytest.mark.parametrize("seed", [None, 1, 2, 3])
@pytest.mark.parametrize("proposal", ["uniform", "prior"])
def test_closed_form_variances_match_exhaustive(seed, proposal):
    p = _fork_problem(seed, proposal)
    spec = fork_spec_from_problem(p)
    for n in (1, 2, 3):
        dist = estimator_distribution(p, n)
        closed = fork_variance_analytic(spec, n)
        assert abs(dist["is"].variance - closed.var_is) <= 1e-10
        assert abs(dist["aotree"].variance - closed.var_ao) <= 1e-10


def test_counts_conditioned_variances_match_stratified_exhaustive():
    p = _fork_problem(seed=4)
    spec = fork_spec_from_problem(p)
    for counts in [(2, 1), (1, 2), (3, 1), (1, 1)]:
        n = sum(counts)

        def where(seqs, c0=counts[0]):
            return (seqs[:, :, 0] == 0).sum(axis=1) == c0

        dist = estimator_distribution(p, n, where=where)
        closed = fork_variance_analytic(spec, n, counts)
        assert abs(dist["is"].variance - closed.var_is) <= 1e-10
        assert abs(dist["aotree"].variance - closed.var_ao) <= 1e-10
    # with one sample per value of Z the two estimators coincide
    ones = fork_variance_analytic(spec, 2, (1, 1))
    assert ones.var_is == pytest.approx(ones.var_ao, abs=1e-15)


def test_zero_count_conditional_variance_is_undefined():
    spec = fork_spec_from_problem(_fork_problem())
    with pytest.raises(UndefinedVarianceError):
        fork_variance_analytic(spec, 3, (3, 0))


def test_literal_closed_forms_differ_from_exact():
    # the variant IS form lacks the sum_j Q z^2 mu_X^2 mu_Y^2 term
    p = _fork_problem(seed=5)
    spec = fork_spec_from_problem(p)
    n = 3
    literal = fork_variance_literal(spec, n, (2, 1))
    exact = estimator_distribution(p, n)["is"].variance
    (mx, _), (my, _) = spec.x_moments, spec.y_moments
    missing = math.fsum(spec.q_z * spec.z_ratio**2 * mx**2 * my**2) / n
    assert abs(literal.var_is - exact) > 1e-6
    assert literal.var_is + missing == pytest.approx(exact, abs=1e-12)


def test_empirical_variance_approaches_exact():
    p = _fork_problem()
    exact = estimator_distribution(p, 2)
    emp = empirical_variance(p, 2, 40_000, seed=9)
    for k in ("is", "aotree", "aograph"):
        assert emp[k].mean == pytest.approx(exact[k].mean, abs=4 * emp[k].stderr)
        assert emp[k].variance == pytest.approx(exact[k].variance, rel=0.05)
    with pytest.raises(ValueError):
        empirical_variance(p, 2, 1, seed=0)
