import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from slowmix.channel import (
    ChannelModel,
    channel_from_process,
    joint_process,
    output_process,
    pair_to_output,
    reparameterize_channel,
    sibling_gaps,
    verify_membership,
)
from slowmix.decay import DecayProfile
from slowmix.errors import ConfigError, DepthTooSmall
from slowmix.fixtures import dependency_example, example2, md_fixture, noiseless_channel
from slowmix.simulator import count, simulate
from slowmix.tree_model import complete_tree, stationary_distribution

from oracles import dense_chain, eig_stationary, full_states, leaf_of
from strategies import channels


def oracle_node_theta(ch, node):
    """``theta`` at an arbitrary string, averaged over the stationary law."""
    leaves = list(ch.tree.leaves)
    D = max(ch.depth, len(node))
    q_of = lambda s: ch.input @ ch.theta_of(s)
    states, P = dense_chain(leaves, q_of, ch.alphabet)
    law = dict(zip(states, eig_stationary(P)))
    while len(next(iter(law))) < D:
        nxt = {}
        for s, m in law.items():
            qs = q_of(leaf_of(leaves, s))
            for b in range(ch.alphabet):
                nxt[s + (b,)] = m * qs[b]
        law = nxt
    num = sum(m * ch.theta_of(leaf_of(leaves, s)) for s, m in law.items() if s[D - len(node):] == node)
    den = sum(m for s, m in law.items() if s[D - len(node):] == node)
    return num / den


def oracle_worst_gap(ch, ulen):
    A = ch.alphabet
    worst = 0.0
    for u in full_states(A, ulen):
        thetas = [oracle_node_theta(ch, (c,) + u) for c in range(A)]
        for t1, t2 in itertools.permutations(thetas, 2):
            worst = max(worst, float(np.max(np.abs(t1 / t2 - 1))))
    return worst


def test_noiseless_channel_with_uniform_input_has_uniform_output():
    q = output_process(noiseless_channel(2, 2)).q
    assert np.allclose(q, 0.5)


def test_input_independent_channel_outputs_theta():
    rng = np.random.default_rng(0)
    theta = rng.dirichlet([1, 1], size=2)
    ch = ChannelModel(complete_tree(2, 1), np.repeat(theta[:, None, :], 2, axis=1), [0.3, 0.7])
    assert np.allclose(output_process(ch).q, theta)


def test_output_law_matches_simulated_frequencies():
    rng = np.random.default_rng(11)
    from slowmix.fixtures import random_channel
    ch = random_channel(rng, 2, 2, complete=True)
    tr = simulate(ch, 200_000, "00", seed=5)
    c = count(tr, 2)
    q = output_process(ch).q
    Nw = c.N.sum(axis=1)
    for w in range(4):
        n = Nw[w].sum()
        freq = Nw[w, 1] / n
        sigma = np.sqrt(q[w, 1] * (1 - q[w, 1]) / n)
        assert abs(freq - q[w, 1]) <= 4 * sigma


@given(channels(max_depth=2))
def test_joint_process_marginals(ch):
    J = joint_process(ch)
    A = ch.alphabet
    for i, s in enumerate(J.tree.leaves):
        law = J.q[i].reshape(A, A)
        out_leaf = pair_to_output(s, A)
        assert np.allclose(law.sum(axis=0), ch.input @ ch.theta_of(out_leaf), atol=1e-12)
        assert np.allclose(law.sum(axis=1), ch.input, atol=1e-12)


@given(channels(max_depth=2, alphabet=2))
def test_joint_stationary_marginalizes_to_output_stationary(ch):
    A = ch.alphabet
    mu_joint = stationary_distribution(joint_process(ch))
    mu_out = stationary_distribution(output_process(ch))
    totals = {}
    for i, s in enumerate(mu_joint.tree.leaves):
        key = pair_to_output(s, A)
        totals[key] = totals.get(key, 0.0) + mu_joint.mu[i]
    for i, s in enumerate(mu_out.tree.leaves):
        assert totals[s] == pytest.approx(mu_out.mu[i], abs=1e-9)


@given(channels(max_depth=2))
def test_output_process_commutes_with_reparameterization(ch):
    D = ch.depth + 1
    a = output_process(reparameterize_channel(ch, D)).q
    from slowmix.tree_model import reparameterize_complete
    b = reparameterize_complete(output_process(ch), D).q
    assert np.allclose(a, b, atol=1e-15)


def test_reparameterize_refuses_shallow_depth():
    with pytest.raises(DepthTooSmall):
        reparameterize_channel(noiseless_channel(2, 3), 2)


def test_invalid_channels_are_refused():
    with pytest.raises(ConfigError):
        ChannelModel(complete_tree(2, 1), np.full((2, 2, 2), 0.6), [0.5, 0.5])
    with pytest.raises(ConfigError):
        ChannelModel(complete_tree(2, 1), np.full((2, 2, 2), 0.5), [1.0, 0.0])


# -- membership ---------------------------------------------------------------

@pytest.mark.parametrize("eps", [1e-6, 0.1, 0.4])
def test_dependency_example_is_member_with_zero_decay(eps):
    rep = verify_membership(dependency_example(eps), DecayProfile.zero(), 6)
    assert rep.member


@pytest.mark.parametrize("k", [2, 3, 4])
def test_example2_violates_summable_decay_at_depth_k_minus_1(k):
    eps = 0.1
    ch = channel_from_process(example2(k, eps))
    gaps = sibling_gaps(ch)
    ratio = (1 - eps) / (2 * eps)
    assert gaps[k - 2] >= abs(ratio - 1) - 1e-12
    assert not verify_membership(ch, DecayProfile.exponential(0.5), k + 1).member


def test_huge_decay_admits_everything():
    ch = channel_from_process(example2(3, 0.1))
    assert verify_membership(ch, DecayProfile.table([1e9] * 5), 5).member


def test_md_fixture_is_member():
    assert verify_membership(md_fixture(), DecayProfile.exponential(0.3), 6).member


@given(channels(max_depth=2, alphabet=2))
def test_sibling_gaps_match_stationary_average_oracle(ch):
    gaps = sibling_gaps(ch)
    for j, g in enumerate(gaps, start=1):
        assert g == pytest.approx(oracle_worst_gap(ch, j), rel=1e-9, abs=1e-12)


@given(channels(max_depth=3), st.floats(0.0, 2.0), st.floats(0.0, 2.0))
def test_membership_is_monotone_in_decay(ch, extra, scale):
    gaps = sibling_gaps(ch)
    tight = DecayProfile.table(gaps)
    loose = DecayProfile.table([g * (1 + scale) + extra for g in gaps])
    assert verify_membership(ch, tight, ch.depth + 1).member
    assert verify_membership(ch, loose, ch.depth + 1).member
    if gaps and max(gaps) > 1e-9:
        j = int(np.argmax(gaps))
        shrunk = DecayProfile.table([g if i != j else g * 0.5 for i, g in enumerate(gaps)])
        assert not verify_membership(ch, shrunk, ch.depth + 1).member


def test_membership_witness_names_a_context():
    ch = channel_from_process(example2(2, 0.1))
    rep = verify_membership(ch, DecayProfile.zero(), 3)
    assert not rep.member
    u, c1, c2, a, b = rep.argmax
    assert len(u) == 1 and c1 != c2
