import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from slowmix.errors import HistoryTooShort, KraftViolation, NotShiftClosed, SuffixClash
from slowmix.fixtures import example1, example2, example3a, example3b, example4, example5, random_model
from slowmix.aggregation import aggregate_process
from slowmix.tree_model import (
    ContextTreeModel,
    complete_leaves,
    complete_tree,
    context_lookup,
    decode,
    encode,
    format_context,
    parse_context,
    reparameterize_complete,
    stationary_distribution,
    string_stationary_prob,
    transition_matrix,
    validate_tree,
)

from oracles import leaf_stationary, string_prob
from strategies import models


def oracle_mu(model):
    leaves = list(model.tree.leaves)
    return leaf_stationary(leaves, model.q_of, model.alphabet)


# -- trees ------------------------------------------------------------------

def test_example1_tree_is_valid_with_depth_2():
    tree = validate_tree(["11", "01", "0"], 2)
    assert tree.depth == 2
    assert {format_context(s) for s in tree.leaves} == {"11", "01", "0"}


def test_complete_depth_1_tree():
    assert validate_tree(["0", "1"], 2).depth == 1


def test_suffix_clash_reports_both_violations():
    with pytest.raises(SuffixClash) as info:
        validate_tree(["0", "00", "1"], 2)
    assert any("suffix" in v for v in info.value.violations)
    assert any("Kraft" in v for v in info.value.violations)


def test_kraft_violation():
    with pytest.raises(KraftViolation):
        validate_tree(["11", "0"], 2)


@pytest.mark.parametrize("history, leaf", [("1101", "01"), ("1100", "0"), ("0111", "11")])
def test_context_lookup_example1(history, leaf):
    tree = validate_tree(["11", "01", "0"], 2)
    assert format_context(context_lookup(tree, parse_context(history))) == leaf


def test_context_lookup_depth_1():
    assert context_lookup(complete_tree(2, 1), (0,)) == (0,)


def test_lookup_needs_enough_history():
    with pytest.raises(HistoryTooShort):
        context_lookup(validate_tree(["11", "01", "0"], 2), (1,))


@given(st.integers(2, 4), st.integers(0, 5), st.data())
def test_encode_decode_roundtrip(A, depth, data):
    idx = data.draw(st.integers(0, A ** depth - 1))
    assert encode(decode(idx, A, depth), A) == idx


def test_complete_leaves_are_in_integer_order():
    leaves = complete_leaves(3, 2)
    assert [encode(s, 3) for s in leaves] == list(range(9))


# -- reparameterization and transitions ------------------------------------

def test_example1_reparameterized_splits_leaf_0():
    full = reparameterize_complete(example1(), 2)
    assert {format_context(s) for s in full.tree.leaves} == {"00", "01", "10", "11"}
    assert full.q_of("10")[1] == pytest.approx(0.75)
    assert full.q_of("00")[1] == pytest.approx(0.75)
    assert full.q_of("11")[1] == pytest.approx(0.25)


def test_reparameterize_identity_on_complete_tree():
    m = example5(0.3)
    assert np.array_equal(reparameterize_complete(m, 2).q, m.q)


@given(models(max_depth=3))
def test_reparameterized_model_aggregates_back_to_original(m):
    D = m.depth + 1
    full = reparameterize_complete(m, D)
    for i, s in enumerate(m.tree.leaves):
        agg = aggregate_process(full, len(s)) if len(s) else None
        if agg is None:
            continue
        assert np.allclose(agg.model.q[encode(s, m.alphabet)], m.q[i], atol=1e-12)


def test_example1_transition_entries():
    m = example1()
    Q = transition_matrix(m)
    idx = m.tree.index
    assert Q[idx[(0, 1)], idx[(1, 1)]] == pytest.approx(1 / 3)
    assert Q[idx[(1, 1)], idx[(0,)]] == pytest.approx(3 / 4)


def test_depth_1_transitions_equal_q():
    m = example3b(0.2)
    Q = transition_matrix(m)
    assert np.allclose(Q, m.q)


@given(models())
def test_transition_rows_sum_to_one(m):
    try:
        Q = transition_matrix(m)
    except NotShiftClosed:
        Q = transition_matrix(reparameterize_complete(m, m.depth))
    assert np.allclose(Q.sum(axis=1), 1.0, atol=1e-12)


def test_tree_that_is_not_shift_closed_is_refused():
    m = ContextTreeModel.from_dict(2, {"0": [.5, .5], "001": [.5, .5], "101": [.5, .5], "11": [.5, .5]})
    with pytest.raises(NotShiftClosed):
        transition_matrix(m)


# -- stationary laws --------------------------------------------------------

def test_example4_stationary_values():
    st_ = stationary_distribution(example4())
    assert st_["11"] == pytest.approx(4 / 25, abs=1e-12)
    assert st_["01"] == pytest.approx(9 / 25, abs=1e-12)
    assert st_["0"] == pytest.approx(12 / 25, abs=1e-12)


@pytest.mark.parametrize("k", range(1, 9))
def test_example2_closed_form(k):
    st_ = stationary_distribution(example2(k, 0.1))
    z = 2 ** (k + 1) - 1
    for i, s in enumerate(st_.tree.leaves):
        expected = 1 / z if s == (0,) * k else 2 / z
        assert st_.mu[i] == pytest.approx(expected, abs=1e-10)


def test_example5_at_eps_0_1():
    st_ = stationary_distribution(example5(0.1))
    assert st_["11"] == pytest.approx(1 / 6.4, abs=1e-12)
    for s in ("01", "10", "00"):
        assert st_[s] == pytest.approx(1.8 / 6.4, abs=1e-12)


def test_example3_pair():
    a = stationary_distribution(example3a(0.1))
    b = stationary_distribution(example3b(0.1))
    assert (a["0"], a["1"]) == pytest.approx((0.5, 0.5), abs=1e-10)
    assert (b["1"], b["0"]) == pytest.approx((2 / 3, 1 / 3), abs=1e-10)


def test_reducible_chain_uses_smoothing_limit():
    st_ = stationary_distribution(example5(0.0))
    assert st_.limit and st_.method == "smoothing-limit"
    assert st_.mu == pytest.approx([2 / 7, 2 / 7, 2 / 7, 1 / 7], abs=1e-9)


@given(models(max_depth=3))
def test_stationary_matches_eigen_oracle(m):
    st_ = stationary_distribution(m)
    ref = oracle_mu(m)
    assert np.allclose(st_.mu, [ref[s] for s in m.tree.leaves], atol=1e-9)
    assert st_.residual <= 1e-12


@given(models(max_depth=3))
def test_reparameterized_stationary_aggregates_back(m):
    D = m.depth + 1
    fine = stationary_distribution(reparameterize_complete(m, D))
    st_ = stationary_distribution(m)
    for i, s in enumerate(m.tree.leaves):
        total = sum(fine.mu[j] for j, v in enumerate(fine.tree.leaves) if v[D - len(s):] == s)
        assert total == pytest.approx(st_.mu[i], abs=1e-9)


def test_large_model_uses_sparse_solver():
    m = random_model(np.random.default_rng(3), 2, 10, complete=True)
    st_ = stationary_distribution(m)
    assert st_.method != "gth"
    assert st_.residual <= 1e-12


# -- string probabilities --------------------------------------------------

def test_string_probability_examples():
    assert string_stationary_prob(example4(), "1") == pytest.approx(13 / 25, abs=1e-12)
    assert string_stationary_prob(example5(0.1), "1") == pytest.approx(2.8 / 6.4, abs=1e-12)


@given(models(max_depth=3), st.data())
def test_string_probability_is_additive(m, data):
    L = data.draw(st.integers(1, m.depth + 2))
    u = tuple(data.draw(st.lists(st.integers(0, m.alphabet - 1), min_size=L, max_size=L)))
    total = sum(string_stationary_prob(m, (a,) + u) for a in range(m.alphabet))
    assert total == pytest.approx(string_stationary_prob(m, u), abs=1e-12)


@given(models(max_depth=2), st.data())
def test_string_probability_matches_oracle(m, data):
    L = data.draw(st.integers(1, m.depth + 2))
    u = tuple(data.draw(st.lists(st.integers(0, m.alphabet - 1), min_size=L, max_size=L)))
    ref = string_prob(list(m.tree.leaves), m.q_of, m.alphabet, u)
    assert string_stationary_prob(m, u) == pytest.approx(ref, abs=1e-9)


def test_model_rejects_bad_rows():
    with pytest.raises(Exception):
        ContextTreeModel(complete_tree(2, 1), np.array([[0.5, 0.6], [0.5, 0.5]]))
