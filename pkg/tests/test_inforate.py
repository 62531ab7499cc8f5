import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from slowmix.channel import channel_from_process
from slowmix.errors import ConfigError, RatiosNotNormalized
from slowmix.estimator import good_set_from, naive_estimates, stationary_ratio_estimates
from slowmix.fixtures import example5, noiseless_channel, random_channel
from slowmix.inforate import aggregated_rate_bound, information_rate, partial_rate, state_rate
from slowmix.aggregation import aggregate_channel
from slowmix.simulator import count, simulate

from oracles import block_information, entropy_bits
from strategies import channels


def test_noiseless_state_rate_is_one_bit():
    assert state_rate(np.eye(2), [0.5, 0.5]) == 1.0


def test_input_independent_state_rate_is_zero():
    assert state_rate([[0.3, 0.7], [0.3, 0.7]], [0.2, 0.8]) == 0.0


def test_binary_symmetric_channel():
    p = 0.11
    theta = [[1 - p, p], [p, 1 - p]]
    h = entropy_bits([p, 1 - p])
    ref = entropy_bits([0.5, 0.5]) - h
    assert state_rate(theta, [0.5, 0.5]) == pytest.approx(ref, abs=1e-14)
    assert ref == pytest.approx(0.5, abs=0.001)


def test_rates_of_degenerate_channels():
    assert information_rate(noiseless_channel(2, 2)).total == 1.0
    assert information_rate(channel_from_process(example5(0.2))).total == 0.0


@given(channels(max_depth=2))
def test_rate_bounds(ch):
    rep = information_rate(ch)
    for r in rep.per_state.values():
        assert 0.0 <= r <= np.log2(ch.alphabet)
    assert 0.0 <= rep.total <= np.log2(ch.alphabet)


@pytest.mark.parametrize("seed", range(4))
def test_rate_equals_block_information_increment(seed):
    """For ``i > kappa`` with a stationary start, ``I(X^i;Y^i) - I(X^(i-1);Y^(i-1))``
    equals the rate exactly, so exact enumeration pins it to rounding."""
    ch = random_channel(np.random.default_rng(seed), 2, 2)
    leaves = list(ch.tree.leaves)
    D = ch.depth
    I = [block_information(leaves, ch.theta_of, ch.input, 2, i) for i in (D + 1, D + 2, D + 3)]
    R = information_rate(ch).total
    assert I[1] - I[0] == pytest.approx(R, abs=1e-10)
    assert I[2] - I[1] == pytest.approx(R, abs=1e-10)
    # Cesaro average drifts towards R at rate O(1/i)
    assert abs(I[2] / (D + 3) - R) <= abs(I[0] / (D + 1) - R) + 1e-12


def test_ternary_rate_against_enumeration():
    ch = random_channel(np.random.default_rng(9), 3, 1, complete=True)
    leaves = list(ch.tree.leaves)
    I2 = block_information(leaves, ch.theta_of, ch.input, 3, 2)
    I3 = block_information(leaves, ch.theta_of, ch.input, 3, 3)
    assert I3 - I2 == pytest.approx(information_rate(ch).total, abs=1e-10)


@given(st.integers(0, 2**32 - 1), st.floats(0, 1))
def test_state_rate_is_convex_in_theta(seed, lam):
    rng = np.random.default_rng(seed)
    A = int(rng.integers(2, 4))
    p = rng.dirichlet(np.ones(A))
    t1 = rng.dirichlet(np.ones(A), size=A)
    t2 = rng.dirichlet(np.ones(A), size=A)
    mix = state_rate(lam * t1 + (1 - lam) * t2, p)
    assert mix <= lam * state_rate(t1, p) + (1 - lam) * state_rate(t2, p) + 1e-12


@given(channels(max_depth=3), st.integers(1, 2))
def test_aggregation_never_raises_rate(ch, k):
    r_agg, r_full, gap = aggregated_rate_bound(ch, k)
    assert r_agg <= r_full + 1e-12
    assert gap >= -1e-12


def test_aggregation_at_tree_depth_has_zero_gap():
    ch = random_channel(np.random.default_rng(2), 2, 3, complete=True)
    assert aggregated_rate_bound(ch, 3)[2] == pytest.approx(0.0, abs=1e-14)


def test_input_independent_channel_has_zero_aggregated_rate():
    r_agg, r_full, gap = aggregated_rate_bound(channel_from_process(example5(0.3)), 1)
    assert r_agg == r_full == gap == 0.0


def test_partial_rate_with_full_good_set_and_exact_parameters():
    ch = random_channel(np.random.default_rng(4), 2, 3, complete=True)
    k = 2
    agg = aggregate_channel(ch, k)
    mu = agg.mu_fine.reshape(-1, 4).sum(axis=0)
    names = ["00", "01", "10", "11"]
    est = {w: agg.channel.theta[i] for i, w in enumerate(names)}
    ratios = {w: float(mu[i]) for i, w in enumerate(names)}
    r_agg, _, _ = aggregated_rate_bound(ch, k)
    assert partial_rate(est, ratios, ch.input) == pytest.approx(r_agg, abs=1e-12)


def test_partial_rate_singleton():
    theta = np.array([[0.9, 0.1], [0.2, 0.8]])
    assert partial_rate({"1": theta}, {"1": 1.0}, [0.5, 0.5]) == state_rate(theta, [0.5, 0.5])


def test_partial_rate_rejects_bad_input():
    with pytest.raises(RatiosNotNormalized):
        partial_rate({"1": np.eye(2)}, {"1": 0.5}, [0.5, 0.5])
    with pytest.raises(ConfigError):
        partial_rate({"1": np.full((2, 2), np.nan)}, {"1": 1.0}, [0.5, 0.5])
    with pytest.raises(ConfigError):
        partial_rate({"1": np.eye(2)}, {"0": 1.0}, [0.5, 0.5])


def test_pipeline_partial_rate_on_fast_mixing_channel():
    ch = random_channel(np.random.default_rng(8), 2, 2, complete=True)
    k, n = 2, 400_000
    c = count(simulate(ch, n, "00", seed=1), k)
    good = good_set_from(range(4), k, 2)
    est = naive_estimates(c)
    names = good.names
    ratios = stationary_ratio_estimates(c, good)
    theta_hat = {w: est.theta[i] for i, w in enumerate(names)}
    r_hat = partial_rate(theta_hat, ratios, ch.input)
    r_agg = aggregated_rate_bound(ch, k)[0]
    # each theta row is within ~1/sqrt(N) and I(X;Y) is Lipschitz away from 0
    assert abs(r_hat - r_agg) < 0.01
