"""Depth-k aggregation of processes and channels."""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .channel import ChannelModel, output_process, reparameterize_channel
from .decay import DecayProfile, delta
from .errors import DeltaTooLarge, InconsistentAggregation, UnreachableContext
from .tree_model import (
    ContextTreeModel,
    StationaryDist,
    complete_mu,
    complete_tree,
    reparameterize_complete,
    stationary_distribution,
)

MIN_WEIGHT = 1e-300


def _fine_depth(depth: int, k: int) -> int:
    return max(depth, k)


def _group_weights(mu_fine: np.ndarray, alphabet: int, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Group index (last k symbols) of every fine context and group masses."""
    groups = np.arange(len(mu_fine)) % (alphabet ** k)
    mass = np.bincount(groups, weights=mu_fine, minlength=alphabet ** k)
    if np.any(mass < MIN_WEIGHT):
        bad = int(np.flatnonzero(mass < MIN_WEIGHT)[0])
        raise UnreachableContext(f"context index {bad} at depth {k} has zero stationary mass")
    return groups, mass


@dataclass(frozen=True, eq=False)
class AggregatedModel:
    base: ContextTreeModel
    k: int
    model: ContextTreeModel
    mu_fine: np.ndarray            # stationary law of base on A^max(kappa, k)

    @cached_property
    def mu(self) -> np.ndarray:
        """Aggregated stationary law ``sum_{v in T_w} mu(v)`` (integer order on A^k)."""
        A = self.base.alphabet
        return np.bincount(np.arange(len(self.mu_fine)) % A ** self.k,
                           weights=self.mu_fine, minlength=A ** self.k)


def aggregate_process(m: ContextTreeModel, k: int) -> AggregatedModel:
    """``q~_w(a) = sum_{v in T_w} mu(v) q_v(a) / sum_{v in T_w} mu(v)`` on ``A^k``."""
    if k < 0:
        raise ValueError("aggregation depth must be >= 0")
    A = m.alphabet
    D = _fine_depth(m.depth, k)
    fine = reparameterize_complete(m, D)
    mu = complete_mu(m, D)
    groups, mass = _group_weights(mu, A, k)
    num = np.zeros((A ** k, A))
    np.add.at(num, groups, mu[:, None] * fine.q)
    q_tilde = num / mass[:, None]
    # rounding can leave rows a few ulps off 1
    q_tilde /= q_tilde.sum(axis=1, keepdims=True)
    return AggregatedModel(m, k, ContextTreeModel(complete_tree(A, k), q_tilde), mu)


def aggregated_stationary(agg: AggregatedModel, tol: float = 1e-9) -> StationaryDist:
    """``mu~(w) = sum_{v in T_w} mu(v)``, cross-checked against a direct solve."""
    direct = stationary_distribution(agg.model)
    summed = agg.mu
    gap = float(np.max(np.abs(direct.mu - summed)))
    if gap > tol:
        raise InconsistentAggregation(
            f"aggregated stationary law differs from the subtree sums by {gap:.3e}")
    return StationaryDist(agg.model.tree, summed, direct.residual, "subtree-sum", direct.limit)


@dataclass(frozen=True, eq=False)
class AggregatedChannel:
    base: ChannelModel
    k: int
    channel: ChannelModel
    mu_fine: np.ndarray


def aggregated_theta(ch: ChannelModel, k: int, mu_fine: np.ndarray | None = None) -> np.ndarray:
    """``theta~_w(b|a)`` for every ``w`` in ``A^k`` as an array ``[w, a, b]``."""
    A = ch.alphabet
    D = _fine_depth(ch.depth, k)
    fine = reparameterize_channel(ch, D)
    mu = complete_mu(output_process(ch), D) if mu_fine is None else mu_fine
    groups, mass = _group_weights(mu, A, k)
    num = np.zeros((A ** k, A, A))
    np.add.at(num, groups, mu[:, None, None] * fine.theta)
    theta = num / mass[:, None, None]
    return theta / theta.sum(axis=2, keepdims=True)


def aggregate_channel(ch: ChannelModel, k: int) -> AggregatedChannel:
    A = ch.alphabet
    D = _fine_depth(ch.depth, k)
    mu = complete_mu(output_process(ch), D)
    theta = aggregated_theta(ch, k, mu)
    return AggregatedChannel(ch, k, ChannelModel(complete_tree(A, k), theta, ch.input), mu)


@dataclass(frozen=True)
class SandwichReport:
    holds: bool
    delta_k: float
    worst_lower_slack: float   # min over (w,a,b) of theta~ - (1-delta) max theta_s
    worst_upper_slack: float   # min over (w,a,b) of min theta_s / (1-delta) - theta~
    lower: np.ndarray
    upper: np.ndarray
    theta_tilde: np.ndarray


def die_out_sandwich(ch: ChannelModel, d: DecayProfile, k: int, atol: float = 1e-12) -> SandwichReport:
    """Check ``(1-delta_k) max_s theta_s <= theta~_w <= min_s theta_s / (1-delta_k)``
    over ``s`` in ``T_w`` for every ``(w, a, b)``."""
    dk = delta(d, k) if k >= 1 else float("inf")
    if dk > 1:
        raise DeltaTooLarge(f"delta_{k} = {dk} exceeds 1")
    A = ch.alphabet
    D = _fine_depth(ch.depth, k)
    fine = reparameterize_channel(ch, D)
    groups = np.arange(A ** D) % (A ** k)
    hi = np.full((A ** k, A, A), -np.inf)
    lo = np.full((A ** k, A, A), np.inf)
    np.maximum.at(hi, groups, fine.theta)
    np.minimum.at(lo, groups, fine.theta)
    tt = aggregated_theta(ch, k)
    lower = (1.0 - dk) * hi
    with np.errstate(divide="ignore"):
        upper = lo / (1.0 - dk) if dk < 1 else np.full_like(lo, np.inf)
    ls = float(np.min(tt - lower))
    us = float(np.min(upper - tt))
    return SandwichReport(ls >= -atol and us >= -atol, dk, ls, us, lower, upper, tt)
