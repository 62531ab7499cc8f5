"""Information rates of output-memory channels, in bits per symbol.

For a channel with i.i.d. input the rate decomposes over states:
``R_T = sum_s mu(s) R_s(Theta_s)`` where ``R_s`` is the single-letter mutual
information between input and output at state ``s``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .aggregation import aggregate_channel
from .channel import ChannelModel, output_process
from .errors import ConfigError, RatiosNotNormalized
from .tree_model import format_context, stationary_distribution

RATIO_TOL = 1e-9


def _xlogx_ratio(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    """``p log2(p / q)`` with ``0 log 0 = 0``."""
    out = np.zeros(np.broadcast(p, q).shape)
    mask = np.broadcast_to(p > 0, out.shape)
    pb = np.broadcast_to(p, out.shape)
    qb = np.broadcast_to(q, out.shape)
    out[mask] = pb[mask] * np.log2(pb[mask] / qb[mask])
    return out


def state_rate(theta_s, input_law) -> float:
    """``I(X; Y)`` for one state: ``sum_a p_a sum_b theta(b|a) log(theta(b|a) / q(b))``."""
    theta_s = np.asarray(theta_s, dtype=float)
    p = np.asarray(input_law, dtype=float)
    q = p @ theta_s
    val = float(np.sum(p[:, None] * _xlogx_ratio(theta_s, q[None, :])))
    return min(max(val, 0.0), float(np.log2(len(p))))


@dataclass(frozen=True)
class RateReport:
    per_state: dict        # leaf string -> R_s
    mu: dict               # leaf string -> mu(s)
    total: float

    def to_dict(self) -> dict:
        return {"per_state": self.per_state, "mu": self.mu, "total": self.total}


def information_rate(ch: ChannelModel) -> RateReport:
    mu = stationary_distribution(output_process(ch)).mu
    rates = np.array([state_rate(ch.theta[i], ch.input) for i in range(len(ch.tree))])
    names = [format_context(s) for s in ch.tree.leaves]
    return RateReport(dict(zip(names, rates.tolist())), dict(zip(names, mu.tolist())),
                      float(mu @ rates))


def aggregated_rate_bound(ch: ChannelModel, k: int) -> tuple[float, float, float]:
    """``(R_aggregated, R_T, R_T - R_aggregated)``.  The gap is never negative
    beyond rounding because each ``R_s`` is convex in ``Theta_s``."""
    agg = aggregate_channel(ch, k)
    rates = np.array([state_rate(agg.channel.theta[i], ch.input) for i in range(len(agg.channel.tree))])
    mu_tilde = np.bincount(np.arange(len(agg.mu_fine)) % ch.alphabet ** k,
                           weights=agg.mu_fine, minlength=ch.alphabet ** k)
    r_agg = float(mu_tilde @ rates)
    r_full = information_rate(ch).total
    return r_agg, r_full, r_full - r_agg


def partial_rate(estimates: dict, mu_ratios: dict, input_law, tol: float = RATIO_TOL) -> float:
    """``sum_w ratio(w) R_w(theta_hat_w)`` over the good states.

    A heuristic for the part of the rate the sample supports; it is not a
    bound on ``R_T``.
    """
    if set(estimates) != set(mu_ratios):
        raise ConfigError("estimates and ratios must cover the same states")
    total = sum(mu_ratios.values())
    if abs(total - 1.0) > tol:
        raise RatiosNotNormalized(f"stationary ratios sum to {total}, not 1")
    out = 0.0
    for w, theta in estimates.items():
        theta = np.asarray(theta, dtype=float)
        if np.any(np.isnan(theta)):
            raise ConfigError(f"estimate for state {w!r} has undefined rows")
        out += mu_ratios[w] * state_rate(theta, input_law)
    return out
