"""Context-tree weighting conditioned on a side-information input sequence.

Every node of the depth-``K`` context tree (contexts over past outputs)
keeps one Krichevsky-Trofimov estimator per input symbol.  A node's
estimate ``P_e`` is the product of its per-input KT probabilities; its
weighted probability mixes ``P_e`` and the product of its children with
weight 1/2 each, and nodes at depth ``K`` use ``P_e`` alone.  The coding
distribution ``p_c(y | x, past)`` is the root's weighted probability.

All arithmetic is in log2.  Nodes are created only when a context is
visited, and a node's children product is maintained incrementally so an
update costs ``O(K)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, PastTooShort
from .simulator import Trace, context_indices
from .tree_model import encode


def kt_sequential(counts, symbol: int) -> float:
    """Add-half rule ``(n_b + 1/2) / (n + |A|/2)``."""
    counts = list(counts)
    return (counts[symbol] + 0.5) / (sum(counts) + len(counts) / 2.0)


def _log2_mix(a: float, b: float) -> float:
    """``log2((2^a + 2^b) / 2)``."""
    if a < b:
        a, b = b, a
    return a + math.log2(1.0 + 2.0 ** (b - a)) - 1.0


class _Node:
    __slots__ = ("counts", "log_pe", "log_pw", "child_sum")

    def __init__(self, alphabet: int):
        self.counts = [[0] * alphabet for _ in range(alphabet)]   # [input][output]
        self.log_pe = 0.0
        self.log_pw = 0.0
        self.child_sum = 0.0


class CTW:
    """Sequential input-conditioned CTW over a fixed past."""

    def __init__(self, alphabet: int, depth: int, past=()):
        if alphabet < 2:
            raise ConfigError("alphabet size must be >= 2")
        if depth < 0:
            raise ConfigError("depth must be >= 0")
        past = tuple(int(c) for c in past)
        if len(past) < depth:
            raise PastTooShort(f"past has length {len(past)}, depth {depth} needs {depth}")
        self.alphabet = alphabet
        self.depth = depth
        self.history = list(past[len(past) - depth:]) if depth else []
        self.nodes: dict = {}
        self.n = 0

    @property
    def log_prob(self) -> float:
        root = self.nodes.get((0, 0))
        return root.log_pw if root is not None else 0.0

    def _path(self):
        """Node keys from depth K up to the root, ``(d, index of last d outputs)``."""
        ctx = self.history[len(self.history) - self.depth:] if self.depth else []
        return [(d, encode(ctx[len(ctx) - d:], self.alphabet) if d else 0)
                for d in range(self.depth, -1, -1)]

    def _propose(self, x: int, y: int):
        """New ``(log_pe, log_pw)`` along the path after seeing ``y`` with input ``x``."""
        A = self.alphabet
        out = []
        child_old = child_new = None
        for d, key in self._path():
            node = self.nodes.get((d, key))
            if node is None:
                cnt_xy, cnt_x, pe, pw, csum = 0, 0, 0.0, 0.0, 0.0
            else:
                row = node.counts[x]
                cnt_xy, cnt_x, pe, pw, csum = row[y], sum(row), node.log_pe, node.log_pw, node.child_sum
            new_pe = pe + math.log2((cnt_xy + 0.5) / (cnt_x + A / 2.0))
            if d == self.depth:
                new_csum = csum
                new_pw = new_pe
            else:
                new_csum = csum + child_new - child_old
                new_pw = _log2_mix(new_pe, new_csum)
            out.append((d, key, new_pe, new_pw, new_csum))
            child_old, child_new = pw, new_pw
        return out

    def conditional(self, x: int) -> np.ndarray:
        """One-step law ``p_c(y_{n+1} = . | x_{n+1}, past)``."""
        base = self.log_prob
        return np.array([2.0 ** (self._propose(x, b)[-1][3] - base) for b in range(self.alphabet)])

    def update(self, x: int, y: int) -> float:
        """Feed one pair; returns ``log2 p_c(y | x, past)`` for this step."""
        if not (0 <= x < self.alphabet and 0 <= y < self.alphabet):
            raise ConfigError("symbol outside the alphabet")
        before = self.log_prob
        for d, key, pe, pw, csum in self._propose(x, y):
            node = self.nodes.get((d, key))
            if node is None:
                node = self.nodes[(d, key)] = _Node(self.alphabet)
            node.counts[x][y] += 1
            node.log_pe, node.log_pw, node.child_sum = pe, pw, csum
        if self.depth:
            self.history.append(y)
            if len(self.history) > 4 * self.depth + 64:
                del self.history[:len(self.history) - self.depth]
        self.n += 1
        return self.log_prob - before


def ctw_probability(y, x, past, K: int, alphabet: int = 2) -> float:
    """``log2 p_c(y_1^n | x_1^n, past)``."""
    y, x = list(map(int, y)), list(map(int, x))
    if len(y) != len(x):
        raise ConfigError("input and output sequences differ in length")
    tree = CTW(alphabet, K, past)
    for a, b in zip(x, y):
        tree.update(a, b)
    return tree.log_prob


def max_likelihood(y, x, past, K: int, alphabet: int = 2) -> float:
    """``sum N_w(b, a) log2 theta_hat_w(b|a)`` over depth-``K`` contexts."""
    y = np.asarray(y, dtype=np.int64)
    x = np.asarray(x, dtype=np.int64)
    A = alphabet
    w = context_indices(y, tuple(past), K, A)
    N = np.bincount((w * A + x) * A + y, minlength=A ** (K + 2)).reshape(-1, A, A).astype(float)
    Na = N.sum(axis=2, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(N > 0, N * np.log2(N / np.where(Na > 0, Na, 1.0)), 0.0)
    return float(terms.sum())


@dataclass(frozen=True)
class RedundancyCertificate:
    log_pc: float
    log_ml: float
    allowance: float               # |A|^(K+1) log n
    slack: float                   # log_pc - log_ml + allowance

    @property
    def holds(self) -> bool:
        return self.slack >= 0


def redundancy_certificate(trace: Trace, K: int) -> RedundancyCertificate:
    """Check ``log p_c >= ML - |A|^(K+1) log n`` on a trace.

    For ``n = 1`` the allowance ``log n`` is 0 and the inequality cannot
    hold (``p_c < 1 = ML``); callers should use ``n >= 2``.
    """
    A = trace.alphabet
    lp = ctw_probability(trace.y, trace.x, trace.past, K, A)
    ml = max_likelihood(trace.y, trace.x, trace.past, K, A)
    allowance = A ** (K + 1) * math.log2(trace.n) if trace.n > 0 else 0.0
    return RedundancyCertificate(lp, ml, allowance, lp - ml + allowance)
