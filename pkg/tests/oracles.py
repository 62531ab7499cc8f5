"""Independent reference computations used as test oracles.

Nothing here imports the solver, aggregation, rate or CTW code under test;
each oracle works from first principles on explicit strings so that an
agreement is evidence rather than a tautology.
"""
from __future__ import annotations

import itertools
import math
from fractions import Fraction
from functools import reduce

import numpy as np
from scipy.special import gammaln


# -- processes on explicit strings -------------------------------------------

def leaf_of(leaves, history):
    """The unique leaf that is a suffix of ``history`` (tuples, oldest first)."""
    hits = [s for s in leaves if len(s) <= len(history) and tuple(history[len(history) - len(s):]) == s]
    assert len(hits) == 1, (history, hits)
    return hits[0]


def full_states(alphabet, depth):
    return list(itertools.product(range(alphabet), repeat=depth))


def dense_chain(leaves, q_of, alphabet):
    """Transition matrix on ``A^D`` built by explicit string shifts."""
    D = max(len(s) for s in leaves)
    states = full_states(alphabet, D)
    pos = {s: i for i, s in enumerate(states)}
    P = np.zeros((len(states), len(states)))
    for s in states:
        law = q_of(leaf_of(leaves, s))
        for b in range(alphabet):
            P[pos[s], pos[(s + (b,))[1:]]] += law[b]
    return states, P


def eig_stationary(P):
    """Left Perron vector by eigen-decomposition."""
    vals, vecs = np.linalg.eig(P.T)
    v = np.real(vecs[:, np.argmin(np.abs(vals - 1.0))])
    return v / v.sum()


def leaf_stationary(leaves, q_of, alphabet):
    states, P = dense_chain(leaves, q_of, alphabet)
    mu = eig_stationary(P)
    out = {s: 0.0 for s in leaves}
    for s, m in zip(states, mu):
        out[leaf_of(leaves, s)] += m
    return out


def string_prob(leaves, q_of, alphabet, u):
    """``mu(u)`` by summing the depth-``max(D, |u|)`` stationary law."""
    D = max(max(len(s) for s in leaves), len(u))
    states, P = dense_chain(leaves, q_of, alphabet)
    mu = dict(zip(states, eig_stationary(P)))
    # extend to depth D by multiplying in transitions
    law = dict(mu)
    depth = len(states[0])
    while depth < D:
        nxt = {}
        for s, m in law.items():
            qs = q_of(leaf_of(leaves, s))
            for b in range(alphabet):
                nxt[s + (b,)] = nxt.get(s + (b,), 0.0) + m * qs[b]
        law, depth = nxt, depth + 1
    return sum(m for s, m in law.items() if s[len(s) - len(u):] == tuple(u))


def aggregated_law(leaves, q_of, alphabet, k):
    """``q~_w = sum_{s ends in w} mu(s) q_s / sum mu(s)`` over explicit strings."""
    D = max(max(len(s) for s in leaves), k)
    states = full_states(alphabet, D)
    fine = {s: np.asarray(q_of(leaf_of(leaves, s)), float) for s in states}
    _, P = dense_chain([tuple(s) for s in states], lambda s: fine[s], alphabet)
    mu = dict(zip(states, eig_stationary(P)))
    out = {}
    for w in full_states(alphabet, k):
        grp = [s for s in states if s[D - k:] == w]
        mass = sum(mu[s] for s in grp)
        out[w] = sum(mu[s] * fine[s] for s in grp) / mass
    return out


# -- mutual information by enumeration ---------------------------------------

def block_information(leaves, theta_of, input_law, alphabet, n):
    """``I(X^n; Y^n)`` in bits with the initial context drawn stationarily.

    Enumerates every input and output string of length ``n``.
    """
    A = alphabet
    q_of = lambda s: np.asarray(input_law) @ np.asarray(theta_of(s))
    states, P = dense_chain(leaves, q_of, A)
    mu = eig_stationary(P)
    p = np.asarray(input_law, float)
    joint = {}
    for x in itertools.product(range(A), repeat=n):
        px = float(np.prod(p[list(x)]))
        for y in itertools.product(range(A), repeat=n):
            tot = 0.0
            for s0, m in zip(states, mu):
                h = s0
                pr = m
                for a, b in zip(x, y):
                    pr *= theta_of(leaf_of(leaves, h))[a][b]
                    h = (h + (b,))[1:]
                tot += pr
            joint[(x, y)] = px * tot
    py = {}
    for (x, y), v in joint.items():
        py[y] = py.get(y, 0.0) + v
    info = 0.0
    for (x, y), v in joint.items():
        if v > 0:
            px = float(np.prod(p[list(x)]))
            info += v * math.log2(v / (px * py[y]))
    return info


def entropy_bits(p):
    p = np.asarray(p, float)
    p = p[p > 0]
    return float(-(p * np.log2(p)).sum())


# -- CTW by exhaustive tree mixture -----------------------------------------

def _log2_block_kt(counts):
    """``log2`` of the KT block probability of a sequence with these counts."""
    counts = np.asarray(counts, float)
    A = len(counts)
    val = (gammaln(counts + 0.5).sum() - A * gammaln(0.5)
           + gammaln(A / 2.0) - gammaln(counts.sum() + A / 2.0))
    return val / math.log(2)


def pruned_trees(alphabet, depth, prefix=()):
    """Every full tree of depth at most ``depth`` as ``(leaves, internal nodes)``.

    Contexts grow to the left: a node ``s`` has children ``(c,) + s``.
    """
    yield [prefix], []
    if len(prefix) < depth:
        children = [pruned_trees(alphabet, depth, (c,) + prefix) for c in range(alphabet)]
        for combo in itertools.product(*[list(g) for g in children]):
            leaves = [l for sub, _ in combo for l in sub]
            internal = [prefix] + [i for _, sub in combo for i in sub]
            yield leaves, internal


def ctw_mixture(y, x, past, K, alphabet):
    """``log2 sum_T prior(T) prod_{leaf, input} KT`` over all pruned trees.

    The prior gives each node at depth below ``K`` weight 1/2 for stopping
    and 1/2 for splitting, which is the weighting CTW implements.
    """
    hist = list(past)
    ctx_at = []
    for b in y:
        ctx_at.append(tuple(hist[len(hist) - K:]) if K else ())
        hist.append(b)
    terms = []
    for leaves, internal in pruned_trees(alphabet, K):
        nodes = leaves + internal
        log_prior = -sum(1 for s in nodes if len(s) < K)
        lp = 0.0
        for s in leaves:
            for a in range(alphabet):
                cnt = np.zeros(alphabet)
                for c, xa, yb in zip(ctx_at, x, y):
                    if xa == a and c[len(c) - len(s):] == s:
                        cnt[yb] += 1
                lp += _log2_block_kt(cnt)
        terms.append(log_prior + lp)
    top = max(terms)
    return top + math.log2(sum(2.0 ** (t - top) for t in terms))


def classic_ctw(y, past, K, alphabet=2):
    """Unconditioned CTW by recursion over the final count tree."""
    hist = list(past)
    counts = {}
    for b in y:
        ctx = tuple(hist[len(hist) - K:]) if K else ()
        for d in range(K + 1):
            node = ctx[len(ctx) - d:] if d else ()
            counts.setdefault(node, np.zeros(alphabet))[b] += 1
        hist.append(b)

    def pw(node):
        c = counts.get(node)
        if c is None:
            return 0.0
        pe = _log2_block_kt(c)
        if len(node) == K:
            return pe
        kids = sum(pw((a,) + node) for a in range(alphabet))
        hi = max(pe, kids)
        return hi + math.log2(2.0 ** (pe - hi) + 2.0 ** (kids - hi)) - 1.0

    return pw(())


def kt_exact(seq, alphabet):
    """Exact KT sequential probability as a Fraction."""
    counts = [0] * alphabet
    p = Fraction(1)
    for b in seq:
        p *= Fraction(2 * counts[b] + 1, 2 * sum(counts) + alphabet)
        counts[b] += 1
    return p


# -- restriction chains -------------------------------------------------------

def restricted_support(alphabet, k, good):
    """Boolean support of the restriction of the de Bruijn graph on ``A^k``
    to ``good``, via Warshall closure over bad vertices."""
    M = alphabet ** k
    adj = np.zeros((M, M), dtype=bool)
    for s in range(M):
        for b in range(alphabet):
            adj[s, (s * alphabet + b) % M] = True
    good = sorted(good)
    bad = [v for v in range(M) if v not in set(good)]
    reach = adj.copy()
    # paths whose interior lies in bad: close over bad pivots only
    for piv in bad:
        reach = reach | (reach[:, [piv]] & reach[[piv], :])
    return reach[np.ix_(good, good)]


def boolean_period(S):
    """gcd of closed-walk lengths up to ``2 |S|`` in an irreducible support."""
    n = len(S)
    M = S.astype(np.int64)
    power = np.eye(n, dtype=np.int64)
    lengths = []
    for m in range(1, 2 * n + 1):
        power = np.minimum(power @ M, 1)
        if np.trace(power) > 0:
            lengths.append(m)
    return reduce(math.gcd, lengths, 0)
