"""Context-tree Markov processes.

Context strings are tuples of ints stored oldest-first: the leftmost symbol is
the furthest in the past and a suffix holds the most recent symbols.  Reading
``q_1000(0)`` left to right, the history ``...1000`` ends in three zeros, and
emitting ``0`` moves to a context that is a suffix of ``...10000``.

Complete trees ``A^D`` are indexed by the base-|A| integer of the context
(oldest symbol most significant), so emitting ``a`` from index ``i`` leads to
``(i * |A| + a) % |A|**D``.  Every computation on a general tree goes through
its complete reparameterization at depth ``kappa(T)``.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.sparse import csgraph
from scipy.sparse.linalg import splu

from .errors import (
    ConfigError,
    DepthTooSmall,
    HistoryTooShort,
    KraftViolation,
    NoConvergence,
    NotShiftClosed,
    NumericError,
    SuffixClash,
)

Context = tuple  # tuple[int, ...], oldest-first

DEFAULT_TOL = 1e-12
POWER_ITERATION_CAP = 10**7
DIRECT_SOLVE_MAX_STATES = 4096
_GTH_MAX_STATES = 256


def parse_context(text: str) -> Context:
    """``"01"`` -> ``(0, 1)``.  The empty string is the root context."""
    try:
        return tuple(int(ch) for ch in text)
    except ValueError:
        raise ConfigError(f"context {text!r} is not a digit string") from None


def format_context(ctx: Sequence[int]) -> str:
    return "".join(str(int(c)) for c in ctx)


def is_suffix(v: Sequence[int], u: Sequence[int]) -> bool:
    """True iff ``v`` equals the last ``len(v)`` symbols of ``u``."""
    v, u = tuple(v), tuple(u)
    return len(v) <= len(u) and u[len(u) - len(v):] == v


def encode(ctx: Sequence[int], alphabet: int) -> int:
    idx = 0
    for c in ctx:
        idx = idx * alphabet + int(c)
    return idx


def decode(idx: int, alphabet: int, depth: int) -> Context:
    out = [0] * depth
    for pos in range(depth - 1, -1, -1):
        idx, out[pos] = divmod(idx, alphabet)
    return tuple(out)


def complete_leaves(alphabet: int, depth: int) -> tuple:
    return tuple(itertools.product(range(alphabet), repeat=depth))


@dataclass(frozen=True)
class ContextTree:
    alphabet: int
    leaves: tuple

    @property
    def depth(self) -> int:
        return max(len(s) for s in self.leaves)

    @cached_property
    def index(self) -> dict:
        return {s: i for i, s in enumerate(self.leaves)}

    @property
    def is_complete(self) -> bool:
        """All leaves at one depth and stored in integer order (the layout
        every complete-tree routine indexes by)."""
        d = self.depth
        return (len(self.leaves) == self.alphabet ** d
                and all(encode(s, self.alphabet) == i for i, s in enumerate(self.leaves)))

    def __len__(self):
        return len(self.leaves)

    def lookup(self, history: Sequence[int]) -> Context:
        return context_lookup(self, history)

    def subtree(self, w: Sequence[int]) -> list:
        """Leaves having ``w`` as a suffix (the set T_w)."""
        return [s for s in self.leaves if is_suffix(w, s)]

    @cached_property
    def complete_map(self) -> np.ndarray:
        """Leaf index of every context in ``A^depth`` (integer order)."""
        d = self.depth
        return np.array([self.index[self.lookup(c)]
                         for c in complete_leaves(self.alphabet, d)], dtype=np.int64)


def validate_tree(leaves: Iterable, alphabet: int) -> ContextTree:
    """Check suffix-freeness and Kraft equality and build the tree.

    Leaves may be tuples or digit strings.  Leaves are stored sorted by
    (length, symbols) so equal sets always produce equal trees.
    """
    if alphabet < 2:
        raise ConfigError(f"alphabet size must be >= 2, got {alphabet}")
    parsed = set()
    for leaf in leaves:
        ctx = parse_context(leaf) if isinstance(leaf, str) else tuple(int(c) for c in leaf)
        if any(c < 0 or c >= alphabet for c in ctx):
            raise ConfigError(f"leaf {format_context(ctx)!r} uses symbols outside 0..{alphabet - 1}")
        parsed.add(ctx)
    if not parsed:
        raise ConfigError("a tree needs at least one leaf")

    violations = []
    ordered = sorted(parsed, key=lambda s: (len(s), s))
    clashes = [(v, u) for v in ordered for u in ordered if v != u and is_suffix(v, u)]
    if clashes:
        v, u = clashes[0]
        violations.append(f"suffix clash: {format_context(v)!r} is a suffix of {format_context(u)!r}")
    kraft = sum(Fraction(1, alphabet ** len(s)) for s in ordered)
    if kraft != 1:
        violations.append(f"Kraft sum is {kraft}, expected 1")

    if clashes:
        raise SuffixClash("; ".join(violations), violations)
    if violations:
        raise KraftViolation("; ".join(violations), violations)
    return ContextTree(alphabet, tuple(ordered))


def complete_tree(alphabet: int, depth: int) -> ContextTree:
    return ContextTree(alphabet, complete_leaves(alphabet, depth))


def context_lookup(tree: ContextTree, history: Sequence[int]) -> Context:
    """The unique leaf of ``tree`` that is a suffix of ``history``."""
    history = tuple(history)
    index = tree.index
    for length in range(0, min(tree.depth, len(history)) + 1):
        cand = history[len(history) - length:]
        if cand in index:
            return cand
    raise HistoryTooShort(
        f"history of length {len(history)} matches no leaf (tree depth {tree.depth})")


@dataclass(frozen=True, eq=False)
class ContextTreeModel:
    """A context tree with one next-symbol distribution per leaf.

    ``q[i]`` belongs to ``tree.leaves[i]``.  Entries must be nonnegative and
    rows must sum to one; strict positivity is reported by ``is_positive``
    rather than enforced so that boundary fixtures (epsilon = 0) can be built.
    """
    tree: ContextTree
    q: np.ndarray

    def __post_init__(self):
        q = np.array(self.q, dtype=float)
        if q.shape != (len(self.tree), self.tree.alphabet):
            raise ConfigError(f"q has shape {q.shape}, expected {(len(self.tree), self.tree.alphabet)}")
        if np.any(q < 0) or not np.allclose(q.sum(axis=1), 1.0, atol=1e-9):
            raise ConfigError("every q_s must be a probability distribution")
        q.setflags(write=False)
        object.__setattr__(self, "q", q)

    @property
    def alphabet(self) -> int:
        return self.tree.alphabet

    @property
    def depth(self) -> int:
        return self.tree.depth

    @property
    def is_positive(self) -> bool:
        return bool(np.all(self.q > 0))

    def q_of(self, leaf) -> np.ndarray:
        leaf = parse_context(leaf) if isinstance(leaf, str) else tuple(leaf)
        return self.q[self.tree.index[leaf]]

    @classmethod
    def from_dict(cls, alphabet: int, q: dict) -> "ContextTreeModel":
        """Build from ``{"01": [p0, p1], ...}`` or ``{(0, 1): [...]}``."""
        tree = validate_tree(q.keys(), alphabet)
        norm = {(parse_context(k) if isinstance(k, str) else tuple(k)): v for k, v in q.items()}
        return cls(tree, np.array([norm[s] for s in tree.leaves], dtype=float))

    @cached_property
    def stationary(self) -> "StationaryDist":
        return stationary_distribution(self)


def reparameterize_complete(model: ContextTreeModel, depth: int) -> ContextTreeModel:
    """The same process on the complete tree ``A^depth``."""
    if depth < model.depth:
        raise DepthTooSmall(f"depth {depth} is below the tree depth {model.depth}")
    tree = complete_tree(model.alphabet, depth)
    if model.tree.is_complete and depth == model.depth:
        return model
    rows = [model.tree.index[model.tree.lookup(s)] for s in tree.leaves]
    return ContextTreeModel(tree, model.q[rows])


def shift_matrix(model: ContextTreeModel) -> sp.csr_matrix:
    """Sparse transition matrix of a model on a complete tree."""
    if not model.tree.is_complete:
        raise ConfigError("shift_matrix needs a complete tree")
    A, M = model.alphabet, len(model.tree)
    rows = np.repeat(np.arange(M), A)
    cols = (rows * A + np.tile(np.arange(A), M)) % M
    return sp.csr_matrix((model.q.ravel(), (rows, cols)), shape=(M, M))


def transition_matrix(model: ContextTreeModel) -> np.ndarray:
    """Dense leaf-to-leaf transition matrix ``Q(s'|s)``.

    Raises NotShiftClosed when some ``s a`` is too short to determine its
    successor leaf; such trees are handled through ``reparameterize_complete``.
    """
    tree = model.tree
    L, A = len(tree), tree.alphabet
    Q = np.zeros((L, L))
    for i, s in enumerate(tree.leaves):
        for a in range(A):
            ext = s + (a,)
            hits = [j for j, t in enumerate(tree.leaves) if is_suffix(t, ext)]
            if len(hits) != 1:
                raise NotShiftClosed(
                    f"emitting {a} from {format_context(s)!r} does not determine the next leaf")
            Q[i, hits[0]] += model.q[i, a]
    return Q


@dataclass(frozen=True, eq=False)
class StationaryDist:
    """Stationary law over the leaves of ``tree``.

    ``limit`` is set when the chain was reducible (zero entries) and ``mu`` is
    the limit of the stationary law under vanishing uniform smoothing of every
    ``q_s``.
    """
    tree: ContextTree
    mu: np.ndarray
    residual: float
    method: str
    limit: bool = False

    def __getitem__(self, leaf) -> float:
        leaf = parse_context(leaf) if isinstance(leaf, str) else tuple(leaf)
        return float(self.mu[self.tree.index[leaf]])

    def as_dict(self) -> dict:
        return {format_context(s): float(m) for s, m in zip(self.tree.leaves, self.mu)}


def _gth(P: np.ndarray) -> np.ndarray:
    """Grassmann-Taksar-Heyman elimination; subtraction-free, so stable for
    nearly decomposable chains."""
    P = np.array(P, dtype=float)
    n = P.shape[0]
    for k in range(n - 1, 0, -1):
        s = P[k, :k].sum()
        if s <= 0:
            raise NumericError("GTH elimination hit a zero pivot (reducible chain)")
        P[:k, k] /= s
        P[:k, :k] += np.outer(P[:k, k], P[k, :k])
    pi = np.zeros(n)
    pi[0] = 1.0
    for k in range(1, n):
        pi[k] = pi[:k] @ P[:k, k]
    return pi / pi.sum()


def _residual(mu: np.ndarray, P) -> float:
    return float(np.max(np.abs(P.T @ mu - mu))) if len(mu) else 0.0


def _power_iteration(P, mu0, tol, cap):
    mu = mu0
    for it in range(cap):
        nxt = P.T @ mu
        nxt /= nxt.sum()
        if np.max(np.abs(nxt - mu)) <= tol:
            return nxt, it + 1
        mu = nxt
    raise NoConvergence(f"power iteration did not reach tolerance {tol} in {cap} iterations")


def _solve_irreducible(P: sp.csr_matrix, tol: float, cap: int):
    n = P.shape[0]
    if n == 1:
        return np.ones(1), "trivial"
    if n <= _GTH_MAX_STATES:
        mu, method = _gth(P.toarray()), "gth"
    elif n <= DIRECT_SOLVE_MAX_STATES:
        M = (P.T - sp.identity(n, format="csr")).tolil()
        M[n - 1, :] = np.ones(n)
        rhs = np.zeros(n)
        rhs[-1] = 1.0
        mu = splu(M.tocsc()).solve(rhs)
        mu = np.clip(mu, 0.0, None)
        mu /= mu.sum()
        method = "sparse-lu"
    else:
        mu, _ = _power_iteration(P, np.full(n, 1.0 / n), tol, cap)
        return mu, "power"
    if _residual(mu, P) > tol:
        mu, _ = _power_iteration(P, mu, tol, cap)
        method += "+power"
    return mu, method


def _closed_classes(P: sp.csr_matrix):
    ncomp, labels = csgraph.connected_components(P > 0, directed=True, connection="strong")
    coo = P.tocoo()
    leaks = np.zeros(ncomp, dtype=bool)
    mask = (labels[coo.row] != labels[coo.col]) & (coo.data > 0)
    leaks[labels[coo.row[mask]]] = True
    return ncomp, labels, [c for c in range(ncomp) if not leaks[c]]


def _smoothing_limit(P: sp.csr_matrix, U: sp.csr_matrix, tol: float, cap: int) -> np.ndarray:
    """Limit as eps -> 0 of the stationary law of ``(1 - eps) P + eps U``.

    First-order singular perturbation: solve each closed class, weight the
    classes by the stationary law of the aggregated escape generator whose
    rates are ``pi_k (U - P) h_l`` (``h_l`` = absorption probabilities).
    """
    n = P.shape[0]
    _, labels, closed = _closed_classes(P)
    members = [np.flatnonzero(labels == c) for c in closed]
    in_closed = np.zeros(n, dtype=bool)
    for m in members:
        in_closed[m] = True
    transient = np.flatnonzero(~in_closed)

    H = np.zeros((n, len(closed)))
    for k, m in enumerate(members):
        H[m, k] = 1.0
    if len(transient):
        Pd = P.toarray()
        PT = Pd[np.ix_(transient, transient)]
        rhs = np.stack([Pd[np.ix_(transient, m)].sum(axis=1) for m in members], axis=1)
        H[transient] = np.linalg.solve(np.eye(len(transient)) - PT, rhs)

    R = (U - P).tocsr()
    pis, G = [], np.zeros((len(closed), len(closed)))
    for k, m in enumerate(members):
        sub = P[m][:, m]
        pi_k, _ = _solve_irreducible(sp.csr_matrix(sub), tol, cap)
        pis.append(pi_k)
        G[k] = pi_k @ (R[m] @ H)
    np.fill_diagonal(G, 0.0)
    np.fill_diagonal(G, -G.sum(axis=1))
    K = len(closed)
    if K == 1:
        c = np.ones(1)
    else:
        # the escape chain itself must be irreducible for a first-order limit
        ncomp, _ = csgraph.connected_components(sp.csr_matrix(G > 1e-300), directed=True,
                                                connection="strong")
        if ncomp != 1:
            raise NumericError("reducible model whose smoothing limit needs higher-order terms")
        S = G / np.max(-np.diag(G)) + np.eye(K)
        c = _gth(S)
    mu = np.zeros(n)
    for ck, m, pi_k in zip(c, members, pis):
        mu[m] += ck * pi_k
    return mu


def uniform_shift_matrix(alphabet: int, depth: int) -> sp.csr_matrix:
    M = alphabet ** depth
    rows = np.repeat(np.arange(M), alphabet)
    cols = (rows * alphabet + np.tile(np.arange(alphabet), M)) % M
    return sp.csr_matrix((np.full(M * alphabet, 1.0 / alphabet), (rows, cols)), shape=(M, M))


def complete_stationary(model: ContextTreeModel, tol: float = DEFAULT_TOL,
                        cap: int = POWER_ITERATION_CAP):
    """Stationary law of a complete-tree model: ``(mu, residual, method, limit)``."""
    P = shift_matrix(model)
    P.eliminate_zeros()
    ncomp, _, _ = _closed_classes(P)
    if ncomp == 1:
        mu, method = _solve_irreducible(P, tol, cap)
        limit = False
    else:
        U = uniform_shift_matrix(model.alphabet, model.depth)
        mu, method, limit = _smoothing_limit(P, U, tol, cap), "smoothing-limit", True
    res = _residual(mu, P)
    if res > tol:
        raise NoConvergence(f"stationary residual {res:.3e} exceeds tolerance {tol:.1e}")
    return mu, res, method, limit


def stationary_distribution(model: ContextTreeModel, tol: float = DEFAULT_TOL,
                            cap: int = POWER_ITERATION_CAP) -> StationaryDist:
    """Solve ``mu Q = mu`` and report the residual actually achieved.

    Irreducibility is checked numerically instead of being assumed from the
    positivity of ``q``.
    """
    cm = reparameterize_complete(model, model.depth)
    mu_c, res, method, limit = complete_stationary(cm, tol, cap)
    mu = np.bincount(model.tree.complete_map, weights=mu_c, minlength=len(model.tree))
    return StationaryDist(model.tree, mu, res, method, limit)


def complete_mu(model: ContextTreeModel, depth: int | None = None) -> np.ndarray:
    """Stationary probabilities of every string in ``A^depth`` (depth >= kappa)."""
    depth = model.depth if depth is None else depth
    cm = reparameterize_complete(model, depth)
    if depth == model.depth:
        mu_c, *_ = complete_stationary(cm)
        return mu_c
    base = complete_mu(model, model.depth)
    A, D0 = model.alphabet, model.depth
    qc = reparameterize_complete(model, D0).q
    # extend the window one symbol at a time by the chain rule
    mu = base
    for d in range(D0, depth):
        idx = np.arange(A ** (d + 1))
        prev = idx // A           # window without the newest symbol
        ctx = prev % (A ** D0)    # its depth-D0 context
        mu = mu[prev] * qc[ctx, idx % A]
    return mu


def string_stationary_prob(model: ContextTreeModel, u) -> float:
    """Stationary probability ``P(Y_1 .. Y_|u| = u)``."""
    u = parse_context(u) if isinstance(u, str) else tuple(u)
    if not u:
        raise ConfigError("u must be nonempty")
    A, D = model.alphabet, model.depth
    if len(u) <= D:
        mu_c = complete_mu(model, D)
        k = len(u)
        return float(mu_c[np.arange(A ** D) % (A ** k) == encode(u, A)].sum())
    qc = reparameterize_complete(model, D).q
    mu_c = complete_mu(model, D)
    p = mu_c[encode(u[:D], A)]
    for j in range(D, len(u)):
        p *= qc[encode(u[j - D:j], A), u[j]]
    return float(p)
