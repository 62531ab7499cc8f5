"""Output-memory channels ``(T, Theta_T)`` driven by an i.i.d. input law."""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import ConfigError
from .tree_model import (
    ContextTree,
    ContextTreeModel,
    complete_mu,
    complete_tree,
    decode,
    format_context,
    parse_context,
    stationary_distribution,
)

ZERO_GUARD = 1e-12


@dataclass(frozen=True, eq=False)
class ChannelModel:
    """``theta[i, a, b]`` is ``theta_s(b|a)`` for ``s = tree.leaves[i]``.

    ``input`` is the i.i.d. input law ``p_a``.  Zero entries are allowed in
    memory (noiseless channels are useful fixtures); the JSON loader enforces
    strict positivity.
    """
    tree: ContextTree
    theta: np.ndarray
    input: np.ndarray

    def __post_init__(self):
        A = self.tree.alphabet
        theta = np.array(self.theta, dtype=float)
        p = np.array(self.input, dtype=float)
        if theta.shape != (len(self.tree), A, A):
            raise ConfigError(f"theta has shape {theta.shape}, expected {(len(self.tree), A, A)}")
        if p.shape != (A,):
            raise ConfigError(f"input law has shape {p.shape}, expected {(A,)}")
        if np.any(theta < 0) or not np.allclose(theta.sum(axis=2), 1.0, atol=1e-9):
            raise ConfigError("every theta_s(.|a) must be a probability distribution")
        if np.any(p <= 0) or not np.isclose(p.sum(), 1.0, atol=1e-9):
            raise ConfigError("input law must be strictly positive and sum to 1")
        theta.setflags(write=False)
        p.setflags(write=False)
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "input", p)

    @property
    def alphabet(self) -> int:
        return self.tree.alphabet

    @property
    def depth(self) -> int:
        return self.tree.depth

    def theta_of(self, leaf) -> np.ndarray:
        leaf = parse_context(leaf) if isinstance(leaf, str) else tuple(leaf)
        return self.theta[self.tree.index[leaf]]

    @cached_property
    def output(self) -> ContextTreeModel:
        return output_process(self)


def channel_from_process(model: ContextTreeModel, input_law=None) -> ChannelModel:
    """Input-independent channel whose output process is ``model``."""
    A = model.alphabet
    p = np.full(A, 1.0 / A) if input_law is None else np.asarray(input_law, dtype=float)
    theta = np.repeat(model.q[:, None, :], A, axis=1)
    return ChannelModel(model.tree, theta, p)


def reparameterize_channel(ch: ChannelModel, depth: int) -> ChannelModel:
    from .errors import DepthTooSmall
    if depth < ch.depth:
        raise DepthTooSmall(f"depth {depth} is below the tree depth {ch.depth}")
    if ch.tree.is_complete and depth == ch.depth:
        return ch
    tree = complete_tree(ch.alphabet, depth)
    rows = [ch.tree.index[ch.tree.lookup(s)] for s in tree.leaves]
    return ChannelModel(tree, ch.theta[rows], ch.input)


def output_process(ch: ChannelModel) -> ContextTreeModel:
    """``q_s(b) = sum_a p_a theta_s(b|a)`` on the same tree."""
    return ContextTreeModel(ch.tree, np.einsum("a,sab->sb", ch.input, ch.theta))


def joint_process(ch: ChannelModel) -> ContextTreeModel:
    """The input/output pair process over the product alphabet.

    A pair ``(a, b)`` is encoded as the symbol ``a * |A| + b``.  Its context
    depends only on past outputs, so the tree over pairs is the output tree
    with every output symbol ``b`` at each position expanded into the
    ``|A|`` pair symbols that carry it.  Leaves are ``A^2``-ary strings.
    """
    A = ch.alphabet
    leaves, rows = [], []
    for i, s in enumerate(ch.tree.leaves):
        choices = [[a * A + b for a in range(A)] for b in s]
        pair_q = (ch.input[:, None] * ch.theta[i]).ravel()
        for combo in itertools.product(*choices):
            leaves.append(tuple(combo))
            rows.append(pair_q)
    order = sorted(range(len(leaves)), key=lambda j: (len(leaves[j]), leaves[j]))
    tree = ContextTree(A * A, tuple(leaves[j] for j in order))
    return ContextTreeModel(tree, np.array([rows[j] for j in order]))


def pair_to_output(ctx, alphabet: int) -> tuple:
    return tuple(int(c) % alphabet for c in ctx)


@dataclass(frozen=True)
class MembershipReport:
    member: bool
    worst_excess: float          # max over checks of |ratio - 1| - d(|u|)
    worst_ratio_gap: float       # |ratio - 1| at the arg-max
    argmax: tuple | None         # (u, c, c', a, b) as strings/ints
    checked_depth: int


def _node_thetas(ch: ChannelModel, depth: int) -> np.ndarray:
    """Theta of every string in ``A^depth``.

    For strings at least as deep as the tree this is the parameter of the
    leaf it extends; shorter strings are internal nodes and get the
    stationary-weighted aggregate ``P(b | node, a)``.
    """
    from .aggregation import aggregated_theta
    return aggregated_theta(ch, depth)


def _ratio_gaps(ch: ChannelModel, ulen: int) -> np.ndarray:
    """``|theta_cu(b|a) / theta_c'u(b|a) - 1|`` as an array ``[c, c', u, a, b]``."""
    A = ch.alphabet
    th = _node_thetas(ch, ulen + 1).reshape(A, A ** ulen, A, A)   # [c, u, a, b]
    num = th[:, None]
    den = th[None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where((num == 0) & (den == 0), 1.0, num / den)
    return np.abs(ratio - 1.0)


def sibling_gaps(ch: ChannelModel) -> list:
    """Worst ratio gap at each ``|u| = 1 .. kappa - 1``: the smallest ``d`` making
    ``ch`` a member (zero beyond the tree depth)."""
    return [float(np.max(_ratio_gaps(ch, j))) for j in range(1, ch.depth)]


def verify_membership(ch: ChannelModel, d, max_depth: int) -> MembershipReport:
    """Check ``|theta_cu(b|a) / theta_c'u(b|a) - 1| <= d(|u|)`` for
    ``1 <= |u| <= max_depth - 1``.

    Beyond the tree depth sibling parameters coincide and every ratio is 1,
    so checking past ``kappa(T) + 1`` adds nothing.
    """
    A = ch.alphabet
    worst = (-np.inf, 0.0, None)
    top = min(max_depth, ch.depth + 1)
    for ulen in range(1, max(top, 1)):
        gap = _ratio_gaps(ch, ulen)
        excess = gap - float(d(ulen))
        flat = int(np.nanargmax(np.where(np.isnan(excess), -np.inf, excess)))
        if excess.flat[flat] > worst[0]:
            c, c2, u_idx, a, b = np.unravel_index(flat, excess.shape)
            worst = (float(excess.flat[flat]), float(gap.flat[flat]),
                     (format_context(decode(int(u_idx), A, ulen)), int(c), int(c2), int(a), int(b)))
    if worst[2] is None:
        return MembershipReport(True, 0.0, 0.0, None, max_depth)
    return MembershipReport(worst[0] <= 1e-12, worst[0], worst[1], worst[2], max_depth)


def output_stationary(ch: ChannelModel):
    return stationary_distribution(output_process(ch))


def output_complete_mu(ch: ChannelModel, depth: int) -> np.ndarray:
    return complete_mu(output_process(ch), depth)
