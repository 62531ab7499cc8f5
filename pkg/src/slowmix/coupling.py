"""The coupling used to bound martingale differences of good-state counts.

Two copies of the output process are run side by side and watched only at
the times their depth-k context is good (the restriction chain).  Symbol
steps use one shared uniform variate per step, laid out so that both chains
emit the same symbol with probability ``sum_b min(q_u(b), q_v(b))``; once
the chains have emitted different symbols before reaching a good context
they continue independently until both do.

Histories are kept as integers holding the last ``L`` symbols, oldest
symbol most significant, with ``L = max(kappa, ell, k) + 8``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .channel import ChannelModel, output_process
from .errors import ConfigError, ExcursionCap
from .estimator import GoodSet, restriction_matrix
from .simulator import streams
from .tree_model import (
    ContextTreeModel,
    encode,
    format_context,
    parse_context,
    reparameterize_complete,
    decode,
)

EXCURSION_CAP = 10**7
WINDOW_SLACK = 8


def _stack(weights, order):
    """Cumulative right ends of intervals laid out in ``order``."""
    ends, acc = [], 0.0
    for b in order:
        acc += weights[b]
        ends.append((acc, b))
    return ends


def _locate(ends, u):
    for right, b in ends:
        if u < right:
            return b
    return ends[-1][1]


def maximal_step(q_u, q_v, G_u, G_v, U: float) -> tuple[int, int]:
    """One coupled symbol step driven by a single uniform ``U``.

    Intervals of length ``r(b) = min(q_u(b), q_v(b))`` are stacked from 0,
    symbols in ``G_u & G_v`` first (ascending), then the rest (ascending).
    Below ``C = sum_b r(b)`` both chains emit the same symbol; above it the
    leftover ``[C, 1)`` is used twice, once stacked with
    ``r_u(b) = (q_u(b) - q_v(b))^+`` for the first chain and once with
    ``r_v(b)`` for the second.
    """
    q_u = np.asarray(q_u, dtype=float)
    q_v = np.asarray(q_v, dtype=float)
    A = len(q_u)
    r = np.minimum(q_u, q_v)
    shared = sorted(set(G_u) & set(G_v))
    order = shared + [b for b in range(A) if b not in set(shared)]
    ends = _stack(r, order)
    C = ends[-1][0]
    if U < C:
        b = _locate(ends, U)
        return b, b
    ru = np.maximum(q_u - q_v, 0.0)
    rv = np.maximum(q_v - q_u, 0.0)
    eu = _stack(ru, range(A))
    ev = _stack(rv, range(A))
    eu = [(C + e, b) for e, b in eu if ru[b] > 0] or [(1.0, int(np.argmax(q_u)))]
    ev = [(C + e, b) for e, b in ev if rv[b] > 0] or [(1.0, int(np.argmax(q_v)))]
    return _locate(eu, U), _locate(ev, U)


def match_probability(q_u, q_v) -> float:
    return float(np.minimum(np.asarray(q_u, float), np.asarray(q_v, float)).sum())


def _draw(q_row, u: float) -> int:
    acc = 0.0
    for b, p in enumerate(q_row):
        acc += p
        if u < acc:
            return b
    return len(q_row) - 1


# -- single restriction chain ----------------------------------------------

@dataclass
class RestrictionChain:
    """The output process observed at the times its depth-k context is good.

    ``history`` holds the last ``window`` symbols as an integer; ``known``
    counts how many of them come from the supplied start or from the run.
    """
    model: ContextTreeModel
    good: GoodSet
    history: int
    known: int
    window: int
    cap: int = EXCURSION_CAP
    steps: int = 0                 # Y-steps taken
    hits: int = 0                  # Z-steps taken
    _qc: np.ndarray = field(default=None, repr=False)

    @classmethod
    def start(cls, model, good: GoodSet, start, ell: int = 0, cap: int = EXCURSION_CAP):
        if isinstance(model, ChannelModel):
            model = output_process(model)
        start = parse_context(start) if isinstance(start, str) else tuple(start)
        need = max(model.depth, good.k)
        if len(start) < need:
            raise ConfigError(f"start history needs at least {need} symbols")
        window = max(model.depth, ell, good.k) + WINDOW_SLACK
        start = start[max(0, len(start) - window):]
        A = model.alphabet
        qc = reparameterize_complete(model, model.depth).q
        chain = cls(model, good, encode(start, A), len(start), window, cap, _qc=qc)
        if not chain.is_good():
            raise ConfigError(f"start context {format_context(start[len(start) - good.k:])!r} is not good")
        return chain

    @property
    def alphabet(self) -> int:
        return self.model.alphabet

    def context(self, depth: int) -> int:
        return self.history % (self.alphabet ** depth)

    def is_good(self, h: int | None = None) -> bool:
        h = self.history if h is None else h
        return bool(self.good.mask[h % (self.alphabet ** self.good.k)])

    def q(self, h: int | None = None) -> np.ndarray:
        h = self.history if h is None else h
        return self._qc[h % (self.alphabet ** self.model.depth)]

    def G(self, h: int | None = None) -> tuple:
        """Symbols leading from the current history to a good context."""
        h = self.history if h is None else h
        A = self.alphabet
        return tuple(b for b in range(A) if self.is_good(h * A + b))

    def push(self, b: int) -> None:
        A = self.alphabet
        self.history = (self.history * A + b) % (A ** self.window)
        self.known = min(self.window, self.known + 1)
        self.steps += 1

    def advance(self, rng: np.random.Generator) -> int:
        """Run until the next good context; returns the excursion length."""
        for length in range(1, self.cap + 1):
            self.push(_draw(self.q(), rng.random()))
            if self.is_good():
                self.hits += 1
                return length
        raise ExcursionCap(f"no good context within {self.cap} steps", steps=self.cap)

    def state(self) -> str:
        return format_context(decode(self.history, self.alphabet, self.known))


def advance_restriction(chain: RestrictionChain, rng: np.random.Generator) -> tuple[str, int]:
    length = chain.advance(rng)
    return format_context(decode(chain.context(chain.good.k), chain.alphabet, chain.good.k)), length


# -- coupled pair -----------------------------------------------------------

def agree(h1: int, h2: int, known1: int, known2: int, depth: int, alphabet: int) -> bool:
    """``Z' ~_depth Z''``: the last ``depth`` symbols coincide (and are known)."""
    if depth > min(known1, known2):
        return False
    m = alphabet ** depth
    return h1 % m == h2 % m


@dataclass
class StepRecord:
    tilde: bool                    # first symbols equal and both hit a good context at once
    agree_k: bool
    agree_ell: bool
    lengths: tuple


@dataclass
class CoalescenceRecord:
    tau: int | None                # first Z-index with last ell symbols equal (0 = at start)
    divergences: int               # Z-indices after tau where the ell-agreement fails
    tilde_events: int
    steps: int
    agree_k: np.ndarray            # per Z-index indicator of agreement on the last k symbols
    tilde: np.ndarray              # per Z-index indicator of the ~ event

    def to_dict(self) -> dict:
        return {"tau": self.tau, "divergences": self.divergences,
                "tilde_events": self.tilde_events, "steps": self.steps,
                "mismatch_k": int(self.steps - int(self.agree_k[1:].sum()))}


class CoupledPair:
    """Two restriction chains driven by one shared uniform stream.

    Seeds split into three Philox streams: the shared coupling variates and
    one private stream per chain for the independent phase.
    """

    def __init__(self, model, good: GoodSet, start1, start2, ell: int, seed: int,
                 cap: int = EXCURSION_CAP):
        self.c1 = RestrictionChain.start(model, good, start1, ell, cap)
        self.c2 = RestrictionChain.start(model, good, start2, ell, cap)
        self.ell = max(int(ell), 0)
        self.k = good.k
        self.cap = cap
        self.shared, self.own1, self.own2 = streams(seed, 3)

    def agree(self, depth: int) -> bool:
        return agree(self.c1.history, self.c2.history, self.c1.known, self.c2.known,
                     depth, self.c1.alphabet)

    def step(self) -> StepRecord:
        """Produce the next pair ``(Z'_{j+1}, Z''_{j+1})``."""
        c1, c2 = self.c1, self.c2
        done1 = done2 = False
        coupled = True
        first = True
        tilde = False
        n1 = n2 = 0
        while not (done1 and done2):
            if n1 > self.cap or n2 > self.cap:
                raise ExcursionCap(f"no good context within {self.cap} steps", steps=self.cap)
            if coupled and not done1 and not done2:
                b1, b2 = maximal_step(c1.q(), c2.q(), c1.G(), c2.G(), self.shared.random())
                c1.push(b1)
                c2.push(b2)
                n1 += 1
                n2 += 1
                done1, done2 = c1.is_good(), c2.is_good()
                if first:
                    tilde = b1 == b2 and done1 and done2
                    first = False
                if b1 != b2:
                    coupled = False            # case 3: independent from here on
                continue
            # case 1 (one chain already good) or case 3 (diverged): run alone
            if not done1:
                c1.push(_draw(c1.q(), self.own1.random()))
                n1 += 1
                done1 = c1.is_good()
            if not done2:
                c2.push(_draw(c2.q(), self.own2.random()))
                n2 += 1
                done2 = c2.is_good()
        c1.hits += 1
        c2.hits += 1
        return StepRecord(tilde, self.agree(self.k), self.agree(self.ell), (n1, n2))


def coupled_run(pair: CoupledPair, horizon: int) -> CoalescenceRecord:
    """Advance ``horizon`` Z-steps and record coalescence in the ``ell`` sense."""
    agree_k = np.zeros(horizon + 1, dtype=bool)
    tilde = np.zeros(horizon + 1, dtype=bool)
    agree_k[0] = pair.agree(pair.k)
    tau = 0 if pair.agree(pair.ell) else None
    div = 0
    for j in range(1, horizon + 1):
        rec = pair.step()
        agree_k[j] = rec.agree_k
        tilde[j] = rec.tilde
        if tau is None:
            if rec.agree_ell:
                tau = j
        elif not rec.agree_ell:
            div += 1
    return CoalescenceRecord(tau, div, int(tilde.sum()), horizon, agree_k, tilde)


# -- martingale experiment --------------------------------------------------

@dataclass(frozen=True)
class MartingaleReport:
    w: str
    n_tilde: int
    runs: int
    max_difference: float          # max over runs and m of |V_m - V_{m-1}|
    max_start_gap: float           # max over start states of |V_0 - n_tilde mu(w)/mu(G)|
    stationary_ratio: float        # mu(w) / mu(G)
    B: float | None

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def restriction_chain_matrix(model: ContextTreeModel, good: GoodSet):
    """Restriction-chain transition matrix over full states.

    States are strings in ``A^D`` (``D = max(kappa, k)``) whose last ``k``
    symbols are good.  Returns ``(Q, states)`` with ``states`` the indices in
    ``A^D``.
    """
    A = model.alphabet
    D = max(model.depth, good.k)
    full = reparameterize_complete(model, D)
    M = A ** D
    P = np.zeros((M, M))
    rows = np.repeat(np.arange(M), A)
    cols = (rows * A + np.tile(np.arange(A), M)) % M
    np.add.at(P, (rows, cols), full.q.ravel())
    mask = good.mask[np.arange(M) % (A ** good.k)]
    return restriction_matrix(P, mask), np.flatnonzero(mask)


def _stationary_of(Q: np.ndarray) -> np.ndarray:
    from .tree_model import _gth
    return _gth(Q)


def martingale_experiment(model, good: GoodSet, w, n_tilde: int, runs: int, seed: int,
                          B: float | None = None) -> MartingaleReport:
    """Doob martingale ``V_m = E[N_w | Z_0..Z_m]`` along simulated Z-paths.

    ``N_w`` counts the Z-indices ``1..n_tilde`` whose depth-k context is
    ``w``.  The conditional expectations are computed exactly from the
    restriction-chain matrix (``f(s, r) = sum_{i<=r} (Q^i 1_w)(s)``), so the
    only randomness is in which paths are visited.  ``Z_0`` is drawn from
    the restriction chain's stationary law.
    """
    if isinstance(model, ChannelModel):
        model = output_process(model)
    A = model.alphabet
    w_idx = encode(parse_context(w), A) if isinstance(w, str) else int(w)
    Q, states = restriction_chain_matrix(model, good)
    S = len(states)
    ind = (states % (A ** good.k) == w_idx).astype(float)
    # f[r] = sum_{i=1}^r Q^i ind
    f = np.zeros((n_tilde + 1, S))
    for r in range(1, n_tilde + 1):
        f[r] = Q @ (ind + f[r - 1])
    pi = _stationary_of(Q)
    ratio = float(pi @ ind)
    start_gap = float(np.max(np.abs(f[n_tilde] - n_tilde * ratio)))
    rng = streams(seed, 1)[0]
    cdf = np.cumsum(Q, axis=1)
    cdf[:, -1] = np.inf
    pi_cdf = np.cumsum(pi)
    worst = 0.0
    for _ in range(runs):
        s = min(int(np.searchsorted(pi_cdf, rng.random(), side="right")), S - 1)
        v_prev = f[n_tilde, s]
        seen = 0.0
        u = rng.random(n_tilde)
        for m in range(1, n_tilde + 1):
            s = int(np.searchsorted(cdf[s], u[m - 1], side="right"))
            seen += ind[s]
            v = seen + f[n_tilde - m, s]
            worst = max(worst, abs(v - v_prev))
            v_prev = v
    return MartingaleReport(format_context(decode(w_idx, A, good.k)), n_tilde, runs, worst,
                            start_gap, ratio, B)
