"""Naive estimation, good states and the certificates attached to them.

All logarithms are base 2 unless written ``ln``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import reduce

import numpy as np
from scipy.sparse import csgraph
import scipy.sparse as sp

from .decay import DecayProfile, big_delta, coalescence_horizon, delta
from .errors import (
    BadDepth,
    BadZeta,
    ConfigError,
    DeltaTooLarge,
    EmptyGoodSet,
    EtaZero,
    NotAperiodic,
    NumericError,
)
from .simulator import SampleCounts
from .tree_model import decode, format_context


# -- naive estimates --------------------------------------------------------

@dataclass(frozen=True, eq=False)
class NaiveEstimates:
    """``theta[w, a, b] = N_w(b, a) / N_w(a)``; rows with ``N_w(a) = 0`` are NaN
    and ``defined[w, a]`` is False there."""
    k: int
    alphabet: int
    theta: np.ndarray
    defined: np.ndarray

    def output_law(self, input_law) -> np.ndarray:
        """``q_hat_w(b) = sum_a p_a theta_hat_w(b|a)`` (NaN where any row is undefined)."""
        return np.einsum("a,wab->wb", np.asarray(input_law, dtype=float), self.theta)


def naive_estimates(counts: SampleCounts) -> NaiveEstimates:
    N = counts.N.astype(float)
    Na = N.sum(axis=2)
    defined = Na > 0
    with np.errstate(invalid="ignore", divide="ignore"):
        theta = np.where(defined[:, :, None], N / np.where(defined, Na, 1.0)[:, :, None], np.nan)
    return NaiveEstimates(counts.k, counts.alphabet, theta, defined)


# -- good states ------------------------------------------------------------

@dataclass(frozen=True)
class GoodSet:
    k: int
    alphabet: int
    states: tuple                  # sorted context indices in A^k
    threshold: float
    rule: str                      # "general" or "exponential"
    params: dict = field(default_factory=dict)

    @property
    def mask(self) -> np.ndarray:
        m = np.zeros(self.alphabet ** self.k, dtype=bool)
        m[list(self.states)] = True
        return m

    @property
    def names(self) -> list:
        return [format_context(decode(w, self.alphabet, self.k)) for w in self.states]

    def successors(self, w: int) -> tuple:
        """``G_w``: symbols ``b`` whose shifted context ``last_k(w b)`` is good."""
        A, M = self.alphabet, self.alphabet ** self.k
        mask = self.mask
        return tuple(b for b in range(A) if mask[(w * A + b) % M])

    def __len__(self):
        return len(self.states)


def good_set_from(states, k: int, alphabet: int, threshold: float = float("nan"),
                  rule: str = "given") -> GoodSet:
    """A good set named explicitly (strings or indices), e.g. for fixtures."""
    idx = []
    for s in states:
        if isinstance(s, str):
            from .tree_model import encode, parse_context
            ctx = parse_context(s)
            if len(ctx) != k:
                raise BadDepth(f"state {s!r} is not of length {k}")
            idx.append(encode(ctx, alphabet))
        else:
            idx.append(int(s))
    return GoodSet(k, alphabet, tuple(sorted(set(idx))), threshold, rule)


def xlog_inv(x: float) -> float:
    """``x log2(1/x)`` with the limit 0 at 0."""
    return 0.0 if x <= 0 else x * math.log2(1.0 / x)


def good_threshold(n: int, k: int, alphabet: int, d: DecayProfile) -> float:
    """``max(n delta_k log(1/delta_k), |A|^(k+1) log^2 n)``."""
    if k < 1:
        raise BadDepth("good states need depth k >= 1")
    dk = delta(d, k)
    return max(n * xlog_inv(dk) if dk < 1 else math.inf, alphabet ** (k + 1) * math.log2(n) ** 2)


def good_states(counts: SampleCounts, d: DecayProfile) -> GoodSet:
    thr = good_threshold(counts.n, counts.k, counts.alphabet, d)
    ok = np.all(counts.N_wa >= thr, axis=1)
    return GoodSet(counts.k, counts.alphabet, tuple(int(w) for w in np.flatnonzero(ok)),
                   thr, "general")


def exponential_depth(n: int, alphabet: int, gamma: float) -> int:
    """``floor(log n / (log |A| - log gamma))``."""
    if gamma == 0.0:
        return 0
    return int(math.floor(math.log2(n) / (math.log2(alphabet) - math.log2(gamma))))


def min_zeta(alphabet: int, gamma: float) -> float:
    if gamma == 0.0:
        return 1.0
    lg = math.log2(gamma)
    return -lg / (math.log2(alphabet) - lg)


def good_states_exponential(counts: SampleCounts, gamma: float, zeta: float) -> GoodSet:
    """Good states for ``d(i) = gamma^i``: ``N_w(a) >= n^(zeta + log|A| / (log|A| - log gamma))``."""
    A, n = counts.alphabet, counts.n
    if not 0.0 <= gamma < 1.0:
        raise ConfigError("gamma must lie in [0, 1)")
    zmin = min_zeta(A, gamma)
    if zeta < zmin - 1e-15 or zeta < 0:
        raise BadZeta(f"zeta = {zeta} is below the minimum {zmin:.6g}")
    kn = exponential_depth(n, A, gamma)
    if counts.k != kn:
        raise BadDepth(f"counts have depth {counts.k}; this rule needs k_n = {kn}")
    expo = zeta if gamma == 0.0 else zeta + math.log2(A) / (math.log2(A) - math.log2(gamma))
    thr = float(n) ** expo
    ok = np.all(counts.N_wa >= thr, axis=1)
    return GoodSet(counts.k, A, tuple(int(w) for w in np.flatnonzero(ok)), thr, "exponential",
                   {"gamma": gamma, "zeta": zeta, "exponent": expo})


def default_depth(n: int, alphabet: int) -> int:
    """Largest ``k >= 1`` with ``|A|^(k+1) log^2 n <= n / 4`` (1 if none)."""
    if n < 2:
        return 1
    L2 = math.log2(n) ** 2
    k = 1
    while alphabet ** (k + 2) * L2 <= n / 4:
        k += 1
    return k


# -- L1 certificates --------------------------------------------------------

@dataclass(frozen=True, eq=False)
class L1Certificate:
    bound: float
    confidence: float
    log2_failure: float            # log2 of the failure probability
    per_state: np.ndarray | None = None   # [w, a]; inf where N_w(a) = 0


def l1_certificate(n: int, k: int, d: DecayProfile, alphabet: int = 2,
                   counts: SampleCounts | None = None) -> L1Certificate:
    """``2 sqrt(ln2 / log n + ln2 / log(1/delta_k))`` for every good ``(w, a)``.

    The per-state refinement is ``2 sqrt(ln2 (|A|^(k+1) log n + n delta_k) / N_w(a))``;
    it is the Pinsker step applied to the divergence bound
    ``D <= 2(|A|^(k+1) log n + n delta_k) / N_w(a)``.
    """
    if n < 2:
        raise ConfigError("the certificate needs n >= 2")
    dk = delta(d, k) if k >= 1 else math.inf
    if dk >= 1:
        raise DeltaTooLarge(f"delta_{k} = {dk} >= 1; the certificate is undefined")
    ln2 = math.log(2)
    logn = math.log2(n)
    second = 0.0 if dk == 0 else ln2 / math.log2(1.0 / dk)
    bound = 2.0 * math.sqrt(ln2 / logn + second)
    log2_fail = -(alphabet ** (k + 1)) * logn
    per_state = None
    if counts is not None:
        if counts.k != k:
            raise BadDepth(f"counts have depth {counts.k}, certificate depth {k}")
        Na = counts.N_wa.astype(float)
        with np.errstate(divide="ignore"):
            per_state = 2.0 * np.sqrt(ln2 * (alphabet ** (k + 1) * logn + n * dk) / Na)
    return L1Certificate(bound, -math.expm1(log2_fail * ln2), log2_fail, per_state)


def l1_certificate_exponential(n: int, gamma: float, zeta: float, alphabet: int = 2) -> L1Certificate:
    """``2 sqrt(ln2 ((1-gamma)|A| log n + 1) / ((1-gamma) n^zeta))``."""
    if zeta < min_zeta(alphabet, gamma) - 1e-15:
        raise BadZeta(f"zeta = {zeta} is below the minimum {min_zeta(alphabet, gamma):.6g}")
    kn = exponential_depth(n, alphabet, gamma)
    logn = math.log2(n)
    bound = 2.0 * math.sqrt(math.log(2) * ((1 - gamma) * alphabet * logn + 1)
                            / ((1 - gamma) * float(n) ** zeta))
    log2_fail = -(alphabet ** (kn + 1)) * logn
    return L1Certificate(bound, -math.expm1(log2_fail * math.log(2)), log2_fail)


# -- eta and restriction structure -----------------------------------------

def eta(q: np.ndarray, good: GoodSet) -> float:
    """``min_{u, v good} sum_{b in G_u & G_v} min(q_u(b), q_v(b))``.

    ``q[w]`` is the output law at context ``w`` (exact aggregated or
    estimated); only rows of good states are read.
    """
    if not len(good):
        raise EmptyGoodSet("eta needs a nonempty good set")
    q = np.asarray(q, dtype=float)
    G = list(good.states)
    succ = np.zeros((len(G), good.alphabet), dtype=bool)
    for i, w in enumerate(G):
        succ[i, list(good.successors(w))] = True
    Q = q[G]
    overlap = np.minimum(Q[:, None, :], Q[None, :, :])
    both = succ[:, None, :] & succ[None, :, :]
    return float(np.min(np.where(both, overlap, 0.0).sum(axis=2)))


def restriction_graph(good: GoodSet) -> dict:
    """Edges ``w' -> w`` between good states joined by a de Bruijn path whose
    intermediate vertices are all bad."""
    if not len(good):
        raise EmptyGoodSet("restriction graph needs a nonempty good set")
    A, M = good.alphabet, good.alphabet ** good.k
    mask = good.mask
    edges = {}
    for w0 in good.states:
        hit, seen, frontier = set(), set(), [w0]
        while frontier:
            nxt = []
            for s in frontier:
                for b in range(A):
                    t = (s * A + b) % M
                    if mask[t]:
                        hit.add(t)
                    elif t not in seen:
                        seen.add(t)
                        nxt.append(t)
            frontier = nxt
        edges[w0] = tuple(sorted(hit))
    return edges


def restriction_period(good: GoodSet) -> int:
    """Period of the restriction chain (gcd of cycle lengths of its support)."""
    edges = restriction_graph(good)
    root = good.states[0]
    level = {root: 0}
    order = [root]
    for u in order:
        for v in edges[u]:
            if v not in level:
                level[v] = level[u] + 1
                order.append(v)
    if len(level) != len(good):
        raise NumericError("restriction graph is not strongly connected")
    g = 0
    for u, vs in edges.items():
        for v in vs:
            g = math.gcd(g, level[u] + 1 - level[v])
    return abs(g)


def restriction_aperiodic(good: GoodSet) -> bool:
    return restriction_period(good) == 1


def restriction_matrix(P: np.ndarray, good_mask: np.ndarray) -> np.ndarray:
    """Transition matrix of ``P`` watched only on ``good_mask``:
    ``P_GG + P_GB (I - P_BB)^-1 P_BG``."""
    P = np.asarray(P, dtype=float)
    g = np.flatnonzero(good_mask)
    b = np.flatnonzero(~np.asarray(good_mask, dtype=bool))
    Q = P[np.ix_(g, g)].copy()
    if len(b):
        IB = np.eye(len(b)) - P[np.ix_(b, b)]
        try:
            Q += P[np.ix_(g, b)] @ np.linalg.solve(IB, P[np.ix_(b, g)])
        except np.linalg.LinAlgError as exc:
            raise NumericError("bad states contain a closed class; excursions never end") from exc
    return Q


def matrix_period(Q: np.ndarray, tol: float = 0.0) -> int:
    """Period of an irreducible nonnegative matrix from its support graph."""
    S = sp.csr_matrix(np.asarray(Q) > tol)
    ncomp, _ = csgraph.connected_components(S, directed=True, connection="strong")
    if ncomp != 1:
        raise NumericError("matrix support is not irreducible")
    dist = csgraph.shortest_path(S, directed=True, unweighted=True, indices=0).astype(np.int64)
    coo = S.tocoo()
    return abs(reduce(math.gcd, (int(dist[i] + 1 - dist[j]) for i, j in zip(coo.row, coo.col)), 0))


# -- B constant and stationary-count concentration ------------------------

def b_constant(k: int, ell: int, eta_value: float, Delta_k: float) -> float:
    """``1 + 4 max(k, ell) / (eta^k (1 - Delta_k))`` with the two-case rule
    (``ell`` when ``k <= ell``, else ``k``)."""
    if eta_value <= 0:
        raise EtaZero("eta is zero; the coupling bound is vacuous")
    if eta_value > 1 + 1e-12:
        raise ConfigError(f"eta must lie in (0, 1], got {eta_value}")
    if Delta_k >= 1:
        raise DeltaTooLarge(f"Delta_k = {Delta_k} >= 1")
    top = ell if k <= ell else k
    return 1.0 + 4.0 * top / (eta_value ** k * (1.0 - Delta_k))


def concentration_bound(n_tilde: int, B: float, t: float) -> float:
    """``min(1, 2 exp(-(t - B)^2 / (2 n_tilde B^2)))`` for ``t > B``, else 1."""
    if t <= B or n_tilde <= 0:
        return 1.0
    return min(1.0, 2.0 * math.exp(-((t - B) ** 2) / (2.0 * n_tilde * B * B)))


def concentration_radius(n_tilde: int, B: float, c: float) -> float:
    """The ``t`` at which the bound equals ``c``: ``B + B sqrt(2 n_tilde ln(2/c))``."""
    if not 0 < c < 2:
        raise ConfigError("failure probability must lie in (0, 2)")
    return B + B * math.sqrt(2.0 * n_tilde * math.log(2.0 / c))


@dataclass(frozen=True)
class StationaryCertificate:
    n_tilde: int
    B: float
    t: float
    bound: float                   # P(|N_w - n_tilde ratio_w| >= t) <= bound
    ratios: dict                   # state -> N_w / n_tilde
    radius: float                  # t / n_tilde, the deviation on the ratio scale


def stationary_ratio_estimates(counts: SampleCounts, good: GoodSet) -> dict:
    if not len(good):
        raise EmptyGoodSet("no good states")
    nt = counts.n_tilde(good)
    if nt <= 0:
        raise EmptyGoodSet("good states have zero total count")
    Nw = counts.N_w
    return {counts.context_name(w): float(Nw[w]) / nt for w in good.states}


def stationary_certificate(counts: SampleCounts, good: GoodSet, B: float,
                           t: float | None = None, failure: float = 0.05) -> StationaryCertificate:
    """Deviation certificate for ``N_w`` around ``n_tilde mu(w) / mu(G)``.

    Give ``t`` for the bound at ``t``; otherwise ``t`` is the radius at the
    requested failure probability.
    """
    if not len(good):
        raise EmptyGoodSet("no good states")
    if not restriction_aperiodic(good):
        raise NotAperiodic(f"restriction to the good set has period {restriction_period(good)}")
    nt = counts.n_tilde(good)
    if t is None:
        t = concentration_radius(nt, B, failure)
    elif t <= 0:
        raise ConfigError("t must be positive")
    return StationaryCertificate(nt, B, t, concentration_bound(nt, B, t),
                                 stationary_ratio_estimates(counts, good), t / nt if nt else math.inf)


# -- full report ------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class EstimationReport:
    k: int
    n: int
    alpha: float
    estimates: NaiveEstimates
    good: GoodSet
    l1: L1Certificate
    eta: float | None
    eta_conservative: float | None
    ell: int
    Delta_k: float
    B: float | None
    B_conservative: float | None
    aperiodic: bool | None
    period: int | None
    n_tilde: int
    stationary: StationaryCertificate | None
    ratios: dict | None = None       # N_w / n_tilde on the good set, certified or not
    notes: tuple = ()

    def to_dict(self) -> dict:
        A, k = self.good.alphabet, self.k
        est = {}
        for w in range(A ** k):
            name = format_context(decode(w, A, k))
            est[name] = [None if not self.estimates.defined[w, a]
                         else [float(v) for v in self.estimates.theta[w, a]] for a in range(A)]
        out = {
            "k_n": k, "n": self.n, "alpha_n": self.alpha,
            "estimates": est,
            "good_states": self.good.names,
            "threshold": self.good.threshold,
            "l1_bound": self.l1.bound,
            "confidence": self.l1.confidence,
            "log2_failure": self.l1.log2_failure,
            "eta": self.eta, "eta_conservative": self.eta_conservative,
            "ell_n": self.ell, "Delta_k": self.Delta_k,
            "B": self.B, "B_conservative": self.B_conservative,
            "aperiodic": self.aperiodic, "period": self.period,
            "n_tilde": self.n_tilde,
            "ratios": self.ratios,
            "ratios_certified": self.stationary is not None,
            "uncertified_states": [n for n in (format_context(decode(w, A, k)) for w in range(A ** k))
                                   if n not in set(self.good.names)],
            "notes": list(self.notes),
        }
        if self.stationary is not None:
            out["stationary"] = {
                "t": self.stationary.t, "bound": self.stationary.bound,
                "radius": self.stationary.radius, "ratios": self.stationary.ratios,
            }
        return out


def estimate(counts: SampleCounts, d: DecayProfile, input_law, failure: float = 0.05) -> EstimationReport:
    """Run the whole certification chain on one set of counts.

    Certificates that do not apply (empty good set, periodic restriction,
    zero eta) are recorded as ``None`` with a note instead of raising.
    """
    n, k, A = counts.n, counts.k, counts.alphabet
    notes = []
    est = naive_estimates(counts)
    good = good_states(counts, d)
    l1 = l1_certificate(n, k, d, A, counts)
    ell = coalescence_horizon(d, n)
    Dk = big_delta(d, k)
    eta_raw = eta_cons = B = B_cons = None
    aperiodic = period = None
    stat = ratios = None
    nt = counts.n_tilde(good)
    if not len(good):
        notes.append("no good states: parameter and stationary certificates are vacuous")
    else:
        q_hat = est.output_law(input_law)
        eta_raw = eta(np.nan_to_num(q_hat), good)
        eta_cons = max(0.0, eta_raw - 2.0 * l1.bound)
        period = restriction_period(good)
        aperiodic = period == 1
        try:
            B = b_constant(k, ell, eta_raw, Dk)
        except (EtaZero, DeltaTooLarge) as exc:
            notes.append(f"B unavailable: {exc}")
        try:
            B_cons = b_constant(k, ell, eta_cons, Dk)
        except (EtaZero, DeltaTooLarge) as exc:
            notes.append(f"conservative B unavailable: {exc}")
        if not aperiodic:
            notes.append(f"restriction to the good set has period {period}: "
                         "no stationary certificate")
        elif B is not None:
            stat = stationary_certificate(counts, good, B, failure=failure)
        if nt > 0:
            ratios = stationary_ratio_estimates(counts, good)
        if stat is None:
            notes.append("stationary ratios are reported without a concentration certificate")
        if len(good) < A ** k:
            notes.append("states outside the good set are uncertified; stationary "
                         "outputs are ratios within the good set only")
    alpha = k / math.log2(n) if n > 1 else float("nan")
    return EstimationReport(k, n, alpha, est, good, l1, eta_raw, eta_cons, ell, Dk, B, B_cons,
                            aperiodic, period, nt, stat, ratios, tuple(notes))
