"""Seeded channel simulation and the count statistics of the naive estimator.

Randomness comes from numpy's Philox counter-based generator.  Each seed is
expanded with ``SeedSequence(seed).spawn(2)`` into one stream for the inputs
and one for the outputs, so a trace depends only on ``(channel, n, past,
seed)`` and the input sequence does not change when the channel does.

The semi-infinite past is instantiated by an explicit finite string; every
lookup that reaches before ``y_1`` reads from it.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .channel import ChannelModel, reparameterize_channel
from .errors import ConfigError, PastTooShort
from .tree_model import decode, encode, format_context, parse_context

SYMBOL_DTYPE = np.uint8
BATCH_MEMORY = 1 << 25   # floats per block in simulate_batch


def streams(seed: int, count: int = 2) -> list[np.random.Generator]:
    children = np.random.SeedSequence(int(seed)).spawn(count)
    return [np.random.Generator(np.random.Philox(c)) for c in children]


@dataclass(frozen=True, eq=False)
class Trace:
    x: np.ndarray
    y: np.ndarray
    past: tuple
    alphabet: int = 2
    seed: int | None = None

    def __post_init__(self):
        if len(self.x) != len(self.y):
            raise ConfigError("input and output sequences differ in length")
        for name in ("x", "y"):
            arr = np.asarray(getattr(self, name), dtype=SYMBOL_DTYPE)
            if len(arr) and int(arr.max()) >= self.alphabet:
                raise ConfigError(f"{name} has symbols outside 0..{self.alphabet - 1}")
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "past", _past_tuple(self.past))

    @property
    def n(self) -> int:
        return len(self.y)


def _past_tuple(past) -> tuple:
    return parse_context(past) if isinstance(past, str) else tuple(int(c) for c in past)


def _draw(u: np.ndarray, cdf: np.ndarray) -> np.ndarray:
    """Inverse-CDF draws; ``cdf[-1]`` is treated as exactly 1."""
    return np.minimum(np.searchsorted(cdf, u, side="right"), len(cdf) - 1)


def simulate(ch: ChannelModel, n: int, past, seed: int) -> Trace:
    """``x_j`` i.i.d. from the input law, ``y_j`` from ``theta_c(past y_1..y_{j-1})(. | x_j)``."""
    past = _past_tuple(past)
    if len(past) < ch.depth:
        raise PastTooShort(f"past has length {len(past)}, the tree needs {ch.depth}")
    if n < 0:
        raise ConfigError("n must be nonnegative")
    A, D = ch.alphabet, ch.depth
    full = reparameterize_channel(ch, D)
    rng_in, rng_out = streams(seed)
    x = _draw(rng_in.random(n), np.cumsum(ch.input)).astype(SYMBOL_DTYPE)
    u = rng_out.random(n).tolist()
    cdf = np.cumsum(full.theta, axis=2)
    cdf[..., -1] = np.inf
    table = cdf.tolist()
    M = A ** D
    state = encode(past[len(past) - D:], A) if D else 0
    y = bytearray(n)
    xs = x.tolist()
    for j in range(n):
        row = table[state][xs[j]]
        uj = u[j]
        b = 0
        while uj >= row[b]:
            b += 1
        y[j] = b
        state = (state * A + b) % M
    return Trace(x, np.frombuffer(bytes(y), dtype=SYMBOL_DTYPE).copy(), past, A, seed)


def simulate_batch(ch: ChannelModel, n: int, past, seeds) -> tuple[np.ndarray, np.ndarray]:
    """Many seeds at once, vectorized across seeds.

    Returns ``(x, y)`` of shape ``(len(seeds), n)``; row ``r`` equals
    ``simulate(ch, n, past, seeds[r])``.
    """
    past = _past_tuple(past)
    if len(past) < ch.depth:
        raise PastTooShort(f"past has length {len(past)}, the tree needs {ch.depth}")
    seeds = list(seeds)
    A, D = ch.alphabet, ch.depth
    full = reparameterize_channel(ch, D)
    cdf = np.cumsum(full.theta, axis=2)
    cdf[..., -1] = np.inf
    M = A ** D
    X = np.empty((len(seeds), n), dtype=SYMBOL_DTYPE)
    Y = np.empty((len(seeds), n), dtype=SYMBOL_DTYPE)
    block = max(1, BATCH_MEMORY // max(n, 1))
    in_cdf = np.cumsum(ch.input)
    for lo in range(0, len(seeds), block):
        chunk = seeds[lo:lo + block]
        U = np.empty((len(chunk), n))
        for r, s in enumerate(chunk):
            rng_in, rng_out = streams(s)
            X[lo + r] = _draw(rng_in.random(n), in_cdf)
            U[r] = rng_out.random(n)
        state = np.full(len(chunk), encode(past[len(past) - D:], A) if D else 0, dtype=np.int64)
        xs = X[lo:lo + len(chunk)]
        for j in range(n):
            rows = cdf[state, xs[:, j]]                     # (R, A)
            b = (U[:, j, None] >= rows).sum(axis=1)
            Y[lo:lo + len(chunk), j] = b
            state = (state * A + b) % M
    return X, Y


# -- counts -----------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class SampleCounts:
    """``N[w, a, b]`` = number of ``j`` with context ``w``, input ``a`` and output ``b``.

    Contexts ``w`` are indexed in integer order over ``A^k``.
    """
    k: int
    alphabet: int
    N: np.ndarray

    @property
    def n(self) -> int:
        return int(self.N.sum())

    @property
    def N_wa(self) -> np.ndarray:
        return self.N.sum(axis=2)

    @property
    def N_w(self) -> np.ndarray:
        return self.N.sum(axis=(1, 2))

    def n_tilde(self, good) -> int:
        states = getattr(good, "states", good)
        return int(self.N_w[list(states)].sum()) if len(states) else 0

    def context_name(self, idx: int) -> str:
        return format_context(decode(idx, self.alphabet, self.k))

    def context_index(self, w) -> int:
        w = parse_context(w) if isinstance(w, str) else tuple(w)
        if len(w) != self.k:
            raise ConfigError(f"context {format_context(w)!r} is not of length {self.k}")
        return encode(w, self.alphabet)

    def coarsen(self, k: int) -> "SampleCounts":
        """Counts at a shallower depth (drop the oldest symbols)."""
        if not 0 <= k <= self.k:
            raise ConfigError(f"cannot coarsen depth {self.k} counts to depth {k}")
        A = self.alphabet
        groups = np.arange(A ** self.k) % (A ** k)
        out = np.zeros((A ** k, A, A), dtype=self.N.dtype)
        np.add.at(out, groups, self.N)
        return SampleCounts(k, A, out)


def context_indices(y: np.ndarray, past: tuple, k: int, alphabet: int) -> np.ndarray:
    """Index of the last ``k`` symbols of ``past y_1 .. y_{j-1}`` for each ``j``."""
    if len(past) < k:
        raise PastTooShort(f"past has length {len(past)}, counting at depth {k} needs {k}")
    y = np.asarray(y, dtype=np.int64)
    n = len(y)
    seq = np.concatenate([np.asarray(past[len(past) - k:], dtype=np.int64), y]) if k else y
    idx = np.zeros(n, dtype=np.int64)
    for i in range(k):
        idx = idx * alphabet + seq[i:i + n]
    return idx


def count(trace: Trace, k: int) -> SampleCounts:
    A = trace.alphabet
    w = context_indices(trace.y, trace.past, k, A)
    flat = (w * A + trace.x.astype(np.int64)) * A + trace.y.astype(np.int64)
    N = np.bincount(flat, minlength=A ** (k + 2)).reshape(A ** k, A, A)
    return SampleCounts(k, A, N)


def count_batch(X: np.ndarray, Y: np.ndarray, past, k: int, alphabet: int) -> np.ndarray:
    """``N[r, w, a, b]`` for every row of a batch."""
    past = _past_tuple(past)
    R, n = Y.shape
    A = alphabet
    out = np.zeros((R, A ** k, A, A), dtype=np.int64)
    for r in range(R):
        w = context_indices(Y[r], past, k, A)
        flat = (w * A + X[r].astype(np.int64)) * A + Y[r].astype(np.int64)
        out[r] = np.bincount(flat, minlength=A ** (k + 2)).reshape(A ** k, A, A)
    return out


# -- CSV --------------------------------------------------------------------

def write_trace_csv(trace: Trace, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["j", "x", "y"])
        for j, (a, b) in enumerate(zip(trace.x.tolist(), trace.y.tolist()), start=1):
            w.writerow([j, a, b])


def read_trace_csv(path, past, alphabet: int = 2, seed: int | None = None) -> Trace:
    xs, ys = [], []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"j", "x", "y"} <= set(reader.fieldnames):
            raise ConfigError(f"{path}: expected columns j, x, y")
        for expected, row in enumerate(reader, start=1):
            if int(row["j"]) != expected:
                raise ConfigError(f"{path}: rows must be numbered 1..n in order")
            xs.append(int(row["x"]))
            ys.append(int(row["y"]))
    return Trace(np.array(xs, dtype=SYMBOL_DTYPE), np.array(ys, dtype=SYMBOL_DTYPE),
                 _past_tuple(past), alphabet, seed)


def write_counts_csv(counts: SampleCounts, path) -> None:
    A = counts.alphabet
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["w", "a", "b", "N"])
        for wi in range(A ** counts.k):
            name = counts.context_name(wi)
            for a in range(A):
                for b in range(A):
                    w.writerow([name, a, b, int(counts.N[wi, a, b])])


def read_counts_csv(path, alphabet: int) -> SampleCounts:
    rows = []
    with open(Path(path), newline="") as fh:
        for row in csv.DictReader(fh):
            rows.append((row["w"], int(row["a"]), int(row["b"]), int(row["N"])))
    if not rows:
        raise ConfigError(f"{path}: no counts")
    k = len(rows[0][0])
    N = np.zeros((alphabet ** k, alphabet, alphabet), dtype=np.int64)
    for w, a, b, c in rows:
        N[encode(parse_context(w), alphabet), a, b] = c
    return SampleCounts(k, alphabet, N)
