"""Dependency-decay profiles ``d(i)`` and their tails.

``delta(j) = sum_{i >= j} d(i)`` and ``big_delta(j) = sum_{i >= j} delta(i)``.
Polynomial tails use the Hurwitz zeta function, which is exact:

    delta_j = zeta(r, j)
    Delta_j = sum_{m >= j} (m - j + 1) m^-r = zeta(r - 1, j) - (j - 1) zeta(r, j)

Table profiles hold explicit values up to some index and a declared tail
bound beyond it; their tails are upper bounds, never truncations.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

from scipy.special import zeta

from .errors import ConfigError, NotSummable

LOG_TRUNCATION = 1e-17


@dataclass(frozen=True)
class DecayProfile:
    kind: str                      # "exponential" | "polynomial" | "table"
    gamma: float = 0.0             # exponential rate, or table tail rate
    r: float = 0.0                 # polynomial order, or table tail order
    scale: float = 1.0             # tail multiplier: d(i) <= scale * gamma^i or scale / i^r
    values: tuple = ()             # table entries d(1), ..., d(m)
    tail: str = "zero"             # table tail kind: "zero" | "exponential" | "polynomial"

    def __post_init__(self):
        if self.kind not in ("exponential", "polynomial", "table"):
            raise ConfigError(f"unknown decay kind {self.kind!r}")
        if self.kind == "exponential" and not 0.0 <= self.gamma < 1.0:
            raise NotSummable(f"exponential decay needs 0 <= gamma < 1, got {self.gamma}")
        if self.kind == "table":
            if any(v < 0 for v in self.values):
                raise ConfigError("decay table entries must be nonnegative")
            if self.tail not in ("zero", "exponential", "polynomial"):
                raise ConfigError(
                    "table profiles must declare a certified tail: zero, exponential or polynomial")
            if self.tail == "exponential" and not 0.0 <= self.gamma < 1.0:
                raise NotSummable("table tail needs 0 <= gamma < 1")

    # -- constructors -------------------------------------------------------

    @classmethod
    def exponential(cls, gamma: float) -> "DecayProfile":
        return cls("exponential", gamma=float(gamma))

    @classmethod
    def polynomial(cls, r: float) -> "DecayProfile":
        return cls("polynomial", r=float(r))

    @classmethod
    def zero(cls) -> "DecayProfile":
        return cls("exponential", gamma=0.0)

    @classmethod
    def table(cls, values, tail="zero", gamma=0.0, r=0.0, scale=1.0) -> "DecayProfile":
        return cls("table", gamma=float(gamma), r=float(r), scale=float(scale),
                   values=tuple(float(v) for v in values), tail=tail)

    @classmethod
    def from_dict(cls, spec: dict) -> "DecayProfile":
        kind = spec.get("kind")
        if kind == "zero":
            return cls.zero()
        if kind == "exponential":
            return cls.exponential(spec["gamma"])
        if kind == "polynomial":
            return cls.polynomial(spec["r"])
        if kind == "table":
            tail = spec.get("tail", {"kind": "zero"})
            if isinstance(tail, str):
                tail = {"kind": tail}
            return cls.table(spec["values"], tail=tail.get("kind"), gamma=tail.get("gamma", 0.0),
                             r=tail.get("r", 0.0), scale=tail.get("scale", 1.0))
        raise ConfigError(f"unknown decay kind {kind!r}")

    def to_dict(self) -> dict:
        if self.kind == "exponential":
            return {"kind": "exponential", "gamma": self.gamma}
        if self.kind == "polynomial":
            return {"kind": "polynomial", "r": self.r}
        tail = {"kind": self.tail, "scale": self.scale}
        if self.tail == "exponential":
            tail["gamma"] = self.gamma
        if self.tail == "polynomial":
            tail["r"] = self.r
        return {"kind": "table", "values": list(self.values), "tail": tail}

    # -- the function itself ------------------------------------------------

    def __call__(self, i: int) -> float:
        if i < 1:
            raise ValueError("d(i) is defined for i >= 1")
        if self.kind == "exponential":
            return self.gamma ** i
        if self.kind == "polynomial":
            return float(i) ** (-self.r)
        m = len(self.values)
        if i <= m:
            return self.values[i - 1]
        if self.tail == "zero":
            return 0.0
        if self.tail == "exponential":
            return self.scale * self.gamma ** i
        return self.scale * float(i) ** (-self.r)

    def delta(self, j: int) -> float:
        return delta(self, j)

    def big_delta(self, j: int) -> float:
        return big_delta(self, j)


def _poly_delta(r: float, j: int) -> float:
    if r <= 1:
        raise NotSummable(f"d(i) = 1/i^{r} is not summable")
    return float(zeta(r, j))


def _poly_big_delta(r: float, j: int) -> float:
    if r <= 2:
        raise NotSummable(f"delta_i for d(i) = 1/i^{r} is not summable (need r > 2)")
    return float(zeta(r - 1, j) - (j - 1) * zeta(r, j))


def _geo_delta(g: float, j: int) -> float:
    return g ** j / (1.0 - g)


def _geo_big_delta(g: float, j: int) -> float:
    return g ** j / (1.0 - g) ** 2


def delta(d: DecayProfile, j: int) -> float:
    """First tail ``sum_{i >= j} d(i)``."""
    if j < 1:
        raise ValueError("delta_j needs j >= 1")
    if d.kind == "exponential":
        return _geo_delta(d.gamma, j)
    if d.kind == "polynomial":
        return _poly_delta(d.r, j)
    m = len(d.values)
    head = math.fsum(d.values[j - 1:]) if j <= m else 0.0
    start = max(j, m + 1)
    if d.tail == "zero":
        tail = 0.0
    elif d.tail == "exponential":
        tail = d.scale * _geo_delta(d.gamma, start)
    else:
        tail = d.scale * _poly_delta(d.r, start)
    return head + tail


def big_delta(d: DecayProfile, j: int) -> float:
    """Second tail ``sum_{i >= j} delta(i)``."""
    if j < 1:
        raise ValueError("Delta_j needs j >= 1")
    if d.kind == "exponential":
        return _geo_big_delta(d.gamma, j)
    if d.kind == "polynomial":
        return _poly_big_delta(d.r, j)
    m = len(d.values)
    head = math.fsum(delta(d, i) for i in range(j, m + 1))
    start = max(j, m + 1)
    if d.tail == "zero":
        tail = 0.0
    elif d.tail == "exponential":
        tail = d.scale * _geo_big_delta(d.gamma, start)
    else:
        tail = d.scale * _poly_big_delta(d.r, start)
    return head + tail


def coalescence_horizon(d: DecayProfile, n: int) -> int:
    """Smallest ``l >= 1`` with ``Delta_l <= 1/n``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    target = 1.0 / n
    if d.kind == "exponential":
        if d.gamma == 0.0:
            return 1
        guess = max(1, math.ceil(math.log(n / (1.0 - d.gamma) ** 2) / math.log(1.0 / d.gamma)))
        # the closed form can be off by one under rounding; settle it exactly
        while guess > 1 and big_delta(d, guess - 1) <= target:
            guess -= 1
        while big_delta(d, guess) > target:
            guess += 1
        return guess
    if d.kind == "polynomial":
        big_delta(d, 1)   # raises NotSummable for r <= 2
        hi = horizon_closed_form(d, n)
        while big_delta(d, hi) > target:
            hi *= 2
        lo = 1
        if big_delta(d, lo) <= target:
            return lo
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if big_delta(d, mid) <= target:
                hi = mid
            else:
                lo = mid
        return hi
    j = 1
    while big_delta(d, j) > target:
        j += 1
        if j > 10**7:
            raise NotSummable("Delta_j does not fall below 1/n")
    return j


def horizon_closed_form(d: DecayProfile, n: int) -> int:
    """The closed-form horizons: ``ceil(log(n / (1-g)^2) / log(1/g))`` for
    ``g^i`` and ``ceil(2 + (n / ((r-1)(r-2)))^(1/(r-2)))`` for ``1/i^r``.

    For polynomial decay this comes from an integral comparison and is an
    upper bound on the exact horizon.
    """
    if d.kind == "exponential":
        if d.gamma == 0.0:
            return 1
        return max(1, math.ceil(math.log(n / (1.0 - d.gamma) ** 2) / math.log(1.0 / d.gamma)))
    if d.kind == "polynomial":
        r = d.r
        if r <= 2:
            raise NotSummable("polynomial horizon needs r > 2")
        return math.ceil(2 + (n / ((r - 1) * (r - 2))) ** (1.0 / (r - 2)))
    raise ConfigError("closed-form horizon exists only for exponential and polynomial profiles")


def check_delta_condition(d: DecayProfile, upto: int = 64) -> list:
    """Indices ``i <= upto`` where ``delta_i > 1/i``; warns if any."""
    bad = [i for i in range(1, upto + 1) if delta(d, i) > 1.0 / i]
    if bad:
        warnings.warn(f"delta_i > 1/i at i = {bad[:5]}{'...' if len(bad) > 5 else ''}; "
                      "the martingale-difference bound assumes delta_i <= 1/i",
                      RuntimeWarning, stacklevel=2)
    return bad


def bonferroni_terms(d: DecayProfile, j: int, terms: int = 100_000):
    """``(1 - delta_j, prod_{i>=j} (1 - d(i)), 1 / prod_{i>=j} (1 + d(i)))``.

    Products are accumulated in the log domain and stop once ``d(i)`` drops
    below 1e-17 (the remaining factors are 1 in double precision).
    """
    lo = 0.0
    hi = 0.0
    for i in range(j, j + terms):
        di = d(i)
        if di < LOG_TRUNCATION:
            break
        lo += math.log1p(-di) if di < 1 else -math.inf
        hi -= math.log1p(di)
    return 1.0 - delta(d, j), math.exp(lo), math.exp(hi)
