"""Built-in models: the worked examples plus random generators.

Each example records where its parameters come from in ``PROVENANCE``.
Output processes are turned into channels with an input-independent
``theta`` and a uniform input law unless stated otherwise.
"""
from __future__ import annotations

import numpy as np

from .channel import ChannelModel, channel_from_process
from .decay import DecayProfile
from .errors import ConfigError
from .tree_model import ContextTreeModel, complete_tree, validate_tree

PROVENANCE = {
    "example1": "binary tree {11, 01, 0} with q_11(1)=1/4, q_01(1)=1/3, q_0(1)=3/4",
    "example2": "complete depth-k tree: q_{0^k}(1)=2 eps, q_{10^(k-1)}(1)=1-eps, others 1/2",
    "example3a": "depth-1 chain with q_1(1)=1-eps, q_0(1)=eps",
    "example3b": "depth-1 chain with q_1(1)=1-eps, q_0(1)=2 eps",
    "example4": "same process as example1",
    "example5": "complete depth-2 tree: q_11(1)=eps, q_01(1)=1/2, q_10(1)=1-eps, q_00(1)=eps",
    "dependency-example": "channel on {0, 1}: theta_1(1|a)=1-eps, theta_0(1|a)=eps for every a",
    "periodic-example": "complete depth-2 tree: q_11(1)=1/2, q_01(1)=eps, q_10(1)=1-eps, q_00(1)=1/2",
}


def _binary(q_one: dict) -> ContextTreeModel:
    """Binary model from ``{leaf: P(next = 1)}``."""
    return ContextTreeModel.from_dict(2, {s: [1.0 - p, p] for s, p in q_one.items()})


def example1() -> ContextTreeModel:
    return _binary({"11": 1 / 4, "01": 1 / 3, "0": 3 / 4})


def example4() -> ContextTreeModel:
    return example1()


def example2(k: int, eps: float) -> ContextTreeModel:
    if k < 1:
        raise ConfigError("example2 needs k >= 1")
    tree = complete_tree(2, k)
    q = np.full((2 ** k, 2), 0.5)
    zeros = (0,) * k
    ten = (1,) + (0,) * (k - 1)
    q[tree.index[zeros]] = [1 - 2 * eps, 2 * eps]
    q[tree.index[ten]] = [eps, 1 - eps]
    return ContextTreeModel(tree, q)


def example2_stationary_zero(k: int) -> float:
    """``mu(0^k) = 1 / (2^(k+1) - 1)``."""
    return 1.0 / (2 ** (k + 1) - 1)


def example3a(eps: float) -> ContextTreeModel:
    return _binary({"1": 1 - eps, "0": eps})


def example3b(eps: float) -> ContextTreeModel:
    return _binary({"1": 1 - eps, "0": 2 * eps})


def example5(eps: float) -> ContextTreeModel:
    return _binary({"11": eps, "01": 0.5, "10": 1 - eps, "00": eps})


def example5_stationary(eps: float) -> dict:
    """``mu(11) = 1/(7-6 eps)`` and ``mu(01) = mu(10) = mu(00) = (2-2 eps)/(7-6 eps)``."""
    z = 7 - 6 * eps
    return {"11": 1 / z, "01": (2 - 2 * eps) / z, "10": (2 - 2 * eps) / z, "00": (2 - 2 * eps) / z}


def example5_decay(eps: float) -> DecayProfile:
    """Tightest table profile for example 5 as a channel: ``d(1)`` is the
    worst sibling ratio gap, and nothing deeper matters."""
    if not 0 < eps < 1:
        raise ConfigError("example5_decay needs 0 < eps < 1")
    gaps = []
    for a, b in ((eps, 0.5), (1 - eps, eps)):   # siblings of u=1: (11, 01); of u=0: (10, 00)
        for x, y in ((a, b), (1 - a, 1 - b)):
            gaps += [abs(x / y - 1), abs(y / x - 1)]
    return DecayProfile.table([max(gaps)], tail="zero")


def dependency_example(eps: float) -> ChannelModel:
    tree = validate_tree(["0", "1"], 2)
    theta = np.empty((2, 2, 2))
    theta[tree.index[(1,)]] = [[eps, 1 - eps]] * 2
    theta[tree.index[(0,)]] = [[1 - eps, eps]] * 2
    return ChannelModel(tree, theta, np.array([0.5, 0.5]))


def periodic_example(eps: float) -> ContextTreeModel:
    return _binary({"11": 0.5, "01": eps, "10": 1 - eps, "00": 0.5})


def noiseless_channel(alphabet: int = 2, depth: int = 1) -> ChannelModel:
    tree = complete_tree(alphabet, depth)
    theta = np.broadcast_to(np.eye(alphabet), (len(tree), alphabet, alphabet)).copy()
    return ChannelModel(tree, theta, np.full(alphabet, 1.0 / alphabet))


def as_channel(model: ContextTreeModel, input_law=None) -> ChannelModel:
    return channel_from_process(model, input_law)


# -- random generators ------------------------------------------------------

def random_tree(rng: np.random.Generator, alphabet: int, max_depth: int, split: float = 0.6):
    """Random full tree: each node at depth < max_depth splits with prob ``split``."""
    leaves = []

    def grow(ctx):
        if len(ctx) < max_depth and (not ctx or rng.random() < split):
            for a in range(alphabet):
                grow((a,) + ctx)
        else:
            leaves.append(ctx)

    grow(())
    return validate_tree(leaves, alphabet)


def random_model(rng: np.random.Generator, alphabet: int = 2, max_depth: int = 3,
                 complete: bool = False, concentration: float = 1.0) -> ContextTreeModel:
    tree = complete_tree(alphabet, max_depth) if complete else random_tree(rng, alphabet, max_depth)
    q = rng.dirichlet(np.full(alphabet, concentration), size=len(tree))
    q = np.clip(q, 1e-6, None)
    return ContextTreeModel(tree, q / q.sum(axis=1, keepdims=True))


def random_channel(rng: np.random.Generator, alphabet: int = 2, max_depth: int = 3,
                   complete: bool = False, concentration: float = 1.0) -> ChannelModel:
    tree = complete_tree(alphabet, max_depth) if complete else random_tree(rng, alphabet, max_depth)
    theta = rng.dirichlet(np.full(alphabet, concentration), size=(len(tree), alphabet))
    theta = np.clip(theta, 1e-6, None)
    p = rng.dirichlet(np.full(alphabet, 2.0))
    p = np.clip(p, 0.05, None)
    return ChannelModel(tree, theta / theta.sum(axis=2, keepdims=True), p / p.sum())


def random_md_channel(rng: np.random.Generator, gamma: float, depth: int, alphabet: int = 2,
                      base=None, input_law=None) -> ChannelModel:
    """A channel on the complete tree ``A^depth`` whose parameters satisfy
    ``|theta_cu / theta_c'u - 1| <= gamma^|u|``.

    ``theta_s(b|a)`` is a base law reweighted by one factor per lag ``m``
    (1 = most recent) with ``|log factor| <= sigma_m``, where
    ``sigma_m = lam gamma^(m-1)`` and ``lam = (1-gamma) / (4 (1+gamma))``.
    Swapping the symbols at lags ``> j`` moves each unnormalized entry by at
    most ``exp(2 sum_{m>j} sigma_m)`` and the normalizer likewise, so every
    ratio at ``|u| = j`` stays within ``exp(4 lam gamma^j / (1-gamma))
    <= 1 + gamma^j``.  Stationary averaging preserves the bound for
    internal nodes.
    """
    if not 0 < gamma < 1:
        raise ConfigError("gamma must lie in (0, 1)")
    A = alphabet
    base = (np.asarray(base, dtype=float) if base is not None
            else rng.dirichlet(np.full(A, 2.0), size=A))
    lam = (1 - gamma) / (4 * (1 + gamma))
    tree = complete_tree(A, depth)
    # one random sign pattern per (lag, symbol at that lag, input, output)
    g = rng.uniform(-1.0, 1.0, size=(depth, A, A, A))
    theta = np.empty((len(tree), A, A))
    for i, s in enumerate(tree.leaves):
        logw = np.log(base).copy()
        for m in range(1, depth + 1):
            sym = s[len(s) - m]
            logw += lam * gamma ** (m - 1) * g[m - 1, sym]
        w = np.exp(logw)
        theta[i] = w / w.sum(axis=1, keepdims=True)
    p = np.full(A, 1.0 / A) if input_law is None else np.asarray(input_law, dtype=float)
    return ChannelModel(tree, theta, p)


def md_fixture(seed: int = 2024) -> ChannelModel:
    """The gamma = 0.3, depth-4 binary member used for the soundness sweep.

    The base law puts most output mass on 1 so that some depth-4 contexts
    collect enough counts at ``n = 10^5`` to be good.
    """
    rng = np.random.default_rng(seed)
    base = np.array([[0.2, 0.8], [0.06, 0.94]])
    return random_md_channel(rng, 0.3, 4, 2, base=base)


def registry() -> dict:
    """Fixture name -> (builder taking keyword parameters, default parameters)."""
    return {
        "example1": (lambda: as_channel(example1()), {}),
        "example2": (lambda k=3, eps=0.1: as_channel(example2(k, eps)), {"k": 3, "eps": 0.1}),
        "example3a": (lambda eps=0.1: as_channel(example3a(eps)), {"eps": 0.1}),
        "example3a-slow": (lambda eps=1e-12: as_channel(example3a(eps)), {"eps": 1e-12}),
        "example3b": (lambda eps=0.1: as_channel(example3b(eps)), {"eps": 0.1}),
        "example4": (lambda: as_channel(example4()), {}),
        "example5": (lambda eps=0.2: as_channel(example5(eps)), {"eps": 0.2}),
        "dependency-example": (lambda eps=0.1: dependency_example(eps), {"eps": 0.1}),
        "periodic-example": (lambda eps=0.1: as_channel(periodic_example(eps)), {"eps": 0.1}),
        "md-gamma0.3": (lambda seed=2024: md_fixture(seed), {"seed": 2024}),
        "noiseless": (lambda: noiseless_channel(), {}),
    }


def fixture_names() -> list:
    return sorted(registry())


def load_fixture(name: str, **params) -> ChannelModel:
    reg = registry()
    if name not in reg:
        raise ConfigError(f"unknown fixture {name!r}; known: {', '.join(sorted(reg))}")
    build, defaults = reg[name]
    unknown = set(params) - set(defaults)
    if unknown:
        raise ConfigError(f"fixture {name!r} takes no parameters {sorted(unknown)}")
    return build(**{**defaults, **params})


def fixture_provenance(name: str) -> str:
    key = {"example3a-slow": "example3a", "md-gamma0.3": None, "noiseless": None}.get(name, name)
    if key is None:
        return {"md-gamma0.3": "random dependency-decay channel, gamma=0.3, depth 4 (generated)",
                "noiseless": "identity channel, uniform input"}[name]
    return PROVENANCE[key]


def tightest_decay(ch: ChannelModel) -> DecayProfile:
    """Table profile with ``d(j)`` the worst sibling ratio gap at ``|u| = j``."""
    from .channel import sibling_gaps
    return DecayProfile.table(sibling_gaps(ch), tail="zero")


def default_decay(name: str, ch: ChannelModel | None = None, **params) -> DecayProfile:
    """A decay profile under which the fixture is a member."""
    if name == "md-gamma0.3":
        return DecayProfile.exponential(0.3)
    return tightest_decay(ch if ch is not None else load_fixture(name, **params))
