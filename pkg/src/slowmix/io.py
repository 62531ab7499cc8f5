"""JSON loading and dumping for models, channels and decay profiles.

Model:   {"alphabet": 2, "leaves": ["11", "01", "0"], "q": {"11": [0.75, 0.25], ...}}
Channel: the model keys (``q`` optional) plus
         {"theta": {"11": {"0": [..], "1": [..]}, ...}, "input": [0.5, 0.5]}
Decay:   {"kind": "exponential", "gamma": 0.5} | {"kind": "polynomial", "r": 4}
         | {"kind": "zero"} | {"kind": "table", "values": [..], "tail": {"kind": "zero"}}
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .channel import ZERO_GUARD, ChannelModel
from .decay import DecayProfile
from .errors import ConfigError
from .tree_model import ContextTreeModel, format_context, validate_tree


def _read(source) -> dict:
    if isinstance(source, dict):
        return source
    try:
        return json.loads(Path(source).read_text())
    except FileNotFoundError:
        raise ConfigError(f"{source}: no such file") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{source}: invalid JSON ({exc})") from None


def _require(doc: dict, *keys):
    missing = [k for k in keys if k not in doc]
    if missing:
        raise ConfigError(f"missing keys: {', '.join(missing)}")


def load_model(source) -> ContextTreeModel:
    doc = _read(source)
    _require(doc, "alphabet", "leaves", "q")
    A = int(doc["alphabet"])
    tree = validate_tree(doc["leaves"], A)
    q = doc["q"]
    names = {format_context(s) for s in tree.leaves}
    if set(q) != names:
        raise ConfigError("q must have exactly one entry per leaf")
    return ContextTreeModel(tree, np.array([q[format_context(s)] for s in tree.leaves], dtype=float))


def dump_model(model: ContextTreeModel) -> dict:
    return {
        "alphabet": model.alphabet,
        "leaves": [format_context(s) for s in model.tree.leaves],
        "q": {format_context(s): model.q[i].tolist() for i, s in enumerate(model.tree.leaves)},
    }


def load_channel(source, strict: bool = True) -> ChannelModel:
    """Parse a channel; with ``strict`` every theta entry must be at least 1e-12."""
    doc = _read(source)
    _require(doc, "alphabet", "leaves", "theta", "input")
    A = int(doc["alphabet"])
    tree = validate_tree(doc["leaves"], A)
    theta = np.empty((len(tree), A, A))
    for i, s in enumerate(tree.leaves):
        name = format_context(s)
        if name not in doc["theta"]:
            raise ConfigError(f"theta has no entry for leaf {name!r}")
        rows = doc["theta"][name]
        for a in range(A):
            if str(a) not in rows:
                raise ConfigError(f"theta[{name!r}] has no row for input {a}")
            theta[i, a] = rows[str(a)]
    if strict and np.any(theta < ZERO_GUARD):
        raise ConfigError(f"theta entries below {ZERO_GUARD} are rejected (ratios would be undefined)")
    return ChannelModel(tree, theta, np.asarray(doc["input"], dtype=float))


def dump_channel(ch: ChannelModel) -> dict:
    return {
        "alphabet": ch.alphabet,
        "leaves": [format_context(s) for s in ch.tree.leaves],
        "theta": {format_context(s): {str(a): ch.theta[i, a].tolist() for a in range(ch.alphabet)}
                  for i, s in enumerate(ch.tree.leaves)},
        "input": ch.input.tolist(),
    }


def load_decay(source) -> DecayProfile:
    return DecayProfile.from_dict(_read(source))


def dump_json(doc, path=None) -> str:
    """Stable serialization (sorted keys) so equal reports are equal bytes."""
    text = json.dumps(doc, sort_keys=True, indent=2, default=_default) + "\n"
    if path is not None:
        Path(path).write_text(text)
    return text


def _default(obj):
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, tuple):
        return list(obj)
    raise TypeError(f"cannot serialize {type(obj).__name__}")
