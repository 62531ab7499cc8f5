"""Hypothesis strategies for random models and channels."""
import numpy as np
from hypothesis import strategies as st

from slowmix.fixtures import random_channel, random_model

seeds = st.integers(min_value=0, max_value=2**32 - 1)
alphabets = st.sampled_from([2, 3])


@st.composite
def models(draw, max_depth=3, alphabet=None, complete=None):
    A = draw(alphabets) if alphabet is None else alphabet
    depth = draw(st.integers(1, max_depth if A == 2 else min(max_depth, 2)))
    full = draw(st.booleans()) if complete is None else complete
    rng = np.random.default_rng(draw(seeds))
    return random_model(rng, A, depth, complete=full)


@st.composite
def channels(draw, max_depth=3, alphabet=None, complete=None):
    A = draw(alphabets) if alphabet is None else alphabet
    depth = draw(st.integers(1, max_depth if A == 2 else min(max_depth, 2)))
    full = draw(st.booleans()) if complete is None else complete
    rng = np.random.default_rng(draw(seeds))
    return random_channel(rng, A, depth, complete=full)
