"""Counter-based random streams.

Each (seed, index) pair maps to its own Philox stream, so a suite sampled by a
thread pool draws exactly the same numbers as a serial run.
"""

import numpy as np


def make_rng(seed: int, index: int = 0) -> np.random.Generator:
    """Return the generator for sample `index` of a run seeded with `seed`."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, index])))
