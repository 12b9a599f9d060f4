"""Named random substreams derived from one root seed.

Every source of randomness in an experiment (data order, parameter init,
dropout masks, label noise, complementary-label draws, fold selection)
draws from its own generator, so changing one knob never perturbs the
others.
"""

import numpy as np

_STREAMS = {
    "data": 0,
    "init": 1,
    "dropout": 2,
    "noise": 3,
    "routing": 4,
    "folds": 5,
}


def substream(root_seed: int, name: str) -> np.random.Generator:
    """An independent, reproducible generator for one named purpose."""
    return np.random.default_rng(np.random.SeedSequence((root_seed, _STREAMS[name])))
