"""Named, counter-based random substreams.

Every source of randomness in the package draws from a Philox generator
keyed by (root seed, stream id). Streams are independent, so e.g. adding
a new factor to the data generator never shifts the draws of the others,
and ablations stay comparable across runs.
"""

from __future__ import annotations

import numpy as np

# Registry of stream ids. Append only; renumbering breaks reproducibility.
SNC = 1
SC = 2
NC = 3
SP = 4
LABEL = 5
ASSEMBLY = 6
INIT = 7
SHUFFLE = 8
REPARAM_MAIN = 9
REPARAM_ADV = 10
EVAL_NOISE = 11


def substream(seed: int, stream: int, index: int = 0) -> np.random.Generator:
    """Generator for a named stream; `index` selects a sub-series (trial, epoch)."""
    seq = np.random.SeedSequence(entropy=int(seed) & 0xFFFFFFFFFFFFFFFF,
                                 spawn_key=(int(stream), int(index)))
    return np.random.Generator(np.random.Philox(seq))
