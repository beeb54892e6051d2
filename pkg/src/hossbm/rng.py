"""Counter-based random streams.

Every stochastic component draws from a Philox generator keyed by
(seed, stream_id) with the counter set from a logical time index.  A
stream's output therefore depends only on (seed, stream_id, time), never
on how many other streams exist or in which order they are consumed --
which is what makes chain counts, per-sample dataset generation, and
checkpoint resume bit-exact.

Stream-id layout: ids below 2**32 are free for callers (Gibbs chains use
their chain index, dataset generation uses the sample index); ids at or
above 2**32 are reserved for the named internal streams below.
"""

import numpy as np

# reserved internal stream ids
STREAM_INIT = 1 << 32        # parameter initialization
STREAM_SHUFFLE = (1 << 32) + 1   # minibatch shuffling (counter = epoch)
STREAM_CHAIN_INIT = (1 << 32) + 2  # negative-chain initialization


def stream(seed, stream_id, counter=0):
    """Generator for the (seed, stream_id) stream positioned at `counter`."""
    bg = np.random.Philox(key=[int(seed), int(stream_id)],
                          counter=[int(counter), 0, 0, 0])
    return np.random.Generator(bg)
