from enum import IntEnum

import numpy as np


class Stream(IntEnum):
    """Independent random streams of one simulated run."""

    INITIAL_STATE = 0
    MEASUREMENT = 1
    PROCESS = 2
    EQUILIBRIUM = 3


def stream_generator(master_seed: int, run_index: int, stream: Stream) -> np.random.Generator:
    """
    Counter-based generator keyed by (master seed, run index, stream).

    Philox streams derived this way do not depend on the order in which runs
    execute, so parallel and serial studies draw identical numbers.

    Example:
        >>> rng = stream_generator(0, 3, Stream.MEASUREMENT)
        >>> rng.standard_normal(3).shape
        (3,)
    """
    sequence = np.random.SeedSequence(int(master_seed), spawn_key=(int(run_index), int(stream)))
    return np.random.Generator(np.random.Philox(sequence))
