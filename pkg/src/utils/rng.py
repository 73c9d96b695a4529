import numpy as np

from .constants import Stream


def derive_seed(base_seed: int, trial_id: int, stream: Stream) -> int:
    """
    Counter-mode split of a base seed into an independent 64-bit seed.

    The same (base_seed, trial_id, stream) always yields the same value, and distinct
    triples give statistically independent streams.
    """
    sequence = np.random.SeedSequence(entropy=base_seed, spawn_key=(trial_id, int(stream)))
    return int(sequence.generate_state(1, dtype=np.uint64)[0])


def make_rng(seed: int) -> np.random.Generator:
    return np.random.default_rng(seed)
