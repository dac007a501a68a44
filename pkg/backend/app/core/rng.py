"""
Deterministic random streams.

Every stream is a Philox (counter-based) generator keyed by the run seed plus a
spawn key, so a stream never depends on the order in which other streams were
drawn. There is no global generator.
"""
import numpy as np

# Spawn-key namespaces
SPLIT_STREAM = 0
FOLD_STREAM = 1
PLOT_STREAM = 2
YIELD_STREAM = 3


def stream(seed: int, *key: int) -> np.random.Generator:
    sequence = np.random.SeedSequence(entropy=seed & (2**64 - 1), spawn_key=key)
    return np.random.Generator(np.random.Philox(sequence))


def permutation(n: int, seed: int, *key: int) -> np.ndarray:
    return stream(seed, *key).permutation(n)
