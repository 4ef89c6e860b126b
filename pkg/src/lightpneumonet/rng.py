"""Counter-based random streams keyed by (seed, epoch, sample index, purpose).

A stream depends only on its key, never on how many draws other streams
made, so batch composition and worker scheduling cannot change results.
"""
import numpy as np

SHUFFLE = 1
AUGMENT = 2
DROPOUT = 3
INIT = 4
GRADCHECK = 5


def stream(seed, *key):
    """A fresh Philox generator for ``(seed, *key)``; all parts are non-negative ints."""
    parts = [int(seed)] + [int(k) for k in key]
    if any(p < 0 for p in parts):
        raise ValueError(f"stream key parts must be non-negative, got {parts}")
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(parts)))


def shuffle_stream(seed, epoch):
    return stream(seed, SHUFFLE, epoch)


def augment_stream(seed, epoch, sample_index):
    return stream(seed, AUGMENT, epoch, sample_index)


def dropout_stream(seed, epoch, sample_index):
    return stream(seed, DROPOUT, epoch, sample_index)
