"""Labelled, reproducible random streams.

Every stochastic operation takes an explicit ``numpy.random.Generator``.
Streams for an experiment are derived from a 64-bit master seed and a
tuple of labels, so a given (experiment, trial, role) always receives the
same stream no matter how many other streams were drawn before it.
"""

from __future__ import annotations

import hashlib

import numpy as np


def _label_words(labels) -> tuple[int, ...]:
    words = []
    for label in labels:
        digest = hashlib.sha256(str(label).encode("utf-8")).digest()
        words.append(int.from_bytes(digest[:8], "little"))
    return tuple(words)


def derive_stream(master_seed: int, *labels) -> np.random.Generator:
    """Return a Philox generator keyed by ``master_seed`` and ``labels``."""
    if not 0 <= int(master_seed) < 2**64:
        raise ValueError("master seed must be an unsigned 64-bit integer")
    seq = np.random.SeedSequence(int(master_seed), spawn_key=_label_words(labels))
    return np.random.Generator(np.random.Philox(seq))


def make_rng(seed: int) -> np.random.Generator:
    return derive_stream(seed)
