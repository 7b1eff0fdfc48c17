"""Deterministic RNG construction shared by every randomized component.

Seeding ``random.Random`` with a string goes through CPython's stable
sha512-based path, so the same (seed, context) pair yields the same stream
on every platform and interpreter version.
"""

from __future__ import annotations

import random


def seeded_rng(seed: int, *context: str) -> random.Random:
    """Return a ``random.Random`` keyed by an integer seed plus context tags.

    Distinct contexts (an intent name, an augmentation technique, ...) get
    independent streams, so adding one consumer never perturbs another.
    """
    return random.Random(":".join([str(seed), *context]))
