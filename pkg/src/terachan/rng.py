"""Named deterministic RNG streams derived from a master seed."""

from __future__ import annotations

import numpy as np


def stream(*key: int) -> np.random.Generator:
    """Independent PCG64 generator keyed by a tuple of integers."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(k) for k in key])))


def state_of(gen: np.random.Generator) -> dict:
    return gen.bit_generator.state


def restore(gen: np.random.Generator, state: dict) -> None:
    gen.bit_generator.state = state
