"""Purpose-partitioned random streams derived from one run seed."""

from __future__ import annotations

import zlib

import numpy as np

PURPOSES = ("init", "shuffle", "pairs", "data")


def stream(seed: int, purpose: str) -> np.random.Generator:
    """Independent generator for ``purpose``; the same (seed, purpose) always gives the same draws."""
    key = zlib.crc32(purpose.encode())
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), key])))


def rng_streams(seed: int) -> dict[str, np.random.Generator]:
    return {p: stream(seed, p) for p in PURPOSES}


def get_state(rngs: dict) -> dict:
    return {name: g.bit_generator.state for name, g in rngs.items()}


def set_state(rngs: dict, state: dict) -> None:
    for name, s in state.items():
        rngs[name].bit_generator.state = s
