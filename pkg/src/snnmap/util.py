"""Shared helpers: deterministic RNG streams, atomic writes, number formatting."""

import os
import zlib

import numpy as np


def subrng(seed, *stream):
    """Independent generator for a named stream under one base seed.

    Stream labels (ints or strings) are folded into the seed sequence, so
    every (seed, stream) pair is reproducible regardless of call order,
    process, or platform.
    """
    entropy = [int(seed) & 0xFFFFFFFF]
    for part in stream:
        if isinstance(part, (int, np.integer)):
            entropy.append(int(part) & 0xFFFFFFFF)
        else:
            entropy.append(zlib.crc32(str(part).encode("utf-8")))
    return np.random.default_rng(np.random.SeedSequence(entropy))


def as_rng(seed_or_rng):
    """Accept either an integer seed or an existing Generator."""
    if isinstance(seed_or_rng, np.random.Generator):
        return seed_or_rng
    return np.random.default_rng(seed_or_rng)


def atomic_write_bytes(path, payload):
    """Write via a temp file + rename so partial files never appear."""
    tmp = f"{path}.tmp.{os.getpid()}"
    with open(tmp, "wb") as fh:
        fh.write(payload)
    os.replace(tmp, path)


def fmt6(x):
    """Float formatted with 6 significant digits (CSV convention)."""
    return f"{float(x):.6g}"
