"""Deterministic random substream derivation.

Every stochastic stage draws from a generator keyed by (master seed,
stage id, block index).  Substreams are pure functions of the key, so a
run partitioned into blocks produces bit-identical output for any degree
of parallel execution.
"""
from __future__ import annotations

import numpy as np

# Stage identifiers.  Values are part of the determinism contract:
# changing them changes every simulated stream.
EMISSION = 0
DETECTION_TRIGGER = 1
DETECTION_SIGNAL = 2
DARK_TRIGGER = 3
DARK_SIGNAL = 4
SCAN_POINT = 5
VERIFY = 6


def substream(seed: int, stage: int, block: int = 0) -> np.random.Generator:
    """Return the generator for (seed, stage, block)."""
    ss = np.random.SeedSequence(entropy=int(seed) & (2**64 - 1),
                                spawn_key=(int(stage), int(block)))
    return np.random.Generator(np.random.PCG64(ss))


def derive_seed(seed: int, stage: int, block: int = 0) -> int:
    """Derive a child master seed, e.g. one per scan point."""
    ss = np.random.SeedSequence(entropy=int(seed) & (2**64 - 1),
                                spawn_key=(int(stage), int(block)))
    return int(ss.generate_state(1, dtype=np.uint64)[0])
