"""Deterministic random-stream derivation.

Every consumer of randomness gets its own ``numpy.random.Generator`` derived
from the master seed plus an integer key path, so results never depend on the
order in which streams are created or consumed.
"""

from __future__ import annotations

import numpy as np

# Stream purposes. Values are part of the reproducibility contract; never reuse.
INIT = 1
SELECT = 2
CLIENT = 3
PARTITION = 4
CENTRAL = 5

_MASK64 = (1 << 64) - 1


def derive_seed(master_seed: int, *keys: int) -> int:
    """Stable 64-bit mix of ``master_seed`` and ``keys``."""
    entropy = [int(master_seed) & _MASK64, *(int(k) & _MASK64 for k in keys)]
    state = np.random.SeedSequence(entropy).generate_state(1, dtype=np.uint64)
    return int(state[0])


def stream(master_seed: int, *keys: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(derive_seed(master_seed, *keys)))


def client_stream(master_seed: int, client_id: int, round_index: int) -> np.random.Generator:
    """Training stream for one client in one round."""
    return stream(master_seed, CLIENT, client_id, round_index)
