"""Labelled, independent random streams derived from (master seed, seed)."""
import numpy as np

# fixed ids so adding a stream never shifts an existing one
STREAM_IDS = {"init": 1, "lesion": 2, "joint": 3}


def rng_stream(seed: int, label: str, master_seed: int = 0) -> np.random.Generator:
    return np.random.default_rng(
        np.random.SeedSequence([int(master_seed), int(seed), STREAM_IDS[label]]))
