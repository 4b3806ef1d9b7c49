"""Counter-based per-trial random streams.

Trial ``t`` under hypothesis ``h`` draws from Philox keyed by a hash of
``(seed, h)`` with ``t`` placed in the third counter word. Streams never
overlap (each trial would need 2**128 blocks to reach the next one) and a
trial's draws do not depend on which worker produces them or in what order.
"""

import numpy as np

H0 = 0
H1 = 1


def stream_key(seed: int, hypothesis: int) -> np.ndarray:
    return np.random.SeedSequence([int(seed), int(hypothesis)]).generate_state(2, np.uint64)


def trial_generator(key: np.ndarray, trial: int) -> np.random.Generator:
    counter = np.array([0, 0, trial, 0], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key, counter=counter))
