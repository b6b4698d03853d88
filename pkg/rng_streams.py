"""
Counter-based random streams for reproducible trials.

Every trial owns one stream per purpose (arrival realization, Type
Decomposition offsets, marks, choices, ...). A stream is a numpy Generator
over the Philox counter-based bit generator, keyed by the SeedSequence
(base_seed, spawn_key=(trial, purpose)). Streams therefore do not depend on
execution order or on how trials are spread over workers, and any single
purpose can be replayed on its own.

Usage:
    from rng_streams import TrialStreams

    streams = TrialStreams(seed=7, trial=3)
    u = streams.uniform("arrival")
    eta = streams.stream("eta").uniform(0.0, 0.5)
"""

from typing import Dict, Union

import numpy as np

PURPOSES = ("arrival", "eta", "order", "mark", "choice", "probe", "misc")


def make_generator(seed: int, trial: int, purpose: str) -> np.random.Generator:
    """Build the generator for one (seed, trial, purpose) key."""
    tag = PURPOSES.index(purpose) if purpose in PURPOSES else len(PURPOSES) + sum(map(ord, purpose))
    sequence = np.random.SeedSequence(entropy=seed, spawn_key=(trial, tag))
    return np.random.Generator(np.random.Philox(sequence))


class TrialStreams:
    """Lazily created per-purpose generators for one trial."""

    def __init__(self, seed: int = 0, trial: int = 0):
        self.seed = int(seed)
        self.trial = int(trial)
        self._generators: Dict[str, np.random.Generator] = {}

    def stream(self, purpose: str) -> np.random.Generator:
        generator = self._generators.get(purpose)
        if generator is None:
            generator = make_generator(self.seed, self.trial, purpose)
            self._generators[purpose] = generator
        return generator

    def uniform(self, purpose: str) -> float:
        """One U[0,1) draw from the purpose's stream."""
        return float(self.stream(purpose).random())

    def bernoulli(self, purpose: str, p: float) -> bool:
        return self.uniform(purpose) < p


def as_streams(seed: Union[int, TrialStreams, None]) -> TrialStreams:
    """Accept a plain seed or ready-made streams."""
    if isinstance(seed, TrialStreams):
        return seed
    return TrialStreams(seed=0 if seed is None else seed)
