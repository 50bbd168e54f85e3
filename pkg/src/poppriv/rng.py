"""Named random streams derived from a single root seed.

Every source of randomness in a simulation gets its own stream so that an
experiment can hold one of them fixed (e.g. the schedule) while varying the
others.  Streams are keyed by ``numpy.random.SeedSequence`` spawn keys, so
they are independent and reproducible regardless of the order in which
they are requested.
"""

from __future__ import annotations

import hashlib

import numpy as np

# spawn-key prefixes; never renumber, saved seeds depend on them
_SCHEDULER = 0
_POLICY = 1
_INPUT = 2
_TRANSITION = 3
_TRIAL = 4
_NAMED = 5


def _name_key(name: str) -> int:
    # stable across interpreter runs, unlike hash()
    return int.from_bytes(hashlib.blake2b(name.encode("utf-8"), digest_size=8).digest(), "little")


class Streams:
    """Factory for the independent generators of one execution.

    Parameters
    ----------
    seed : int
        Root seed.  Identical seeds give identical streams.
    """

    def __init__(self, seed: int):
        if seed is None or int(seed) < 0:
            raise ValueError("seed must be a non-negative integer")
        self.seed = int(seed)
        self._scheduler = None
        self._policy = None
        self._transition: dict[int, np.random.Generator] = {}

    def _generator(self, *key: int) -> np.random.Generator:
        return np.random.default_rng(np.random.SeedSequence(self.seed, spawn_key=key))

    @property
    def scheduler(self) -> np.random.Generator:
        if self._scheduler is None:
            self._scheduler = self._generator(_SCHEDULER)
        return self._scheduler

    @property
    def policy(self) -> np.random.Generator:
        """Interaction-level coins shared by both participants (rule choice)."""
        if self._policy is None:
            self._policy = self._generator(_POLICY)
        return self._policy

    def input(self, agent: int) -> np.random.Generator:
        """Fresh generator for the input function of ``agent``."""
        return self._generator(_INPUT, agent)

    def transition(self, agent: int) -> np.random.Generator:
        """The private coin stream of ``agent``, shared across its transitions."""
        rng = self._transition.get(agent)
        if rng is None:
            rng = self._transition[agent] = self._generator(_TRANSITION, agent)
        return rng

    def fresh_transition(self, agent: int) -> np.random.Generator:
        """A new generator positioned at the start of ``agent``'s private stream."""
        return self._generator(_TRANSITION, agent)

    def named(self, name: str) -> np.random.Generator:
        return self._generator(_NAMED, _name_key(name))

    def trial(self, index: int) -> "Streams":
        return Streams(trial_seed(self.seed, index))

    def kernel_seeds(self, name: str, count: int) -> np.ndarray:
        """Per-trial 32-bit seeds for compiled kernels.

        Trial ``t`` always receives the same seed, whatever ``count`` is.
        Seeds are consecutive offsets from a derived base so that no two
        trials of one batch share a stream (the kernels' Mersenne Twister
        only takes 32-bit seeds, where random draws would collide).
        """
        base = np.random.SeedSequence(self.seed, spawn_key=(_TRIAL, _name_key(name))).generate_state(1)[0]
        return ((np.uint64(base) + np.arange(count, dtype=np.uint64)) % np.uint64(2**32)).astype(np.uint32)


def trial_seed(seed: int, index: int) -> int:
    """Seed of trial ``index`` under root ``seed``."""
    state = np.random.SeedSequence(int(seed), spawn_key=(_TRIAL, int(index))).generate_state(2)
    return int(state[0]) << 32 | int(state[1])
