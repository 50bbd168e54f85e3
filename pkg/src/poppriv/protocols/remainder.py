"""The Remainder predicate, its brute-force ground truth and the ring oracle."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np


class InvalidInputError(ValueError):
    pass


@dataclass(frozen=True)
class RemainderParams:
    """Decide whether the inputs sum to ``r`` modulo ``k``."""

    k: int
    r: int = 0

    def __post_init__(self):
        if self.k < 2:
            raise InvalidInputError(f"modulus k must be >= 2, got {self.k}")
        if not 0 <= self.r < self.k:
            raise InvalidInputError(f"target r must lie in [0, {self.k}), got {self.r}")


def check_inputs(inputs: Sequence[int], k: int) -> list[int]:
    values = [int(x) for x in inputs]
    if not values:
        raise InvalidInputError("input list is empty")
    bad = [x for x in values if not 0 <= x < k]
    if bad:
        raise InvalidInputError(f"inputs outside Z_{k}: {bad}")
    return values


def remainder_oracle(inputs: Sequence[int], params: RemainderParams) -> bool:
    values = check_inputs(inputs, params.k)
    return sum(values) % params.k == params.r


@dataclass(frozen=True)
class RingView:
    input: int
    received: int
    answer: int


def ring_remainder_oracle(
    inputs: Sequence[int], k: int, rng: np.random.Generator
) -> tuple[int, list[RingView]]:
    """Sequential ring aggregation with a leader-held additive mask.

    Agent 0 adds a uniform mask to its input and passes the sum around the
    ring; every agent adds its own input; agent 0 removes the mask from what
    comes back.  Each agent's view is its input, the one value it received
    and the broadcast answer.
    """
    values = check_inputs(inputs, k)
    if len(values) < 2:
        raise InvalidInputError("ring needs at least 2 agents")
    mask = int(rng.integers(k))
    sent = (mask + np.cumsum(values)) % k
    answer = int((sent[-1] - mask) % k)
    # agent a receives what agent a-1 sent; agent 0 receives the last message
    received = np.roll(sent, 1)
    views = [RingView(x, int(m), answer) for x, m in zip(values, received)]
    return answer, views
