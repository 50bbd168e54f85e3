"""Remainder protocols as :class:`~poppriv.engine.ProtocolSpec` objects."""

from . import alg1, alg3
from .remainder import (
    InvalidInputError,
    RemainderParams,
    RingView,
    remainder_oracle,
    ring_remainder_oracle,
)

__all__ = [
    "alg1",
    "alg3",
    "InvalidInputError",
    "RemainderParams",
    "RingView",
    "remainder_oracle",
    "ring_remainder_oracle",
]
