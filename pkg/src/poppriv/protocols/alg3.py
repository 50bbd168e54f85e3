"""Remainder with a circulating masked token.

Agent state is ``⟨(mu, r0), (mask, label, leader, clock_probe, out)⟩``:

* ``mu`` -- hidden secret (running sum carried by the token holder);
* ``r0`` -- the leader's hidden blinding value, ``None`` elsewhere;
* ``mask`` -- visible randomness used by the masked hand-off;
* ``label`` -- one of S, S', R, u, ubar (see :class:`~poppriv.subroutines.Label`);
* ``clock_probe`` -- phase clock and probe for the predicate "label is u";
* ``out`` -- visible broadcast slot for the final sum.

The leader starts as Sender holding ``input + r0``.  The token hops to
unvisited agents through the masked hand-off, each Receiver adding its
input.  When a round of the phase clock ends with the probe reporting that
nobody is unvisited, the leader relabels itself ``u``, takes the token back,
subtracts ``r0`` and publishes the sum, which then spreads by epidemic.
"""

from __future__ import annotations

import math
from functools import partial
from typing import NamedTuple, Sequence

import numpy as np

from ..engine import UNDECIDED, AgentState, InvariantViolation, ProtocolSpec, Role
from ..subroutines import (
    R,
    S,
    S_PRIME,
    U,
    UBAR,
    ClockProbe,
    Label,
    clock_probe_update,
    epidemic_copy,
    initial_clock_probe,
    transfer_update,
)
from .remainder import RemainderParams

# rounds at m=8 end early in ~2% of n=32 runs; 12 removes this at ~1% extra steps
DEFAULT_M = 12


class Alg3Hidden(NamedTuple):
    mu: int | None
    r0: int | None = None


class Alg3Message(NamedTuple):
    mask: int | None
    label: Label
    leader: int
    clock: ClockProbe
    out: int | None = None


def alg3_input(i: int, ell: int, rng: np.random.Generator, k: int) -> AgentState:
    """Input function; the leader blinds its input with ``r0``."""
    if not 0 <= i < k:
        raise ValueError(f"input {i} outside Z_{k}")
    if ell:
        r0 = int(rng.integers(k))
        mask = int(rng.integers(k))
        return AgentState(Alg3Hidden((i + r0) % k, r0), Alg3Message(mask, S, 1, initial_clock_probe(True)))
    mask = int(rng.integers(k))
    return AgentState(Alg3Hidden(i), Alg3Message(mask, U, 0, initial_clock_probe(False)))


def _can_relabel(msg: Alg3Message, mu) -> bool:
    return (
        msg.leader == 1
        and msg.label is UBAR
        and mu is None
        and msg.mask is None
        and msg.clock.fired == 1
        and msg.out is None
    )


def alg3_delta(
    role: Role,
    own: AgentState,
    partner: Alg3Message,
    rng: np.random.Generator,
    choice=None,
    *,
    k: int,
    m: int = DEFAULT_M,
) -> AgentState:
    """One agent's side of an interaction: token rules, then clock/probe and broadcast."""
    mu, r0 = own.hidden
    msg = own.message
    new_mu, mask, label = transfer_update(
        role, mu, msg.mask, msg.label, partner.mask, partner.label, rng, k, accumulate=True
    )
    out = msg.out
    if msg.leader and msg.label is R and label is S:
        # the leader took back the token: remove the blinding and publish
        new_mu = (new_mu - r0) % k
        out = new_mu
    if role is Role.INITIATOR and _can_relabel(msg, mu):
        label, new_mu = U, 0
    responder_label = msg.label if role is Role.RESPONDER else partner.label
    clock = clock_probe_update(
        role, msg.clock, partner.clock, bool(msg.leader), bool(partner.leader), responder_label is U, m
    )
    out = epidemic_copy(out, partner.out)
    new_msg = Alg3Message(mask, label, msg.leader, clock, out)
    if new_mu == mu and new_msg == msg:
        return own
    return AgentState(Alg3Hidden(new_mu, r0), new_msg)


def output(state: AgentState, r: int):
    out = state.message.out
    return UNDECIDED if out is None else out == r


def all_informed(agents: Sequence[AgentState]) -> bool:
    return all(a.message.out is not None for a in agents)


def broadcast_value(agents: Sequence[AgentState]) -> int | None:
    """The published sum, or ``None`` if nobody has it yet."""
    for a in agents:
        if a.message.out is not None:
            return a.message.out
    return None


def conserved_ledger(agents: Sequence[AgentState], k: int) -> int:
    """Sum of all defined secrets plus the in-flight masked value, mod ``k``.

    Equal to ``r0 + sum(inputs)`` until the leader removes ``r0``.
    """
    total = sum(a.hidden.mu for a in agents if a.hidden.mu is not None)
    total += sum(a.message.mask for a in agents if a.message.label is S_PRIME)
    return total % k


def token_holders(agents: Sequence[AgentState]) -> int:
    return sum(1 for a in agents if a.message.label in (S, S_PRIME))


def leader_inputs(inputs: Sequence[int], leader: int) -> list[tuple[int, int]]:
    return [(int(x), int(a == leader)) for a, x in enumerate(inputs)]


def default_budget(n: int) -> int:
    """Twenty times the constant-free n^3 ln n form."""
    return int(math.ceil(20 * n**3 * math.log(n)))


def protocol(params: RemainderParams, m: int = DEFAULT_M) -> ProtocolSpec:
    """Protocol whose inputs are ``(input, leader_bit)`` pairs (see :func:`leader_inputs`)."""
    if m < 2:
        raise ValueError("phase clock needs m >= 2")
    k, r = params.k, params.r
    return ProtocolSpec(
        name="alg3",
        input_fn=lambda x, rng: alg3_input(x[0], x[1], rng, k),
        delta=partial(alg3_delta, k=k, m=m),
        output_fn=partial(output, r=r),
        converged=all_informed,
    )


def check_state(agents: Sequence[AgentState]) -> None:
    """Raise if a structural invariant of the protocol is broken."""
    if token_holders(agents) != 1:
        raise InvariantViolation(f"{token_holders(agents)} agents hold S/S'")
    if sum(a.message.leader for a in agents) != 1:
        raise InvariantViolation("leader is not unique")
    for a in agents:
        hidden_empty = a.hidden.mu is None
        if hidden_empty != (a.message.label in (UBAR, S_PRIME)):
            raise InvariantViolation(f"secret/label mismatch in {a}")
