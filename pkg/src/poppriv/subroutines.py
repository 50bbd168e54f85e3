"""Building blocks shared by the private Remainder protocol.

* masked peer-to-peer transfer of a secret between a Sender and one Receiver,
* the three-state epidemic probe,
* a leader-driven phase clock that cuts the execution into rounds,
* one-way epidemic copy of a final answer.

All functions are pure; ``None`` plays the role of the empty value ``⊥``.
"""

from __future__ import annotations

from enum import Enum
from functools import partial
from typing import NamedTuple, Sequence

import numpy as np

from .engine import AgentState, InvariantViolation, ProtocolSpec, Role, UNDECIDED


class Label(str, Enum):
    SENDER = "S"
    SENT = "S'"
    RECEIVER = "R"
    UNVISITED = "u"
    VISITED = "ubar"


S, S_PRIME, R, U, UBAR = Label.SENDER, Label.SENT, Label.RECEIVER, Label.UNVISITED, Label.VISITED
TOKEN = (S, S_PRIME)

# standalone phase-clock length
DEFAULT_M = 8

# integer codes used by the compiled kernels
LABEL_CODE = {S: 0, S_PRIME: 1, R: 2, U: 3, UBAR: 4}
CODE_LABEL = {v: k for k, v in LABEL_CODE.items()}


# ---------------------------------------------------------------------------
# secure peer-to-peer transfer


class P2PMessage(NamedTuple):
    mask: int | None
    label: Label


def _fresh(rng: np.random.Generator, k: int) -> int:
    return int(rng.integers(k))


def transfer_update(
    role: Role,
    mu: int | None,
    mask: int | None,
    label: Label,
    partner_mask: int | None,
    partner_label: Label,
    rng: np.random.Generator,
    k: int,
    accumulate: bool = False,
) -> tuple[int | None, int | None, Label]:
    """Masked hand-off of the Sender's secret, seen from one agent.

    Returns the agent's new ``(secret, mask, label)``.  The Sender draws a
    fresh mask in every interaction that does not start a hand-off, and a
    new Sender draws one when it takes the token, so the mask used to start
    a hand-off has been seen by nobody but the Receiver.  With
    ``accumulate`` the Receiver adds the transferred value to its own secret
    instead of replacing it.
    """
    if label in TOKEN and partner_label in TOKEN:
        raise InvariantViolation("two agents hold the Sender token")
    if role is Role.INITIATOR:
        if label is S:
            if partner_label is U:
                return None, (mu - mask) % k, S_PRIME
            return mu, _fresh(rng, k), S
        if label is S_PRIME and partner_label is R:
            return None, None, UBAR
        return mu, mask, label
    if label is S:
        return mu, _fresh(rng, k), S
    if partner_label is S and label is U:
        return ((mu + partner_mask) % k if accumulate else partner_mask), mask, R
    if partner_label is S_PRIME and label is R:
        return (partner_mask + mu) % k, _fresh(rng, k), S
    return mu, mask, label


def p2p_delta(
    role: Role, own: AgentState, partner: P2PMessage, rng: np.random.Generator, k: int
) -> AgentState:
    msg = own.message
    mu, mask, label = transfer_update(role, own.hidden, msg.mask, msg.label, partner.mask, partner.label, rng, k)
    if mu == own.hidden and mask == msg.mask and label is msg.label:
        return own
    return AgentState(mu, P2PMessage(mask, label))


def p2p_input(x: tuple[int | None, Label], rng: np.random.Generator, k: int) -> AgentState:
    """``x = (secret, label)``; every agent starts with a uniform mask."""
    mu, label = x
    return AgentState(mu, P2PMessage(_fresh(rng, k), Label(label)))


def p2p_done(agents: Sequence[AgentState]) -> bool:
    """The hand-off finished: nobody is mid-transfer and a Sender exists."""
    labels = [a.message.label for a in agents]
    return S_PRIME not in labels and R not in labels and UBAR in labels and S in labels


def p2p_protocol(k: int) -> ProtocolSpec:
    return ProtocolSpec(
        name="p2p",
        input_fn=partial(p2p_input, k=k),
        delta=lambda role, own, partner, rng, choice: p2p_delta(role, own, partner, rng, k),
        output_fn=lambda s: s.hidden if s.message.label is S else UNDECIDED,
    )


# ---------------------------------------------------------------------------
# probe


class ProbeOutcome(str, Enum):
    NONE_SATISFIES = "none-satisfies"
    SOME_SATISFIES = "some-satisfies"
    INCONCLUSIVE = "inconclusive"


def probe_update(x: int, y: int, responder_satisfies: bool) -> tuple[int, int]:
    """Probe rules on the pair ``(initiator z, responder z)``.

    Only the responder changes.  A responder that does not satisfy the
    predicate takes the max; one that does turns any live signal into 2 and
    ignores a 0-initiator.
    """
    if not responder_satisfies:
        return x, max(x, y)
    if x == 0:
        return x, y
    return x, 2


def probe_round_outcome(z: int | Sequence[int], leader: int = 0) -> ProbeOutcome:
    """Read the probe at a round boundary from the leader's value.

    ``z`` is either the leader's probe value or the probe values of the
    whole population (then ``leader`` indexes into it).
    """
    if not isinstance(z, (int, np.integer)):
        z = z[leader]
    if z == 1:
        return ProbeOutcome.NONE_SATISFIES
    if z == 2:
        return ProbeOutcome.SOME_SATISFIES
    return ProbeOutcome.INCONCLUSIVE


# ---------------------------------------------------------------------------
# phase clock


class PhaseClockState(NamedTuple):
    phase: int
    round: int = 0


def phase_clock_update(
    own: PhaseClockState, partner: PhaseClockState, is_leader: bool, m: int
) -> PhaseClockState:
    """Leader-driven ``m``-phase clock.

    Followers copy a partner that is ahead of them.  The leader moves one
    phase forward when it meets an agent that has caught up with it; moving
    past phase ``m-1`` wraps to 0 and starts the next round.  The round
    counter makes "ahead" unambiguous where a bare phase would be circular.
    """
    if is_leader:
        if partner == own:
            if own.phase + 1 == m:
                return PhaseClockState(0, own.round + 1)
            return PhaseClockState(own.phase + 1, own.round)
        return own
    if (partner.round, partner.phase) > (own.round, own.phase):
        return partner
    return own


class ClockProbe(NamedTuple):
    """Phase clock plus probe value, stamped with the round it belongs to.

    A stamp older than the clock's round reads as probe value 0, which
    resets the probe lazily at each round start.  ``fired`` is the leader's
    sticky probe output: it is set the first time a round ends with the
    leader still at 1 (nobody satisfied the predicate).
    """

    phase: int = 0
    round: int = 0
    z: int = 0
    zround: int = 0
    fired: int = 0

    @property
    def clock(self) -> PhaseClockState:
        return PhaseClockState(self.phase, self.round)

    def live_z(self, round_: int | None = None) -> int:
        round_ = self.round if round_ is None else round_
        return self.z if self.zround == round_ else 0


def initial_clock_probe(is_leader: bool) -> ClockProbe:
    # the leader injects the first 1-signal
    return ClockProbe(z=1 if is_leader else 0)


def clock_probe_update(
    role: Role,
    own: ClockProbe,
    partner: ClockProbe,
    is_leader: bool,
    partner_is_leader: bool,
    responder_satisfies: bool,
    m: int,
) -> ClockProbe:
    """Advance clock and probe for one agent of an interaction.

    Both clocks move first (from the pre-interaction values, so each side
    computes the same thing).  The probe only flows between agents that end
    up in the same round.
    """
    own_clock = phase_clock_update(own.clock, partner.clock, is_leader, m)
    partner_clock = phase_clock_update(partner.clock, own.clock, partner_is_leader, m)
    z, zround, fired = own.z, own.zround, own.fired
    if is_leader and own_clock.round > own.round:
        if probe_round_outcome(own.live_z()) is ProbeOutcome.NONE_SATISFIES:
            fired = 1
        z, zround = 1, own_clock.round
    if role is Role.RESPONDER and own_clock.round == partner_clock.round:
        x = partner.live_z(partner_clock.round)
        y = z if zround == own_clock.round else 0
        _, y = probe_update(x, y, responder_satisfies)
        z, zround = y, own_clock.round
    return ClockProbe(own_clock.phase, own_clock.round, z, zround, fired)


# ---------------------------------------------------------------------------
# epidemic broadcast


def epidemic_copy(own: int | None, partner: int | None) -> int | None:
    """An empty slot takes the partner's value; a filled one never changes."""
    if own is None:
        return partner
    if partner is not None and partner != own:
        raise InvariantViolation(f"conflicting broadcast values {own} and {partner}")
    return own
