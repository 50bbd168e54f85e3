"""Unit-transfer Remainder protocol with a fully visible state ``(v, f)``.

``v`` is a value in ``Z_k`` or one of the output markers ``BOT0``/``BOT1``
(predicate False/True); ``f`` is the flag bit.  There is no hidden part,
so every partner sees the whole state.

The rules are nondeterministic: when a pair matches several rules the
protocol does not say which fires.  :func:`select_rule` resolves this once
per interaction and both agents apply the same rule.
"""

from __future__ import annotations

from functools import partial
from typing import NamedTuple, Sequence

import numpy as np

from ..engine import UNDECIDED, AgentState, ProtocolSpec, Role
from .remainder import RemainderParams

BOT0 = -1
BOT1 = -2

RULES = ("M1", "M2", "M3", "M4", "M5", "M6", "M7", "M8")


class Alg1State(NamedTuple):
    v: int
    f: int


def is_bot(v: int) -> bool:
    return v < 0


def output(state: Alg1State):
    if state.v == BOT0:
        return False
    if state.v == BOT1:
        return True
    return UNDECIDED


def _apply(rule: str | None, a: Alg1State, b: Alg1State, k: int, r: int) -> tuple[Alg1State, Alg1State]:
    v1, v2 = a.v, b.v
    if rule == "M1":
        return Alg1State((v1 + 1) % k, 1), Alg1State((v2 - 1) % k, 1)
    if rule == "M2":
        return Alg1State(v1, 0), b
    if rule == "M3":
        return Alg1State(v1, 1), Alg1State(v2, 1)
    if rule == "M4":
        return Alg1State((v1 + v2) % k, 0), Alg1State(0, 0)
    if rule == "M5":
        return a, Alg1State(BOT0, 0)
    if rule == "M6":
        return Alg1State(0, 0), b
    if rule == "M7":
        return a, Alg1State(BOT1, 0)
    if rule == "M8":
        return a, Alg1State(BOT0, 0)
    return a, b


def applicable(a: Alg1State, b: Alg1State, r: int) -> list[str]:
    """Rules whose left-hand side matches ``(a, b)``, in listed order."""
    (v1, f1), (v2, f2) = a, b
    num1, num2 = not is_bot(v1), not is_bot(v2)
    rules = []
    if f1 == 1 and f2 == 1 and num1 and num2:
        rules.append("M1")
    if f1 == 1:
        rules.append("M2")
    if f1 == 0 and f2 == 1:
        rules.append("M3")
    if f1 == 0 and f2 == 0 and num1 and num2:
        rules.append("M4")
    if f1 == 0 and f2 == 0 and num1 and v2 == 0:
        rules.append("M5")
    if is_bot(v1) and f2 == 1:
        rules.append("M6")
    if f1 == 0 and f2 == 0 and v1 == r and is_bot(v2):
        rules.append("M7")
    if f1 == 0 and f2 == 0 and num1 and v1 != r and is_bot(v2):
        rules.append("M8")
    return rules


def select_rule(a: Alg1State, b: Alg1State, coin: float, k: int, r: int, p_m1: float = 0.5) -> str | None:
    """Resolve the rule for one interaction.

    M1 competes with M2 and wins when ``coin < p_m1``.  Otherwise the first
    matching rule in listed order whose application changes a state is
    taken; ``None`` means a null interaction.
    """
    for rule in applicable(a, b, r):
        if rule == "M1":
            if coin < p_m1:
                return "M1"
            continue
        if _apply(rule, a, b, k, r) != (a, b):
            return rule
    return None


def needs_coin(a: Alg1State, b: Alg1State) -> bool:
    return a.f == 1 and b.f == 1 and not is_bot(a.v) and not is_bot(b.v)


def policy(a: Alg1State, b: Alg1State, rng: np.random.Generator, k: int, r: int, p_m1: float):
    # the coin is only drawn when M1 is actually in play
    coin = rng.random() if needs_coin(a, b) else 1.0
    return select_rule(a, b, coin, k, r, p_m1)


def delta(
    role: Role,
    own: AgentState,
    partner: Alg1State,
    rng: np.random.Generator,
    choice: str | None,
    k: int,
    r: int,
) -> AgentState:
    if role is Role.INITIATOR:
        new, _ = _apply(choice, own.message, partner, k, r)
    else:
        _, new = _apply(choice, partner, own.message, k, r)
    return own if new == own.message else AgentState(None, new)


def alg1_delta(
    role: Role,
    own: Alg1State,
    partner: Alg1State,
    rng: np.random.Generator | None,
    params: RemainderParams,
    p_m1: float = 0.5,
    rule: str | None = None,
) -> Alg1State:
    """Transition of one agent on bare ``(v, f)`` states.

    Pass ``rule`` to force a particular rule; otherwise the selection policy
    runs with a coin from ``rng``.
    """
    a, b = (own, partner) if role is Role.INITIATOR else (partner, own)
    if rule is None:
        coin = rng.random() if (rng is not None and needs_coin(a, b)) else 1.0
        rule = select_rule(a, b, coin, params.k, params.r, p_m1)
    elif rule not in applicable(a, b, params.r):
        raise ValueError(f"{rule} does not match {a}, {b}")
    new_a, new_b = _apply(rule, a, b, params.k, params.r)
    return new_a if role is Role.INITIATOR else new_b


def input_fn(x: int, rng: np.random.Generator | None = None) -> AgentState:
    return AgentState(None, Alg1State(int(x), 1))


def stable(agents: Sequence[AgentState], r: int) -> bool:
    """One value holder left and every marker agrees with it."""
    holders = [s.message.v for s in agents if not is_bot(s.message.v)]
    if len(holders) != 1:
        return False
    want = BOT1 if holders[0] == r else BOT0
    return all(s.message.v == want for s in agents if is_bot(s.message.v))


def value_sum(agents: Sequence[AgentState], k: int) -> int:
    """Sum of numeric values mod k; markers count as zero."""
    return sum(s.message.v for s in agents if not is_bot(s.message.v)) % k


def protocol(params: RemainderParams, p_m1: float = 0.5) -> ProtocolSpec:
    if not 0.0 <= p_m1 <= 1.0:
        raise ValueError("p_m1 must be a probability")
    k, r = params.k, params.r
    return ProtocolSpec(
        name="alg1",
        input_fn=input_fn,
        delta=partial(delta, k=k, r=r),
        output_fn=lambda s: output(s.message),
        policy=partial(policy, k=k, r=r, p_m1=p_m1),
        converged=partial(stable, r=r),
    )
