"""Sequential population-protocol executor under the uniform random scheduler.

A protocol is a :class:`ProtocolSpec`.  Each step the scheduler draws an
ordered pair ``(initiator, responder)`` uniformly from the ``n(n-1)``
possibilities and both agents update through ``delta``.  ``delta`` is called
once per agent and sees the agent's own full state plus only the *message*
part of its partner, so hidden state cannot leak through the interface.
"""

from __future__ import annotations

import json
from array import array
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, Iterable, NamedTuple, Sequence

import numpy as np

from .rng import Streams


class InvalidPopulationError(ValueError):
    """Population size below two."""


class ProtocolCompletenessError(RuntimeError):
    """A transition function had no answer for an encountered pair."""


class InvariantViolation(RuntimeError):
    """A protocol invariant that should be unreachable was violated."""


class Role(str, Enum):
    INITIATOR = "initiator"
    RESPONDER = "responder"


@dataclass(frozen=True, slots=True)
class AgentState:
    hidden: Any
    message: Any


class _Undecided:
    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "UNDECIDED"

    def __reduce__(self):
        return (_Undecided, ())


UNDECIDED = _Undecided()


@dataclass(frozen=True)
class Configuration:
    agents: tuple[AgentState, ...]

    def __post_init__(self):
        if len(self.agents) < 2:
            raise InvalidPopulationError(f"population needs at least 2 agents, got {len(self.agents)}")

    @property
    def n(self) -> int:
        return len(self.agents)

    def __len__(self):
        return len(self.agents)

    def __getitem__(self, index):
        return self.agents[index]

    def replace(self, updates: dict[int, AgentState]) -> "Configuration":
        agents = list(self.agents)
        for index, state in updates.items():
            agents[index] = state
        return Configuration(tuple(agents))


class InteractionRecord(NamedTuple):
    step: int
    initiator: int
    responder: int


class Observation(NamedTuple):
    role: Role
    message: Any
    # interaction-level rule choice, known to both participants
    choice: Any = None


@dataclass
class View:
    """Everything one agent learns: its input, initial state and observations."""

    input: Any
    initial_state: AgentState
    observations: list[Observation] = field(default_factory=list)

    def __len__(self):
        return len(self.observations)

    def replay(self, proto: "ProtocolSpec", rng: np.random.Generator) -> list[AgentState]:
        """States of the agent after each observation, recomputed from the view.

        ``rng`` must be positioned at the start of the agent's private stream
        (see :meth:`Streams.fresh_transition`).
        """
        state = self.initial_state
        states = []
        for obs in self.observations:
            state = proto.delta(obs.role, state, obs.message, rng, obs.choice)
            states.append(state)
        return states


@dataclass(frozen=True)
class ProtocolSpec:
    """A population protocol.

    ``input_fn(x, rng)`` maps an input to an initial :class:`AgentState`.
    ``delta(role, own, partner_message, rng, choice)`` returns the agent's new
    state.  ``policy(initiator_message, responder_message, rng)``, when set,
    resolves nondeterminism once per interaction and its result is handed to
    both agents as ``choice``.  ``converged(agents)`` is an optional
    stable-output predicate used as the default stop condition.
    """

    name: str
    input_fn: Callable[[Any, np.random.Generator], AgentState]
    delta: Callable[[Role, AgentState, Any, np.random.Generator, Any], AgentState]
    output_fn: Callable[[AgentState], Any]
    policy: Callable[[Any, Any, np.random.Generator], Any] | None = None
    converged: Callable[[Sequence[AgentState]], bool] | None = None


def select_pair(n: int, rng: np.random.Generator) -> tuple[int, int]:
    """Draw an ordered pair of distinct agents uniformly at random."""
    if n < 2:
        raise InvalidPopulationError(f"population needs at least 2 agents, got {n}")
    i = int(rng.integers(n))
    j = int(rng.integers(n - 1))
    if j >= i:
        j += 1
    return i, j


def draw_pairs(n: int, size: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised :func:`select_pair`."""
    if n < 2:
        raise InvalidPopulationError(f"population needs at least 2 agents, got {n}")
    i = rng.integers(n, size=size)
    j = rng.integers(n - 1, size=size)
    j += j >= i
    return i, j


class PairSampler:
    """Buffered scheduler; the pair sequence depends only on the generator."""

    chunk = 1024

    def __init__(self, n: int, rng: np.random.Generator):
        self.n = n
        self.rng = rng
        self._i: list[int] = []
        self._j: list[int] = []
        self._pos = 0

    def __call__(self) -> tuple[int, int]:
        if self._pos == len(self._i):
            i, j = draw_pairs(self.n, self.chunk, self.rng)
            self._i, self._j, self._pos = i.tolist(), j.tolist(), 0
        pos = self._pos
        self._pos += 1
        return self._i[pos], self._j[pos]


def _sampler(streams: Streams, n: int) -> PairSampler:
    cache = streams.__dict__.setdefault("_pair_samplers", {})
    sampler = cache.get(n)
    if sampler is None:
        sampler = cache[n] = PairSampler(n, streams.scheduler)
    return sampler


def initialize(proto: ProtocolSpec, inputs: Sequence[Any], streams: Streams) -> Configuration:
    """Apply the input function to every agent with its own input stream."""
    return Configuration(tuple(proto.input_fn(x, streams.input(a)) for a, x in enumerate(inputs)))


def transition(
    proto: ProtocolSpec,
    initiator: AgentState,
    responder: AgentState,
    rng_initiator: np.random.Generator,
    rng_responder: np.random.Generator,
    policy_rng: np.random.Generator | None = None,
) -> tuple[AgentState, AgentState, Any]:
    """One interaction; returns both new states and the shared rule choice."""
    choice = None
    if proto.policy is not None:
        choice = proto.policy(initiator.message, responder.message, policy_rng)
    new_i = proto.delta(Role.INITIATOR, initiator, responder.message, rng_initiator, choice)
    new_j = proto.delta(Role.RESPONDER, responder, initiator.message, rng_responder, choice)
    if new_i is None or new_j is None:
        raise ProtocolCompletenessError(
            f"{proto.name}: no transition for {initiator!r} x {responder!r}"
        )
    return new_i, new_j, choice


def step(
    config: Configuration, proto: ProtocolSpec, streams: Streams, index: int = 1
) -> tuple[Configuration, InteractionRecord]:
    """Schedule one pair and apply the transition.

    Only the two scheduled agents can change; every other entry of the
    returned configuration is the identical object.
    """
    i, j = _sampler(streams, config.n)()
    new_i, new_j, _ = transition(
        proto, config.agents[i], config.agents[j], streams.transition(i), streams.transition(j), streams.policy
    )
    return config.replace({i: new_i, j: new_j}), InteractionRecord(index, i, j)


@dataclass(frozen=True)
class Stop:
    """When to end a run.

    ``budget`` bounds the number of steps.  ``until(agents)`` is a
    convergence predicate evaluated every ``check_every`` steps (default
    ``n``).  If ``quiet`` is set, convergence additionally requires that no
    effective (state-changing) transition happened in the last ``quiet``
    steps.
    """

    budget: int
    until: Callable[[Sequence[AgentState]], bool] | None = None
    quiet: int | None = None
    check_every: int | None = None

    def __post_init__(self):
        if self.budget < 0:
            raise ValueError("budget must be non-negative")


@dataclass
class Trace:
    initial: Configuration
    final: Configuration
    pairs: np.ndarray
    views: list[View] | None
    steps: int
    converged: bool
    seed: int | None = None

    @property
    def n(self) -> int:
        return self.initial.n

    @property
    def records(self) -> list[InteractionRecord]:
        return [InteractionRecord(t + 1, int(i), int(j)) for t, (i, j) in enumerate(self.pairs)]

    @property
    def parallel_time(self) -> float:
        return parallel_time(self.steps, self.n)

    def write_jsonl(self, path) -> None:
        with open(path, "w") as fh:
            for line in trace_lines(self.pairs):
                fh.write(line + "\n")


def trace_lines(pairs: np.ndarray) -> Iterable[str]:
    for t, (i, j) in enumerate(np.asarray(pairs).reshape(-1, 2)):
        yield json.dumps({"step": t + 1, "i": int(i), "j": int(j)})


def read_trace_jsonl(path) -> list[InteractionRecord]:
    records = []
    with open(path) as fh:
        for line in fh:
            if line.strip():
                obj = json.loads(line)
                records.append(InteractionRecord(obj["step"], obj["i"], obj["j"]))
    return records


def run(
    config: Configuration,
    proto: ProtocolSpec,
    stop: Stop | int,
    streams: Streams,
    inputs: Sequence[Any] | None = None,
    record_views: bool = True,
) -> Trace:
    """Execute ``proto`` from ``config`` until ``stop``.

    An integer ``stop`` is a pure step budget, combined with the protocol's
    own ``converged`` predicate when it has one.  Exhausting the budget is
    reported through ``Trace.converged``, never raised.
    """
    if isinstance(stop, int):
        stop = Stop(stop, until=proto.converged)
    n = config.n
    agents = list(config.agents)
    views = None
    if record_views:
        views = [View(None if inputs is None else inputs[a], agents[a]) for a in range(n)]
    sampler = _sampler(streams, n)
    rngs = [streams.transition(a) for a in range(n)]
    policy_rng = streams.policy
    delta = proto.delta
    policy = proto.policy
    pairs = array("i")
    check_every = stop.check_every or n
    has_check = stop.until is not None or stop.quiet is not None
    last_effective = 0
    INIT, RESP = Role.INITIATOR, Role.RESPONDER

    def converged_now(t):
        if stop.quiet is not None and t - last_effective < stop.quiet:
            return False
        return stop.until is None or stop.until(agents)

    converged = has_check and stop.quiet is None and converged_now(0)
    t = 0
    while not converged and t < stop.budget:
        i, j = sampler()
        a, b = agents[i], agents[j]
        choice = policy(a.message, b.message, policy_rng) if policy is not None else None
        new_a = delta(INIT, a, b.message, rngs[i], choice)
        new_b = delta(RESP, b, a.message, rngs[j], choice)
        if new_a is None or new_b is None:
            raise ProtocolCompletenessError(f"{proto.name}: no transition for {a!r} x {b!r}")
        t += 1
        if new_a != a or new_b != b:
            last_effective = t
        agents[i] = new_a
        agents[j] = new_b
        pairs.append(i)
        pairs.append(j)
        if views is not None:
            views[i].observations.append(Observation(INIT, b.message, choice))
            views[j].observations.append(Observation(RESP, a.message, choice))
        if has_check and (t % check_every == 0 or t == stop.budget):
            converged = converged_now(t)
    return Trace(
        initial=config,
        final=Configuration(tuple(agents)),
        pairs=np.frombuffer(pairs, dtype=np.int32).reshape(-1, 2).copy(),
        views=views,
        steps=t,
        converged=bool(converged),
        seed=streams.seed,
    )


def parallel_time(steps: int, n: int) -> float:
    if n < 1:
        raise ValueError("n must be positive")
    return steps / n


def decided_outputs(proto: ProtocolSpec, agents: Sequence[AgentState]) -> list[Any]:
    return [out for out in map(proto.output_fn, agents) if out is not UNDECIDED]


def decided_agree(proto: ProtocolSpec) -> Callable[[Sequence[AgentState]], bool]:
    """Predicate: at least one agent has decided and all decided agents agree."""

    def until(agents):
        outs = decided_outputs(proto, agents)
        return bool(outs) and all(o == outs[0] for o in outs)

    return until


def quiescence_stop(proto: ProtocolSpec, n: int, budget: int, c: float = 4.0) -> Stop:
    """Heuristic stop: decided agents agree and ``c*n^2`` steps without effect."""
    return Stop(budget, until=decided_agree(proto), quiet=int(c * n * n))


def population_output(proto: ProtocolSpec, agents: Sequence[AgentState]) -> Any:
    """Majority output among decided agents, or ``UNDECIDED``."""
    outs = decided_outputs(proto, agents)
    if not outs:
        return UNDECIDED
    return Counter(outs).most_common(1)[0][0]
