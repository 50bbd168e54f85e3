"""Seeded Monte Carlo batches over the compiled kernels.

Every function takes a root ``seed`` and derives per-trial kernel seeds
through :class:`~poppriv.rng.Streams`, so results are a pure function of
the arguments.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import kernels
from .engine import InvariantViolation
from .protocols import alg3
from .rng import Streams
from .subroutines import DEFAULT_M as PROBE_DEFAULT_M


@dataclass
class Alg3Batch:
    """Per-trial results of a batch of Alg. 3 runs.

    ``obs[t]`` holds the adversary's first observations as rows
    ``(role, mask, label_code)`` with role 0 = initiator, 1 = responder;
    unused rows are ``-9``.  ``clean`` is 1 when every agent had been
    visited by the time the leader took the token back, 0 when the probe
    went off early, -1 when that never happened.
    """

    k: int
    m: int
    leader: int
    adversary: int
    inputs: np.ndarray
    steps: np.ndarray
    converged: np.ndarray
    answer: np.ndarray
    clean: np.ndarray
    r4_step: np.ndarray
    agg_step: np.ndarray
    n_obs: np.ndarray
    first_partner: np.ndarray
    violation: np.ndarray
    obs: np.ndarray
    record: dict | None = None

    @property
    def truth(self) -> np.ndarray:
        return self.inputs.sum(axis=1) % self.k

    @property
    def correct(self) -> np.ndarray:
        return self.converged & (self.answer == self.truth)

    def raise_on_violation(self) -> None:
        bad = np.flatnonzero(self.violation)
        if bad.size:
            kind = {kernels.TOKEN_CLASH: "two token holders met", kernels.BROADCAST_CLASH: "conflicting broadcasts"}
            raise InvariantViolation(f"trial {bad[0]}: {kind.get(int(self.violation[bad[0]]), 'unknown')}")

    @property
    def success(self) -> np.ndarray:
        """Runs whose aggregation finished before the leader closed it."""
        return self.converged & (self.clean == 1) & (self.violation == 0)


def alg3_batch(
    inputs: np.ndarray,
    k: int,
    *,
    m: int = alg3.DEFAULT_M,
    leader: int = 1,
    budget: int | None = None,
    seed: int = 0,
    adversary: int = 0,
    prefix: int = 2,
    record: int = -1,
) -> Alg3Batch:
    """Run ``len(inputs)`` independent executions, one per input row.

    ``record`` selects one trial whose schedule, random draws and initial
    masks are kept for exact replay.
    """
    inputs = np.ascontiguousarray(np.atleast_2d(inputs), dtype=np.int64)
    trials, n = inputs.shape
    if budget is None:
        budget = alg3.default_budget(n)
    seeds = Streams(seed).kernel_seeds("alg3", trials)
    out = kernels.alg3_kernel(inputs, leader, k, m, budget, seeds, adversary, prefix, record)
    rec = None
    if record >= 0:
        steps = int(out[0][record])
        rec = {"pairs": out[10][:steps].copy(), "draws": out[11][:steps].copy(), "masks": out[12][:n].copy(), "r0": int(out[12][n])}
    return Alg3Batch(k, m, leader, adversary, inputs, *out[:10], record=rec)


@dataclass
class Alg1Batch:
    """Per-trial Alg. 1 results; ``obs`` rows are ``(role, v, f)``."""

    k: int
    r: int
    adversary: int
    inputs: np.ndarray
    steps: np.ndarray
    converged: np.ndarray
    holder: np.ndarray
    n_obs: np.ndarray
    first_partner: np.ndarray
    obs: np.ndarray
    record: dict | None = None


def alg1_batch(
    inputs: np.ndarray,
    k: int,
    r: int = 0,
    *,
    p_m1: float = 0.5,
    budget: int | None = None,
    seed: int = 0,
    adversary: int = 0,
    prefix: int = 1,
    stop_on_prefix: bool = True,
    record: int = -1,
) -> Alg1Batch:
    """Alg. 1 runs; by default each stops once the adversary has ``prefix`` observations."""
    inputs = np.ascontiguousarray(np.atleast_2d(inputs), dtype=np.int64)
    trials, n = inputs.shape
    if budget is None:
        budget = 200 * n * n if stop_on_prefix else int(math.ceil(50 * n**3 * math.log(n)))
    seeds = Streams(seed).kernel_seeds("alg1", trials)
    out = kernels.alg1_kernel(inputs, k, r, p_m1, budget, seeds, adversary, prefix, stop_on_prefix, record)
    rec = None
    if record >= 0:
        steps = int(out[0][record])
        rec = {"pairs": out[6][:steps].copy(), "coins": out[7][:steps].copy()}
    return Alg1Batch(k, r, adversary, inputs, *out[:6], record=rec)


@dataclass
class P2PBatch:
    k: int
    mu: int
    recovered: np.ndarray
    steps: np.ndarray
    first_mask: np.ndarray
    handoff: np.ndarray
    search_counts: np.ndarray

    @property
    def delivered(self) -> np.ndarray:
        return self.recovered == self.mu


def p2p_batch(
    n: int, k: int, mu: int, trials: int, seed: int = 0, n_unvisited: int | None = None, budget: int | None = None
) -> P2PBatch:
    """Isolated secure transfers: agent 0 sends ``mu`` to one of agents ``1..n_unvisited``."""
    if n < 2:
        raise ValueError("need at least two agents")
    if not 0 <= mu < k:
        raise ValueError(f"secret {mu} outside Z_{k}")
    n_unvisited = n - 1 if n_unvisited is None else n_unvisited
    if not 1 <= n_unvisited < n:
        raise ValueError("need at least one unvisited agent besides the sender")
    budget = budget or 1000 * n * n
    seeds = Streams(seed).kernel_seeds("p2p", trials)
    return P2PBatch(k, mu, *kernels.p2p_kernel(n, k, mu, n_unvisited, seeds, budget))


def freshness_estimate(n: int, trials: int, seed: int = 0, adversary: int = 0) -> float:
    """Fraction of schedules where the adversary's first partner had never interacted."""
    if n < 2:
        raise ValueError("need at least two agents")
    return float(kernels.freshness_kernel(n, Streams(seed).kernel_seeds("fresh", trials), adversary).mean())


def scheduler_counts(n: int, draws: int, seed: int = 0) -> np.ndarray:
    """``(n, n)`` matrix of how often each ordered pair was drawn."""
    seed32 = int(Streams(seed).kernel_seeds("scheduler", 1)[0])
    return kernels.scheduler_counts(n, draws, seed32).reshape(n, n)


@dataclass
class ProbeBench:
    n: int
    m: int
    timer: int
    truth: np.ndarray
    outcome: np.ndarray
    length: np.ndarray

    @property
    def matches(self) -> np.ndarray:
        # outcome codes: 1 none, 2 some, 0 inconclusive
        return self.outcome == np.where(self.truth == 1, 2, 1)

    @property
    def accuracy(self) -> float:
        return float(self.matches.mean())


def timer_length(n: int, d: float) -> int:
    """Round length ``ceil(d n ln n)`` used by the fixed-timer probe."""
    return max(1, int(math.ceil(d * n * math.log(n))))


def probe_bench(
    n: int,
    rounds: int,
    seed: int = 0,
    *,
    m: int = PROBE_DEFAULT_M,
    d: float | None = None,
    p_some: float = 0.5,
    burn_in: int = 10,
) -> ProbeBench:
    """Measure probe round outcomes against ground truth.

    With ``d`` given, rounds come from an exact timer of ``ceil(d n ln n)``
    steps; otherwise from the leader-driven phase clock with ``m`` phases.
    """
    if n < 2:
        raise ValueError("need at least two agents")
    timer = 0 if d is None else timer_length(n, d)
    seed32 = int(Streams(seed).kernel_seeds(f"probe{n}/{m}/{timer}", 1)[0])
    truth, outcome, length = kernels.probe_kernel(n, m, rounds, seed32, timer, p_some, burn_in)
    return ProbeBench(n, m, timer, truth, outcome, length)


def random_inputs(trials: int, n: int, k: int, seed: int, name: str = "inputs") -> np.ndarray:
    return Streams(seed).named(name).integers(0, k, size=(trials, n), dtype=np.int64)


# ---------------------------------------------------------------------------
# convergence scaling


@dataclass
class ConvergenceRow:
    n: int
    trials: int
    median: float
    q1: float
    q3: float
    unconverged: int
    incorrect: int


def convergence_sweep(
    ns: Sequence[int], k: int, trials: int, seed: int = 0, m: int = alg3.DEFAULT_M, budget: int | None = None
) -> list[ConvergenceRow]:
    rows = []
    for n in ns:
        inputs = random_inputs(trials, n, k, seed, f"conv{n}")
        b = alg3_batch(inputs, k, m=m, budget=budget, seed=seed + n)
        b.raise_on_violation()
        steps = b.steps.astype(float)
        q1, med, q3 = np.percentile(steps, [25, 50, 75])
        rows.append(
            ConvergenceRow(n, trials, float(med), float(q1), float(q3), int((~b.converged).sum()), int((~b.correct).sum()))
        )
    return rows


def fit_exponent(ns: Sequence[int], steps: Sequence[float], log_factor: bool = False) -> tuple[float, float]:
    """Least-squares fit of ``steps ~ c n^alpha`` (times ``ln n`` with ``log_factor``).

    Returns ``(alpha, c)``.
    """
    ns = np.asarray(ns, dtype=float)
    y = np.log(np.asarray(steps, dtype=float))
    if log_factor:
        y = y - np.log(np.log(ns))
    alpha, logc = np.polyfit(np.log(ns), y, 1)
    return float(alpha), float(np.exp(logc))


def expected_aggregation_steps(n: int) -> float:
    """Mean steps until the token has visited every agent.

    The k-th hop waits for the Sender to start an interaction with one of
    the remaining unvisited agents, then for the S'/R pair to meet in that
    order: ``n(n-1) (H_{n-1} + n - 2)`` in total.
    """
    harmonic = sum(1.0 / t for t in range(1, n))
    return n * (n - 1) * (harmonic + n - 2)
