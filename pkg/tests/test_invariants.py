"""Structural invariants checked step by step over many random executions.

Each audit runs the reference engine one interaction at a time, records
every agent's state sequence, and counts violations.  The per-protocol audits
are cached so the acceptance suite can reuse them.
"""

from collections import Counter
from functools import lru_cache

import numpy as np

from poppriv import engine
from poppriv.engine import InvariantViolation
from poppriv.privacy_lab import chi_square_counts
from poppriv.protocols import alg1, alg3
from poppriv.protocols.remainder import RemainderParams
from poppriv.rng import Streams
from poppriv.subroutines import U, UBAR

EXECUTIONS = 1000


def execute(proto, inputs, seed, budget, until):
    """Step ``proto`` with :func:`engine.step` and keep every configuration."""
    streams = Streams(seed)
    config = engine.initialize(proto, inputs, streams)
    history, pairs = [config], []
    for t in range(1, budget + 1):
        if until(config.agents):
            break
        config, rec = engine.step(config, proto, streams, t)
        history.append(config)
        pairs.append((rec.initiator, rec.responder))
    return history, pairs


def frame_violations(history, pairs):
    bad = 0
    for before, after, (i, j) in zip(history, history[1:], pairs):
        bad += any(after.agents[a] is not before.agents[a] for a in range(before.n) if a not in (i, j))
    return bad


def view_violations(proto, inputs, seed, history, pairs):
    """Replay every agent's view from a fresh run and compare state by state."""
    streams = Streams(seed)
    trace = engine.run(engine.initialize(proto, inputs, streams), proto, len(pairs), streams, inputs=inputs)
    bad = int(trace.pairs.tolist() != [list(p) for p in pairs])
    for a, view in enumerate(trace.views):
        expected = [after.agents[a] for after, p in zip(history[1:], pairs) if a in p]
        bad += view.replay(proto, streams.fresh_transition(a)) != expected
    return bad


@lru_cache(maxsize=None)
def audit_alg3(executions=EXECUTIONS, seed=0):
    """Counts of violated invariants over random small Alg. 3 executions."""
    rng = np.random.default_rng(seed)
    counts = Counter(dict.fromkeys(["executions", "successful", "token", "frame", "view", "ledger", "visitation", "probe"], 0))
    for e in range(executions):
        n, k = int(rng.integers(3, 8)), int(rng.integers(2, 6))
        raw = rng.integers(0, k, n).tolist()
        leader = int(rng.integers(n))
        proto = alg3.protocol(RemainderParams(k))
        inputs = alg3.leader_inputs(raw, leader)
        history, pairs = execute(proto, inputs, 10_000 + e, alg3.default_budget(n), alg3.all_informed)
        counts["executions"] += 1

        for config in history:
            try:
                alg3.check_state(config.agents)
            except InvariantViolation:
                counts["token"] += 1
        counts["frame"] += frame_violations(history, pairs)
        counts["view"] += view_violations(proto, inputs, 10_000 + e, history, pairs)

        agents = history[-1].agents
        success = alg3.all_informed(agents) and alg3.broadcast_value(agents) == sum(raw) % k
        counts["successful"] += success
        if not success:
            continue
        r0 = history[0].agents[leader].hidden.r0
        for config in history:
            if config.agents[leader].message.out is not None:
                counts["ledger"] += alg3.conserved_ledger(config.agents, k) != sum(raw) % k
                break
            counts["ledger"] += alg3.conserved_ledger(config.agents, k) != (r0 + sum(raw)) % k

        for before, after in zip(history, history[1:]):
            seen = sum(s.message.label is UBAR for s in before.agents)
            now = sum(s.message.label is UBAR for s in after.agents)
            if now < seen:
                relabel = (
                    now == seen - 1
                    and before.agents[leader].message.label is UBAR
                    and after.agents[leader].message.label is U
                )
                counts["visitation"] += not relabel
            rnd = before.agents[leader].message.clock.round
            if after.agents[leader].message.clock.round == rnd:
                counts["probe"] += any(
                    y.message.clock.live_z(rnd) < x.message.clock.live_z(rnd)
                    for x, y in zip(before.agents, after.agents)
                )
    return dict(counts)


@lru_cache(maxsize=None)
def audit_alg1(executions=EXECUTIONS, seed=1):
    rng = np.random.default_rng(seed)
    counts = Counter(dict.fromkeys(["executions", "converged", "sum", "frame", "view"], 0))
    for e in range(executions):
        n, k = int(rng.integers(3, 9)), int(rng.integers(2, 6))
        r = int(rng.integers(k))
        raw = rng.integers(0, k, n).tolist()
        proto = alg1.protocol(RemainderParams(k, r), p_m1=float(rng.uniform(0.1, 0.9)))
        history, pairs = execute(proto, raw, 20_000 + e, 200 * n * n, lambda s: alg1.stable(s, r))
        counts["executions"] += 1
        counts["converged"] += alg1.stable(history[-1].agents, r)
        counts["sum"] += sum(alg1.value_sum(c.agents, k) != sum(raw) % k for c in history)
        counts["frame"] += frame_violations(history, pairs)
        counts["view"] += view_violations(proto, raw, 20_000 + e, history, pairs)
    return dict(counts)


@lru_cache(maxsize=None)
def audit_scheduler(executions=EXECUTIONS, draws=1000, n=12, seed=2):
    """Pair counts pooled over many independent scheduler streams."""
    counts = np.zeros((n, n), dtype=np.int64)
    for e in range(executions):
        sampler = engine.PairSampler(n, Streams(seed * 1_000_003 + e).scheduler)
        for _ in range(draws):
            i, j = sampler()
            counts[i, j] += 1
    return counts


def scheduler_pvalue(counts):
    n = counts.shape[0]
    off = counts[~np.eye(n, dtype=bool)]
    return chi_square_counts(off)[1]


def test_alg3_unique_token():
    out = audit_alg3()
    assert out["executions"] >= 1000 and out["token"] == 0


def test_alg3_ledger_conserved_until_strip():
    out = audit_alg3()
    assert out["successful"] >= 990 and out["ledger"] == 0


def test_alg3_monotone_visitation():
    assert audit_alg3()["visitation"] == 0


def test_alg3_probe_monotone_within_round():
    assert audit_alg3()["probe"] == 0


def test_alg1_sum_conservation():
    out = audit_alg1()
    assert out["converged"] == out["executions"] >= 1000 and out["sum"] == 0


def test_frame_property():
    assert audit_alg1()["frame"] == audit_alg3()["frame"] == 0


def test_view_sufficiency():
    assert audit_alg1()["view"] == audit_alg3()["view"] == 0


def test_scheduler_uniformity():
    counts = audit_scheduler()
    assert counts.sum() == 10**6
    assert np.all(np.diag(counts) == 0)
    assert scheduler_pvalue(counts) > 0.001
