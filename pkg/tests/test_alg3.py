import numpy as np
import pytest
from scipy import stats

from poppriv import engine
from poppriv.engine import AgentState, InvariantViolation, Role
from poppriv.montecarlo import alg3_batch, expected_aggregation_steps, random_inputs
from poppriv.protocols import alg3
from poppriv.protocols.alg3 import Alg3Hidden, Alg3Message
from poppriv.protocols.remainder import RemainderParams
from poppriv.rng import Streams
from poppriv.subroutines import R, S, S_PRIME, U, UBAR, ClockProbe, initial_clock_probe


class Fixed:
    def __init__(self, *values):
        self.values = list(values)

    def integers(self, k):
        return self.values.pop(0)


def state(mu, mask, label, leader=0, out=None, r0=None, clock=None):
    return AgentState(Alg3Hidden(mu, r0), Alg3Message(mask, label, leader, clock or ClockProbe(), out))


def interact(a, b, k, rng_a=None, rng_b=None):
    return (
        alg3.alg3_delta(Role.INITIATOR, a, b.message, rng_a or Fixed(), k=k),
        alg3.alg3_delta(Role.RESPONDER, b, a.message, rng_b or Fixed(), k=k),
    )


def test_input_non_leader():
    s = alg3.alg3_input(3, 0, np.random.default_rng(0), 5)
    assert s.hidden == Alg3Hidden(3, None)
    assert s.message.label is U and s.message.leader == 0
    assert 0 <= s.message.mask < 5


def test_input_leader_blinds():
    s = alg3.alg3_input(1, 1, Fixed(1, 0), 2)
    assert s.hidden == Alg3Hidden(0, 1)
    assert s.message.label is S and s.message.clock == initial_clock_probe(True)


def test_input_rejects_out_of_range():
    with pytest.raises(ValueError):
        alg3.alg3_input(5, 0, np.random.default_rng(0), 5)


def test_leader_secret_uniform():
    rng = np.random.default_rng(1)
    mus = [alg3.alg3_input(2, 1, rng, 5).hidden.mu for _ in range(100_000)]
    assert stats.chisquare(np.bincount(mus, minlength=5)).pvalue > 0.001


def test_r1_refreshes_only_sender_mask():
    s, v = interact(state(3, 1, S), state(None, None, UBAR), 4, rng_a=Fixed(2))
    assert s.hidden.mu == 3 and s.message.mask == 2 and s.message.label is S
    assert v.hidden.mu is None and v.message.mask is None and v.message.label is UBAR


def test_r2_and_r3_example():
    k = 4
    s, u = interact(state(3, 1, S), state(2, 0, U), k)
    assert s.hidden.mu is None and s.message.mask == 2 and s.message.label is S_PRIME
    assert u.hidden.mu == 3 and u.message.label is R
    s, u = interact(s, u, k, rng_b=Fixed(0))
    assert s.hidden.mu is None and s.message.mask is None and s.message.label is UBAR
    assert u.hidden.mu == (3 + 2) % k == 1 and u.message.label is S


def test_leader_strips_blinding_when_token_returns():
    k = 5
    sp = state(None, 4, S_PRIME)
    leader = state(3, None, R, leader=1, r0=2)
    _, new = interact(sp, leader, k, rng_b=Fixed(0))
    assert new.hidden.mu == (4 + 3 - 2) % k
    assert new.message.out == new.hidden.mu


def test_leader_relabels_once_probe_fired():
    fired = ClockProbe(fired=1)
    leader = state(None, None, UBAR, leader=1, r0=1, clock=fired)
    new, _ = interact(leader, state(None, None, UBAR), 5)
    assert new.message.label is U and new.hidden.mu == 0
    # as responder nothing happens
    _, same = interact(state(None, None, UBAR), leader, 5)
    assert same.message.label is UBAR


def test_two_token_holders_raise():
    with pytest.raises(InvariantViolation):
        interact(state(1, 1, S), state(None, 2, S_PRIME), 3)


def test_conserved_ledger_initial_example():
    k = 4
    agents = [
        AgentState(Alg3Hidden((1 + 3) % k, 3), Alg3Message(0, S, 1, ClockProbe())),
        state(2, 1, U),
        state(0, 1, U),
    ]
    assert alg3.conserved_ledger(agents, k) == 2


def test_check_state_detects_problems():
    good = [state(1, 0, S, leader=1, r0=0), state(2, 1, U)]
    alg3.check_state(good)
    with pytest.raises(InvariantViolation):
        alg3.check_state([state(1, 0, S, leader=1), state(2, 1, S)])
    with pytest.raises(InvariantViolation):
        alg3.check_state([state(1, 0, S, leader=1), state(2, 1, U, leader=1)])
    with pytest.raises(InvariantViolation):
        alg3.check_state([state(1, 0, S, leader=1), state(None, 1, U)])


def test_protocol_rejects_tiny_clock():
    with pytest.raises(ValueError):
        alg3.protocol(RemainderParams(3), m=1)


@pytest.mark.parametrize("seed", range(25))
def test_reference_run_n16_k3(seed):
    params = RemainderParams(3, 2)
    proto = alg3.protocol(params)
    streams = Streams(seed)
    raw = streams.named("inputs").integers(0, 3, 16).tolist()
    inputs = alg3.leader_inputs(raw, 1)
    budget = int(10 * 16**3 * np.log(16))
    trace = engine.run(engine.initialize(proto, inputs, streams), proto, budget, streams, record_views=False)
    assert trace.converged
    assert alg3.broadcast_value(trace.final.agents) == sum(raw) % 3
    assert engine.population_output(proto, trace.final.agents) == (sum(raw) % 3 == 2)


def test_n16_k3_converges_within_ten_n3_log_n_in_99_of_100():
    n, k = 16, 3
    b = alg3_batch(random_inputs(100, n, k, seed=7), k, budget=int(10 * n**3 * np.log(n)), seed=7)
    assert (b.converged & b.correct).sum() >= 99


@pytest.mark.parametrize("n", [8, 16, 32])
def test_aggregation_time_matches_hop_formula(n):
    b = alg3_batch(random_inputs(2000, n, 3, seed=n), 3, seed=n)
    agg = b.agg_step[b.success]
    expected = expected_aggregation_steps(n)
    se = agg.std() / np.sqrt(len(agg))
    assert abs(agg.mean() - expected) < 4 * se
