"""Compiled Monte Carlo kernels.

These re-implement the transitions of :mod:`poppriv.protocols` and
:mod:`poppriv.subroutines` on flat integer arrays so that 10^5-run
experiments finish in seconds.  Each trial reseeds the kernel generator
from its own seed, so a trial's result does not depend on how trials are
batched.  Any trial can record its schedule and random draws, and
``tests/test_kernels.py`` replays those recordings through the reference
engine to check both implementations agree step by step.

Integer encodings: ``-1`` is the empty value; labels are
S=0, S'=1, R=2, u=3, ubar=4; Alg. 1 markers are BOT0=-1, BOT1=-2.
"""

from __future__ import annotations

import numpy as np
from numba import njit

LAB_S, LAB_SP, LAB_R, LAB_U, LAB_UBAR = 0, 1, 2, 3, 4
NONE = -1

# violation codes
OK = 0
TOKEN_CLASH = 1
BROADCAST_CLASH = 2


@njit(cache=True)
def _pair(n):
    i = np.random.randint(0, n)
    j = np.random.randint(0, n - 1)
    if j >= i:
        j += 1
    return i, j


@njit(cache=True)
def freshness_kernel(n, seeds, adversary):
    """1 where the adversary's first partner had not interacted before."""
    trials = seeds.shape[0]
    fresh = np.zeros(trials, np.int8)
    touched = np.zeros(n, np.bool_)
    for t in range(trials):
        np.random.seed(seeds[t])
        touched[:] = False
        while True:
            i, j = _pair(n)
            if i == adversary or j == adversary:
                other = j if i == adversary else i
                fresh[t] = 0 if touched[other] else 1
                break
            touched[i] = True
            touched[j] = True
    return fresh


@njit(cache=True)
def scheduler_counts(n, draws, seed):
    """Histogram of ``draws`` ordered pairs, flattened as ``i*n + j``."""
    np.random.seed(seed)
    counts = np.zeros(n * n, np.int64)
    for _ in range(draws):
        i, j = _pair(n)
        counts[i * n + j] += 1
    return counts


# ---------------------------------------------------------------------------
# private Remainder


@njit(cache=True)
def _alg3_trial(inputs, leader, k, m, budget, adversary, obs, rec_pairs, rec_draws, rec_init, recording):
    n = inputs.shape[0]
    prefix = obs.shape[0]
    mu = np.empty(n, np.int64)
    mask = np.empty(n, np.int64)
    lab = np.empty(n, np.int64)
    phase = np.zeros(n, np.int64)
    rnd = np.zeros(n, np.int64)
    z = np.zeros(n, np.int64)
    zr = np.zeros(n, np.int64)
    out = np.full(n, NONE, np.int64)
    r0 = 0
    for a in range(n):
        if a == leader:
            r0 = np.random.randint(0, k)
            mask[a] = np.random.randint(0, k)
            mu[a] = (inputs[a] + r0) % k
            lab[a] = LAB_S
            z[a] = 1
        else:
            mask[a] = np.random.randint(0, k)
            mu[a] = inputs[a]
            lab[a] = LAB_U
        if recording:
            rec_init[a] = mask[a]
    if recording:
        rec_init[n] = r0
    fired = 0
    n_u = n - 1
    n_out = 0
    clean = -1
    r4_step = -1
    agg_step = -1
    nobs = 0
    first_partner = -1
    violation = OK
    answer = NONE
    t = 0
    while t < budget and n_out < n:
        i, j = _pair(n)
        t += 1
        if recording:
            rec_pairs[t - 1, 0] = i
            rec_pairs[t - 1, 1] = j
        li = lab[i]
        lj = lab[j]
        mi = mask[i]
        mj = mask[j]
        mui = mu[i]
        muj = mu[j]
        outi = out[i]
        outj = out[j]
        if i == adversary or j == adversary:
            if first_partner < 0:
                first_partner = j if i == adversary else i
            if nobs < prefix:
                if i == adversary:
                    obs[nobs, 0] = 0
                    obs[nobs, 1] = mj
                    obs[nobs, 2] = lj
                else:
                    obs[nobs, 0] = 1
                    obs[nobs, 1] = mi
                    obs[nobs, 2] = li
            nobs += 1
        if li <= LAB_SP and lj <= LAB_SP:
            violation = TOKEN_CLASH
            break
        draw = NONE
        # token hand-off
        if li == LAB_S:
            if lj == LAB_U:
                mu[i] = NONE
                mask[i] = (mui - mi) % k
                lab[i] = LAB_SP
                mu[j] = (muj + mi) % k
                lab[j] = LAB_R
                n_u -= 1
                if n_u == 0 and agg_step < 0:
                    agg_step = t
            else:
                draw = np.random.randint(0, k)
                mask[i] = draw
        elif li == LAB_SP and lj == LAB_R:
            mask[i] = NONE
            lab[i] = LAB_UBAR
            draw = np.random.randint(0, k)
            mu[j] = (mi + muj) % k
            mask[j] = draw
            lab[j] = LAB_S
            if j == leader:
                mu[j] = (mu[j] - r0) % k
                out[j] = mu[j]
                answer = mu[j]
        if lj == LAB_S:
            draw = np.random.randint(0, k)
            mask[j] = draw
        if recording:
            rec_draws[t - 1] = draw
        # leader relabels once the probe has gone off
        if i == leader and li == LAB_UBAR and mui == NONE and mi == NONE and fired == 1 and outi == NONE:
            lab[i] = LAB_U
            mu[i] = 0
            clean = 1 if n_u == 0 else 0
            n_u += 1
            r4_step = t
        # phase clock, from pre-interaction values
        pi_, ri, pj, rj = phase[i], rnd[i], phase[j], rnd[j]
        npi, nri, npj, nrj = pi_, ri, pj, rj
        if i == leader:
            if pj == pi_ and rj == ri:
                npi = pi_ + 1
                if npi == m:
                    npi = 0
                    nri = ri + 1
        elif rj > ri or (rj == ri and pj > pi_):
            npi, nri = pj, rj
        if j == leader:
            if pj == pi_ and rj == ri:
                npj = pj + 1
                if npj == m:
                    npj = 0
                    nrj = rj + 1
        elif ri > rj or (ri == rj and pi_ > pj):
            npj, nrj = pi_, ri
        phase[i], rnd[i], phase[j], rnd[j] = npi, nri, npj, nrj
        if leader == i or leader == j:
            if rnd[leader] > (ri if leader == i else rj):
                old = ri if leader == i else rj
                live = z[leader] if zr[leader] == old else 0
                if live == 1:
                    fired = 1
                z[leader] = 1
                zr[leader] = rnd[leader]
        # probe: initiator -> responder, same round only
        if nri == nrj:
            x = z[i] if zr[i] == nri else 0
            y = z[j] if zr[j] == nrj else 0
            if lj != LAB_U:
                if x > y:
                    y = x
            elif x > 0:
                y = 2
            z[j] = y
            zr[j] = nrj
        # broadcast
        if out[i] == NONE:
            if outj != NONE:
                out[i] = outj
        elif outj != NONE and outj != out[i]:
            violation = BROADCAST_CLASH
            break
        if out[j] == NONE:
            if outi != NONE:
                out[j] = outi
        elif outi != NONE and outi != out[j]:
            violation = BROADCAST_CLASH
            break
        if out[i] != NONE and outi == NONE:
            n_out += 1
        if out[j] != NONE and outj == NONE:
            n_out += 1
    return t, n_out == n, answer, clean, r4_step, agg_step, nobs, first_partner, violation


@njit(cache=True)
def alg3_kernel(inputs, leader, k, m, budget, seeds, adversary, prefix, record_trial):
    trials, n = inputs.shape
    steps = np.zeros(trials, np.int64)
    converged = np.zeros(trials, np.bool_)
    answer = np.zeros(trials, np.int64)
    clean = np.zeros(trials, np.int64)
    r4_step = np.zeros(trials, np.int64)
    agg_step = np.zeros(trials, np.int64)
    nobs = np.zeros(trials, np.int64)
    first_partner = np.zeros(trials, np.int64)
    violation = np.zeros(trials, np.int64)
    obs = np.full((trials, prefix, 3), -9, np.int64)
    rec_len = budget if record_trial >= 0 else 1
    rec_pairs = np.zeros((rec_len, 2), np.int64)
    rec_draws = np.full(rec_len, NONE, np.int64)
    rec_init = np.zeros(n + 1, np.int64)
    for t in range(trials):
        np.random.seed(seeds[t])
        res = _alg3_trial(
            inputs[t], leader, k, m, budget, adversary, obs[t], rec_pairs, rec_draws, rec_init, t == record_trial
        )
        steps[t] = res[0]
        converged[t] = res[1]
        answer[t] = res[2]
        clean[t] = res[3]
        r4_step[t] = res[4]
        agg_step[t] = res[5]
        nobs[t] = res[6]
        first_partner[t] = res[7]
        violation[t] = res[8]
    return (
        steps, converged, answer, clean, r4_step, agg_step, nobs, first_partner, violation, obs,
        rec_pairs, rec_draws, rec_init,
    )


# ---------------------------------------------------------------------------
# unit-transfer Remainder (fully visible states)

BOT0, BOT1 = -1, -2


@njit(cache=True)
def _alg1_stable(v, r):
    holder = -1
    count = 0
    for a in range(v.shape[0]):
        if v[a] >= 0:
            holder = v[a]
            count += 1
    if count != 1:
        return False
    want = BOT1 if holder == r else BOT0
    for a in range(v.shape[0]):
        if v[a] < 0 and v[a] != want:
            return False
    return True


@njit(cache=True)
def _alg1_trial(inputs, k, r, p_m1, budget, adversary, obs, stop_on_prefix, rec_pairs, rec_coins, recording):
    n = inputs.shape[0]
    prefix = obs.shape[0]
    v = inputs.copy()
    f = np.ones(n, np.int64)
    nobs = 0
    first_partner = -1
    t = 0
    done = False
    while t < budget:
        if stop_on_prefix and nobs >= prefix:
            break
        i, j = _pair(n)
        t += 1
        if recording:
            rec_pairs[t - 1, 0] = i
            rec_pairs[t - 1, 1] = j
        v1, f1, v2, f2 = v[i], f[i], v[j], f[j]
        if i == adversary or j == adversary:
            if first_partner < 0:
                first_partner = j if i == adversary else i
            if nobs < prefix:
                if i == adversary:
                    obs[nobs, 0] = 0
                    obs[nobs, 1] = v2
                    obs[nobs, 2] = f2
                else:
                    obs[nobs, 0] = 1
                    obs[nobs, 1] = v1
                    obs[nobs, 2] = f1
            nobs += 1
        num1 = v1 >= 0
        num2 = v2 >= 0
        coin = 1.0
        if f1 == 1 and f2 == 1 and num1 and num2:
            coin = np.random.random()
            if recording:
                rec_coins[t - 1] = coin
        if f1 == 1 and f2 == 1 and num1 and num2 and coin < p_m1:
            v[i] = (v1 + 1) % k
            v[j] = (v2 - 1) % k
        elif f1 == 1:
            f[i] = 0
        elif f2 == 1:
            f[i] = 1
        elif num1 and num2 and v2 != 0:
            v[i] = (v1 + v2) % k
            v[j] = 0
        elif num1 and v2 == 0:
            v[j] = BOT0
        elif num1 and v2 < 0:
            v[j] = BOT1 if v1 == r else BOT0
        if not stop_on_prefix and t % n == 0 and _alg1_stable(v, r):
            done = True
            break
    holder = -1
    for a in range(n):
        if v[a] >= 0:
            holder = v[a]
    return t, done, holder, nobs, first_partner


@njit(cache=True)
def alg1_kernel(inputs, k, r, p_m1, budget, seeds, adversary, prefix, stop_on_prefix, record_trial):
    trials, n = inputs.shape
    steps = np.zeros(trials, np.int64)
    converged = np.zeros(trials, np.bool_)
    holder = np.zeros(trials, np.int64)
    nobs = np.zeros(trials, np.int64)
    first_partner = np.zeros(trials, np.int64)
    obs = np.full((trials, prefix, 3), -9, np.int64)
    rec_len = budget if record_trial >= 0 else 1
    rec_pairs = np.zeros((rec_len, 2), np.int64)
    rec_coins = np.full(rec_len, -1.0)
    for t in range(trials):
        np.random.seed(seeds[t])
        res = _alg1_trial(
            inputs[t], k, r, p_m1, budget, adversary, obs[t], stop_on_prefix, rec_pairs, rec_coins, t == record_trial
        )
        steps[t] = res[0]
        converged[t] = res[1]
        holder[t] = res[2]
        nobs[t] = res[3]
        first_partner[t] = res[4]
    return steps, converged, holder, nobs, first_partner, obs, rec_pairs, rec_coins


# ---------------------------------------------------------------------------
# secure transfer


@njit(cache=True)
def p2p_kernel(n, k, mu, n_unvisited, seeds, budget):
    """Sender is agent 0; agents ``1..n_unvisited`` are eligible receivers.

    Per trial returns the recovered secret, the steps taken, the first mask
    anyone saw on the Sender, the masked value it published after choosing
    a Receiver, and (pooled over trials) a histogram of the mask the Sender
    showed in each interaction while searching.
    """
    trials = seeds.shape[0]
    recovered = np.full(trials, NONE, np.int64)
    steps = np.zeros(trials, np.int64)
    first_mask = np.full(trials, NONE, np.int64)
    handoff = np.full(trials, NONE, np.int64)
    search_hist = np.zeros(k, np.int64)
    sec = np.empty(n, np.int64)
    mask = np.empty(n, np.int64)
    lab = np.empty(n, np.int64)
    for t in range(trials):
        np.random.seed(seeds[t])
        for a in range(n):
            mask[a] = np.random.randint(0, k)
            sec[a] = NONE
            lab[a] = LAB_U if 1 <= a <= n_unvisited else LAB_UBAR
        sec[0] = mu
        lab[0] = LAB_S
        sender = 0
        s = 0
        while s < budget:
            i, j = _pair(n)
            s += 1
            if i == sender or j == sender:
                # every S interaction refreshes, so each shown mask is a new draw
                if lab[sender] == LAB_S:
                    search_hist[mask[sender]] += 1
                if first_mask[t] == NONE:
                    first_mask[t] = mask[sender]
            li, lj = lab[i], lab[j]
            if li == LAB_S:
                if lj == LAB_U:
                    sec[j] = mask[i]
                    mask[i] = (sec[i] - mask[i]) % k
                    sec[i] = NONE
                    lab[i] = LAB_SP
                    lab[j] = LAB_R
                    handoff[t] = mask[i]
                else:
                    mask[i] = np.random.randint(0, k)
            elif li == LAB_SP and lj == LAB_R:
                sec[j] = (mask[i] + sec[j]) % k
                mask[i] = NONE
                lab[i] = LAB_UBAR
                mask[j] = np.random.randint(0, k)
                lab[j] = LAB_S
                recovered[t] = sec[j]
                break
            if lj == LAB_S:
                mask[j] = np.random.randint(0, k)
        steps[t] = s
    return recovered, steps, first_mask, handoff, search_hist


# ---------------------------------------------------------------------------
# probe under a phase clock or a fixed-length timer


@njit(cache=True)
def probe_kernel(n, m, rounds, seed, timer_len, p_some, burn_in):
    """Run the probe for ``rounds`` measured rounds with agent 0 as leader.

    At each round start a fresh ground truth is drawn: with probability
    ``p_some`` one random non-leader satisfies the predicate, otherwise
    nobody does.  ``timer_len > 0`` replaces the phase clock by an exact
    global timer of that many steps per round.  Returns per-round truth,
    the leader's outcome code (1 none, 2 some, 0 inconclusive) and length.
    """
    np.random.seed(seed)
    total = rounds + burn_in
    truth = np.zeros(total, np.int64)
    outcome = np.zeros(total, np.int64)
    length = np.zeros(total, np.int64)
    phase = np.zeros(n, np.int64)
    rnd = np.zeros(n, np.int64)
    z = np.zeros(n, np.int64)
    zr = np.zeros(n, np.int64)
    sat = np.zeros(n, np.bool_)
    z[0] = 1
    cur = 0
    if np.random.random() < p_some:
        sat[np.random.randint(1, n)] = True
        truth[0] = 1
    t = 0
    start = 0
    while cur < total:
        i, j = _pair(n)
        t += 1
        wrapped = False
        if timer_len > 0:
            if t % timer_len == 0:
                wrapped = True
                nri = nrj = cur
        else:
            pi_, ri, pj, rj = phase[i], rnd[i], phase[j], rnd[j]
            npi, nri, npj, nrj = pi_, ri, pj, rj
            if i == 0:
                if pj == pi_ and rj == ri:
                    npi = pi_ + 1
                    if npi == m:
                        npi = 0
                        nri = ri + 1
                        wrapped = True
            elif rj > ri or (rj == ri and pj > pi_):
                npi, nri = pj, rj
            if j == 0:
                if pj == pi_ and rj == ri:
                    npj = pj + 1
                    if npj == m:
                        npj = 0
                        nrj = rj + 1
                        wrapped = True
            elif ri > rj or (ri == rj and pi_ > pj):
                npj, nrj = pi_, ri
            phase[i], rnd[i], phase[j], rnd[j] = npi, nri, npj, nrj
        if wrapped:
            live = z[0] if zr[0] == cur else 0
            outcome[cur] = live
            length[cur] = t - start
            start = t
            cur += 1
            if cur >= total:
                break
            sat[:] = False
            if np.random.random() < p_some:
                sat[np.random.randint(1, n)] = True
                truth[cur] = 1
            z[0] = 1
            zr[0] = cur
            if timer_len > 0:
                continue
        if timer_len > 0:
            nri = nrj = cur
            rnd[i] = cur
            rnd[j] = cur
        if nri == nrj:
            x = z[i] if zr[i] == nri else 0
            y = z[j] if zr[j] == nrj else 0
            if not sat[j]:
                if x > y:
                    y = x
            elif x > 0:
                y = 2
            z[j] = y
            zr[j] = nrj
    return truth[burn_in:], outcome[burn_in:], length[burn_in:]
