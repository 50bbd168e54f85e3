"""
Probing with a phase clock versus a fixed timer
===============================================

The leader asks "does anybody satisfy the predicate?" once per round.  With
a fixed timer of d n ln n steps the answer is only right when d is large
enough for the signal to spread; the phase clock adapts on its own.
"""

import numpy as np

from poppriv import montecarlo

n, rounds = 32, 5000

clock = montecarlo.probe_bench(n, rounds, seed=0)
print(f"phase clock m=8: accuracy {clock.accuracy:.4f}, mean round {clock.length.mean():.0f} steps"
      f" = {clock.length.mean() / (n * np.log(n)):.2f} n ln n")

# %%
for d in (0.5, 1, 2, 4, 8):
    bench = montecarlo.probe_bench(n, rounds, seed=1, d=d)
    print(f"timer d={d:<3}: {montecarlo.timer_length(n, d):6d} steps, accuracy {bench.accuracy:.4f}")

# %%
# Clock length m trades round length against early wraps.
for m in (4, 6, 8, 12):
    bench = montecarlo.probe_bench(n, rounds, seed=2, m=m)
    print(f"m={m:2d}: accuracy {bench.accuracy:.4f}, mean round {bench.length.mean():.0f}")
