"""
How long does the masked protocol take?
=======================================

Median steps to full dissemination for growing populations, a power-law
fit, and the exact mean time of the token tour that dominates it.
"""

import numpy as np

from poppriv import montecarlo

ns = [8, 16, 32, 64]
rows = montecarlo.convergence_sweep(ns, k=3, trials=100, seed=1)

print(" n    median        q1        q3  unconverged")
for row in rows:
    print(f"{row.n:2d} {row.median:9.0f} {row.q1:9.0f} {row.q3:9.0f} {row.unconverged:12d}")

# %%
medians = [row.median for row in rows]
alpha, c = montecarlo.fit_exponent(ns, medians)
alpha_log, c_log = montecarlo.fit_exponent(ns, medians, log_factor=True)
print(f"steps ~ {c:.2f} n^{alpha:.2f}")
print(f"steps ~ {c_log:.2f} n^{alpha_log:.2f} ln n")

# %%
# The token must visit every agent.  Each hop waits for the sender to find
# an unvisited agent and then for the handoff pair to meet again, which
# gives a closed form for the mean tour length.
for n, med in zip(ns, medians):
    tour = montecarlo.expected_aggregation_steps(n)
    print(f"n={n:2d}: mean tour {tour:9.0f}  tour/median {tour / med:.2f}  tour/(n^3 ln n) {tour / (n**3 * np.log(n)):.3f}")

# Doubling ratios stay below 8 at these sizes because the n^2 ln n term of
# the tour is still comparable to the n^3 term.
print("doubling ratios:", np.round(np.array(medians[1:]) / medians[:-1], 2))
