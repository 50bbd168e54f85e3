"""
Who did I just meet?
====================

An adversary agent waits for its first interaction and guesses the
partner's input from what the partner shows.  Under the plain aggregation
protocol a partner that has not met anybody yet shows its raw input; the
masked protocol shows a uniformly random mask instead.
"""

from poppriv import privacy_lab

n, trials = 10, 20_000

# chance that the first partner is still untouched
print(f"P(fresh partner), n={n}: {privacy_lab.freshness_probability(n):.4f}")

# %%
# Same attack, both protocols, two moduli.
for protocol in ("alg1", "alg3"):
    for k in (2, 4):
        rep = privacy_lab.first_partner_attack(protocol, n, k, trials, seed=k)
        print(
            f"{protocol} k={k}: accuracy {rep.accuracy:.3f} vs baseline {rep.baseline:.3f}"
            f" ({rep.details['margin_se']:+.1f} se) -> {rep.verdict}"
        )

# %%
# A uniform guesser calibrates the binomial test: it should sit on the baseline.
rep = privacy_lab.first_partner_attack("alg1", n, 4, trials, seed=9, guesser="uniform")
print(f"uniform guesser: accuracy {rep.accuracy:.3f} -> {rep.verdict}")

# %%
# Two input vectors with equal sums and the same adversary input.  Any
# difference in the adversary's view distribution is leakage.
i1 = [0, 1, 3, 0, 0, 0, 0, 0]
i2 = [0, 2, 2, 0, 0, 0, 0, 0]
for protocol in ("alg1", "alg3"):
    rep = privacy_lab.view_distribution_test(protocol, i1, i2, 4, trials, seed=3)
    print(f"{protocol} view test: TV {rep.tv_distance:.4f}, null threshold {rep.details['threshold']:.4f} -> {rep.verdict}")
