"""Statistical privacy laboratory.

A designated semi-honest agent (the adversary, agent 0 by default) records
what it sees; these functions turn many such views into distinguishers:

* :func:`first_partner_attack` -- guess the first partner's input from the
  first observed message, scored against the ``1/k`` prior;
* :func:`view_distribution_test` -- total variation between the
  adversary's view features under two input vectors with the same output,
  judged against a label-permutation null;
* :func:`chi_square_uniform` -- uniformity of visible values.

A "leaks" verdict is evidence of leakage; "no-evidence" is only that.
"""

from __future__ import annotations

import csv
import io
import json
import math
from collections import Counter
from dataclasses import asdict, dataclass, field
from typing import Any, Iterable, Mapping, Sequence

import numpy as np
from scipy import stats

from . import __version__, montecarlo
from .protocols import alg3
from .rng import Streams

LEAKS = "leaks"
NO_EVIDENCE = "no-evidence"

MIN_ATTACK_TRIALS = 1000
NULL_QUANTILE = 0.999
NULL_PERMUTATIONS = 999
CHI2_ALPHA = 0.001


class InsufficientSamplesError(ValueError):
    pass


class InvalidExperimentError(ValueError):
    pass


# ---------------------------------------------------------------------------
# containers


@dataclass
class Histogram:
    """Counts over a discrete feature space."""

    bins: dict = field(default_factory=dict)

    def __post_init__(self):
        if any(c < 0 for c in self.bins.values()):
            raise ValueError("negative count")

    @classmethod
    def from_samples(cls, samples: Iterable) -> "Histogram":
        return cls(dict(Counter(_hashable(s) for s in samples)))

    @property
    def total(self) -> int:
        return int(sum(self.bins.values()))

    def probabilities(self) -> dict:
        total = self.total
        if total == 0:
            raise InsufficientSamplesError("empty histogram")
        return {b: c / total for b, c in self.bins.items()}

    def merge(self, other: "Histogram") -> "Histogram":
        out = Counter(self.bins)
        out.update(other.bins)
        return Histogram(dict(out))

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["feature", "count"])
        for b in sorted(self.bins, key=repr):
            writer.writerow([b, self.bins[b]])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text


def _hashable(x):
    if isinstance(x, np.ndarray):
        return tuple(x.tolist())
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, list):
        return tuple(x)
    return x


@dataclass
class AttackReport:
    protocol: str
    n: int
    k: int
    trials: int
    accuracy: float
    baseline: float
    tv_distance: float
    verdict: str
    details: dict = field(default_factory=dict)
    # feature histograms behind a view-distribution test; not serialized
    histograms: tuple | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        for name in ("accuracy", "baseline", "tv_distance"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name}={value} outside [0, 1]")
        if self.verdict not in (LEAKS, NO_EVIDENCE):
            raise ValueError(f"unknown verdict {self.verdict!r}")

    @property
    def leaks(self) -> bool:
        return self.verdict == LEAKS

    def to_dict(self) -> dict:
        d = asdict(self)
        del d["histograms"]
        d["version"] = __version__
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, default=_jsonable)


def _jsonable(x):
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(type(x))


# ---------------------------------------------------------------------------
# freshness


def freshness_probability(n: int) -> float:
    """Chance that the adversary's first partner is also interacting for the first time.

    For a fixed agent B, the first step touching the adversary or B
    involves both of them with probability ``2 / (2 + 4(n-2))``; these
    events are disjoint over the ``n-1`` choices of B.
    """
    if n < 2:
        raise ValueError("need at least two agents")
    return (n - 1) / (2 * n - 3)


# ---------------------------------------------------------------------------
# distinguishers


def binomial_verdict(successes: int, trials: int, p0: float, z: float = 3.0) -> tuple[float, float, str]:
    """One-sided test of ``accuracy > p0`` at ``z`` null standard errors.

    Returns ``(accuracy, stderr, verdict)``.
    """
    if trials <= 0:
        raise InsufficientSamplesError("no trials")
    acc = successes / trials
    se = math.sqrt(p0 * (1 - p0) / trials)
    return acc, se, LEAKS if acc - p0 > z * se else NO_EVIDENCE


def total_variation(h1: Histogram | Mapping, h2: Histogram | Mapping) -> float:
    """Half the L1 distance between two empirical distributions."""
    h1 = h1 if isinstance(h1, Histogram) else Histogram(dict(h1))
    h2 = h2 if isinstance(h2, Histogram) else Histogram(dict(h2))
    p, q = h1.probabilities(), h2.probabilities()
    return 0.5 * sum(abs(p.get(b, 0.0) - q.get(b, 0.0)) for b in set(p) | set(q))


def _tv_counts(c1: np.ndarray, c2: np.ndarray) -> float:
    return 0.5 * float(np.abs(c1 / c1.sum() - c2 / c2.sum()).sum())


def permutation_tv_test(
    x: Sequence,
    y: Sequence,
    rng: np.random.Generator,
    permutations: int = NULL_PERMUTATIONS,
    quantile: float = NULL_QUANTILE,
) -> dict:
    """TV distance between two samples with a label-shuffling null.

    The verdict is "leaks" iff the observed distance exceeds the
    ``quantile`` of the distances obtained by randomly reassigning the
    pooled samples to the two groups.
    """
    x = np.asarray(x)
    y = np.asarray(y)
    if len(x) == 0 or len(y) == 0:
        raise InsufficientSamplesError("empty sample")
    pooled = np.concatenate([x, y])
    _, codes = np.unique(pooled, return_inverse=True, axis=0 if pooled.ndim > 1 else None)
    codes = codes.ravel()
    width = int(codes.max()) + 1
    total = np.bincount(codes, minlength=width)
    n1 = len(x)

    def tv(sel):
        c1 = np.bincount(sel, minlength=width)
        return _tv_counts(c1, total - c1)

    observed = tv(codes[:n1])
    null = np.array([tv(codes[rng.permutation(len(codes))[:n1]]) for _ in range(permutations)])
    # "higher" keeps the false-alarm rate at or below 1 - quantile under exchangeability
    threshold = float(np.quantile(null, quantile, method="higher"))
    p_value = (1 + int((null >= observed).sum())) / (permutations + 1)
    return {
        "tv_distance": observed,
        "threshold": threshold,
        "p_value": p_value,
        "verdict": LEAKS if observed > threshold else NO_EVIDENCE,
    }


def chi_square_counts(counts: Sequence[int]) -> tuple[float, float]:
    """Pearson statistic of ``counts`` against uniform and its upper-tail p-value."""
    counts = np.asarray(counts, dtype=float)
    k = len(counts)
    total = counts.sum()
    if k < 2:
        raise ValueError("need at least two categories")
    if total < 10 * k:
        raise InsufficientSamplesError(f"{int(total)} samples, need {10 * k}")
    expected = total / k
    stat = float(((counts - expected) ** 2).sum() / expected)
    return stat, float(stats.chi2.sf(stat, k - 1))


def chi_square_uniform(samples: Sequence[int], k: int) -> tuple[float, float]:
    """Chi-square goodness of fit of ``samples`` to the uniform law on ``Z_k``."""
    samples = np.asarray(samples, dtype=np.int64)
    if samples.size and (samples.min() < 0 or samples.max() >= k):
        raise ValueError(f"samples outside Z_{k}")
    return chi_square_counts(np.bincount(samples, minlength=k))


# ---------------------------------------------------------------------------
# view features


def view_features(obs: np.ndarray, k: int, protocol: str) -> np.ndarray:
    """Encode each trial's observation prefix as a single integer.

    ``obs`` has shape ``(trials, prefix, 3)``; missing observations
    (``-9``) get their own symbol.
    """
    role, a, b = obs[..., 0], obs[..., 1], obs[..., 2]
    if protocol == "alg3":
        # mask in {-1..k-1}, label code 0..4
        symbol = 1 + (role * (k + 1) + a + 1) * 5 + b
        base = 1 + 2 * (k + 1) * 5
    elif protocol == "alg1":
        # v in {-2..k-1}, flag 0/1
        symbol = 1 + (role * (k + 2) + a + 2) * 2 + b
        base = 1 + 2 * (k + 2) * 2
    else:
        raise ValueError(f"unknown protocol {protocol!r}")
    symbol = np.where(role < 0, 0, symbol).astype(np.int64)
    code = np.zeros(obs.shape[0], np.int64)
    for p in range(obs.shape[1]):
        code = code * base + symbol[:, p]
    return code


def _run_views(protocol: str, inputs: np.ndarray, k: int, r: int, seed: int, adversary: int, prefix: int, m, p_m1, leader):
    """Adversary observation prefixes for each input row; Alg. 3 keeps successful runs only."""
    if protocol == "alg1":
        b = montecarlo.alg1_batch(inputs, k, r, p_m1=p_m1, seed=seed, adversary=adversary, prefix=prefix)
        return b.obs, b.first_partner, np.ones(len(inputs), bool)
    if protocol == "alg3":
        if leader == adversary:
            raise InvalidExperimentError("the adversary cannot be the leader")
        b = montecarlo.alg3_batch(
            inputs, k, m=m or alg3.DEFAULT_M, leader=leader, seed=seed, adversary=adversary, prefix=prefix
        )
        b.raise_on_violation()
        return b.obs, b.first_partner, b.success
    raise InvalidExperimentError(f"unknown protocol {protocol!r}")


def first_partner_attack(
    protocol: str,
    n: int,
    k: int,
    trials: int,
    seed: int = 0,
    *,
    r: int = 0,
    adversary: int = 0,
    adversary_input: int = 0,
    guesser: str = "observed",
    m: int | None = None,
    p_m1: float = 0.5,
    leader: int = 1,
) -> AttackReport:
    """Guess the first partner's input from the first observed message.

    Inputs are i.i.d. uniform on ``Z_k`` except the adversary's, which is
    fixed.  Under Alg. 1 the guess is the partner's visible value; under
    Alg. 3 it is the partner's visible mask (0 when empty).
    ``guesser="uniform"`` ignores the view and guesses at random, which
    calibrates the test.
    """
    if trials < MIN_ATTACK_TRIALS:
        raise InsufficientSamplesError(f"{trials} trials, need {MIN_ATTACK_TRIALS}")
    if guesser not in ("observed", "uniform"):
        raise ValueError(f"unknown guesser {guesser!r}")
    inputs = montecarlo.random_inputs(trials, n, k, seed, "attack-inputs")
    inputs[:, adversary] = adversary_input
    obs, partner, keep = _run_views(protocol, inputs, k, r, seed, adversary, 1, m, p_m1, leader)
    truth = inputs[np.arange(trials), partner]
    if guesser == "uniform":
        guess = Streams(seed).named("uniform-guesser").integers(0, k, size=trials)
    else:
        guess = np.where(obs[:, 0, 1] >= 0, obs[:, 0, 1], 0)
    guess, truth = guess[keep], truth[keep]
    used = int(keep.sum())
    if used < MIN_ATTACK_TRIALS:
        raise InsufficientSamplesError(f"only {used} usable runs")
    acc, se, verdict = binomial_verdict(int((guess == truth).sum()), used, 1.0 / k)
    error = np.bincount((truth - guess) % k, minlength=k) / used
    tv = 0.5 * float(np.abs(error - 1.0 / k).sum())
    return AttackReport(
        protocol, n, k, used, acc, 1.0 / k, tv, verdict,
        {"stderr": se, "margin_se": (acc - 1.0 / k) / se, "guesser": guesser, "requested_trials": trials},
    )


def view_distribution_test(
    protocol: str,
    inputs1: Sequence[int],
    inputs2: Sequence[int],
    k: int,
    trials: int,
    seed: int = 0,
    *,
    r: int = 0,
    adversary: int = 0,
    prefix: int = 2,
    m: int | None = None,
    p_m1: float = 0.5,
    leader: int = 1,
    permutations: int = NULL_PERMUTATIONS,
) -> AttackReport:
    """Compare the adversary's view prefixes under two input vectors.

    The vectors must agree on the adversary's input and on the sum mod
    ``k`` (hence on the output), so any distinguishable difference is
    leakage.  ``accuracy`` is the in-sample accuracy of the best guess of
    which vector produced a view, ``(1 + TV) / 2``.
    """
    i1 = np.asarray(inputs1, dtype=np.int64)
    i2 = np.asarray(inputs2, dtype=np.int64)
    if i1.shape != i2.shape or i1.ndim != 1:
        raise InvalidExperimentError("input vectors must have the same length")
    if i1[adversary] != i2[adversary]:
        raise InvalidExperimentError("input vectors disagree on the adversary's input")
    if i1.sum() % k != i2.sum() % k:
        raise InvalidExperimentError("input vectors have different outputs")
    if ((i1 < 0) | (i1 >= k) | (i2 < 0) | (i2 >= k)).any():
        raise InvalidExperimentError(f"inputs outside Z_{k}")
    if trials < MIN_ATTACK_TRIALS:
        raise InsufficientSamplesError(f"{trials} trials, need {MIN_ATTACK_TRIALS}")
    feats = []
    for tag, vec in ((1, i1), (2, i2)):
        rows = np.tile(vec, (trials, 1))
        obs, _, keep = _run_views(protocol, rows, k, r, seed * 7 + tag, adversary, prefix, m, p_m1, leader)
        feats.append(view_features(obs[keep], k, protocol))
    test = permutation_tv_test(feats[0], feats[1], Streams(seed).named("permutation"), permutations)
    tv = test["tv_distance"]
    return AttackReport(
        protocol, len(i1), k, int(min(len(feats[0]), len(feats[1]))), (1 + tv) / 2, 0.5, tv, test["verdict"],
        {
            "threshold": test["threshold"],
            "p_value": test["p_value"],
            "prefix": prefix,
            "samples": [len(feats[0]), len(feats[1])],
            "inputs1": i1.tolist(),
            "inputs2": i2.tolist(),
        },
        histograms=tuple(Histogram(dict(zip(*map(np.ndarray.tolist, np.unique(f, return_counts=True))))) for f in feats),
    )


def p2p_uniformity(n: int, k: int, mu: int, trials: int, seed: int = 0) -> dict[str, Any]:
    """Delivery rate and chi-square uniformity of each class of Sender-visible value."""
    b = montecarlo.p2p_batch(n, k, mu, trials, seed)
    classes = {
        "first_mask": np.bincount(b.first_mask[b.first_mask >= 0], minlength=k),
        "handoff": np.bincount(b.handoff[b.handoff >= 0], minlength=k),
        "search_masks": b.search_counts,
    }
    tests = {}
    for name, counts in classes.items():
        stat, p = chi_square_counts(counts)
        tests[name] = {"statistic": stat, "p_value": p, "samples": int(counts.sum()), "uniform": p > CHI2_ALPHA}
    return {
        "n": n,
        "k": k,
        "mu": mu,
        "trials": trials,
        "delivery_rate": float(b.delivered.mean()),
        "uniformity": tests,
        "verdict": NO_EVIDENCE if all(t["uniform"] for t in tests.values()) else LEAKS,
    }


# ---------------------------------------------------------------------------
# null calibration


def null_false_positive_rates(reps: int = 500, seed: int = 0, samples: int = 5000, k: int = 4) -> dict[str, float]:
    """How often each distinguisher says "leaks" when both sides share one law.

    * binomial: a uniform guesser against uniform truths;
    * permutation TV: two samples from the same skewed law on 64 features;
    * chi-square: uniform samples on ``Z_k``.
    """
    rng = Streams(seed).named("null-calibration")
    weights = rng.dirichlet(np.ones(64))
    hits = Counter()
    for _ in range(reps):
        guess = rng.integers(0, k, samples)
        truth = rng.integers(0, k, samples)
        hits["first_partner"] += binomial_verdict(int((guess == truth).sum()), samples, 1 / k)[2] == LEAKS
        x = rng.choice(64, samples, p=weights)
        y = rng.choice(64, samples, p=weights)
        hits["view_distribution"] += permutation_tv_test(x, y, rng)["verdict"] == LEAKS
        hits["chi_square"] += chi_square_uniform(rng.integers(0, k, samples), k)[1] <= CHI2_ALPHA
    return {name: hits[name] / reps for name in ("first_partner", "view_distribution", "chi_square")}
