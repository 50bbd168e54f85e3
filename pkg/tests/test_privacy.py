import json
from fractions import Fraction

import numpy as np
import pytest

from poppriv import montecarlo, privacy_lab
from poppriv.privacy_lab import (
    LEAKS,
    NO_EVIDENCE,
    AttackReport,
    Histogram,
    InsufficientSamplesError,
    InvalidExperimentError,
)


# ---------------------------------------------------------------------------
# freshness


def test_freshness_closed_form_values():
    assert privacy_lab.freshness_probability(2) == 1.0
    assert privacy_lab.freshness_probability(3) == pytest.approx(2 / 3)
    assert privacy_lab.freshness_probability(10) == pytest.approx(9 / 17)


def test_freshness_above_half_and_tends_to_half():
    values = [privacy_lab.freshness_probability(n) for n in range(2, 2000)]
    assert all(v > 0.5 for v in values)
    assert all(a >= b for a, b in zip(values, values[1:]))
    assert values[-1] - 0.5 < 1e-3


def exact_freshness(n):
    """Absorption probability of the touched-count chain, in exact arithmetic."""
    m = n - 1  # agents other than the adversary
    pairs = n * (n - 1)
    memo = {}

    def fresh(t):
        # t of the m others have already interacted
        if t in memo:
            return memo[t]
        p_adv = Fraction(2 * m, pairs)
        hit = p_adv * Fraction(m - t, m)
        both_new = Fraction((m - t) * (m - t - 1), pairs)
        one_new = Fraction(2 * t * (m - t), pairs)
        stay = 1 - p_adv - both_new - one_new
        value = hit
        if both_new:
            value += both_new * fresh(t + 2)
        if one_new:
            value += one_new * fresh(t + 1)
        memo[t] = value / (1 - stay)
        return memo[t]

    return fresh(0)


@pytest.mark.parametrize("n", range(2, 10))
def test_freshness_matches_exact_chain(n):
    assert exact_freshness(n) == Fraction(n - 1, 2 * n - 3)
    assert privacy_lab.freshness_probability(n) == pytest.approx(float(exact_freshness(n)))


def test_freshness_rejects_tiny_population():
    with pytest.raises(ValueError):
        privacy_lab.freshness_probability(1)


@pytest.mark.parametrize("n", [2, 4, 25])
def test_freshness_monte_carlo(n):
    est = montecarlo.freshness_estimate(n, 100_000, seed=n)
    assert abs(est - privacy_lab.freshness_probability(n)) < 0.005


# ---------------------------------------------------------------------------
# histograms and TV


def test_tv_identical_is_zero():
    h = Histogram({"a": 3, "b": 7})
    assert privacy_lab.total_variation(h, h) == 0


def test_tv_disjoint_is_one():
    assert privacy_lab.total_variation({"a": 5}, {"b": 2}) == 1


def test_tv_half():
    assert privacy_lab.total_variation({"a": 50, "b": 50}, {"a": 100}) == pytest.approx(0.5)


def test_tv_empty_histogram():
    with pytest.raises(InsufficientSamplesError):
        privacy_lab.total_variation({}, {"a": 1})


def test_histogram_merge_and_csv(tmp_path):
    h = Histogram.from_samples([1, 1, 2]).merge(Histogram.from_samples([2, 3]))
    assert h.bins == {1: 2, 2: 2, 3: 1}
    assert h.total == 5
    text = h.to_csv(tmp_path / "h.csv")
    assert text.splitlines() == ["feature,count", "1,2", "2,2", "3,1"]
    assert (tmp_path / "h.csv").read_text() == text


def test_histogram_rejects_negative_counts():
    with pytest.raises(ValueError):
        Histogram({"a": -1})


def test_histogram_from_array_rows():
    h = Histogram.from_samples(np.array([[0, 1], [0, 1], [1, 1]]))
    assert h.bins == {(0, 1): 2, (1, 1): 1}


# ---------------------------------------------------------------------------
# reports


def test_attack_report_bounds_and_json():
    rep = AttackReport("alg1", 10, 2, 1000, 0.7, 0.5, 0.2, LEAKS, {"x": np.float64(1.5)})
    data = json.loads(rep.to_json())
    assert data["verdict"] == LEAKS and data["details"]["x"] == 1.5 and "version" in data
    with pytest.raises(ValueError):
        AttackReport("alg1", 10, 2, 1000, 1.2, 0.5, 0.2, LEAKS)
    with pytest.raises(ValueError):
        AttackReport("alg1", 10, 2, 1000, 0.5, 0.5, 0.2, "maybe")


# ---------------------------------------------------------------------------
# chi-square


def test_chi_square_balanced():
    stat, p = privacy_lab.chi_square_uniform([0, 1, 2, 3] * 100, 4)
    assert stat == 0 and p == 1


def test_chi_square_point_mass():
    stat, p = privacy_lab.chi_square_uniform([2] * 400, 4)
    assert stat == pytest.approx(1200)
    assert p < 1e-100


def test_chi_square_needs_samples():
    with pytest.raises(InsufficientSamplesError):
        privacy_lab.chi_square_uniform([0, 1] * 5, 4)


def test_chi_square_rejects_values_outside_range():
    with pytest.raises(ValueError):
        privacy_lab.chi_square_uniform([0, 4] * 50, 4)


# ---------------------------------------------------------------------------
# binomial and permutation tests


def test_binomial_verdict():
    assert privacy_lab.binomial_verdict(5300, 10_000, 0.5)[2] == LEAKS
    assert privacy_lab.binomial_verdict(5100, 10_000, 0.5)[2] == NO_EVIDENCE
    acc, se, _ = privacy_lab.binomial_verdict(250, 1000, 0.25)
    assert acc == 0.25 and se == pytest.approx(np.sqrt(0.25 * 0.75 / 1000))


def test_permutation_same_sample_no_evidence():
    rng = np.random.default_rng(0)
    x = rng.integers(0, 10, 3000)
    out = privacy_lab.permutation_tv_test(x, x.copy(), rng, permutations=199)
    assert out["tv_distance"] == 0
    assert out["verdict"] == NO_EVIDENCE


def test_permutation_detects_shift():
    rng = np.random.default_rng(1)
    x = rng.integers(0, 10, 3000)
    y = rng.integers(1, 11, 3000)
    out = privacy_lab.permutation_tv_test(x, y, rng, permutations=199)
    assert out["verdict"] == LEAKS and out["p_value"] == pytest.approx(1 / 200)


def test_permutation_empty_sample():
    with pytest.raises(InsufficientSamplesError):
        privacy_lab.permutation_tv_test([], [1, 2], np.random.default_rng(0))


# ---------------------------------------------------------------------------
# attacks


def test_first_partner_needs_trials():
    with pytest.raises(InsufficientSamplesError):
        privacy_lab.first_partner_attack("alg1", 10, 2, 999)


def test_first_partner_uniform_guesser_is_calibrated():
    rep = privacy_lab.first_partner_attack("alg1", 10, 3, 30_000, seed=4, guesser="uniform")
    assert abs(rep.accuracy - 1 / 3) < 3 * rep.details["stderr"] + 1e-12
    assert rep.verdict == NO_EVIDENCE


def test_first_partner_alg1_k2_leaks():
    rep = privacy_lab.first_partner_attack("alg1", 10, 2, 20_000, seed=1)
    assert rep.verdict == LEAKS and rep.accuracy > 0.5
    # a fresh partner shows its input, so the guess is right at least that often
    assert rep.accuracy > privacy_lab.freshness_probability(10) - 3 * rep.details["stderr"]


def test_first_partner_alg3_at_baseline():
    rep = privacy_lab.first_partner_attack("alg3", 8, 4, 20_000, seed=2)
    assert rep.verdict == NO_EVIDENCE
    assert abs(rep.accuracy - 0.25) < 4 * rep.details["stderr"]


def test_unknown_protocol_and_guesser():
    with pytest.raises(InvalidExperimentError):
        privacy_lab.first_partner_attack("alg2", 10, 2, 1000)
    with pytest.raises(ValueError):
        privacy_lab.first_partner_attack("alg1", 10, 2, 1000, guesser="psychic")


def test_view_test_precondition_output_must_agree():
    with pytest.raises(InvalidExperimentError):
        privacy_lab.view_distribution_test("alg1", [0, 1, 0, 0], [0, 2, 0, 0], 4, 1000)


def test_view_test_precondition_adversary_input_must_agree():
    with pytest.raises(InvalidExperimentError):
        privacy_lab.view_distribution_test("alg1", [1, 0, 0, 0], [0, 1, 0, 0], 4, 1000)


def test_view_test_adversary_cannot_lead():
    with pytest.raises(InvalidExperimentError):
        privacy_lab.view_distribution_test("alg3", [0, 1, 0], [0, 0, 1], 3, 1000, leader=0)


def test_view_test_identical_inputs_no_evidence():
    v = [0, 1, 3, 2, 0, 0, 1, 0]
    rep = privacy_lab.view_distribution_test("alg1", v, v, 4, 5000, seed=3, permutations=199)
    assert rep.verdict == NO_EVIDENCE


def test_view_test_alg1_swap_leaks():
    rep = privacy_lab.view_distribution_test(
        "alg1", [0, 1, 3, 0, 0, 0, 0, 0], [0, 2, 2, 0, 0, 0, 0, 0], 4, 10_000, seed=5, permutations=199
    )
    assert rep.verdict == LEAKS
    h1, h2 = rep.histograms
    assert h1.total == h2.total == 10_000
    assert privacy_lab.total_variation(h1, h2) == pytest.approx(rep.tv_distance)


def test_view_features_distinguish_roles_and_missing():
    obs = np.array([[[0, 1, 3], [-9, -9, -9]], [[1, 1, 3], [-9, -9, -9]], [[0, -1, 4], [0, 1, 3]]])
    codes = privacy_lab.view_features(obs, 4, "alg3")
    assert len(set(codes.tolist())) == 3


def test_p2p_uniformity_report():
    out = privacy_lab.p2p_uniformity(6, 4, 3, 20_000, seed=1)
    assert out["delivery_rate"] == 1.0
    assert set(out["uniformity"]) == {"first_mask", "handoff", "search_masks"}
    assert out["verdict"] == NO_EVIDENCE


def test_null_rates_small_run():
    rates = privacy_lab.null_false_positive_rates(reps=20, seed=1, samples=1000)
    assert set(rates) == {"first_partner", "view_distribution", "chi_square"}
    assert all(0 <= r <= 1 for r in rates.values())
