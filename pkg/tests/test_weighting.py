import math

import numpy as np
import pytest

from boundedgp.gp import Dataset, FittedGP, KernelConfig, fit_gp
from boundedgp.rff import SampleSummary, draw_basis, draw_samples, eval_sample
from boundedgp.weighting import (
    ApproxBounds,
    LemmaReport,
    NoAdmissibleSamplesError,
    accept,
    log_weight,
    normalized_weights,
    rank_select,
    verify_variance_lemmas,
    weight,
    weighted_aggregate,
)


def summary(g_min, g_max, w=0.0):
    return SampleSummary(g_max=g_max, g_min=g_min, x_max=np.zeros(1),
                         x_min=np.zeros(1), weight=w)


def test_bounds_validation():
    with pytest.raises(ValueError):
        ApproxBounds()
    with pytest.raises(ValueError):
        ApproxBounds(f_plus=1.0, f_minus=2.0)
    with pytest.raises(ValueError):
        ApproxBounds(f_plus=1.0, eta_plus_sq=0.0)
    b = ApproxBounds(f_plus=1.0, eta_plus_sq=4.0)
    assert b.eta_plus == 2.0


# ---------------------------------------------------------------------------
# weight
# ---------------------------------------------------------------------------


def test_weight_peaks_at_one_over_two_pi():
    b = ApproxBounds(f_plus=2.0, eta_plus_sq=1.0, f_minus=-1.0, eta_minus_sq=1.0)
    assert abs(weight(b, summary(-1.0, 2.0)) - 1.0 / (2 * math.pi)) < 1e-14


def test_weight_collapses_to_univariate():
    b = ApproxBounds(f_plus=2.0, eta_plus_sq=1.0)
    got = weight(b, summary(g_min=-50.0, g_max=3.0))  # g_min is ignored
    expected = math.exp(-0.5) / math.sqrt(2 * math.pi)
    assert abs(got - expected) < 1e-14


def test_weight_is_product_of_univariate_densities():
    rng = np.random.default_rng(0)
    b = ApproxBounds(f_plus=1.5, eta_plus_sq=0.3, f_minus=-2.0, eta_minus_sq=1.7)

    def normpdf(x, mean, var):
        return math.exp(-0.5 * (x - mean) ** 2 / var) / math.sqrt(2 * math.pi * var)

    for _ in range(25):
        g_max = float(rng.normal(1.5, 2.0))
        g_min = float(rng.normal(-2.0, 2.0))
        oracle = normpdf(g_max, 1.5, 0.3) * normpdf(g_min, -2.0, 1.7)
        assert abs(weight(b, summary(g_min, g_max)) - oracle) < 1e-12 * max(oracle, 1.0)


def test_weights_are_shift_equivariant():
    b1 = ApproxBounds(f_plus=1.0, eta_plus_sq=0.5, f_minus=-1.0, eta_minus_sq=0.7)
    c = 13.7
    b2 = ApproxBounds(f_plus=1.0 + c, eta_plus_sq=0.5, f_minus=-1.0 + c, eta_minus_sq=0.7)
    s1 = summary(-0.4, 1.8)
    s2 = summary(-0.4 + c, 1.8 + c)
    assert abs(log_weight(b1, s1) - log_weight(b2, s2)) < 1e-10


# ---------------------------------------------------------------------------
# accept
# ---------------------------------------------------------------------------


def test_accept_band_is_closed():
    b = ApproxBounds(f_plus=1.0, eta_plus_sq=0.25)
    assert accept(b, summary(0.0, 1.0 + 2 * 0.5))        # exactly on the boundary
    assert not accept(b, summary(0.0, 1.0 + 2.01 * 0.5))


def test_accept_requires_every_present_coordinate():
    b = ApproxBounds(f_plus=1.0, eta_plus_sq=0.25, f_minus=-1.0, eta_minus_sq=0.25)
    assert accept(b, summary(-1.2, 1.2))
    assert not accept(b, summary(-3.0, 1.0))
    assert not accept(b, summary(-1.0, 3.0))


def test_batch_acceptance_matches_replay_loop():
    rng = np.random.default_rng(1)
    b = ApproxBounds(f_plus=0.5, eta_plus_sq=0.4, f_minus=-0.5, eta_minus_sq=0.9)
    summaries = [summary(float(g0), float(g0 + abs(g1)))
                 for g0, g1 in rng.normal(0, 1.5, size=(200, 2))]
    count = sum(accept(b, s) for s in summaries)
    replay = 0
    for s in summaries:
        ok = abs(s.g_max - 0.5) <= 2 * math.sqrt(0.4)
        ok = ok and abs(s.g_min + 0.5) <= 2 * math.sqrt(0.9)
        replay += ok
    assert count == replay


def test_accepted_weight_is_within_two_sigma_density_per_coordinate():
    rng = np.random.default_rng(2)
    b = ApproxBounds(f_plus=1.0, eta_plus_sq=0.3, f_minus=-1.5, eta_minus_sq=0.8)
    for _ in range(50):
        s = summary(float(rng.normal(-1.5, 1.0)), float(rng.normal(1.0, 0.6)))
        if not accept(b, s):
            continue
        peak_plus = 1.0 / math.sqrt(2 * math.pi * 0.3)
        peak_minus = 1.0 / math.sqrt(2 * math.pi * 0.8)
        dens_plus = peak_plus * math.exp(-0.5 * (s.g_max - 1.0) ** 2 / 0.3)
        dens_minus = peak_minus * math.exp(-0.5 * (s.g_min + 1.5) ** 2 / 0.8)
        assert dens_plus >= math.exp(-2) * peak_plus - 1e-15
        assert dens_minus >= math.exp(-2) * peak_minus - 1e-15


# ---------------------------------------------------------------------------
# aggregation and selection
# ---------------------------------------------------------------------------


def _toy_samples(m):
    ds = Dataset(X=np.array([[0.3], [0.7]]), y=np.array([0.5, -0.5]),
                 input_lo=[0], input_hi=[1], y_mean=0.0, y_std=1.0)
    gp = fit_gp(ds, KernelConfig(lengthscales=[0.2], noise_variance=1e-4),
                optimize_hypers=False)
    basis = draw_basis(gp, l=40, rng=3)
    return draw_samples(gp, basis, m, rng=4)


def test_aggregate_single_sample_is_identity():
    (s,) = _toy_samples(1)
    x = np.array([0.42])
    assert abs(weighted_aggregate([s], [0.37], x) - eval_sample(s, x)) < 1e-12


def test_aggregate_equal_weights_is_plain_mean():
    samples = _toy_samples(4)
    x = np.array([0.6])
    got = weighted_aggregate(samples, [2.0] * 4, x)
    expected = np.mean([eval_sample(s, x) for s in samples])
    assert abs(got - expected) < 1e-12


def test_aggregate_matches_hand_rolled_convex_combination():
    samples = _toy_samples(3)
    x = np.array([0.25])
    vals = [eval_sample(s, x) for s in samples]
    expected = (1 * vals[0] + 2 * vals[1] + 3 * vals[2]) / 6.0
    assert abs(weighted_aggregate(samples, [1.0, 2.0, 3.0], x) - expected) < 1e-12


def test_aggregate_rejects_zero_weights():
    samples = _toy_samples(2)
    with pytest.raises(NoAdmissibleSamplesError):
        weighted_aggregate(samples, [0.0, 0.0], np.array([0.5]))


def test_normalized_weights_sum_to_one_under_tight_looseness():
    b = ApproxBounds(f_plus=0.0, eta_plus_sq=0.01)
    # raw densities ~exp(-200): representable but far too small to use directly
    summaries = [summary(0.0, 2.0), summary(0.0, 2.001), summary(0.0, 2.1)]
    assert all(weight(b, s) < 1e-80 for s in summaries)
    w = normalized_weights(b, summaries)
    assert abs(w.sum() - 1.0) < 1e-12
    assert w[0] > w[1] > w[2]  # ordering by closeness survives


def test_all_zero_signal_when_bounds_are_inconsistent():
    b = ApproxBounds(f_plus=0.0, eta_plus_sq=1e-6)
    far = [summary(0.0, 0.5), summary(0.0, 0.6)]  # hundreds of sigma away
    assert np.all(normalized_weights(b, far) == 0.0)


def test_ranking_survives_raw_underflow():
    from boundedgp.weighting import attach_weights

    b = ApproxBounds(f_plus=0.0, eta_plus_sq=1e-12)
    summaries = [summary(0.0, 0.5), summary(0.0, 0.4), summary(0.0, 0.9)]
    attach_weights(b, summaries)
    assert rank_select(summaries, 3) == [1, 0, 2]  # closest first


def test_rank_select_orders_and_breaks_ties_by_index():
    summaries = [summary(0, 1, w) for w in (0.1, 0.9, 0.5)]
    assert rank_select(summaries, 2) == [1, 2]
    ties = [summary(0, 1, 0.5) for _ in range(4)]
    assert rank_select(ties, 2) == [0, 1]
    with pytest.raises(ValueError):
        rank_select(ties, 5)


def test_rank_select_agrees_with_full_sort_oracle():
    rng = np.random.default_rng(5)
    w = rng.uniform(size=200)
    summaries = [summary(0, 1, float(x)) for x in w]
    got = rank_select(summaries, 50)
    oracle = sorted(range(200), key=lambda i: (-w[i], i))[:50]
    assert got == oracle


# ---------------------------------------------------------------------------
# variance lemmas
# ---------------------------------------------------------------------------


def test_identical_sets_give_equality():
    rng = np.random.default_rng(6)
    pts = [summary(float(a), float(a + abs(b))) for a, b in rng.normal(size=(20, 2))]
    report = verify_variance_lemmas(pts, pts, pts)
    assert not report.insufficient
    np.testing.assert_allclose(report.var_gp, report.var_wgp)
    assert report.wgp_le_gp and report.wsrgp_le_gp and report.wsrgp_le_wgp


def test_accepted_subset_has_smaller_variance_with_outliers():
    rng = np.random.default_rng(7)
    b = ApproxBounds(f_plus=1.0, eta_plus_sq=0.25, f_minus=-1.0, eta_minus_sq=0.25)
    core = [summary(float(rng.normal(-1.0, 0.3)), float(rng.normal(1.0, 0.3)))
            for _ in range(40)]
    outliers = [summary(-6.0, 6.0), summary(-7.0, 8.0), summary(-5.5, 9.0)]
    full = core + outliers
    accepted = [s for s in full if accept(b, s)]
    report = verify_variance_lemmas(full, accepted, accepted)
    assert report.wgp_le_gp
    # Popoviciu with the two-sigma band: accepted range <= 4 eta per coordinate
    assert np.all(report.var_wgp <= 4.0 * np.array([0.25, 0.25]) + 1e-12)
    assert np.all(report.var_wgp <= report.popoviciu_wgp + 1e-12)


def test_insufficient_sets_are_flagged():
    pts = [summary(0.0, 1.0)]
    report = verify_variance_lemmas(pts, pts, pts)
    assert report.insufficient
