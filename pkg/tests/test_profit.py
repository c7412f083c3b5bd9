import math

import numpy as np
import pytest

from gmbridge import AssetDistribution, quantize
from gmbridge.kernel import PricingKernel
from gmbridge.profit import (
    L_estimate,
    ProfitSummary,
    US_gap,
    U_of,
    U_terminal,
    ell_for_record,
    loss_bound,
    mean_se,
    realized_stats,
)
from gmbridge.simulate import MarketParams, RngPolicy, generate_paths


@pytest.fixture(scope="module")
def kern(example_dist):
    return PricingKernel(quantize(example_dist, 0.5), example_dist.values)


def test_mean_se_matches_numpy():
    xs = [0.3, -1.2, 4.5, 0.0, 2.2]
    m, se = mean_se(xs)
    assert m == pytest.approx(np.mean(xs), rel=1e-15)
    assert se == pytest.approx(np.std(xs, ddof=1) / math.sqrt(len(xs)), rel=1e-14)
    m1, se1 = mean_se([7.0])
    assert m1 == 7.0 and math.isnan(se1)
    m0, se0 = mean_se([])
    assert math.isnan(m0) and math.isnan(se0)


def test_terminal_zero_band_exact(kern):
    # zero exactly for y in [a_n - delta, a_{n+1} + delta), positive outside
    q = kern.quant
    d = q.delta
    for n in (1, 2, 3):
        lo, hi = q.boundaries[n - 1], q.boundaries[n]
        for k in range(-12, 13):
            y = k * d
            u = U_terminal(kern, n, y)
            inside = (lo - d <= y or lo == -math.inf) and (
                y < hi + d or hi == math.inf
            )
            if inside:
                assert u == 0.0
            else:
                assert u > 0.0


def test_terminal_hand_sum(kern):
    # bin 2 at delta=0.5: boundaries indices lo=0, hi=4, terminal prices
    # P(-1)=1 (bin 1), P(0..3)=2 (bin 2), P(4)=3 (bin 3)
    q = kern.quant
    assert (q.boundary_indices[1], q.boundary_indices[2]) == (0, 4)
    # buy side, two steps below the band: walk -2 -> -1 -> 0 paying the ask
    assert U_terminal(kern, 2, -1.0) == pytest.approx(
        0.5 * ((2.0 - 1.0) + (2.0 - 2.0)), abs=1e-15
    )
    # sell side, one step above the band: one sale at the bid P(4)=3
    assert U_terminal(kern, 2, 2.5) == pytest.approx(
        0.5 * ((2.0 - 2.0) + (3.0 - 2.0)), abs=1e-15
    )


def test_U_nonnegative_and_midpoints_agree(kern):
    q = kern.quant
    kdm, kum = q.mid_lower_idx[1], q.mid_upper_idx[1]
    d = q.delta
    for t in (0.0, 0.4, 0.9):
        assert U_of(kern, 2, kdm * d, t) == pytest.approx(
            U_of(kern, 2, kum * d, t), rel=1e-10
        )
        for k in range(-10, 11):
            assert U_of(kern, 2, k * d, t) > -1e-12


def test_U_equations_residuals(kern):
    # the value function solves a discrete backward heat equation with
    # sources at the two mid levels and linear boundary recursions outside
    q = kern.quant
    d, beta = q.delta, q.beta
    lo, hi = q.boundary_indices[1], q.boundary_indices[2]
    kdm, kum = q.mid_lower_idx[1], q.mid_upper_idx[1]
    v = 2.0
    pref = 1.0 / (2.0 * d)

    def u(k, t):
        return U_of(kern, 2, k * d, t)

    def u_t(k, t):
        if k <= kdm:
            return -pref * (kern.price_idx(k + 1, t) - kern.price_idx(k, t))
        return -pref * (kern.price_idx(k, t) - kern.price_idx(k - 1, t))

    for t in (0.0, 0.35, 0.8):
        for k in range(lo - 6, hi + 7):
            r = u_t(k, t) + beta * (u(k + 1, t) - 2.0 * u(k, t) + u(k - 1, t))
            if k == kum:
                target = d * beta * (kern.price_idx(kdm, t) - v)
                assert r == pytest.approx(target, rel=1e-4)
            elif k == kdm:
                target = d * beta * (v - kern.price_idx(kum, t))
                assert r == pytest.approx(target, rel=1e-4)
            else:
                assert abs(r) <= 1e-3 * max(abs(u_t(k, t)), 1e-6)
            if k >= kum:
                assert u(k, t) - u(k + 1, t) == pytest.approx(
                    d * (v - kern.price_idx(k, t)), abs=1e-6
                )
            if k <= kdm:
                assert u(k, t) - u(k - 1, t) == pytest.approx(
                    -d * (v - kern.price_idx(k, t)), abs=1e-6
                )


def test_U_single_value_is_zero(single_dist):
    kern1 = PricingKernel(quantize(single_dist, 0.5), single_dist.values)
    for k, t in [(0, 0.0), (4, 0.5), (-7, 0.99)]:
        assert U_of(kern1, 1, k * 0.5, t) == 0.0


def test_US_gap_values(kern):
    p00 = kern.price_idx(0, 0.0)
    # bin 1: the origin sits above the bin's buy region, gap collapses to 0
    assert US_gap(kern, 1) == 0.0
    assert US_gap(kern, 2) == pytest.approx(0.5 * (2.0 - p00), rel=1e-14)
    assert US_gap(kern, 3) == pytest.approx(0.5 * (3.0 - p00), rel=1e-14)
    assert US_gap(kern, 3) == pytest.approx(0.6787508395024361, abs=1e-13)


def test_US_gap_shrinks_with_delta(example_dist):
    gaps = []
    for d in (0.4, 0.2, 0.1, 0.05):
        k = PricingKernel(quantize(example_dist, d), example_dist.values)
        gaps.append(US_gap(k, 3))
    assert all(b < a for a, b in zip(gaps, gaps[1:]))


def test_L_edge_bins_exact_zero(kern):
    params = MarketParams(kernel=kern, rng=RngPolicy(11))
    recs = list(generate_paths(params, "constructive", 3, bin_index=1))
    assert L_estimate(kern, 1, recs) == (0.0, 0.0)
    assert L_estimate(kern, 3, recs) == (0.0, 0.0)
    assert ell_for_record(kern, 1, recs[0]) == 0.0


def test_profit_identity_on_constructed_paths(kern):
    # realized profit + occupation charge averages to U(v_n, 0, 0):
    # paired comparison over a common batch of constructed bin-2 paths
    params = MarketParams(kernel=kern, rng=RngPolicy(20260823))
    n_paths = 1500
    recs = list(generate_paths(params, "constructive", n_paths, bin_index=2))
    assert not any(r.terminal_miss or r.runaway for r in recs)
    u0 = U_of(kern, 2, 0.0, 0.0)
    d = [r.realized_profit + ell_for_record(kern, 2, r) - u0 for r in recs]
    m, se = mean_se(d)
    assert abs(m) < 4.0 * se
    l_hat, l_se = L_estimate(kern, 2, recs)
    assert l_hat > 0.0 and l_se > 0.0
    r_mean, r_se = realized_stats(recs)
    assert abs(r_mean - (u0 - l_hat)) < 4.0 * math.hypot(r_se, l_se)


def test_loss_bound_assembly(kern):
    s = loss_bound(kern, 2, l_hat=0.01, l_hat_se=0.001, path_count=100)
    assert s.delta == 0.5 and s.bin_index == 2 and s.path_count == 100
    assert s.u0 == pytest.approx(U_of(kern, 2, 0.0, 0.0), rel=1e-12)
    assert s.loss_bound == pytest.approx(US_gap(kern, 2) + 0.01, rel=1e-12)
    assert math.isnan(s.realized_mean)


def test_profit_summary_validation(kern):
    with pytest.raises(ValueError):
        ProfitSummary(0.5, 2, 0.1, 0.1, 0.0, -1e-3, math.nan, math.nan, 0.1, 10)
    with pytest.raises(ValueError):
        ProfitSummary(0.5, 2, 0.1, 0.1, 0.0, 0.0, math.nan, math.nan, math.inf, 10)
