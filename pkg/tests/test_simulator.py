import math

import numpy as np
import pytest
from scipy.stats import chi2

from gmbridge import quantize
from gmbridge.kernel import PricingKernel
from gmbridge.simulate import (
    XBB,
    XBS,
    XSB,
    XSS,
    MarketParams,
    RngPolicy,
    generate_paths,
    insider_intensities,
    noise_marginals,
    simulate_conditioned,
    simulate_constructive,
    simulate_noise,
    thinning_majorant,
)
from gmbridge.skellam import skellam_pmf


@pytest.fixture(scope="module")
def params(example_dist):
    kern = PricingKernel(quantize(example_dist, 0.5), example_dist.values)
    return MarketParams(kernel=kern, rng=RngPolicy(987654321))


def value_at(record, t):
    levels, starts, _ = record.level_intervals()
    return int(levels[np.searchsorted(starts, t, side="right") - 1])


def test_intensities_vanish_at_inner_mid_edges(params):
    # h is flat across the two mid levels, so the buy-up rate dies at the
    # floor mid and the sell-down rate at the ceil mid; the cancellation
    # rates at the two mids agree by the mirror symmetry of h
    kern = params.kernel
    q = params.quant
    kdm, kum = q.mid_lower_idx[1], q.mid_upper_idx[1]
    d = q.delta
    for t in (0.0, 0.5, 0.9):
        bb, bs, ss, sb = insider_intensities(kern, 2, kdm * d, t)
        assert bb <= 1e-12  # h(kdm) == h(kum) up to rounding
        assert ss == 0.0 and sb == 0.0
        assert bs > 0.0
        bb2, bs2, ss2, sb2 = insider_intensities(kern, 2, kum * d, t)
        assert ss2 <= 1e-12 and bb2 == 0.0 and bs2 == 0.0
        assert bs == pytest.approx(sb2, rel=1e-10)


def test_intensities_mirror_symmetry(params):
    kern = params.kernel
    q = params.quant
    refl = q.boundary_indices[1] + q.boundary_indices[2] - 1
    d = q.delta
    for k in (-3, -1, 0, 1):
        for t in (0.2, 0.7):
            bb, bs, ss, sb = insider_intensities(kern, 2, k * d, t)
            bb2, bs2, ss2, sb2 = insider_intensities(kern, 2, (refl - k) * d, t)
            assert bb == pytest.approx(ss2, rel=1e-10)
            assert bs == pytest.approx(sb2, rel=1e-10)


def test_intensities_zero_for_single_value(single_dist):
    kern = PricingKernel(quantize(single_dist, 0.5), single_dist.values)
    for k, t in [(0, 0.0), (3, 0.6), (-5, 0.95)]:
        assert insider_intensities(kern, 1, 0.5 * k, t) == (0.0, 0.0, 0.0, 0.0)


def test_majorant_dominates_exact_rate(params):
    kern = params.kernel
    q = params.quant
    d = q.delta
    rng = np.random.default_rng(7)
    for _ in range(100):
        n = int(rng.integers(1, 4))
        k = int(rng.integers(-6, 7))
        t0 = float(rng.uniform(0.0, 0.999))
        t1 = float(rng.uniform(t0, 1.0))
        bound = thinning_majorant(params, n, k * d, t0, t1)
        step = 1 if k <= q.mid_lower_idx[n - 1] else -1
        for t in np.linspace(t0, min(t1, 1.0 - params.end_epsilon), 9):
            assert kern.insider_rate_idx(n, k, step, float(t)) <= bound + 1e-12


def test_conditioned_paths_land_in_bin(params):
    q = params.quant
    lo, hi = q.boundary_indices[1], q.boundary_indices[2]
    for i in range(50):
        rec = simulate_conditioned(params, 2, path_index=i)
        assert lo <= rec.y_terminal < hi
        assert rec.y_terminal == rec.y_before[-1] + (1 if rec.marks[-1] == 0 else -1) if rec.times.size else rec.y_terminal == 0


def test_conditioned_acceptance_rate(params):
    # geometric acceptance: mean attempts ~ 1/p_n within 3 binomial SEs
    p2 = params.quant.bin_probs[1]
    n_paths = 3000
    attempts = [
        simulate_conditioned(params, 2, path_index=i).attempts
        for i in range(n_paths)
    ]
    total = sum(attempts)
    phat = n_paths / total
    se = math.sqrt(p2 * (1 - p2) / total)
    assert abs(phat - p2) < 3 * se


def test_conditioned_midtime_marginal_chi2(params):
    # P(Y_t = k*delta | bin n) = P(Z_t = k) h_n(k, t) / h_n(0, 0)
    kern = params.kernel
    t = 0.5
    n_paths = 4000
    recs = [simulate_conditioned(params, 2, path_index=i) for i in range(n_paths)]
    vals = np.array([value_at(r, t) for r in recs])
    ks = np.arange(-6, 7)
    probs = (
        skellam_pmf(ks, t * kern.beta)
        * np.array([kern.h_idx(2, int(k), t) for k in ks])
        / kern.h_idx(2, 0, 0.0)
    )
    counts = np.array([np.sum(vals == k) for k in ks])
    # pool cells with small expectation into the tails
    exp = probs * n_paths
    keep = exp >= 8
    o = np.concatenate(([counts[~keep & (ks < 0)].sum()], counts[keep], [counts[~keep & (ks > 0)].sum()]))
    e = np.concatenate(
        (
            [n_paths * (1 - probs[keep].sum()) / 2],
            exp[keep],
            [n_paths * (1 - probs[keep].sum()) / 2],
        )
    )
    stat = float(np.sum((o - e) ** 2 / e))
    assert stat < chi2.ppf(0.999, df=len(o) - 1)


def test_constructive_single_value_is_pure_noise(single_dist):
    kern = PricingKernel(quantize(single_dist, 0.5), single_dist.values)
    p = MarketParams(kernel=kern, rng=RngPolicy(5))
    for i in range(20):
        rec = simulate_constructive(p, 1, path_index=i)
        assert not np.any(rec.marks >= XBB)
        assert rec.realized_profit == 0.0
        assert not rec.terminal_miss


def test_constructive_trading_region_discipline(params):
    q = params.quant
    kdm, kum = q.mid_lower_idx[1], q.mid_upper_idx[1]
    for i in range(60):
        rec = simulate_constructive(params, 2, path_index=i)
        buys = np.isin(rec.marks, (XBB, XBS))
        sells = np.isin(rec.marks, (XSS, XSB))
        assert np.all(rec.y_before[buys] <= kdm)
        assert np.all(rec.y_before[sells] >= kum)


def test_constructive_hits_target_bin(params):
    q = params.quant
    for n in (1, 2, 3):
        lo, hi = q.boundary_indices[n - 1], q.boundary_indices[n]
        for i in range(40):
            rec = simulate_constructive(params, n, path_index=i)
            assert not rec.terminal_miss
            if lo != -(2**62):
                assert rec.y_terminal >= lo
            if hi != 2**62:
                assert rec.y_terminal < hi


def test_occupation_partitions_unit_time(params):
    for i in range(10):
        rec = simulate_constructive(params, 2, path_index=i)
        assert sum(rec.occupation.values()) == pytest.approx(1.0, abs=1e-12)
        rec0 = simulate_noise(params, path_index=i)
        assert sum(rec0.occupation.values()) == pytest.approx(1.0, abs=1e-12)


def test_reproducibility_bitwise(params):
    a = simulate_constructive(params, 2, path_index=17)
    b = simulate_constructive(params, 2, path_index=17)
    np.testing.assert_array_equal(a.times, b.times)
    np.testing.assert_array_equal(a.marks, b.marks)
    assert a.realized_profit == b.realized_profit
    c = simulate_constructive(params, 2, path_index=18)
    assert a.times.size != c.times.size or not np.array_equal(a.times, c.times)


def test_worker_count_invariance(params):
    serial = list(generate_paths(params, "constructive", 24, bin_index=2, workers=1))
    parallel = list(generate_paths(params, "constructive", 24, bin_index=2, workers=2))
    for a, b in zip(serial, parallel):
        np.testing.assert_array_equal(a.times, b.times)
        np.testing.assert_array_equal(a.marks, b.marks)
        assert a.realized_profit == b.realized_profit


def test_mixture_mode_draws_bins_by_probability(params):
    n_paths = 4000
    recs = list(generate_paths(params, "constructive", n_paths))
    counts = np.bincount([r.bin_index for r in recs], minlength=4)[1:]
    for j, p in enumerate(params.quant.bin_probs):
        se = math.sqrt(p * (1 - p) / n_paths)
        assert abs(counts[j] / n_paths - p) < 4 * se


def test_noise_marginals_match_walk_law(params):
    times = (0.25, 1.0)
    draws = noise_marginals(params, 20000, times)
    beta = params.kernel.beta
    for j, t in enumerate(times):
        col = draws[:, j]
        assert np.mean(col) == pytest.approx(0.0, abs=4 * math.sqrt(2 * beta * t / 20000))
        var = np.var(col)
        assert var == pytest.approx(2 * beta * t, rel=0.05)
    # increments are independent: cov(Y_s, Y_t - Y_s) ~ 0
    inc = draws[:, 1] - draws[:, 0]
    cov = float(np.mean(draws[:, 0] * inc))
    assert abs(cov) < 4 * math.sqrt(2 * beta * 0.25 * 2 * beta * 0.75 / 20000)
