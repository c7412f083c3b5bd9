import math

import numpy as np
import pytest

from gmbridge import gaussian_boundaries
from gmbridge.kernel import gaussian_h, gaussian_price
from gmbridge.kyle import (
    KylePath,
    brownian_local_time_mean,
    kyle_drift,
    kyle_profit_mixture,
    simulate_kyle,
    simulate_kyle_batch,
)

from _oracles import gaussian_equilibrium_profit_quad

# frozen from the independent quadrature oracle (see _oracles)
PROFIT_BIN2_EXACT = 0.5122617946741335
PROFIT_MIXTURE_EXACT = 0.5713032104560217


@pytest.fixture(scope="module")
def bnds(example_dist):
    return gaussian_boundaries(example_dist)


def test_drift_is_log_derivative_of_h(bnds):
    h = 1e-5
    for n, y, t in [(1, -1.0, 0.3), (2, 0.3, 0.5), (3, 2.0, 0.8)]:
        fd = (
            math.log(gaussian_h(bnds, n, y + h, t))
            - math.log(gaussian_h(bnds, n, y - h, t))
        ) / (2 * h)
        assert kyle_drift(bnds, n, y, t) == pytest.approx(fd, rel=1e-6)


def test_drift_zero_at_midpoint_and_signed(bnds):
    mid = 0.5 * (bnds[1] + bnds[2])
    assert kyle_drift(bnds, 2, mid, 0.5) == pytest.approx(0.0, abs=1e-14)
    for dy in (0.05, 0.2, 0.6):
        assert kyle_drift(bnds, 2, mid - dy, 0.5) > 0.0
        assert kyle_drift(bnds, 2, mid + dy, 0.5) < 0.0


def test_drift_trivial_single_value(single_dist):
    b = gaussian_boundaries(single_dist)
    for y, t in [(0.0, 0.0), (1.7, 0.5), (-3.0, 0.99)]:
        assert kyle_drift(b, 1, y, t) == 0.0


def test_drift_rejects_terminal_time(bnds):
    with pytest.raises(ValueError):
        kyle_drift(bnds, 2, 0.0, 1.0)


def test_local_time_closed_form_values():
    assert brownian_local_time_mean(0.0, 1.0) == pytest.approx(
        math.sqrt(2.0 / math.pi) / 2.0, rel=1e-14
    )
    assert brownian_local_time_mean(50.0, 1.0) == pytest.approx(0.0, abs=1e-300)
    eps = 1e-2
    inc = brownian_local_time_mean(0.0, 1.0) - brownian_local_time_mean(0.0, 1.0 - eps)
    assert inc == pytest.approx(
        math.sqrt(2.0 / math.pi) * (1.0 - math.sqrt(1.0 - eps)) / 2.0, rel=1e-12
    )
    # symmetric in the level, zero at t = 0, increasing in t
    assert brownian_local_time_mean(-0.7, 0.5) == pytest.approx(
        brownian_local_time_mean(0.7, 0.5), rel=1e-14
    )
    assert brownian_local_time_mean(0.3, 0.0) == 0.0
    assert brownian_local_time_mean(0.0, 0.25) < brownian_local_time_mean(0.0, 0.75)


def test_single_path_shape_and_flags(bnds, example_dist):
    rng = np.random.default_rng(42)
    p = simulate_kyle(bnds, example_dist.values, 2, 1e-3, rng)
    assert p.trajectory.shape == (1001,)
    assert p.trajectory[0] == 0.0
    assert math.isfinite(p.profit)
    assert p.terminal_hit == (bnds[1] <= p.trajectory[-1] < bnds[2])
    with pytest.raises(ValueError):
        simulate_kyle(bnds, example_dist.values, 2, 2e-3, rng)


def test_kyle_path_rejects_nonfinite_profit():
    with pytest.raises(ValueError):
        KylePath(2, 1e-3, np.zeros(3), math.inf, True)


def test_batch_terminal_law_and_hit_rate(bnds, example_dist):
    rng = np.random.default_rng(7)
    bins = np.full(4000, 2)
    profits, hits, term, _ = simulate_kyle_batch(
        bnds, example_dist.values, bins, 5e-4, rng
    )
    assert np.mean(hits) >= 0.98
    inside = term[hits]
    assert np.all((inside >= bnds[1]) & (inside < bnds[2]))
    assert np.all(np.isfinite(profits))


def test_price_is_unconditional_martingale(bnds, example_dist):
    # mixture mean of p^0(Y_t, t) stays at p^0(0, 0) within 3 SE
    rng = np.random.default_rng(11)
    probs = np.asarray(example_dist.probs)
    bins = 1 + rng.choice(3, size=6000, p=probs)
    _, _, _, snaps = simulate_kyle_batch(
        bnds, example_dist.values, bins, 1e-3, rng, snapshot_times=(0.5,)
    )
    prices = gaussian_price(bnds, example_dist.values, snaps[0], 0.5)
    se = np.std(prices, ddof=1) / math.sqrt(prices.size)
    assert abs(np.mean(prices) - 1.55) < 3 * se


def test_conditional_profit_matches_quadrature_oracle(bnds, example_dist):
    oracle = gaussian_equilibrium_profit_quad(
        example_dist.values, example_dist.probs, bnds, 2
    )
    assert oracle == pytest.approx(PROFIT_BIN2_EXACT, rel=1e-10)
    rng = np.random.default_rng(2024)
    bins = np.full(20000, 2)
    profits, _, _, _ = simulate_kyle_batch(bnds, example_dist.values, bins, 5e-4, rng)
    se = float(np.std(profits, ddof=1) / math.sqrt(profits.size))
    assert abs(float(np.mean(profits)) - PROFIT_BIN2_EXACT) < max(0.01, 4 * se)


def test_mixture_profit_matches_quadrature_oracle(example_dist):
    rng = np.random.default_rng(31)
    mean, se, hit = kyle_profit_mixture(example_dist, 5e-4, 20000, rng)
    assert hit >= 0.98
    assert abs(mean - PROFIT_MIXTURE_EXACT) < max(0.01, 4 * se)


def test_profit_estimate_stable_under_step_halving(example_dist):
    m1, s1, _ = kyle_profit_mixture(example_dist, 2e-4, 8000, np.random.default_rng(5))
    m2, s2, _ = kyle_profit_mixture(example_dist, 1e-4, 8000, np.random.default_rng(6))
    assert abs(m1 - m2) < 3 * math.hypot(s1, s2)
