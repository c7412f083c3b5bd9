"""Executable limit theorems: occupation time, loss bound, and strategy law.

Three table builders, each returning plain list-of-dict rows that the CLI
serializes to CSV:

* :func:`occupation_convergence` — scaled occupation time of the noise walk
  at level 0 against the closed-form Brownian local-time mean, plus the exact
  finite-lattice identity 2 E[occupation] = E|Y_t| checked pathwise.
* :func:`loss_convergence` — per-(delta, bin) optimality-gap bounds and their
  probability-weighted mixture: the dataset behind the loss-vs-delta figure.
* :func:`strategy_convergence` — two-sample Kolmogorov-Smirnov distances
  between the conditioned lattice demand and its continuous Gaussian limit
  at a grid of times.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.stats import ks_2samp

from .kernel import PricingKernel
from .kyle import brownian_local_time_mean, simulate_kyle_batch
from .profit import L_estimate, loss_bound, mean_se, realized_stats
from .quantizer import INF_IDX, AssetDistribution, gaussian_boundaries, quantize
from .simulate import MarketParams, RngPolicy, generate_paths, noise_marginals

__all__ = [
    "occupation_until",
    "occupation_convergence",
    "loss_convergence",
    "strategy_convergence",
    "conditioned_marginals",
    "ks_critical_value",
]


def occupation_until(record, k: int, t: float) -> float:
    """Time the demand spends at lattice level ``k`` during [0, t]."""
    levels, starts, ends = record.level_intervals()
    mask = levels == k
    return float(np.sum(np.clip(np.minimum(ends[mask], t) - starts[mask], 0.0, None)))


def occupation_convergence(
    dist: AssetDistribution,
    delta_grid,
    t: float,
    n_paths: int,
    seed: int,
    n: int | None = None,
    workers=None,
):
    """Rows: delta, occupation stats at level 0 of the unconditioned walk.

    occMean estimates the scaled occupation (1/2delta) * time-at-0 up to t;
    localTimeRef is the Brownian closed form it converges to; identityGap is
    the paired mean of 2*occupation_i - |Y_i(t)| (exactly 0 in expectation at
    every delta, so its absolute value should stay within a few identitySE).
    With an interior bin ``n``, each row also carries the scaled occupation
    of conditioned paths at the bin's two mid levels (midOccMean/midOccSE).
    """
    rows = []
    for delta in delta_grid:
        quant = quantize(dist, delta)
        kernel = PricingKernel(quant, dist.values)
        params = MarketParams(kernel=kernel, rng=RngPolicy(seed))
        occ = np.empty(n_paths)
        y_abs = np.empty(n_paths)
        for i, rec in enumerate(
            generate_paths(params, "noise", n_paths, workers=workers)
        ):
            occ[i] = occupation_until(rec, 0, t) / (2.0 * delta)
            levels, starts, _ = rec.level_intervals()
            pos = int(levels[np.searchsorted(starts, t, side="right") - 1])
            y_abs[i] = abs(pos) * delta
        occ_m, occ_se = mean_se(occ)
        gap_m, gap_se = mean_se(2.0 * occ - y_abs)
        row = {
            "delta": delta,
            "t": t,
            "occMean": occ_m,
            "occSE": occ_se,
            "localTimeRef": brownian_local_time_mean(0.0, t),
            "identityGap": gap_m,
            "identitySE": gap_se,
            "paths": n_paths,
        }
        if n is not None:
            kdm, kum = quant.mid_lower_idx[n - 1], quant.mid_upper_idx[n - 1]
            if kdm in (-INF_IDX, INF_IDX):
                raise ValueError(f"bin {n} has no interior mid levels")
            mids = np.empty(n_paths)
            for i, rec in enumerate(
                generate_paths(
                    params, "conditioned", n_paths, bin_index=n, workers=workers
                )
            ):
                mids[i] = (
                    occupation_until(rec, kdm, t) + occupation_until(rec, kum, t)
                ) / (2.0 * delta)
            row["midOccMean"], row["midOccSE"] = mean_se(mids)
        rows.append(row)
    return rows


def loss_convergence(
    dist: AssetDistribution,
    delta_grid,
    n_paths: int,
    seed: int,
    mode: str = "conditioned",
    workers=None,
    end_epsilon: float = 1e-4,
):
    """Figure dataset: per-(delta, bin) bound rows plus a mixture row.

    The mixture columns are denormalized onto every row of the same delta so
    downstream plotting needs no joins.  Realized-profit columns are filled
    only when ``mode='constructive'`` supplies a profit ledger.
    """
    rows = []
    for delta in delta_grid:
        quant = quantize(dist, delta)
        kernel = PricingKernel(quant, dist.values)
        params = MarketParams(
            kernel=kernel, rng=RngPolicy(seed), end_epsilon=end_epsilon
        )
        summaries = []
        for n in range(1, quant.n_bins + 1):
            if quant.mid_lower_idx[n - 1] in (-INF_IDX, INF_IDX):
                summaries.append(loss_bound(kernel, n, 0.0, 0.0, 0))
                continue
            recs = list(
                generate_paths(params, mode, n_paths, bin_index=n, workers=workers)
            )
            l_hat, l_se = L_estimate(kernel, n, recs)
            if mode == "constructive":
                r_m, r_se = realized_stats(recs)
            else:
                r_m, r_se = math.nan, math.nan
            summaries.append(
                loss_bound(kernel, n, l_hat, l_se, n_paths, r_m, r_se)
            )
        probs = np.asarray(quant.bin_probs)
        mix = float(np.dot(probs, [s.loss_bound for s in summaries]))
        mix_se = float(
            math.sqrt(np.dot(probs**2, [s.l_hat_se**2 for s in summaries]))
        )
        for s in summaries:
            rows.append(
                {
                    "delta": delta,
                    "bin": str(s.bin_index),
                    "lossBound": s.loss_bound,
                    "lossBound_se": s.l_hat_se,
                    "mixtureBound": mix,
                    "mixtureBound_se": mix_se,
                }
            )
        rows.append(
            {
                "delta": delta,
                "bin": "mixture",
                "lossBound": mix,
                "lossBound_se": mix_se,
                "mixtureBound": mix,
                "mixtureBound_se": mix_se,
            }
        )
    return rows


def conditioned_marginals(params: MarketParams, n: int, n_paths: int, times):
    """Y^delta marginals (real units) at the given times, conditioned on bin n.

    Same law as the time-marginals of rejection-sampled conditioned paths:
    exact Skellam increments accepted on the terminal bin.
    """
    q = params.quant
    lo, hi = q.boundary_indices[n - 1], q.boundary_indices[n]
    grid = list(times)
    if not grid or grid[-1] < 1.0:
        grid = grid + [1.0]
    out = np.empty((n_paths, len(times)))
    filled = 0
    start = 0
    while filled < n_paths:
        want = max(n_paths - filled, 256)
        draws = noise_marginals(params, 4 * want, grid, start_index=start)
        start += 4 * want
        term = draws[:, -1]
        ok = np.ones(term.shape, dtype=bool)
        if lo != -INF_IDX:
            ok &= term >= lo
        if hi != INF_IDX:
            ok &= term < hi
        acc = draws[ok][: n_paths - filled, : len(times)]
        out[filled : filled + acc.shape[0]] = acc * q.delta
        filled += acc.shape[0]
    return out


def ks_critical_value(n1: int, n2: int, alpha: float = 0.01) -> float:
    """Two-sample KS rejection threshold at level ``alpha``."""
    c = math.sqrt(-0.5 * math.log(alpha / 2.0))
    return c * math.sqrt((n1 + n2) / (n1 * n2))


def strategy_convergence(
    dist: AssetDistribution,
    delta_grid,
    n: int,
    n_paths: int,
    time_grid,
    seed: int,
    dt: float = 1e-3,
    workers=None,
):
    """Rows: delta, t, two-sample KS distance of Y^delta_t vs the limit Y^0_t."""
    b = gaussian_boundaries(dist)
    rng = np.random.default_rng(np.random.SeedSequence((seed, 1)))
    bins = np.full(n_paths, n)
    _, _, _, snaps = simulate_kyle_batch(
        b, dist.values, bins, dt, rng, snapshot_times=tuple(time_grid)
    )
    rows = []
    for delta in delta_grid:
        quant = quantize(dist, delta)
        kernel = PricingKernel(quant, dist.values)
        params = MarketParams(kernel=kernel, rng=RngPolicy(seed + 1))
        lattice = conditioned_marginals(params, n, n_paths, time_grid)
        for j, t in enumerate(time_grid):
            if t == 0.0:
                stat = 0.0
            else:
                stat = float(ks_2samp(lattice[:, j], snaps[j]).statistic)
            rows.append(
                {
                    "delta": delta,
                    "t": t,
                    "bin": n,
                    "ks": stat,
                    "ksCritical1pct": ks_critical_value(n_paths, n_paths),
                    "paths": n_paths,
                }
            )
    return rows
