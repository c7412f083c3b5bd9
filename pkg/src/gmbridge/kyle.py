"""Continuous Gaussian-noise reference equilibrium and local-time formulas.

In the continuous model the noise demand is a standard Brownian motion, the
terminal demand is quantized by the Gaussian boundaries a_n^0, and the
informed trader drives the total demand as a Doob-conditioned diffusion

    dY_t = (d/dy log h_n^0)(Y_t, t) dt + dB_t,

whose drift has the closed form implemented by :func:`kyle_drift`.  Expected
insider profit is estimated by Euler-Maruyama Monte Carlo of the running
integral of (v_n - p^0(Y_t, t)) against the drift.  The module also provides
the closed-form mean of Brownian local time used by the occupation-time
convergence checks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from .kernel import gaussian_price
from .quantizer import AssetDistribution, gaussian_boundaries

__all__ = [
    "KylePath",
    "kyle_drift",
    "simulate_kyle",
    "simulate_kyle_batch",
    "kyle_profit_mixture",
    "brownian_local_time_mean",
]

DRIFT_CLIP = 1e4


def _phi(z):
    return np.exp(-0.5 * np.square(z)) / math.sqrt(2.0 * math.pi)


@dataclass
class KylePath:
    """One Euler-discretized equilibrium path of the continuous model."""

    bin_index: int
    dt: float
    trajectory: np.ndarray
    profit: float
    terminal_hit: bool

    def __post_init__(self):
        if not math.isfinite(self.profit):
            raise ValueError("path profit must be finite")


def kyle_drift(boundaries, n: int, y, t):
    """Conditioned-diffusion drift for bin ``n`` at (y, t), t < 1.

    [phi((a_n-y)/s) - phi((a_{n+1}-y)/s)] / (s * h_n^0(y, t)), s = sqrt(1-t).
    Broadcasts over ``y``; infinite boundaries contribute zero density mass.
    """
    t = np.asarray(t, dtype=np.float64)
    if np.any(t >= 1.0):
        raise ValueError("drift is defined for t < 1")
    y = np.asarray(y, dtype=np.float64)
    lo, hi = boundaries[n - 1], boundaries[n]
    s = np.sqrt(1.0 - t)
    zlo = np.full_like(y * s, -np.inf) if lo == -math.inf else (lo - y) / s
    zhi = np.full_like(y * s, np.inf) if hi == math.inf else (hi - y) / s
    h = ndtr(zhi) - ndtr(zlo)
    num = np.where(np.isinf(zlo), 0.0, _phi(zlo)) - np.where(
        np.isinf(zhi), 0.0, _phi(zhi)
    )
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(h > 0.0, num / (s * h), np.nan)
    if np.any(np.isnan(out)):
        raise FloatingPointError("h_n^0 underflowed to 0 in drift evaluation")
    return float(out) if out.ndim == 0 else out


def simulate_kyle(
    boundaries,
    values,
    n: int,
    dt: float,
    rng: np.random.Generator,
    end_epsilon: float = 1e-4,
) -> KylePath:
    """Single equilibrium path; trajectory has 1/dt + 1 points on [0, 1]."""
    if dt > 1e-3:
        raise ValueError("dt must be at most 1e-3")
    steps = int(round(1.0 / dt))
    v = float(values[n - 1])
    lo, hi = boundaries[n - 1], boundaries[n]
    t_freeze = 1.0 - end_epsilon
    traj = np.empty(steps + 1)
    traj[0] = 0.0
    y = 0.0
    profit = 0.0
    noise = rng.standard_normal(steps) * math.sqrt(dt)
    for j in range(steps):
        t = j * dt
        theta = kyle_drift(boundaries, n, y, min(t, t_freeze))
        theta = min(max(theta, -DRIFT_CLIP), DRIFT_CLIP)
        profit += (v - gaussian_price(boundaries, values, y, t)) * theta * dt
        y += theta * dt + noise[j]
        traj[j + 1] = y
    hit = (lo == -math.inf or y >= lo) and (hi == math.inf or y < hi)
    return KylePath(bin_index=n, dt=dt, trajectory=traj, profit=profit, terminal_hit=hit)


def simulate_kyle_batch(
    boundaries,
    values,
    bins,
    dt: float,
    rng: np.random.Generator,
    end_epsilon: float = 1e-4,
    snapshot_times=(),
):
    """Vectorized Euler batch over per-path bins.

    Returns (profits, hits, terminal, snapshots) where ``snapshots`` stacks
    Y_t at each requested time (values at the nearest grid point from below).
    Trajectories are not stored; memory stays O(paths).
    """
    if dt > 1e-3:
        raise ValueError("dt must be at most 1e-3")
    b = np.asarray(boundaries, dtype=np.float64)
    vals = np.asarray(values, dtype=np.float64)
    bins = np.asarray(bins, dtype=np.int64)
    n_paths = bins.size
    steps = int(round(1.0 / dt))
    lo = b[bins - 1]
    hi = b[bins]
    v = vals[bins - 1]
    inner = b[1:-1]  # finite boundaries only
    t_freeze = 1.0 - end_epsilon
    snap_steps = {int(round(ts / dt)): i for i, ts in enumerate(snapshot_times)}
    snapshots = np.empty((len(snapshot_times), n_paths))
    y = np.zeros(n_paths)
    profit = np.zeros(n_paths)
    sq = math.sqrt(dt)
    for j in range(steps):
        t = j * dt
        if j in snap_steps:
            snapshots[snap_steps[j]] = y
        s = math.sqrt(1.0 - min(t, t_freeze))
        # cdf/pdf at every interior boundary for the price, then per-path
        # gather for the conditioning bin
        zin = (inner[:, None] - y[None, :]) / s
        cdf = ndtr(zin)
        pdf = _phi(zin)
        cdf_pad = np.vstack((np.zeros(n_paths), cdf, np.ones(n_paths)))
        pdf_pad = np.vstack((np.zeros(n_paths), pdf, np.zeros(n_paths)))
        idx = np.arange(n_paths)
        h = cdf_pad[bins, idx] - cdf_pad[bins - 1, idx]
        num = pdf_pad[bins - 1, idx] - pdf_pad[bins, idx]
        if np.any(h <= 0.0):
            raise FloatingPointError("h_n^0 underflowed to 0 in drift evaluation")
        theta = np.clip(num / (s * h), -DRIFT_CLIP, DRIFT_CLIP)
        if t > t_freeze:
            # only the drift freezes; the price keeps the true time
            sp = math.sqrt(1.0 - t)
            cdf_true = ndtr((inner[:, None] - y[None, :]) / sp)
            cdf_pad = np.vstack((np.zeros(n_paths), cdf_true, np.ones(n_paths)))
        price = vals @ np.diff(cdf_pad, axis=0)
        profit += (v - price) * theta * dt
        y += theta * dt + sq * rng.standard_normal(n_paths)
    if steps in snap_steps:
        snapshots[snap_steps[steps]] = y
    hits = np.logical_and(
        np.logical_or(np.isinf(lo), y >= lo), np.logical_or(np.isinf(hi), y < hi)
    )
    return profit, hits, y, snapshots


def kyle_profit_mixture(
    dist: AssetDistribution,
    dt: float,
    n_paths: int,
    rng: np.random.Generator,
    end_epsilon: float = 1e-4,
):
    """(profit mean, SE, hit rate) over bins drawn from the asset law."""
    b = gaussian_boundaries(dist)
    bins = 1 + rng.choice(len(dist.probs), size=n_paths, p=np.asarray(dist.probs))
    profits, hits, _, _ = simulate_kyle_batch(
        b, dist.values, bins, dt, rng, end_epsilon
    )
    mean = float(np.mean(profits))
    se = float(np.std(profits, ddof=1) / math.sqrt(n_paths))
    return mean, se, float(np.mean(hits))


def brownian_local_time_mean(m: float, t: float) -> float:
    """E of standard Brownian local time at level ``m`` up to time ``t``.

    (E|B_t - m| - |m|) / 2 with E|N(0,t) - m| in closed form; t = 0 gives 0.
    """
    if t < 0.0:
        raise ValueError("t must be nonnegative")
    if t == 0.0:
        return 0.0
    s = math.sqrt(t)
    abs_mean = math.sqrt(2.0 * t / math.pi) * math.exp(-m * m / (2.0 * t)) + m * (
        2.0 * float(ndtr(m / s)) - 1.0
    )
    return 0.5 * (abs_mean - abs(m))
