"""Insider profit/loss functionals U, U^S, L and the optimality-gap bound.

U(v_n, y, 1) is the deterministic cost of walking the terminal demand from y
into the zero-profit band around bin n against the ask/bid step functions
A(y) = P(y+delta), B(y) = P(y-delta); it extends backward in time through a
time integral of price increments with prefactor delta*beta = 1/(2*delta).
U^S - U collapses to the closed form delta*(v_n - p(0,0)) on the buy side.
L is the Monte Carlo occupation-time functional charging the time the demand
spends at the bin's two middle levels; U - L is the constructed strategy's
expected profit and U^S - U + L bounds its optimality gap.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .kernel import PricingKernel
from .quantizer import INF_IDX
from .simulate import PathRecord

__all__ = [
    "ProfitSummary",
    "U_terminal",
    "U_of",
    "US_gap",
    "ell_for_record",
    "L_estimate",
    "realized_stats",
    "loss_bound",
]


@dataclass(frozen=True)
class ProfitSummary:
    """Per-(delta, bin) Monte Carlo profit/loss aggregates."""

    delta: float
    bin_index: int
    u0: float
    us_gap: float
    l_hat: float
    l_hat_se: float
    realized_mean: float
    realized_se: float
    loss_bound: float
    path_count: int

    def __post_init__(self):
        if not math.isfinite(self.loss_bound):
            raise ValueError("loss bound must be finite")
        if self.l_hat_se < 0 or (
            not math.isnan(self.realized_se) and self.realized_se < 0
        ):
            raise ValueError("standard errors must be nonnegative")


def mean_se(xs) -> tuple:
    """(sample mean, standard error) with exactly rounded accumulation."""
    xs = list(map(float, xs))
    n = len(xs)
    if n == 0:
        return math.nan, math.nan
    m = math.fsum(xs) / n
    if n == 1:
        return m, math.nan
    var = math.fsum((x - m) ** 2 for x in xs) / (n - 1)
    return m, math.sqrt(var / n)


def _u_terminal_idx(kernel: PricingKernel, n: int, k: int) -> float:
    q = kernel.quant
    v = float(kernel.values[n - 1])
    lo, hi = q.boundary_indices[n - 1], q.boundary_indices[n]
    kdm, kum = q.mid_lower_idx[n - 1], q.mid_upper_idx[n - 1]
    total = 0.0
    if lo != -INF_IDX and k <= kdm and k < lo:
        js = np.arange(k, lo)
        total += float(np.sum(v - kernel.terminal_price_many(js + 1)))
    if hi != INF_IDX and k >= kum and k >= hi:
        js = np.arange(hi, k + 1)
        total += float(np.sum(kernel.terminal_price_many(js - 1) - v))
    return q.delta * total


def U_terminal(kernel: PricingKernel, n: int, y: float) -> float:
    """Terminal profit-to-go U(v_n, y, 1); zero exactly on [a_n-d, a_{n+1}+d)."""
    return _u_terminal_idx(kernel, n, kernel.quant.lattice_index(y))


def _u_of_idx(kernel: PricingKernel, n: int, k: int, t: float) -> float:
    q = kernel.quant
    kdm = q.mid_lower_idx[n - 1]
    pref = 1.0 / (2.0 * q.delta)  # = delta * beta
    if k <= kdm:
        integral = kernel.price_integral_idx(k + 1, t, 1.0) - kernel.price_integral_idx(
            k, t, 1.0
        )
    else:
        integral = kernel.price_integral_idx(k, t, 1.0) - kernel.price_integral_idx(
            k - 1, t, 1.0
        )
    return _u_terminal_idx(kernel, n, k) + pref * float(integral)


def U_of(kernel: PricingKernel, n: int, y: float, t: float) -> float:
    """U(v_n, y, t) via quadrature on the kernel's cached time grid."""
    return _u_of_idx(kernel, n, kernel.quant.lattice_index(y), t)


def US_gap(kernel: PricingKernel, n: int) -> float:
    """U^S(0,0) - U(0,0) = delta*(v_n - p(0,0)) when 0 is in the buy region."""
    q = kernel.quant
    if 0 <= q.mid_lower_idx[n - 1]:
        return q.delta * (float(kernel.values[n - 1]) - kernel.price_idx(0, 0.0))
    return 0.0


def ell_for_record(kernel: PricingKernel, n: int, record: PathRecord) -> float:
    """Single-path occupation functional whose bin-n expectation is L.

    delta*beta * [ sum over intervals at ceil-mid of (v_n - p(floor-mid, .))
                  - sum over intervals at floor-mid of (v_n - p(ceil-mid, .)) ].
    """
    q = kernel.quant
    kdm, kum = q.mid_lower_idx[n - 1], q.mid_upper_idx[n - 1]
    if kdm == -INF_IDX or kdm == INF_IDX:
        return 0.0
    v = float(kernel.values[n - 1])
    levels, starts, ends = record.level_intervals()
    pref = 1.0 / (2.0 * q.delta)
    total = 0.0
    up = levels == kum
    if np.any(up):
        dt = ends[up] - starts[up]
        total += float(np.sum(v * dt) - np.sum(kernel.price_integral_idx(kdm, starts[up], ends[up])))
    dn = levels == kdm
    if np.any(dn):
        dt = ends[dn] - starts[dn]
        total -= float(np.sum(v * dt) - np.sum(kernel.price_integral_idx(kum, starts[dn], ends[dn])))
    return pref * total


def L_estimate(kernel: PricingKernel, n: int, records) -> tuple:
    """(Lhat, SE) over a batch of bin-n PathRecords; exactly (0, 0) for edge bins."""
    q = kernel.quant
    if q.mid_lower_idx[n - 1] in (-INF_IDX, INF_IDX):
        return 0.0, 0.0
    m, se = mean_se(ell_for_record(kernel, n, r) for r in records)
    return m, se


def realized_stats(records) -> tuple:
    """(mean, SE) of the realized profit ledger over mode-(b) records."""
    return mean_se(r.realized_profit for r in records)


def loss_bound(
    kernel: PricingKernel,
    n: int,
    l_hat: float,
    l_hat_se: float,
    path_count: int,
    realized_mean: float = math.nan,
    realized_se: float = math.nan,
) -> ProfitSummary:
    """Assemble the per-bin ProfitSummary with lossBound = USgap + Lhat."""
    gap = US_gap(kernel, n)
    return ProfitSummary(
        delta=kernel.quant.delta,
        bin_index=n,
        u0=_u_of_idx(kernel, n, 0, 0.0),
        us_gap=gap,
        l_hat=l_hat,
        l_hat_se=l_hat_se,
        realized_mean=realized_mean,
        realized_se=realized_se,
        loss_bound=gap + l_hat,
        path_count=path_count,
    )
