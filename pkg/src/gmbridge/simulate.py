"""Equilibrium demand-path simulation in two cross-validating modes.

Mode (a), ``simulate_conditioned``: exact rejection sampling of the noise
walk Z (two Poisson-beta streams of +-delta jumps) on its terminal bin —
the law of the equilibrium demand Y given the realized value, but with no
insider/noise attribution.

Mode (b), ``simulate_constructive``: full event-driven construction.  With
the demand at lattice level y inside the buy region (y <= floor-mid), the
insider submits extra buys at the inhomogeneous rate
beta*(h_n(y+delta,t)/h_n(y,t) - 1)_+ (sampled by thinning against a
piecewise-constant majorant) and cancels incoming noise sells with
probability (1 - h_n(y-delta,t)/h_n(y,t))_+; mirrored in the sell region.
Cancellations consume the noise arrival atomically and leave Y unchanged.
The realized profit ledger is accumulated per insider event.

Strategy intensities are frozen at t = 1 - end_epsilon on the final sliver;
the pricing rule itself is never frozen.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .kernel import PricingKernel, StrandedPathError
from .quantizer import INF_IDX

__all__ = [
    "ZB",
    "ZS",
    "XBB",
    "XBS",
    "XSS",
    "XSB",
    "MARK_NAMES",
    "MOVES",
    "RngPolicy",
    "MarketParams",
    "PathRecord",
    "SimulationError",
    "insider_intensities",
    "thinning_majorant",
    "simulate_conditioned",
    "simulate_constructive",
    "simulate_noise",
    "generate_paths",
    "noise_marginals",
    "resolve_workers",
]

# Event marks: noise buy/sell that execute, insider buy/sell that move Y,
# and the two cancellation marks that leave Y unchanged.
ZB, ZS, XBB, XBS, XSS, XSB = range(6)
MARK_NAMES = ("ZB", "ZS", "XBB", "XBS", "XSS", "XSB")
MOVES = np.array([1, -1, 1, 0, -1, 0], dtype=np.int64)

_MAX_REJECTION_ATTEMPTS = 10**5


class SimulationError(RuntimeError):
    """Raised when a path cannot be completed within its budgets."""


@dataclass(frozen=True)
class RngPolicy:
    """Deterministic per-path substream derivation from a 64-bit master seed."""

    master_seed: int

    def stream_for(self, path_index: int) -> np.random.Generator:
        seq = np.random.SeedSequence((self.master_seed, path_index))
        return np.random.Generator(np.random.PCG64(seq))


@dataclass(frozen=True)
class MarketParams:
    """Simulation parameters shared by all paths of an experiment."""

    kernel: PricingKernel
    rng: RngPolicy
    end_epsilon: float = 1e-4
    max_events: int = 10**6

    def __post_init__(self):
        if not 0.0 < self.end_epsilon <= 0.01:
            raise ValueError("end_epsilon must lie in (0, 0.01]")
        if self.max_events < 10**4:
            raise ValueError("max_events must be at least 1e4")

    @property
    def quant(self):
        return self.kernel.quant


@dataclass
class PathRecord:
    """One simulated market path.

    ``times``/``y_before``/``marks`` list the jump events in time order;
    ``y_before`` holds the lattice INDEX of Y just before each event.
    ``bin_index`` is the 1-based realized-value bin (0 for unconditioned
    noise paths).
    """

    bin_index: int
    delta: float
    times: np.ndarray
    y_before: np.ndarray
    marks: np.ndarray
    y_terminal: int
    realized_profit: float | None = None
    runaway: bool = False
    terminal_miss: bool = False
    attempts: int = 1

    def level_intervals(self):
        """(levels, starts, ends): the piecewise-constant Y trajectory on [0,1]."""
        moving = MOVES[self.marks] != 0
        mt = self.times[moving]
        steps = MOVES[self.marks[moving]]
        levels = np.concatenate(([0], np.cumsum(steps)))
        starts = np.concatenate(([0.0], mt))
        ends = np.concatenate((mt, [1.0]))
        return levels, starts, ends

    @property
    def occupation(self) -> dict:
        """Map lattice index -> total time with Y_{t-} at that level."""
        levels, starts, ends = self.level_intervals()
        out: dict[int, float] = {}
        for lev, s, e in zip(levels, starts, ends):
            out[int(lev)] = out.get(int(lev), 0.0) + (e - s)
        return out

    def occupation_at(self, k: int) -> float:
        levels, starts, ends = self.level_intervals()
        mask = levels == k
        return float(np.sum(ends[mask] - starts[mask]))

    @property
    def up_jumps(self) -> int:
        """Number of executed buy orders (noise buys that pass + insider buys)."""
        return int(np.sum(self.marks == ZB) + np.sum(self.marks == XBB))


# ----------------------------------------------------------------------
# intensities and thinning support
# ----------------------------------------------------------------------
def insider_intensities(kernel: PricingKernel, n: int, y: float, t: float):
    """(thetaBB, thetaBS, thetaSS, thetaSB) at lattice point y, time t < 1.

    Buys are active only for y <= floor-mid, sells only for y >= ceil-mid;
    top-up intensities are identically zero and not represented.
    """
    if t >= 1.0:
        raise ValueError("intensities are defined for t < 1")
    q = kernel.quant
    k = q.lattice_index(y)
    beta = kernel.beta
    h0 = kernel.h_idx(n, k, t)
    if h0 <= 0.0:
        raise StrandedPathError(f"h_{n}({y},{t}) underflowed to 0")
    rup = kernel.h_idx(n, k + 1, t) / h0 - 1.0
    rdn = kernel.h_idx(n, k - 1, t) / h0 - 1.0
    kdm = q.mid_lower_idx[n - 1]
    kum = q.mid_upper_idx[n - 1]
    buy = k <= kdm
    sell = k >= kum
    theta_bb = beta * max(rup, 0.0) if buy else 0.0
    theta_bs = beta * max(-rdn, 0.0) if buy else 0.0
    theta_ss = beta * max(rdn, 0.0) if sell else 0.0
    theta_sb = beta * max(-rup, 0.0) if sell else 0.0
    return theta_bb, theta_bs, theta_ss, theta_sb


def thinning_majorant(params: MarketParams, n: int, y: float, t_lo: float, t_hi: float) -> float:
    """Upper bound for the active insider jump rate of bin ``n`` on [t_lo, t_hi].

    Max of the cached rate table over the bracketing grid slice and the exact
    rate at both (clamped) endpoints, times a 1.25 safety factor.  Every
    thinning candidate is additionally verified against the exact rate, so a
    pointwise violation can only trigger refinement, never silent bias.
    """
    kernel = params.kernel
    q = params.quant
    k = q.lattice_index(y)
    step = 1 if k <= q.mid_lower_idx[n - 1] else -1
    return _majorant_idx(params, n, k, step, t_lo, t_hi)


def _majorant_idx(params, n, k, step, t_lo, t_hi) -> float:
    kernel = params.kernel
    eps_t = 1.0 - params.end_epsilon
    hi_c = min(t_hi, eps_t)
    lo_c = min(t_lo, eps_t)
    row = kernel.insider_rate_row(n, k, step)
    sl = kernel.grid_slice(lo_c, hi_c)
    m = float(row[sl].max()) if sl.stop > sl.start else 0.0
    if sl.stop - sl.start < 4:
        # short slice: back the table up with exact endpoint rates
        m = max(
            m,
            kernel.insider_rate_idx(n, k, step, lo_c),
            kernel.insider_rate_idx(n, k, step, hi_c),
        )
    return 1.25 * m


def _next_insider_time(params, n, k, step, t0, t_end, rng, budget) -> float:
    """First arrival of the active insider stream on [t0, t_end) by thinning.

    Returns math.inf when no arrival occurs before t_end.  ``budget`` is a
    one-element candidate counter shared with the caller's event budget.
    """
    kernel = params.kernel
    eps_t = 1.0 - params.end_epsilon
    bound = _majorant_idx(params, n, k, step, t0, t_end)
    if bound <= 0.0:
        return math.inf
    s = t0
    while True:
        budget[0] += 1
        if budget[0] > params.max_events:
            raise SimulationError("thinning candidate budget exceeded")
        s += rng.exponential() / bound
        if s >= t_end:
            return math.inf
        rate = kernel.insider_rate_idx(n, k, step, min(s, eps_t))
        if rate > bound:
            # Pointwise bound violation: refine and regenerate the interval.
            # The rate is a deterministic function of (n, k, t), so the
            # refinement decision carries no sampling bias.
            bound = 1.25 * rate
            s = t0
            continue
        if rate > 0.0 and rng.random() * bound <= rate:
            return s


# ----------------------------------------------------------------------
# path generation
# ----------------------------------------------------------------------
def _noise_events(rng, beta: float):
    """Unconditioned noise walk event times/marks on [0, 1]."""
    nb = rng.poisson(beta)
    ns = rng.poisson(beta)
    times = np.concatenate((rng.random(nb), rng.random(ns)))
    marks = np.concatenate(
        (np.full(nb, ZB, dtype=np.int8), np.full(ns, ZS, dtype=np.int8))
    )
    order = np.argsort(times, kind="stable")
    return times[order], marks[order], nb - ns


def simulate_noise(params: MarketParams, path_index: int = 0) -> PathRecord:
    """Unconditioned noise demand Z (bin_index 0)."""
    rng = params.rng.stream_for(path_index)
    times, marks, net = _noise_events(rng, params.kernel.beta)
    moves = MOVES[marks]
    y_before = np.concatenate(([0], np.cumsum(moves)[:-1]))
    return PathRecord(
        bin_index=0,
        delta=params.quant.delta,
        times=times,
        y_before=y_before,
        marks=marks,
        y_terminal=int(net),
    )


def simulate_conditioned(params: MarketParams, n: int, path_index: int = 0) -> PathRecord:
    """Mode (a): noise walk conditioned on terminating in bin ``n``."""
    q = params.quant
    lo, hi = q.boundary_indices[n - 1], q.boundary_indices[n]
    rng = params.rng.stream_for(path_index)
    for attempt in range(1, _MAX_REJECTION_ATTEMPTS + 1):
        times, marks, net = _noise_events(rng, params.kernel.beta)
        if (lo == -INF_IDX or net >= lo) and (hi == INF_IDX or net < hi):
            moves = MOVES[marks]
            y_before = np.concatenate(([0], np.cumsum(moves)[:-1]))
            return PathRecord(
                bin_index=n,
                delta=q.delta,
                times=times,
                y_before=y_before,
                marks=marks,
                y_terminal=int(net),
                attempts=attempt,
            )
    raise SimulationError(
        f"rejection budget exceeded for bin {n} (p_n too small at this delta)"
    )


def simulate_constructive(params: MarketParams, n: int, path_index: int = 0) -> PathRecord:
    """Mode (b): full constructive simulation with the insider's orders."""
    kernel = params.kernel
    q = params.quant
    beta = kernel.beta
    kdm = q.mid_lower_idx[n - 1]
    kum = q.mid_upper_idx[n - 1]
    lo, hi = q.boundary_indices[n - 1], q.boundary_indices[n]
    eps_t = 1.0 - params.end_epsilon
    rng = params.rng.stream_for(path_index)

    times: list[float] = []
    y_before: list[int] = []
    marks: list[int] = []
    budget = [0]
    t = 0.0
    k = 0
    runaway = False
    while True:
        if len(times) > params.max_events:
            runaway = True
            break
        buy = k <= kdm
        step = 1 if buy else -1
        tzb = t + rng.exponential() / beta
        tzs = t + rng.exponential() / beta
        t_end = min(tzb, tzs, 1.0)
        try:
            tx = _next_insider_time(params, n, k, step, t, t_end, rng, budget)
        except SimulationError:
            runaway = True
            break
        if tx < t_end:
            times.append(tx)
            y_before.append(k)
            marks.append(XBB if buy else XSS)
            k += step
            t = tx
            continue
        if t_end >= 1.0:
            break
        if tzb <= tzs:
            # noise buy arrival
            times.append(tzb)
            y_before.append(k)
            if buy:
                marks.append(ZB)
                k += 1
            else:
                h0, h1 = kernel.h_pair_idx(n, k, 1, min(tzb, eps_t))
                if h0 <= 0.0:
                    raise StrandedPathError(f"h_{n} underflow at k={k}, t={tzb}")
                if rng.random() < max(0.0, 1.0 - h1 / h0):
                    marks.append(XSB)  # insider sell cancels the buy
                else:
                    marks.append(ZB)
                    k += 1
            t = tzb
        else:
            # noise sell arrival
            times.append(tzs)
            y_before.append(k)
            if not buy:
                marks.append(ZS)
                k -= 1
            else:
                h0, h1 = kernel.h_pair_idx(n, k, -1, min(tzs, eps_t))
                if h0 <= 0.0:
                    raise StrandedPathError(f"h_{n} underflow at k={k}, t={tzs}")
                if rng.random() < max(0.0, 1.0 - h1 / h0):
                    marks.append(XBS)  # insider buy cancels the sell
                else:
                    marks.append(ZS)
                    k -= 1
            t = tzs

    times_a = np.asarray(times, dtype=np.float64)
    y_a = np.asarray(y_before, dtype=np.int64)
    marks_a = np.asarray(marks, dtype=np.int8)
    miss = not ((lo == -INF_IDX or k >= lo) and (hi == INF_IDX or k < hi))
    record = PathRecord(
        bin_index=n,
        delta=q.delta,
        times=times_a,
        y_before=y_a,
        marks=marks_a,
        y_terminal=int(k),
        runaway=runaway,
        terminal_miss=miss,
    )
    record.realized_profit = _realized_profit(kernel, n, record)
    return record


def _realized_profit(kernel: PricingKernel, n: int, record: PathRecord) -> float:
    """Insider profit ledger: sum of signed delta*(v_n - p) over insider events."""
    marks = record.marks
    ins = (marks >= XBB)
    if not np.any(ins):
        return 0.0
    m = marks[ins]
    kb = record.y_before[ins].astype(np.int64)
    tt = record.times[ins]
    offset = np.zeros(m.size, dtype=np.int64)
    offset[m == XBB] = 1
    offset[m == XSS] = -1
    sign = np.where((m == XBB) | (m == XBS), 1.0, -1.0)
    v = float(kernel.values[n - 1])
    prices = kernel.price_many_idx(kb + offset, tt)
    return float(record.delta * np.sum(sign * (v - prices)))


# ----------------------------------------------------------------------
# batch generation
# ----------------------------------------------------------------------
def resolve_workers(workers=None) -> int:
    if workers is not None:
        return max(1, int(workers))
    env = os.environ.get("GM_BRIDGE_THREADS")
    if env:
        return max(1, int(env))
    return 1


def _draw_bin(rng, bin_probs) -> int:
    u = rng.random()
    acc = 0.0
    for i, p in enumerate(bin_probs):
        acc += p
        if u < acc:
            return i + 1
    return len(bin_probs)


def _simulate_one(params, mode, bin_index, path_index) -> PathRecord:
    if mode == "noise":
        return simulate_noise(params, path_index)
    n = bin_index
    if n is None:
        # mixture: the path's own stream draws the value bin first
        rng = params.rng.stream_for(path_index)
        n = _draw_bin(rng, params.quant.bin_probs)
        # re-derive the stream so the path is a pure function of (seed, index, n)
        sub = RngPolicy(params.rng.master_seed)
        params = MarketParams(
            kernel=params.kernel,
            rng=_OffsetPolicy(sub.master_seed),
            end_epsilon=params.end_epsilon,
            max_events=params.max_events,
        )
    if mode == "conditioned":
        return simulate_conditioned(params, n, path_index)
    if mode == "constructive":
        return simulate_constructive(params, n, path_index)
    raise ValueError(f"unknown mode {mode!r}")


@dataclass(frozen=True)
class _OffsetPolicy(RngPolicy):
    """Substream policy whose streams are offset from the mixture draw."""

    def stream_for(self, path_index: int) -> np.random.Generator:
        seq = np.random.SeedSequence((self.master_seed, path_index, 1))
        return np.random.Generator(np.random.PCG64(seq))


def _simulate_chunk(params, mode, bin_index, indices):
    return [_simulate_one(params, mode, bin_index, i) for i in indices]


def generate_paths(
    params: MarketParams,
    mode: str,
    n_paths: int,
    bin_index: int | None = None,
    start_index: int = 0,
    workers: int | None = None,
):
    """Yield PathRecords for path indices start_index .. start_index+n_paths-1.

    ``bin_index=None`` with a conditioned/constructive mode draws the value
    bin per path from the quantized law (mixture).  Records are yielded in
    path-index order regardless of worker count.
    """
    nw = resolve_workers(workers)
    indices = range(start_index, start_index + n_paths)
    if nw <= 1:
        for i in indices:
            yield _simulate_one(params, mode, bin_index, i)
        return
    chunk = max(64, n_paths // (nw * 8) or 1)
    chunks = [list(indices[i : i + chunk]) for i in range(0, n_paths, chunk)]
    with ProcessPoolExecutor(max_workers=nw) as pool:
        futures = [pool.submit(_simulate_chunk, params, mode, bin_index, c) for c in chunks]
        for fut in futures:
            yield from fut.result()


def noise_marginals(params: MarketParams, n_paths: int, times, start_index: int = 0):
    """Exact joint marginals of the noise walk at the given times.

    Returns an (n_paths, len(times)) array of lattice indices, drawn by
    vectorized Skellam increments — the law of mode-(a) unconditioned paths
    restricted to ``times``.  One RNG stream per call (seeded off
    ``start_index``), since no per-path event structure is needed.
    """
    ts = np.asarray(times, dtype=np.float64)
    if np.any(np.diff(ts) <= 0) or np.any(ts < 0) or np.any(ts > 1):
        raise ValueError("times must be increasing within [0, 1]")
    rng = params.rng.stream_for(start_index)
    beta = params.kernel.beta
    out = np.zeros((n_paths, ts.size), dtype=np.int64)
    prev = 0.0
    acc = np.zeros(n_paths, dtype=np.int64)
    for j, t in enumerate(ts):
        mu = beta * (t - prev)
        acc = acc + rng.poisson(mu, n_paths) - rng.poisson(mu, n_paths)
        out[:, j] = acc
        prev = t
    return out
