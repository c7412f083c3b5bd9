"""Pricing kernel: conditional bin probabilities h_n and the pricing rule p.

For a quantization with boundaries (a_n) and noise intensity beta, the demand
Z is a compensated Skellam walk and

    h_n(y, t) = P(Z_{1-t} + y in [a_n, a_{n+1})),
    p(y, t)   = sum_n v_n * h_n(y, t),

evaluated exactly from the Skellam law with mu = (1-t)*beta.  Interior bins
sum the pmf over the bin's lattice window (no cancellation); the unbounded
edge bins use the cdf and its symmetric complement.  t = 1 is an exact
indicator/step branch.

A fixed ascending time grid (geometrically refined near t = 1) carries
memoized per-lattice-point tables of h, p, cumulative time integrals of p,
and the insider jump rates used by the simulator's thinning majorants.  The
cache is fill-once-then-immutable and safe to share across workers.
"""

from __future__ import annotations

import math
import threading

import numpy as np
from scipy.integrate import cumulative_trapezoid
from scipy.special import ive, ndtr

from .quantizer import INF_IDX, Quantization
from .skellam import skellam_cdf, skellam_pmf

__all__ = [
    "PricingKernel",
    "StrandedPathError",
    "gaussian_h",
    "gaussian_price",
    "gaussian_price_dy",
]

#: Cap applied to tabulated insider rates (the exact pointwise evaluation at
#: thinning candidates refines past this when needed).
RATE_CAP = 1e15


class StrandedPathError(RuntimeError):
    """Raised when h_n underflows to zero at a state the simulator visits."""


class PricingKernel:
    """Evaluator of h_n and p over the lattice, with grid-cached tables.

    Parameters
    ----------
    quant : Quantization
        Lattice quantization (boundaries, beta, mid levels).
    values : sequence of float
        Asset values v_1 < ... < v_N, one per bin.
    time_points : int
        Size of the cached time grid on [0, 1]; the grid is cubically
        refined toward t = 1 where h varies fastest.
    """

    def __init__(self, quant: Quantization, values, time_points: int = 2048):
        self.quant = quant
        self.values = np.asarray(values, dtype=np.float64)
        if self.values.shape != (quant.n_bins,):
            raise ValueError("values must supply one asset value per bin")
        self.beta = quant.beta
        self.delta = quant.delta
        u = np.linspace(0.0, 1.0, time_points)
        self.t_grid = 1.0 - (1.0 - u) ** 3
        self.t_grid[-1] = 1.0
        self._mu_grid = (1.0 - self.t_grid) * self.beta
        self._h_rows: dict[int, np.ndarray] = {}
        self._price_cums: dict[int, np.ndarray] = {}
        self._rate_rows: dict[tuple, np.ndarray] = {}
        self._lock = threading.RLock()  # reentrant: table fills nest (price_cum -> h_row)

    def __getstate__(self):
        # drop the lock and lazily filled tables so kernels can cross process
        # boundaries; workers rebuild their own caches
        state = self.__dict__.copy()
        state["_lock"] = None
        state["_h_rows"] = {}
        state["_price_cums"] = {}
        state["_rate_rows"] = {}
        return state

    def __setstate__(self, state):
        self.__dict__.update(state)
        self._lock = threading.RLock()

    # ------------------------------------------------------------------
    # exact evaluation
    # ------------------------------------------------------------------
    def _h_matrix(self, karr: np.ndarray, muarr: np.ndarray) -> np.ndarray:
        """h_n for paired lattice indices/Skellam parameters -> (N, E)."""
        karr = np.asarray(karr, dtype=np.int64)
        muarr = np.asarray(muarr, dtype=np.float64)
        bidx = self.quant.boundary_indices
        n_bins = self.quant.n_bins
        out = np.empty((n_bins, karr.size), dtype=np.float64)
        kflat = karr.ravel()
        for n in range(n_bins):
            lo, hi = bidx[n], bidx[n + 1]
            if lo == -INF_IDX and hi == INF_IDX:
                out[n] = 1.0
            elif lo == -INF_IDX:
                out[n] = skellam_cdf(hi - 1 - kflat, muarr)
            elif hi == INF_IDX:
                # P(Z >= lo - k) = P(Z <= k - lo) by symmetry
                out[n] = skellam_cdf(kflat - lo, muarr)
            else:
                js = np.arange(lo, hi, dtype=np.int64)
                out[n] = skellam_pmf(js[:, None] - kflat[None, :], muarr[None, :]).sum(axis=0)
        return np.clip(out, 0.0, 1.0)

    def h_all_idx(self, k: int, t: float) -> np.ndarray:
        """(h_1, ..., h_N) at lattice index ``k`` and time ``t``."""
        if t == 1.0:
            n = self.quant.bin_of_index(k)
            out = np.zeros(self.quant.n_bins)
            out[n - 1] = 1.0
            return out
        mu = (1.0 - t) * self.beta
        return self._h_matrix(np.array([k]), np.array([mu]))[:, 0]

    def h_idx(self, n: int, k: int, t: float) -> float:
        """h_n (1-based bin ``n``) at lattice index ``k``, time ``t``."""
        if t == 1.0:
            return 1.0 if self.quant.bin_of_index(k) == n else 0.0
        mu = (1.0 - t) * self.beta
        bidx = self.quant.boundary_indices
        lo, hi = bidx[n - 1], bidx[n]
        if lo == -INF_IDX and hi == INF_IDX:
            return 1.0
        if lo == -INF_IDX:
            return skellam_cdf(hi - 1 - k, mu)
        if hi == INF_IDX:
            return skellam_cdf(k - lo, mu)
        pm = ive(np.abs(np.arange(lo - k, hi - k)), 2.0 * mu)
        return float(min(1.0, pm.sum()))

    def h_pair_idx(self, n: int, k: int, step: int, t: float) -> tuple:
        """(h_n(k), h_n(k+step)) at time ``t`` in one evaluation."""
        mu = (1.0 - t) * self.beta
        bidx = self.quant.boundary_indices
        lo, hi = bidx[n - 1], bidx[n]
        if lo != -INF_IDX and hi != INF_IDX:
            # one pmf vector covers both shifted windows
            jlo = min(lo - k, lo - k - step)
            jhi = max(hi - k, hi - k - step)
            pm = ive(np.abs(np.arange(jlo, jhi)), 2.0 * mu)
            base = lo - k - jlo
            w = hi - lo
            h0 = float(pm[base : base + w].sum())
            h1 = float(pm[base - step : base - step + w].sum())
            return min(1.0, h0), min(1.0, h1)
        return self.h_idx(n, k, t), self.h_idx(n, k + step, t)

    def price_idx(self, k: int, t: float) -> float:
        return float(self.values @ self.h_all_idx(k, t))

    def price_many_idx(self, karr, tarr) -> np.ndarray:
        """Vectorized p over paired (lattice index, time) arrays, t < 1."""
        karr = np.asarray(karr, dtype=np.int64)
        tarr = np.asarray(tarr, dtype=np.float64)
        if karr.size == 0:
            return np.empty(0)
        mu = (1.0 - tarr) * self.beta
        return self.values @ self._h_matrix(karr, mu)

    # public lattice-point interface ------------------------------------
    def h(self, n: int, y: float, t: float) -> float:
        """h_n at lattice point ``y`` (1-based bin ``n``), time in [0, 1]."""
        return self.h_idx(n, self.quant.lattice_index(y), t)

    def price(self, y: float, t: float) -> float:
        """p at lattice point ``y``, time in [0, 1]."""
        return self.price_idx(self.quant.lattice_index(y), t)

    def terminal_price_idx(self, k: int) -> float:
        """The terminal step function P: v_n on [a_n, a_{n+1})."""
        return float(self.values[self.quant.bin_of_index(k) - 1])

    def terminal_price_many(self, karr) -> np.ndarray:
        """Vectorized terminal step function over lattice indices."""
        inner = np.asarray(self.quant.boundary_indices[1:-1], dtype=np.int64)
        bins = np.searchsorted(inner, np.asarray(karr, dtype=np.int64), side="right")
        return self.values[bins]

    # ------------------------------------------------------------------
    # cached grid tables
    # ------------------------------------------------------------------
    def h_row(self, k: int) -> np.ndarray:
        """(N, T) table of h_n(k*delta, t) on the cached time grid."""
        row = self._h_rows.get(k)
        if row is None:
            with self._lock:
                row = self._h_rows.get(k)
                if row is None:
                    row = np.empty((self.quant.n_bins, self.t_grid.size))
                    row[:, :-1] = self._h_matrix(
                        np.full(self.t_grid.size - 1, k, dtype=np.int64),
                        self._mu_grid[:-1],
                    )
                    row[:, -1] = 0.0
                    row[self.quant.bin_of_index(k) - 1, -1] = 1.0
                    row.setflags(write=False)
                    self._h_rows[k] = row
        return row

    def price_cum(self, k: int) -> np.ndarray:
        """Cumulative trapezoid of t -> p(k*delta, t) on the time grid."""
        cum = self._price_cums.get(k)
        if cum is None:
            with self._lock:
                cum = self._price_cums.get(k)
                if cum is None:
                    prices = self.values @ self.h_row(k)
                    cum = cumulative_trapezoid(prices, self.t_grid, initial=0.0)
                    cum.setflags(write=False)
                    self._price_cums[k] = cum
        return cum

    def price_integral_idx(self, k: int, t0, t1):
        """integral of p(k*delta, r) dr over [t0, t1]; t0/t1 may be arrays."""
        cum = self.price_cum(k)
        return np.interp(t1, self.t_grid, cum) - np.interp(t0, self.t_grid, cum)

    def insider_rate_idx(self, n: int, k: int, step: int, t: float) -> float:
        """Exact insider jump rate beta*(h_n(k+step)/h_n(k) - 1)_+ at ``t``."""
        h0, h1 = self.h_pair_idx(n, k, step, t)
        if h0 <= 0.0:
            raise StrandedPathError(
                f"h_{n} underflowed to 0 at lattice index {k}, t={t}"
            )
        return max(0.0, self.beta * (h1 / h0 - 1.0))

    def insider_rate_row(self, n: int, k: int, step: int) -> np.ndarray:
        """(T,) table of the insider rate, capped at RATE_CAP, for majorants."""
        key = (n, k, step)
        row = self._rate_rows.get(key)
        if row is None:
            with self._lock:
                row = self._rate_rows.get(key)
                if row is None:
                    h0 = self.h_row(k)[n - 1]
                    h1 = self.h_row(k + step)[n - 1]
                    with np.errstate(divide="ignore", invalid="ignore"):
                        ratio = np.where(h0 > 0.0, h1 / np.where(h0 > 0.0, h0, 1.0), np.inf)
                    row = np.clip(self.beta * (ratio - 1.0), 0.0, RATE_CAP)
                    row.setflags(write=False)
                    self._rate_rows[key] = row
        return row

    def grid_slice(self, t0: float, t1: float) -> slice:
        """Indices of grid times bracketing [t0, t1] (one point of padding)."""
        i0 = int(np.searchsorted(self.t_grid, t0, side="right")) - 1
        i1 = int(np.searchsorted(self.t_grid, t1, side="left")) + 1
        return slice(max(i0, 0), min(i1, self.t_grid.size - 1) + 1)


# ----------------------------------------------------------------------
# Gaussian (continuous-limit) analogues
# ----------------------------------------------------------------------
def _phi(x):
    return np.exp(-0.5 * np.square(x)) / math.sqrt(2.0 * math.pi)


def gaussian_h(boundaries, n: int, y, t):
    """h_n^0(y,t) = Phi((a_{n+1}-y)/s) - Phi((a_n-y)/s), s = sqrt(1-t)."""
    lo, hi = boundaries[n - 1], boundaries[n]
    y = np.asarray(y, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)
    if np.any(t > 1.0) or np.any(t < 0.0):
        raise ValueError("t must lie in [0, 1]")
    if np.all(t == 1.0):
        lo_ok = True if lo == -math.inf else y >= lo
        hi_ok = True if hi == math.inf else y < hi
        out = np.logical_and(lo_ok, hi_ok).astype(np.float64)
        return float(out) if out.ndim == 0 else out
    s = np.sqrt(1.0 - t)
    upper = np.ones_like(y * s) if hi == math.inf else ndtr((hi - y) / s)
    lower = np.zeros_like(y * s) if lo == -math.inf else ndtr((lo - y) / s)
    out = upper - lower
    return float(out) if out.ndim == 0 else out


def gaussian_price(boundaries, values, y, t):
    """p^0(y,t) = sum_n v_n h_n^0(y,t)."""
    total = 0.0
    for n, v in enumerate(values, start=1):
        total = total + v * gaussian_h(boundaries, n, y, t)
    return total


def gaussian_price_dy(boundaries, values, y, t):
    """d/dy p^0(y,t); rejected at t = 1 where the step function is singular."""
    t = np.asarray(t, dtype=np.float64)
    if np.any(t >= 1.0):
        raise ValueError("gaussian_price_dy is singular at t = 1")
    y = np.asarray(y, dtype=np.float64)
    s = np.sqrt(1.0 - t)
    total = 0.0
    for n, v in enumerate(values, start=1):
        lo, hi = boundaries[n - 1], boundaries[n]
        plo = 0.0 if lo == -math.inf else _phi((lo - y) / s)
        phi_hi = 0.0 if hi == math.inf else _phi((hi - y) / s)
        total = total + v * (plo - phi_hi) / s
    out = np.asarray(total)
    return float(out) if out.ndim == 0 else out
