"""Lattice quantization of a finite discrete asset-value distribution.

Given target values v_1 < ... < v_N with probabilities p_n, constructs the
boundary sequence a_1 = -inf < a_2 < ... < a_N < a_{N+1} = +inf on the lattice
delta*Z such that the bin probabilities of the time-1 demand (a symmetric
Skellam(beta) variable scaled by delta, with beta = 1/(2*delta^2)) approximate
the target law, and such that every interior bin's middle level
(a_n + a_{n+1} - delta)/2 falls strictly between two lattice points.  Also
provides the Gaussian limit boundaries a_n^0 = Phi^{-1}(p_1 + ... + p_{n-1}).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

from .skellam import skellam_cdf, skellam_quantile

__all__ = [
    "AssetDistribution",
    "Quantization",
    "QuantizationError",
    "quantize",
    "gaussian_boundaries",
]

PROB_SUM_TOL = 1e-12
BIN_PROB_SUM_TOL = 1e-10

#: Sentinel lattice index standing in for +/- infinity; far outside any
#: reachable demand level (|Y_1/delta| is O(sqrt(2*beta))).
INF_IDX = 2**62


class QuantizationError(ValueError):
    """Raised when a distribution cannot be resolved on the given lattice."""


@dataclass(frozen=True)
class AssetDistribution:
    """Finite discrete law of the fundamental value.

    Parameters
    ----------
    values : tuple of float
        Strictly increasing asset values v_1 < ... < v_N.
    probs : tuple of float
        Probabilities p_n in (0, 1), summing to 1 within 1e-12
        (a single value with p = 1 is allowed as the degenerate case).
    """

    values: tuple
    probs: tuple

    def __post_init__(self):
        values = tuple(float(v) for v in self.values)
        probs = tuple(float(p) for p in self.probs)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "probs", probs)
        if len(values) == 0 or len(values) != len(probs):
            raise ValueError("values and probs must be nonempty and equal length")
        if any(b <= a for a, b in zip(values, values[1:])):
            raise ValueError("values must be strictly increasing")
        if len(values) == 1:
            if abs(probs[0] - 1.0) > PROB_SUM_TOL:
                raise ValueError("single-value distribution must have p = 1")
        elif any(not 0.0 < p < 1.0 for p in probs):
            raise ValueError("each probability must lie in (0, 1)")
        if abs(math.fsum(probs) - 1.0) > PROB_SUM_TOL:
            raise ValueError("probabilities must sum to 1 within 1e-12")

    @property
    def n_values(self) -> int:
        return len(self.values)

    def cumulative(self) -> np.ndarray:
        """Cumulative probabilities p_1, p_1+p_2, ..., 1."""
        return np.cumsum(self.probs)

    @classmethod
    def from_dict(cls, d: dict) -> "AssetDistribution":
        return cls(values=tuple(d["values"]), probs=tuple(d["probs"]))

    @classmethod
    def from_json(cls, text: str) -> "AssetDistribution":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class Quantization:
    """A delta-lattice quantization of an :class:`AssetDistribution`.

    Attributes
    ----------
    delta : float
        Lattice step.
    beta : float
        Noise-trader intensity 1/(2*delta^2).
    boundaries : tuple of float
        a_1 = -inf < a_2 < ... < a_N < a_{N+1} = +inf, interior entries on
        delta*Z.
    boundary_indices : tuple of int
        Lattice indices of the boundaries, with +/-INF_IDX sentinels.
    bin_probs : tuple of float
        p_n^delta = P(Z_1 in [a_n, a_{n+1})).
    mid_lower, mid_upper : tuple of float
        Per-bin bracket of the middle level: delta*floor/ceil of
        (a_n + a_{n+1} - delta)/(2*delta).  -inf/+inf for the edge bins
        (both +inf in the degenerate N=1 case).
    mid_lower_idx, mid_upper_idx : tuple of int
        Lattice-index version of the above, with +/-INF_IDX sentinels.
    """

    delta: float
    beta: float
    boundaries: tuple
    boundary_indices: tuple
    bin_probs: tuple
    mid_lower: tuple
    mid_upper: tuple
    mid_lower_idx: tuple
    mid_upper_idx: tuple

    @property
    def n_bins(self) -> int:
        return len(self.bin_probs)

    def bin_of_index(self, k: int) -> int:
        """1-based bin index n with k*delta in [a_n, a_{n+1})."""
        for n in range(self.n_bins, 0, -1):
            lo = self.boundary_indices[n - 1]
            if lo == -INF_IDX or k >= lo:
                return n
        raise AssertionError("unreachable")  # pragma: no cover

    def lattice_index(self, y: float) -> int:
        """Lattice index of a lattice-aligned point y (validated)."""
        k = round(y / self.delta)
        if abs(k * self.delta - y) > 1e-9 * max(1.0, abs(y)):
            raise ValueError(f"{y} is not aligned to the lattice with step {self.delta}")
        return int(k)

    def to_dict(self) -> dict:
        return {
            "delta": self.delta,
            "beta": self.beta,
            "boundaries": list(self.boundaries),
            "binProbs": list(self.bin_probs),
            "midLower": list(self.mid_lower),
            "midUpper": list(self.mid_upper),
        }


def quantize(dist: AssetDistribution, delta: float) -> Quantization:
    """Construct the delta-lattice quantization of ``dist``.

    Interior boundary a_{n+1} is the smallest lattice point y with
    P(Z_1 <= y) >= p_1 + ... + p_n; for interior bin pairs (2 <= n <= N-1)
    the point is advanced by one lattice step when the parity condition
    (a_n + y - delta)/2 not in delta*Z would fail (equivalently, consecutive
    boundary indices must share parity).

    Raises
    ------
    QuantizationError
        If two consecutive boundaries would coincide (distribution
        unresolvable at this delta).
    """
    if delta <= 0.0:
        raise ValueError(f"delta must be positive, got {delta}")
    beta = 1.0 / (2.0 * delta * delta)
    n_bins = dist.n_values
    if n_bins == 1:
        return Quantization(
            delta=delta,
            beta=beta,
            boundaries=(-math.inf, math.inf),
            boundary_indices=(-INF_IDX, INF_IDX),
            bin_probs=(1.0,),
            mid_lower=(math.inf,),
            mid_upper=(math.inf,),
            mid_lower_idx=(INF_IDX,),
            mid_upper_idx=(INF_IDX,),
        )

    cums = dist.cumulative()
    interior: list[int] = []
    for j in range(n_bins - 1):
        k = skellam_quantile(float(cums[j]), beta)
        if interior:
            prev = interior[-1]
            if k <= prev:
                raise QuantizationError(
                    f"distribution unresolvable at delta={delta}: boundaries "
                    f"{j + 1} and {j + 2} coincide on the lattice"
                )
            # Parity condition for the interior pair (a_{j+1}, a_{j+2}):
            # consecutive boundary indices must share parity so the bin's
            # middle level falls strictly between two lattice points.
            if 1 <= j <= n_bins - 2 and (prev + k) % 2 != 0:
                k += 1
        interior.append(k)

    boundary_idx = (-INF_IDX, *interior, INF_IDX)
    boundaries = (-math.inf, *(k * delta for k in interior), math.inf)

    # Bin probabilities from the Skellam cdf: p_n = F(k_{n+1}-1) - F(k_n-1),
    # with the upper tail taken through the symmetric complementary form
    # P(Z >= k) = P(Z <= -k) to avoid cancellation.
    cdf_at = [skellam_cdf(k - 1, beta) for k in interior]
    bin_probs = [cdf_at[0]]
    for a, b in zip(cdf_at, cdf_at[1:]):
        bin_probs.append(b - a)
    bin_probs.append(skellam_cdf(-interior[-1], beta))
    if abs(math.fsum(bin_probs) - 1.0) > BIN_PROB_SUM_TOL:
        raise QuantizationError("bin probabilities do not sum to 1 within 1e-10")
    if any(p <= 0.0 for p in bin_probs):
        raise QuantizationError(
            f"distribution unresolvable at delta={delta}: empty bin"
        )

    mid_lower_idx = [-INF_IDX]
    mid_upper_idx = [-INF_IDX]
    for n in range(1, n_bins - 1):
        lo, hi = boundary_idx[n], boundary_idx[n + 1]
        s = lo + hi - 1  # twice the middle level, in lattice-index units
        kdm = math.floor(s / 2)
        kum = math.ceil(s / 2)
        if kum - kdm != 1:
            raise QuantizationError(
                f"middle level of bin {n + 1} is lattice-aligned at delta={delta}"
            )
        mid_lower_idx.append(kdm)
        mid_upper_idx.append(kum)
    mid_lower_idx.append(INF_IDX)
    mid_upper_idx.append(INF_IDX)

    def _val(k: int) -> float:
        if k == INF_IDX:
            return math.inf
        if k == -INF_IDX:
            return -math.inf
        return k * delta

    return Quantization(
        delta=delta,
        beta=beta,
        boundaries=boundaries,
        boundary_indices=boundary_idx,
        bin_probs=tuple(float(p) for p in bin_probs),
        mid_lower=tuple(_val(k) for k in mid_lower_idx),
        mid_upper=tuple(_val(k) for k in mid_upper_idx),
        mid_lower_idx=tuple(mid_lower_idx),
        mid_upper_idx=tuple(mid_upper_idx),
    )


def gaussian_boundaries(dist: AssetDistribution) -> tuple:
    """Gaussian limit boundaries a_n^0 = Phi^{-1}(p_1 + ... + p_{n-1}).

    Returns (a_1^0, ..., a_{N+1}^0) with -inf/+inf sentinels at the ends.
    """
    cums = dist.cumulative()
    inner = tuple(float(ndtri(c)) for c in cums[:-1])
    return (-math.inf, *inner, math.inf)
