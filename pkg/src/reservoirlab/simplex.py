"""Probability-vector primitives on the finite simplex.

Everything downstream (generators, projections, the sampling loop) operates on
the :class:`Distribution` type defined here: a dense, validated, immutable
probability vector of dimension >= 2.  Randomness flows exclusively through
:class:`RandomSource`, which pins the draw contract so trajectories are
bit-reproducible across runs and across any parallel execution plan.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import xlogy

__all__ = [
    "SimplexError",
    "NegativeWeightError",
    "ZeroSumError",
    "NonFiniteError",
    "DimMismatchError",
    "LambdaOutOfRangeError",
    "DeltaOutOfRangeError",
    "NormalizationError",
    "Distribution",
    "RandomSource",
    "EmpiricalSample",
    "new_distribution",
    "uniform_distribution",
    "point_mass",
    "sample_empirical",
    "mix",
    "support_size",
    "clamp_interior",
    "shannon_entropy",
    "l1_distance",
    "total_variation",
    "SUM_TOLERANCE",
    "RENORMALIZE_TOLERANCE",
]

# A Distribution must sum to 1 within SUM_TOLERANCE.  Vectors whose sum is off
# by at most RENORMALIZE_TOLERANCE are silently renormalized at construction;
# anything farther off is rejected.
SUM_TOLERANCE = 1e-9
RENORMALIZE_TOLERANCE = 1e-6


class SimplexError(ValueError):
    """Base class for simplex-domain errors."""


class NegativeWeightError(SimplexError):
    pass


class ZeroSumError(SimplexError):
    pass


class NonFiniteError(SimplexError):
    pass


class DimMismatchError(SimplexError):
    pass


class LambdaOutOfRangeError(SimplexError):
    pass


class DeltaOutOfRangeError(SimplexError):
    pass


class NormalizationError(SimplexError):
    pass


@dataclass(frozen=True, eq=False)
class Distribution:
    """Dense probability vector on the (n-1)-simplex, n >= 2.

    Entries are non-negative and sum to 1 within ``SUM_TOLERANCE``.  The
    backing array is copied and marked read-only, so instances are safe to
    share between threads.  Use :func:`new_distribution` to build one from
    arbitrary non-negative weights.
    """

    probs: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.probs, dtype=np.float64)
        if arr.ndim != 1:
            raise SimplexError(f"probability vector must be 1-D, got shape {arr.shape}")
        if arr.size < 2:
            raise SimplexError(f"dimension must be >= 2, got {arr.size}")
        if not np.all(np.isfinite(arr)):
            idx = int(np.flatnonzero(~np.isfinite(arr))[0])
            raise NonFiniteError(f"non-finite entry {arr[idx]!r} at index {idx}")
        if np.any(arr < 0.0):
            idx = int(np.argmin(arr))
            raise NegativeWeightError(f"negative entry {arr[idx]!r} at index {idx}")
        total = float(arr.sum())
        if abs(total - 1.0) > RENORMALIZE_TOLERANCE:
            raise NormalizationError(
                f"entries sum to {total!r}; beyond renormalization tolerance "
                f"{RENORMALIZE_TOLERANCE}"
            )
        arr = arr.copy() if total == 1.0 else arr / total
        arr.setflags(write=False)
        object.__setattr__(self, "probs", arr)

    @property
    def dim(self) -> int:
        return self.probs.size

    def __repr__(self) -> str:  # compact, full vectors are noisy
        return f"Distribution(dim={self.dim}, probs={np.array2string(self.probs, threshold=8)})"


@dataclass(eq=False)
class RandomSource:
    """Deterministic RNG stream keyed by ``(master_seed, stream_id)``.

    The stream is a numpy PCG64 generator seeded with
    ``SeedSequence(master_seed, spawn_key=(stream_id,))``: equal keys replay
    the identical draw sequence, distinct stream ids give statistically
    independent streams.  The frozen draw contract for empirical sampling is
    exactly one ``Generator.multinomial(m, probs)`` call per
    :func:`sample_empirical`; trajectory reproducibility relies on it.
    """

    master_seed: int
    stream_id: int = 0
    _gen: np.random.Generator = field(init=False, repr=False)

    def __post_init__(self) -> None:
        for name, value in (("master_seed", self.master_seed), ("stream_id", self.stream_id)):
            if not isinstance(value, (int, np.integer)) or not 0 <= int(value) < 2**64:
                raise SimplexError(f"{name} must be a 64-bit unsigned integer, got {value!r}")
        seq = np.random.SeedSequence(entropy=int(self.master_seed), spawn_key=(int(self.stream_id),))
        self._gen = np.random.Generator(np.random.PCG64(seq))

    @property
    def generator(self) -> np.random.Generator:
        return self._gen

    def split(self, stream_id: int) -> "RandomSource":
        """Fresh source with the same master seed and a different stream id."""
        return RandomSource(self.master_seed, stream_id)


@dataclass(frozen=True, eq=False)
class EmpiricalSample:
    """Multinomial draw: per-outcome counts summing to the sample size m."""

    counts: np.ndarray
    m: int

    def __post_init__(self) -> None:
        arr = np.asarray(self.counts, dtype=np.int64)
        if arr.ndim != 1 or arr.size < 2:
            raise SimplexError(f"counts must be a 1-D vector of dim >= 2, got shape {arr.shape}")
        if np.any(arr < 0):
            raise NegativeWeightError("counts must be non-negative")
        if int(arr.sum()) != self.m:
            raise SimplexError(f"counts sum to {int(arr.sum())}, expected m={self.m}")
        arr = arr.copy()
        arr.setflags(write=False)
        object.__setattr__(self, "counts", arr)

    @property
    def distribution(self) -> Distribution:
        return Distribution(self.counts / self.m)

    @property
    def support_size(self) -> int:
        return int(np.count_nonzero(self.counts))


def new_distribution(weights) -> Distribution:
    """Normalize non-negative weights into a Distribution.

    Raises ``NegativeWeightError`` / ``ZeroSumError`` / ``NonFiniteError``
    naming the offending index or value.
    """
    arr = np.asarray(weights, dtype=np.float64)
    if arr.ndim != 1:
        raise SimplexError(f"weights must be 1-D, got shape {arr.shape}")
    if arr.size < 2:
        raise SimplexError(f"need at least 2 weights, got {arr.size}")
    if not np.all(np.isfinite(arr)):
        idx = int(np.flatnonzero(~np.isfinite(arr))[0])
        raise NonFiniteError(f"non-finite weight {arr[idx]!r} at index {idx}")
    if np.any(arr < 0.0):
        idx = int(np.argmin(arr))
        raise NegativeWeightError(f"negative weight {arr[idx]!r} at index {idx}")
    total = float(arr.sum())
    if total <= 0.0:
        raise ZeroSumError("weights sum to zero")
    return Distribution(arr / total)


def uniform_distribution(n: int) -> Distribution:
    if n < 2:
        raise SimplexError(f"dimension must be >= 2, got {n}")
    return Distribution(np.full(n, 1.0 / n))


def point_mass(n: int, index: int) -> Distribution:
    if not 0 <= index < n:
        raise SimplexError(f"index {index} out of range for dim {n}")
    v = np.zeros(n)
    v[index] = 1.0
    return Distribution(v)


def sample_empirical(P: Distribution, m: int, rng: RandomSource) -> EmpiricalSample:
    """Draw m i.i.d. outcomes from P as a single multinomial draw."""
    if m < 1:
        raise SimplexError(f"sample size m must be >= 1, got {m}")
    counts = rng.generator.multinomial(m, P.probs)
    return EmpiricalSample(counts, m)


def mix(p_hat: Distribution, p_res: Distribution, lam: float) -> Distribution:
    """Affine mixture (1-lam) * p_hat + lam * p_res."""
    if p_hat.dim != p_res.dim:
        raise DimMismatchError(f"dims differ: {p_hat.dim} vs {p_res.dim}")
    if not 0.0 <= lam <= 1.0:
        raise LambdaOutOfRangeError(f"mixing weight must be in [0, 1], got {lam!r}")
    return Distribution((1.0 - lam) * p_hat.probs + lam * p_res.probs)


def support_size(P: Distribution, threshold: float = 0.0) -> int:
    """Number of entries strictly greater than ``threshold`` (default 0)."""
    if threshold < 0.0:
        raise SimplexError(f"threshold must be >= 0, got {threshold!r}")
    return int(np.count_nonzero(P.probs > threshold))


def clamp_interior(P: Distribution, delta: float) -> Distribution:
    """Floor every entry at ``delta`` and renormalize.

    Keeps iterates inside the delta-interior where boundary-divergent
    potentials stay finite.  The result is within L1 distance 2*dim*delta of
    the input; inputs already in the interior are returned unchanged.
    """
    if not 0.0 < delta < 1.0 / P.dim:
        raise DeltaOutOfRangeError(f"delta must lie in (0, 1/dim)=(0, {1.0 / P.dim!r}), got {delta!r}")
    if np.all(P.probs >= delta):
        return P
    floored = np.maximum(P.probs, delta)
    return Distribution(floored / floored.sum())


def shannon_entropy(P: Distribution) -> float:
    """Ordinary Shannon entropy in nats, with 0 log 0 = 0."""
    return float(-xlogy(P.probs, P.probs).sum())


def l1_distance(p: Distribution, q: Distribution) -> float:
    if p.dim != q.dim:
        raise DimMismatchError(f"dims differ: {p.dim} vs {q.dim}")
    return float(np.abs(p.probs - q.probs).sum())


def total_variation(p: Distribution, q: Distribution) -> float:
    return 0.5 * l1_distance(p, q)
