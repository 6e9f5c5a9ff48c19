"""Separable Bregman generator family on the simplex.

Each generator is a strictly convex separable potential ``F(p) = sum_i f(p_i)``
together with the objects it induces: the Bregman divergence
``F(p) - F(q) - <grad F(q), p - q>``, the generalized entropy
``-<grad F(p), p>``, the max-entropy cap over support-limited distributions,
and numeric strong-convexity / gradient-Lipschitz moduli over a delta-interior.

Closed forms per kind (f, f', f''):

==================  =========================  ======================  ============
kind                f(x)                       f'(x)                   f''(x)
==================  =========================  ======================  ============
shannon             x log x                    1 + log x               1/x
burg                -log x                     -1/x                    1/x^2
euclidean           x^2 / 2                    x                       1
tsallis(alpha)      x^a / (a(a-1))             x^(a-1) / (a-1)         x^(a-2)
beta(beta)          (x^(b+1) - x)/(b(b+1))     ((b+1)x^b - 1)/(b(b+1)) x^(b-1)
==================  =========================  ======================  ============

Entropy conventions.  ``entropy`` returns the raw value ``-sum_i p_i f'(p_i)``
(zero entries contribute 0).  For shannon this equals H(p) - 1, so
``shifted_entropy`` adds the constant ``f'(1)``, anchoring every vertex at 0;
for shannon that recovers ordinary H, for tsallis the usual Tsallis entropy.
All inequality checks state which convention they use.
"""

from __future__ import annotations

import abc
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import xlogy

from .simplex import (
    DeltaOutOfRangeError,
    DimMismatchError,
    Distribution,
)

__all__ = [
    "GeneratorError",
    "BoundaryEvaluationError",
    "SupportViolationError",
    "GeometryConstants",
    "Generator",
    "Shannon",
    "Burg",
    "SquaredEuclidean",
    "TsallisAlpha",
    "BetaDiv",
    "paper_constants",
    "contraction_coeff",
    "forward_kl",
]

DIV_NEGATIVE_TOLERANCE = 1e-12


class GeneratorError(ValueError):
    pass


class BoundaryEvaluationError(GeneratorError):
    """An evaluation hit entries below the generator's interior floor."""


class SupportViolationError(GeneratorError):
    """Forward KL requested where the reference lacks support."""


@dataclass(frozen=True)
class GeometryConstants:
    """Strong-convexity / gradient-Lipschitz moduli, squared-L2 convention.

    ``sigma_f`` lower-bounds and ``l_f`` upper-bounds the separable Hessian
    diagonal over coordinates in ``[delta, 1]``, so for p, q in the
    delta-interior: B_F(p,q) >= sigma_f/2 |p-q|^2 and
    |grad F(p) - grad F(q)| <= l_f |p-q|.
    """

    sigma_f: float
    l_f: float
    delta: float
    norm_note: str = "squared-L2 over the delta-interior"

    def __post_init__(self) -> None:
        if not (0.0 < self.sigma_f <= self.l_f):
            raise GeneratorError(
                f"need 0 < sigma_f <= l_f, got sigma_f={self.sigma_f!r}, l_f={self.l_f!r}"
            )


def paper_constants() -> GeometryConstants:
    """The sigma_F = L_F = 1 convention used for the Shannon potential."""
    return GeometryConstants(1.0, 1.0, 0.0, "paper-convention sigma_F=L_F=1")


@dataclass(frozen=True)
class Generator(abc.ABC):
    """Base class: a separable Legendre potential with an interior floor.

    ``delta`` is the floor below which boundary-divergent evaluations refuse
    to run (they raise ``BoundaryEvaluationError`` instead of silently
    clamping; the dynamics loop clamps its targets explicitly first).
    """

    delta: float = field(default=1e-9, kw_only=True)

    def __post_init__(self) -> None:
        if not 0.0 < self.delta < 1.0:
            raise DeltaOutOfRangeError(f"delta must be in (0, 1), got {self.delta!r}")

    # scalar maps, vectorized; defined for x > 0 and zero-safe where finite
    @abc.abstractmethod
    def _f(self, x: np.ndarray) -> np.ndarray: ...

    @abc.abstractmethod
    def _fprime(self, x: np.ndarray) -> np.ndarray: ...

    @abc.abstractmethod
    def _fsecond(self, x: np.ndarray) -> np.ndarray: ...

    @abc.abstractmethod
    def _xfprime(self, x: np.ndarray) -> np.ndarray:
        """x * f'(x) with the continuity value at x = 0 where it is finite."""

    def _fprime_inv(self, y: np.ndarray) -> np.ndarray:
        """Inverse of f' extended by 0 below range and +inf above range.

        Powers the Lagrange-multiplier bisection used by masked projections:
        the boundary clip realizes the KKT complementarity at p_i = 0.
        """
        raise NotImplementedError(f"{self.config_name} has no registered gradient inverse")

    # boundary traits
    value_diverges_at_zero: bool = field(default=False, init=False, repr=False)
    grad_diverges_at_zero: bool = field(default=False, init=False, repr=False)
    xfprime_diverges_at_zero: bool = field(default=False, init=False, repr=False)
    entropy_concave: bool = field(default=True, init=False, repr=False)
    # public value() additionally demands the interior for log-based kinds
    value_strict_interior: bool = field(default=False, init=False, repr=False)

    @property
    def kind(self) -> str:
        return type(self).__name__

    @property
    def config_name(self) -> str:
        return self.kind.lower()

    def _check_interior(self, arr: np.ndarray, what: str) -> None:
        if np.any(arr < self.delta):
            raise BoundaryEvaluationError(
                f"{what} for {self.config_name} requires entries >= delta={self.delta!r}; "
                f"min entry is {float(arr.min())!r}"
            )

    # ------------------------------------------------------------------
    # potential, gradient, divergence
    # ------------------------------------------------------------------

    def value(self, p: Distribution) -> float:
        """Potential F(p) = sum_i f(p_i)."""
        if self.value_strict_interior or self.value_diverges_at_zero:
            self._check_interior(p.probs, "potential value")
        return float(self._f(p.probs).sum())

    def grad(self, p: Distribution) -> np.ndarray:
        """Gradient of F: entrywise f'(p_i)."""
        if self.grad_diverges_at_zero:
            self._check_interior(p.probs, "potential gradient")
        return self._fprime(p.probs)

    def divergence(self, p: Distribution, q: Distribution) -> float:
        """Bregman divergence F(p) - F(q) - <grad F(q), p - q>, >= 0.

        q must lie in the delta-interior for kinds whose f or f' diverges at
        the boundary; p may touch the boundary whenever f extends there by
        continuity.  Values in [-1e-12, 0) are clamped to 0.
        """
        if p.dim != q.dim:
            raise DimMismatchError(f"dims differ: {p.dim} vs {q.dim}")
        if self.value_diverges_at_zero or self.grad_diverges_at_zero:
            self._check_interior(q.probs, "divergence reference q")
        if self.value_diverges_at_zero:
            self._check_interior(p.probs, "divergence argument p")
        d = float(
            self._f(p.probs).sum()
            - self._f(q.probs).sum()
            - self._fprime(q.probs) @ (p.probs - q.probs)
        )
        if d < 0.0:
            if d < -DIV_NEGATIVE_TOLERANCE:
                raise ArithmeticError(
                    f"Bregman divergence evaluated to {d!r} < -{DIV_NEGATIVE_TOLERANCE}"
                )
            d = 0.0
        return d

    # ------------------------------------------------------------------
    # generalized entropy
    # ------------------------------------------------------------------

    def entropy(self, p: Distribution) -> float:
        """Raw generalized entropy -sum_i p_i f'(p_i); zero entries contribute 0."""
        if self.xfprime_diverges_at_zero:
            self._check_interior(p.probs, "generalized entropy")
        return float(-self._xfprime(p.probs).sum())

    @property
    def entropy_offset(self) -> float:
        """Constant f'(1) that anchors vertex entropy to 0 when added to raw."""
        return float(self._fprime(np.asarray([1.0]))[0])

    def shifted_entropy(self, p: Distribution) -> float:
        """Vertex-anchored entropy (raw + f'(1)); equals Shannon H for shannon.

        Non-negative on the whole simplex exactly when the raw entropy is
        concave, which is what the stability floor arguments require.
        """
        return self.entropy(p) + self.entropy_offset

    def support_entropy_cap(self, m: int, n: int, raw: bool = False) -> float:
        """Max entropy over distributions with at most m of n atoms in support.

        For symmetric concave entropies the maximizer is uniform over
        min(m, n) atoms, giving the closed form -f'(1/k).  Reported in the
        vertex-anchored convention by default (log m for shannon); pass
        ``raw=True`` for the raw convention.  For non-concave kinds the
        uniform-support value is only a heuristic and a warning is issued.
        """
        if m < 1:
            raise GeneratorError(f"m must be >= 1, got {m}")
        if n < 2:
            raise GeneratorError(f"n must be >= 2, got {n}")
        if not self.entropy_concave:
            warnings.warn(
                f"{self.config_name}: generalized entropy is not concave; "
                "support cap reported heuristically at the uniform-support point",
                stacklevel=2,
            )
        k = min(m, n)
        cap_raw = -float(self._fprime(np.asarray([1.0 / k]))[0])
        return cap_raw if raw else cap_raw + self.entropy_offset

    # ------------------------------------------------------------------
    # geometry constants
    # ------------------------------------------------------------------

    def geometry_constants(self, delta: float, n: int) -> GeometryConstants:
        """Hessian eigenbounds of the separable potential over [delta, 1].

        f'' is monotone for every kind here, so the extrema sit at the
        endpoints; ``hessian_range_grid`` provides the brute-force check.
        """
        if not 0.0 < delta < 1.0 / n:
            raise DeltaOutOfRangeError(
                f"delta must be in (0, 1/n)=(0, {1.0 / n!r}), got {delta!r}"
            )
        ends = self._fsecond(np.asarray([delta, 1.0]))
        return GeometryConstants(float(ends.min()), float(ends.max()), delta)

    def hessian_range_grid(self, delta: float, points: int = 10_000) -> tuple[float, float]:
        """(min, max) of f'' over a dense grid on [delta, 1]; oracle use."""
        grid = np.linspace(delta, 1.0, points)
        vals = self._fsecond(grid)
        return float(vals.min()), float(vals.max())


@dataclass(frozen=True)
class Shannon(Generator):
    """Negative Shannon entropy potential; divergence is KL(p||q)."""

    def __post_init__(self) -> None:
        super().__post_init__()
        object.__setattr__(self, "grad_diverges_at_zero", True)
        object.__setattr__(self, "value_strict_interior", True)

    def _f(self, x):
        return xlogy(x, x)

    def _fprime(self, x):
        return 1.0 + np.log(x)

    def _fsecond(self, x):
        return 1.0 / x

    def _xfprime(self, x):
        return x + xlogy(x, x)

    def _fprime_inv(self, y):
        return np.exp(y - 1.0)


@dataclass(frozen=True)
class Burg(Generator):
    """Burg (log-barrier) potential; divergence is the Itakura-Saito form."""

    def __post_init__(self) -> None:
        super().__post_init__()
        object.__setattr__(self, "value_diverges_at_zero", True)
        object.__setattr__(self, "grad_diverges_at_zero", True)
        object.__setattr__(self, "value_strict_interior", True)

    def _f(self, x):
        return -np.log(x)

    def _fprime(self, x):
        return -1.0 / x

    def _fsecond(self, x):
        return 1.0 / (x * x)

    def _xfprime(self, x):
        # x * (-1/x) = -1 on the support; 0 off it, so raw entropy counts support
        return np.where(x > 0.0, -1.0, 0.0)

    def _fprime_inv(self, y):
        y = np.asarray(y, dtype=np.float64)
        with np.errstate(divide="ignore"):
            return np.where(y < 0.0, -1.0 / np.minimum(y, -1e-300), np.inf)


@dataclass(frozen=True)
class SquaredEuclidean(Generator):
    """Half squared-L2 potential; divergence is half squared Euclidean distance."""

    def _f(self, x):
        return 0.5 * x * x

    def _fprime(self, x):
        return np.asarray(x, dtype=np.float64)

    def _fsecond(self, x):
        return np.ones_like(x)

    def _xfprime(self, x):
        return x * x

    def _fprime_inv(self, y):
        return np.maximum(np.asarray(y, dtype=np.float64), 0.0)


@dataclass(frozen=True)
class TsallisAlpha(Generator):
    """Power potential x^alpha / (alpha (alpha - 1)), alpha not in {0, 1}."""

    alpha: float

    def __post_init__(self) -> None:
        super().__post_init__()
        if self.alpha in (0.0, 1.0):
            raise GeneratorError(f"alpha must avoid {{0, 1}}, got {self.alpha!r}")
        object.__setattr__(self, "value_diverges_at_zero", self.alpha < 0.0)
        object.__setattr__(self, "grad_diverges_at_zero", self.alpha < 1.0)
        object.__setattr__(self, "xfprime_diverges_at_zero", self.alpha < 0.0)
        object.__setattr__(self, "entropy_concave", self.alpha > 0.0)
        object.__setattr__(self, "value_strict_interior", self.alpha < 0.0)

    @property
    def config_name(self) -> str:
        return f"tsallis(alpha={self.alpha!r})"

    def _f(self, x):
        return np.power(x, self.alpha) / (self.alpha * (self.alpha - 1.0))

    def _fprime(self, x):
        return np.power(x, self.alpha - 1.0) / (self.alpha - 1.0)

    def _fsecond(self, x):
        return np.power(x, self.alpha - 2.0)

    def _xfprime(self, x):
        return np.power(x, self.alpha) / (self.alpha - 1.0)

    def _fprime_inv(self, y):
        a = self.alpha
        arg = (a - 1.0) * np.asarray(y, dtype=np.float64)
        if a > 1.0:
            return np.where(arg > 0.0, np.power(np.maximum(arg, 0.0), 1.0 / (a - 1.0)), 0.0)
        return np.where(arg > 0.0, np.power(np.maximum(arg, 1e-300), 1.0 / (a - 1.0)), np.inf)


@dataclass(frozen=True)
class BetaDiv(Generator):
    """Beta-divergence potential (x^(b+1) - x) / (b (b+1)), b not in {-1, 0}."""

    beta: float

    def __post_init__(self) -> None:
        super().__post_init__()
        if self.beta in (-1.0, 0.0):
            raise GeneratorError(f"beta must avoid {{-1, 0}}, got {self.beta!r}")
        object.__setattr__(self, "value_diverges_at_zero", self.beta < -1.0)
        object.__setattr__(self, "grad_diverges_at_zero", self.beta < 0.0)
        object.__setattr__(self, "xfprime_diverges_at_zero", self.beta < -1.0)
        object.__setattr__(self, "entropy_concave", self.beta > -1.0)
        object.__setattr__(self, "value_strict_interior", self.beta < -1.0)

    @property
    def config_name(self) -> str:
        return f"beta(beta={self.beta!r})"

    def _f(self, x):
        b = self.beta
        return (np.power(x, b + 1.0) - x) / (b * (b + 1.0))

    def _fprime(self, x):
        b = self.beta
        return ((b + 1.0) * np.power(x, b) - 1.0) / (b * (b + 1.0))

    def _fsecond(self, x):
        return np.power(x, self.beta - 1.0)

    def _xfprime(self, x):
        b = self.beta
        return ((b + 1.0) * np.power(x, b + 1.0) - x) / (b * (b + 1.0))

    def _fprime_inv(self, y):
        b = self.beta
        u = (b * (b + 1.0) * np.asarray(y, dtype=np.float64) + 1.0) / (b + 1.0)
        if b > 0.0:
            return np.where(u > 0.0, np.power(np.maximum(u, 0.0), 1.0 / b), 0.0)
        return np.where(u > 0.0, np.power(np.maximum(u, 1e-300), 1.0 / b), np.inf)


def contraction_coeff(constants: GeometryConstants, m: int) -> float:
    """Per-step pull toward the support cap: sigma_F / (sigma_F + m L_F)."""
    if m < 1:
        raise GeneratorError(f"m must be >= 1, got {m}")
    return constants.sigma_f / (constants.sigma_f + m * constants.l_f)


def forward_kl(p: Distribution, q: Distribution) -> float:
    """KL(q || p) = sum_i q_i log(q_i / p_i), the mass-covering direction.

    Requires supp(q) a subset of supp(p); raises ``SupportViolationError``
    where q carries mass on an exact zero of p.
    """
    if p.dim != q.dim:
        raise DimMismatchError(f"dims differ: {p.dim} vs {q.dim}")
    bad = (q.probs > 0.0) & (p.probs == 0.0)
    if np.any(bad):
        idx = int(np.flatnonzero(bad)[0])
        raise SupportViolationError(
            f"q has mass {q.probs[idx]!r} at index {idx} where p has none"
        )
    mask = q.probs > 0.0
    qm = q.probs[mask]
    return float(np.sum(qm * np.log(qm / p.probs[mask])))
