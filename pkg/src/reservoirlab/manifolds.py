"""Model-manifold descriptions and Bregman projection solvers.

A manifold is the set of distributions the loop can actually realize.  Four
kinds are supported:

* ``FullSimplex`` -- no restriction; projection is the identity.
* ``SupportMask`` -- distributions supported on a fixed index set.
* ``MomentConstraint`` -- linear expectation constraints ``A p = b``.
* ``ParametricSoftmax`` -- softmax family ``p = softmax(features @ theta)``,
  a non-convex image set; only local optimality is promised.

``project`` minimizes the Bregman divergence B_F(p, target) ("reverse"
direction); ``project_forward_kl`` minimizes KL(target || p) (the
maximum-likelihood direction).  Both report the achieved divergence as
``eps``, which is the per-round projection error the stability bounds
consume -- for unreachable targets it includes the irreducible model error,
not just optimizer slack.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog, minimize
from scipy.special import logsumexp, xlogy

from .generators import Generator, Shannon, SquaredEuclidean, forward_kl
from .simplex import Distribution, NonFiniteError

__all__ = [
    "ManifoldError",
    "InfeasibleError",
    "SolverOptions",
    "ProjectionResult",
    "FullSimplex",
    "SupportMask",
    "MomentConstraint",
    "ParametricSoftmax",
    "Manifold",
    "euclidean_simplex_projection",
    "project",
    "project_forward_kl",
]

NEWTON_TOL = 1e-10
NEWTON_MAX_ITERS = 200
SCALING_MAX_ITERS = 2000
ARMIJO_C = 1e-4


class ManifoldError(ValueError):
    pass


class InfeasibleError(ManifoldError):
    """The manifold cannot meet its constraints (or the target makes them vacuous)."""


@dataclass(frozen=True)
class SolverOptions:
    """Knobs for the iterative solvers.

    ``eps_max`` is the divergence budget under which a projection counts as
    converged; ``max_iters`` caps the first-order softmax loop.  Closed-form
    solvers ignore both except for the converged flag.
    """

    eps_max: float = 1e-9
    max_iters: int = 2000
    step_rule: str = "backtracking"
    grad_tol: float = 1e-12


DEFAULT_OPTIONS = SolverOptions()


@dataclass(frozen=True)
class ProjectionResult:
    point: Distribution
    eps: float
    iterations: int
    converged: bool


@dataclass(frozen=True)
class FullSimplex:
    pass


@dataclass(frozen=True, eq=False)
class SupportMask:
    """Distributions supported inside a fixed boolean mask (>= 1 active atom)."""

    mask: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.mask, dtype=bool).copy()
        if arr.ndim != 1 or arr.size < 2:
            raise ManifoldError(f"mask must be 1-D of dim >= 2, got shape {arr.shape}")
        if not arr.any():
            raise ManifoldError("mask must have at least one active atom")
        arr.setflags(write=False)
        object.__setattr__(self, "mask", arr)

    @property
    def dim(self) -> int:
        return self.mask.size


@dataclass(frozen=True, eq=False)
class MomentConstraint:
    """Linear family {p on the simplex : features @ p = targets}.

    Feasibility (targets inside the convex hull of feature columns) is
    validated at construction by an LP; infeasible constraints are rejected.
    """

    features: np.ndarray
    targets: np.ndarray

    def __post_init__(self) -> None:
        A = np.atleast_2d(np.asarray(self.features, dtype=np.float64)).copy()
        b = np.atleast_1d(np.asarray(self.targets, dtype=np.float64)).copy()
        if A.shape[0] != b.size:
            raise ManifoldError(f"{A.shape[0]} feature rows vs {b.size} targets")
        if A.shape[1] < 2:
            raise ManifoldError("need dimension >= 2")
        n = A.shape[1]
        res = linprog(
            c=np.zeros(n),
            A_eq=np.vstack([A, np.ones((1, n))]),
            b_eq=np.concatenate([b, [1.0]]),
            bounds=[(0.0, 1.0)] * n,
            method="highs",
        )
        if res.status != 0:
            raise InfeasibleError(
                f"moment targets {b.tolist()} are not attainable on the simplex"
            )
        A.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "features", A)
        object.__setattr__(self, "targets", b)

    @property
    def dim(self) -> int:
        return self.features.shape[1]


@dataclass(frozen=True, eq=False)
class ParametricSoftmax:
    """Softmax family p(theta) = softmax(features @ theta), d < n, full column rank."""

    features: np.ndarray

    def __post_init__(self) -> None:
        F = np.asarray(self.features, dtype=np.float64).copy()
        if F.ndim != 2:
            raise ManifoldError(f"features must be an n x d matrix, got shape {F.shape}")
        n, d = F.shape
        if not 1 <= d < n:
            raise ManifoldError(f"need 1 <= d < n, got n={n}, d={d}")
        if np.linalg.matrix_rank(F) < d:
            raise ManifoldError("feature matrix must have full column rank")
        F.setflags(write=False)
        object.__setattr__(self, "features", F)

    @property
    def dim(self) -> int:
        return self.features.shape[0]

    def point(self, theta: np.ndarray) -> Distribution:
        return Distribution(_softmax(self.features @ np.asarray(theta, dtype=np.float64)))


Manifold = FullSimplex | SupportMask | MomentConstraint | ParametricSoftmax


def _softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max()
    e = np.exp(z)
    return e / e.sum()


def euclidean_simplex_projection(v) -> Distribution:
    """argmin over the simplex of 0.5 |p - v|^2 via the sort-threshold rule."""
    arr = np.asarray(v, dtype=np.float64)
    if arr.ndim != 1 or arr.size < 2:
        raise ManifoldError(f"need a 1-D vector of dim >= 2, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        idx = int(np.flatnonzero(~np.isfinite(arr))[0])
        raise NonFiniteError(f"non-finite entry {arr[idx]!r} at index {idx}")
    u = np.sort(arr)[::-1]
    css = np.cumsum(u)
    j = np.arange(1, arr.size + 1)
    rho = int(np.max(j[u + (1.0 - css) / j > 0.0]))
    tau = (1.0 - css[rho - 1]) / rho
    return Distribution(np.maximum(arr + tau, 0.0))


def _check_dim(M, target: Distribution) -> None:
    dim = getattr(M, "dim", None)
    if dim is not None and dim != target.dim:
        raise ManifoldError(f"manifold dim {dim} vs target dim {target.dim}")


# ----------------------------------------------------------------------
# reverse projection: argmin_p B_F(p, target)
# ----------------------------------------------------------------------

def project(
    G: Generator, M, target: Distribution, opts: SolverOptions = DEFAULT_OPTIONS
) -> ProjectionResult:
    """Bregman projection of ``target`` onto the manifold.

    Solver per kind: FullSimplex is the identity; SupportMask uses
    restrict-and-renormalize under shannon, the sort-threshold rule under
    euclidean, and a Lagrange-multiplier bisection for other separable kinds;
    MomentConstraint uses an exponential-tilt dual Newton (shannon only);
    ParametricSoftmax runs backtracking gradient descent from theta = 0.
    A non-converged result is still returned with ``converged=False`` so the
    loop can keep honest projection-error books.
    """
    _check_dim(M, target)
    if isinstance(M, FullSimplex):
        return ProjectionResult(target, 0.0, 0, True)
    if isinstance(M, SupportMask):
        return _project_mask(G, M, target, opts)
    if isinstance(M, MomentConstraint):
        return _project_moments(G, M, target, opts)
    if isinstance(M, ParametricSoftmax):
        return _project_softmax(G, M, target, opts)
    raise ManifoldError(f"unknown manifold type {type(M).__name__}")


def _masked_point(mask: np.ndarray, active_values: np.ndarray, dim: int) -> Distribution:
    out = np.zeros(dim)
    out[mask] = active_values
    return Distribution(out)


def _project_mask(G, M: SupportMask, target, opts) -> ProjectionResult:
    if G.value_diverges_at_zero:
        raise ManifoldError(
            f"mask projection is undefined for {G.config_name}: the potential "
            "diverges off-support, so every masked point has infinite divergence"
        )
    t = target.probs
    on_mass = float(t[M.mask].sum())
    if on_mass < 1e-12:
        raise InfeasibleError("target carries (almost) no mass on the mask")
    if isinstance(G, Shannon):
        point = _masked_point(M.mask, t[M.mask] / on_mass, target.dim)
    elif isinstance(G, SquaredEuclidean):
        sub = euclidean_simplex_projection(t[M.mask]) if M.mask.sum() >= 2 else None
        vals = sub.probs if sub is not None else np.asarray([1.0])
        point = _masked_point(M.mask, vals, target.dim)
    else:
        vals = _bregman_simplex_tilt(G, t[M.mask])
        point = _masked_point(M.mask, vals, target.dim)
    eps = G.divergence(point, target)
    return ProjectionResult(point, eps, 0, eps <= opts.eps_max)


def _bregman_simplex_tilt(G, t_active: np.ndarray) -> np.ndarray:
    """Solve argmin_{p in simplex} sum f(p_i) - f'(t_i) p_i by bisection.

    KKT gives p_i = (f')^{-1}(f'(t_i) + mu) clipped at the boundary, with mu
    chosen so the active mass is 1.  The mass is increasing in mu, so a
    bracketed bisection is exact to float precision.
    """
    if t_active.size == 1:
        return np.asarray([1.0])
    base = G._fprime(np.maximum(t_active, G.delta))

    def mass(mu: float) -> float:
        return float(G._fprime_inv(base + mu).sum())

    lo, hi = -1.0, 1.0
    for _ in range(200):
        if mass(lo) < 1.0:
            break
        lo *= 2.0
    for _ in range(200):
        if mass(hi) > 1.0:
            break
        hi *= 2.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mass(mid) < 1.0:
            lo = mid
        else:
            hi = mid
    p = G._fprime_inv(base + 0.5 * (lo + hi))
    total = p.sum()
    if not np.isfinite(total) or total <= 0.0:
        raise ManifoldError("tilt bisection failed to bracket the simplex constraint")
    return p / total


def _tilt_distribution(t: np.ndarray, logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max()
    w = t * np.exp(z)
    return w / w.sum()


def _project_moments(G, M: MomentConstraint, target, opts) -> ProjectionResult:
    if not isinstance(G, Shannon):
        raise ManifoldError(
            "moment-constraint projection is implemented for the shannon kind only"
        )
    A, b = M.features, M.targets
    k = b.size
    t = target.probs

    def tilted(theta: np.ndarray) -> np.ndarray:
        return _tilt_distribution(t, theta @ A)

    def dual(theta: np.ndarray) -> float:
        return float(logsumexp(theta @ A, b=t) - theta @ b)

    theta = np.zeros(k)
    val = dual(theta)
    iters = 0
    converged_dual = False
    for _ in range(NEWTON_MAX_ITERS):
        p = tilted(theta)
        grad = A @ p - b
        if np.linalg.norm(grad) <= NEWTON_TOL:
            converged_dual = True
            break
        centered = A - (A @ p)[:, None]
        hess = (centered * p) @ centered.T
        step = np.linalg.solve(hess + 1e-12 * np.eye(k), -grad)
        s = 1.0
        improved = False
        for _ in range(60):
            cand = theta + s * step
            cand_val = dual(cand)
            if cand_val < val or (cand_val == val and s == 1.0):
                theta, val = cand, cand_val
                improved = True
                break
            s *= 0.5
        iters += 1
        if not improved:
            break
    if not converged_dual:
        theta, extra = _iterative_scaling(t, A, b, theta)
        iters += extra
        converged_dual = bool(np.linalg.norm(A @ tilted(theta) - b) <= 1e-8)
    point = Distribution(tilted(theta))
    eps = G.divergence(point, target)
    return ProjectionResult(point, eps, iters, converged_dual and eps <= opts.eps_max)


def _iterative_scaling(t, A, b, theta0):
    """Generalized iterative scaling fallback on [0, 1]-normalized features."""
    k, n = A.shape
    lo = A.min(axis=1)
    span = A.max(axis=1) - lo
    span[span == 0.0] = 1.0
    An = (A - lo[:, None]) / span[:, None]
    bn = (b - lo) / span
    C = float(An.sum(axis=0).max()) + 1.0  # +1 leaves room for the slack feature
    slack = C - An.sum(axis=0)
    Ae = np.vstack([An, slack])
    be = np.concatenate([bn, [C - bn.sum()]])
    if np.any(be <= 0.0):
        return theta0, 0
    theta_n = np.concatenate([theta0 * span, [0.0]])
    for it in range(SCALING_MAX_ITERS):
        p = _tilt_distribution(t, theta_n @ Ae)
        expect = Ae @ p
        if np.linalg.norm(expect[:k] - bn) <= 1e-10:
            break
        with np.errstate(divide="ignore"):
            theta_n = theta_n + np.log(be / np.maximum(expect, 1e-300)) / C
    theta = theta_n[:k] / span
    return theta, it + 1


def _reverse_softmax_grad(G, M: ParametricSoftmax, p: np.ndarray, t: np.ndarray) -> np.ndarray:
    w = G._fprime(p) - G._fprime(t)
    return M.features.T @ (p * (w - p @ w))


def _project_softmax(G, M: ParametricSoftmax, target, opts) -> ProjectionResult:
    n, d = M.features.shape
    theta = np.zeros(d)
    point = M.point(theta)
    eps = G.divergence(point, target)
    iters = 0
    for _ in range(opts.max_iters):
        grad = _reverse_softmax_grad(G, M, point.probs, target.probs)
        gnorm2 = float(grad @ grad)
        if gnorm2 <= opts.grad_tol**2:
            break
        s = 1.0
        improved = False
        for _ in range(60):
            cand_theta = theta - s * grad
            cand_point = M.point(cand_theta)
            cand_eps = G.divergence(cand_point, target)
            if cand_eps <= eps - ARMIJO_C * s * gnorm2:
                gain = eps - cand_eps
                theta, point, eps = cand_theta, cand_point, cand_eps
                improved = gain > 1e-16 + 1e-12 * eps
                break
            s *= 0.5
        iters += 1
        if not improved:
            break
    return ProjectionResult(point, eps, iters, eps <= opts.eps_max)


# ----------------------------------------------------------------------
# forward projection: argmin_p KL(target || p)
# ----------------------------------------------------------------------

def project_forward_kl(
    M, target: Distribution, opts: SolverOptions = DEFAULT_OPTIONS
) -> ProjectionResult:
    """Forward-KL (maximum-likelihood) projection; eps is in forward-KL units.

    For SupportMask the objective is the conditional forward KL given the
    mask (off-mask target mass is conditioned away, keeping it finite); the
    minimizer is again the renormalized restriction.  For ParametricSoftmax
    the problem is convex in theta and solved by damped Newton.  For
    MomentConstraint a realizable target is returned directly; otherwise the
    primal is solved with SLSQP.
    """
    _check_dim(M, target)
    if isinstance(M, FullSimplex):
        return ProjectionResult(target, 0.0, 0, True)
    if isinstance(M, SupportMask):
        t = target.probs
        on_mass = float(t[M.mask].sum())
        if on_mass < 1e-12:
            raise InfeasibleError("target carries (almost) no mass on the mask")
        point = _masked_point(M.mask, t[M.mask] / on_mass, target.dim)
        restricted = Distribution(np.where(M.mask, t, 0.0) / on_mass)
        eps = forward_kl(point, restricted)
        return ProjectionResult(point, eps, 0, eps <= opts.eps_max)
    if isinstance(M, ParametricSoftmax):
        return _forward_softmax(M, target, opts)
    if isinstance(M, MomentConstraint):
        return _forward_moments(M, target, opts)
    raise ManifoldError(f"unknown manifold type {type(M).__name__}")


def _forward_softmax(M: ParametricSoftmax, target, opts) -> ProjectionResult:
    n, d = M.features.shape
    t = target.probs
    theta = np.zeros(d)
    self_ent = float(xlogy(t, t).sum())

    def nll(th: np.ndarray) -> float:
        return float(logsumexp(M.features @ th) - t @ (M.features @ th))

    val = nll(theta)
    iters = 0
    for _ in range(NEWTON_MAX_ITERS):
        p = _softmax(M.features @ theta)
        grad = M.features.T @ (p - t)
        if np.linalg.norm(grad) <= NEWTON_TOL:
            break
        centered = M.features - p @ M.features
        hess = centered.T @ (centered * p[:, None])
        step = np.linalg.solve(hess + 1e-12 * np.eye(d), -grad)
        s = 1.0
        for _ in range(60):
            cand = theta + s * step
            cand_val = nll(cand)
            if cand_val <= val:
                theta, val = cand, cand_val
                break
            s *= 0.5
        iters += 1
    point = M.point(theta)
    eps = max(self_ent + val, 0.0)  # KL(t || p_theta), clipped against roundoff
    return ProjectionResult(point, eps, iters, eps <= opts.eps_max)


def _forward_moments(M: MomentConstraint, target, opts) -> ProjectionResult:
    A, b = M.features, M.targets
    t = target.probs
    n = t.size
    if np.max(np.abs(A @ t - b)) <= 1e-12:
        return ProjectionResult(target, 0.0, 0, True)

    def objective(p):
        return -float(np.sum(xlogy(t, np.maximum(p, 1e-300))))

    def jac(p):
        return -t / np.maximum(p, 1e-300)

    feas = linprog(
        c=np.zeros(n),
        A_eq=np.vstack([A, np.ones((1, n))]),
        b_eq=np.concatenate([b, [1.0]]),
        bounds=[(0.0, 1.0)] * n,
        method="highs",
    )
    x0 = np.maximum(feas.x, 1e-9)
    x0 = x0 / x0.sum()
    cons = [
        {"type": "eq", "fun": lambda p: A @ p - b, "jac": lambda p: A},
        {"type": "eq", "fun": lambda p: p.sum() - 1.0, "jac": lambda p: np.ones(n)},
    ]
    res = minimize(
        objective,
        x0,
        jac=jac,
        bounds=[(1e-12, 1.0)] * n,
        constraints=cons,
        method="SLSQP",
        options={"maxiter": 500, "ftol": 1e-14},
    )
    p = np.maximum(res.x, 0.0)
    point = Distribution(p / p.sum())
    eps = max(objective(point.probs) + float(xlogy(t, t).sum()), 0.0)
    return ProjectionResult(point, eps, int(res.nit), bool(res.success) and eps <= opts.eps_max)
