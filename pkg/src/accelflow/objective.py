"""Twice-differentiable test objectives with analytic derivative oracles.

Every objective is packaged as an :class:`ObjectiveOracle` holding callables
for the value, gradient, and Hessian. Controllers and integrators only ever
talk to the oracle interface, so adding a new objective means adding one
constructor here and nothing else.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np

Array = np.ndarray
SeedLike = Union[int, np.random.Generator, None]


@dataclass(frozen=True)
class ObjectiveOracle:
    """Callable bundle (E, grad E, hess E) for a smooth objective on R^n."""

    dim: int
    value: Callable[[Array], float]
    gradient: Callable[[Array], Array]
    hessian: Callable[[Array], Array]
    name: str = "objective"


@dataclass(frozen=True)
class ProblemInstance:
    """An oracle plus a start point and, when known in closed form, the minimizer."""

    oracle: ObjectiveOracle
    x0: Array
    x_star: Optional[Array] = None
    e_star: Optional[float] = None


def _as_rng(seed: SeedLike) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


# ---------------------------------------------------------------------------
# quadratic
# ---------------------------------------------------------------------------


def quadratic_problem(Q: Array, x_star: Optional[Array] = None,
                      x0: Optional[Array] = None) -> ProblemInstance:
    """E(x) = 0.5 (x - x*)^T Q (x - x*) for symmetric positive definite Q.

    Q is validated once at construction: asymmetry or a non-positive
    eigenvalue is a hard error, not a warning, because downstream metric
    and convergence arguments assume a genuine positive definite quadratic.
    """
    Q = np.asarray(Q, dtype=float)
    if Q.ndim != 2 or Q.shape[0] != Q.shape[1]:
        raise ValueError(f"Q must be square, got shape {Q.shape}")
    n = Q.shape[0]
    asym = np.max(np.abs(Q - Q.T))
    if asym > 1e-12 * (1.0 + np.max(np.abs(Q))):
        raise ValueError(f"Q must be symmetric, max asymmetry {asym:.3e}")
    eigs = np.linalg.eigvalsh(Q)
    if eigs[0] <= 0.0:
        raise ValueError(f"Q must be positive definite, min eigenvalue {eigs[0]:.3e}")

    if x_star is None:
        x_star = np.zeros(n)
    x_star = np.asarray(x_star, dtype=float)
    if x_star.shape != (n,):
        raise ValueError(f"x_star has shape {x_star.shape}, expected ({n},)")
    if x0 is None:
        x0 = x_star + np.ones(n)
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (n,):
        raise ValueError(f"x0 has shape {x0.shape}, expected ({n},)")

    def value(x: Array) -> float:
        d = np.asarray(x, dtype=float) - x_star
        return 0.5 * float(d @ Q @ d)

    def gradient(x: Array) -> Array:
        return Q @ (np.asarray(x, dtype=float) - x_star)

    def hessian(x: Array) -> Array:
        return Q.copy()

    oracle = ObjectiveOracle(n, value, gradient, hessian, name="quadratic")
    return ProblemInstance(oracle, x0, x_star=x_star, e_star=0.0)


def random_quadratic(dim: int, kappa: float, seed: SeedLike = None,
                     x0: Optional[Array] = None,
                     eig_spacing: str = "log",
                     scale: float = 1.0) -> ProblemInstance:
    """Random SPD quadratic with condition number exactly kappa.

    Eigenvalues are spread over [scale, scale * kappa] (log or linear
    spacing of the unscaled [1, kappa] range) and the eigenbasis is a
    Haar-random rotation, so the axes of ill-conditioning are not aligned
    with the coordinate directions.
    """
    if dim < 1:
        raise ValueError(f"dim must be >= 1, got {dim}")
    if kappa < 1.0:
        raise ValueError(f"kappa must be >= 1, got {kappa}")
    if not (scale > 0.0):
        raise ValueError(f"scale must be positive, got {scale}")
    rng = _as_rng(seed)
    if dim == 1:
        eigs = np.array([1.0])
    elif eig_spacing == "log":
        eigs = np.logspace(0.0, np.log10(kappa), dim)
    elif eig_spacing == "linear":
        eigs = np.linspace(1.0, kappa, dim)
    else:
        raise ValueError(f"unknown eig_spacing {eig_spacing!r}")
    U, _ = np.linalg.qr(rng.standard_normal((dim, dim)))
    Q = U @ np.diag(scale * eigs) @ U.T
    Q = 0.5 * (Q + Q.T)
    x_star = rng.standard_normal(dim)
    if x0 is None:
        x0 = x_star + rng.standard_normal(dim)
    return quadratic_problem(Q, x_star=x_star, x0=x0)


# ---------------------------------------------------------------------------
# Rosenbrock (2-D)
# ---------------------------------------------------------------------------


def rosenbrock_problem(x0: Optional[Array] = None) -> ProblemInstance:
    """The 2-D Rosenbrock valley, E(x) = 100 (x2 - x1^2)^2 + (1 - x1)^2."""
    if x0 is None:
        x0 = np.array([-1.2, 1.0])
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (2,):
        raise ValueError(f"x0 has shape {x0.shape}, expected (2,)")

    def _check(x: Array) -> Array:
        x = np.asarray(x, dtype=float)
        if x.shape != (2,):
            raise ValueError(f"rosenbrock oracle is 2-D, got shape {x.shape}")
        return x

    def value(x: Array) -> float:
        x = _check(x)
        return float(100.0 * (x[1] - x[0] ** 2) ** 2 + (1.0 - x[0]) ** 2)

    def gradient(x: Array) -> Array:
        x = _check(x)
        return np.array([
            -400.0 * x[0] * (x[1] - x[0] ** 2) - 2.0 * (1.0 - x[0]),
            200.0 * (x[1] - x[0] ** 2),
        ])

    def hessian(x: Array) -> Array:
        x = _check(x)
        return np.array([
            [1200.0 * x[0] ** 2 - 400.0 * x[1] + 2.0, -400.0 * x[0]],
            [-400.0 * x[0], 200.0],
        ])

    oracle = ObjectiveOracle(2, value, gradient, hessian, name="rosenbrock")
    return ProblemInstance(oracle, x0, x_star=np.array([1.0, 1.0]), e_star=0.0)


# ---------------------------------------------------------------------------
# log-sum-exp
# ---------------------------------------------------------------------------


def log_sum_exp_problem(A: Array, b: Array,
                        x0: Optional[Array] = None) -> ProblemInstance:
    """E(x) = log sum_i exp(a_i^T x + b_i), a smooth convex max surrogate.

    Evaluation subtracts the running max before exponentiating, so large
    arguments do not overflow; the gradient and Hessian reuse the same
    softmax weights:

        grad E = A^T p,    hess E = A^T (diag(p) - p p^T) A,

    with p the softmax of A x + b. The Hessian is positive semidefinite,
    which is exactly the marginal case the Hessian-metric safeguards have
    to handle, so this objective doubles as a stress test for them.
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    if A.ndim != 2:
        raise ValueError(f"A must be a 2-D array, got shape {A.shape}")
    m, n = A.shape
    if b.shape != (m,):
        raise ValueError(f"b has shape {b.shape}, expected ({m},)")
    if x0 is None:
        x0 = np.zeros(n)
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (n,):
        raise ValueError(f"x0 has shape {x0.shape}, expected ({n},)")

    def _softmax(x: Array) -> tuple[float, Array]:
        z = A @ np.asarray(x, dtype=float) + b
        zmax = float(np.max(z))
        w = np.exp(z - zmax)
        s = float(np.sum(w))
        return zmax + np.log(s), w / s

    def value(x: Array) -> float:
        val, _ = _softmax(x)
        return val

    def gradient(x: Array) -> Array:
        _, p = _softmax(x)
        return A.T @ p

    def hessian(x: Array) -> Array:
        _, p = _softmax(x)
        H = A.T @ (np.diag(p) - np.outer(p, p)) @ A
        return 0.5 * (H + H.T)

    oracle = ObjectiveOracle(n, value, gradient, hessian, name="log_sum_exp")
    return ProblemInstance(oracle, x0)


def random_log_sum_exp(dim: int, terms: int, seed: SeedLike = None,
                       x0: Optional[Array] = None) -> ProblemInstance:
    if dim < 1 or terms < 2:
        raise ValueError(f"need dim >= 1 and terms >= 2, got dim={dim} terms={terms}")
    rng = _as_rng(seed)
    A = rng.standard_normal((terms, dim))
    b = rng.standard_normal(terms)
    if x0 is None:
        x0 = rng.standard_normal(dim)
    return log_sum_exp_problem(A, b, x0=x0)


# ---------------------------------------------------------------------------
# catalog dispatch and finite differences
# ---------------------------------------------------------------------------

CATALOG = ("quadratic", "rosenbrock", "log_sum_exp")


def build_problem(name: str, **params) -> ProblemInstance:
    """Construct a catalog problem by name; used by the config layer."""
    if name == "quadratic":
        return random_quadratic(**params)
    if name == "rosenbrock":
        return rosenbrock_problem(**params)
    if name == "log_sum_exp":
        return random_log_sum_exp(**params)
    raise ValueError(f"unknown problem {name!r}, expected one of {CATALOG}")


def finite_diff_gradient(oracle: ObjectiveOracle, x: Array, h: float = 1e-6) -> Array:
    """Central-difference gradient, the independent check on analytic ones."""
    x = np.asarray(x, dtype=float)
    g = np.empty(oracle.dim)
    for i in range(oracle.dim):
        e = np.zeros(oracle.dim)
        e[i] = h
        g[i] = (oracle.value(x + e) - oracle.value(x - e)) / (2.0 * h)
    return g


def finite_diff_hessian(oracle: ObjectiveOracle, x: Array, h: float = 1e-6) -> Array:
    """Central difference of the analytic gradient, symmetrized."""
    x = np.asarray(x, dtype=float)
    H = np.empty((oracle.dim, oracle.dim))
    for j in range(oracle.dim):
        e = np.zeros(oracle.dim)
        e[j] = h
        H[:, j] = (oracle.gradient(x + e) - oracle.gradient(x - e)) / (2.0 * h)
    return 0.5 * (H + H.T)
