"""Positive definite metrics weighting the control effort.

The admissible control sets are ellipsoids u^T W u <= Delta. Three choices
of W are supported: the identity (plain steepest-style steering), the
objective Hessian with an eigenvalue floor (Newton-style steering near
positive curvature), and a quasi-Newton matrix maintained from observed
(step, gradient-change) pairs. Everything downstream only needs W to be
symmetric positive definite, so each branch ends by guaranteeing that.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np

from .objective import ObjectiveOracle

Array = np.ndarray

#: relative curvature threshold below which a quasi-Newton pair is skipped
CURVATURE_SKIP_REL = 1e-10


class MetricKind(str, Enum):
    EUCLIDEAN = "euclidean"
    HESSIAN = "hessian"
    QUASI_NEWTON = "quasi_newton"


@dataclass(frozen=True, eq=False)
class MetricSpec:
    """Which W to use, plus the state the quasi-Newton variant carries.

    qn_state is the current B matrix; None means "not initialized yet" and
    resolves to the identity. Updates return a new spec rather than
    mutating, so whoever drives the iteration owns the sequencing.
    """

    kind: MetricKind
    eig_floor: float = 1e-6
    qn_state: Optional[Array] = None

    def __post_init__(self) -> None:
        if not (self.eig_floor > 0.0):
            raise ValueError(f"eig_floor must be positive, got {self.eig_floor}")


def shift_to_floor(M: Array, floor: float) -> Array:
    """Add a multiple of the identity so the smallest eigenvalue is >= floor."""
    M = np.asarray(M, dtype=float)
    M = 0.5 * (M + M.T)
    min_eig = float(np.linalg.eigvalsh(M)[0])
    if min_eig < floor:
        M = M + (floor - min_eig) * np.eye(M.shape[0])
    return M


def metric_matrix(spec: MetricSpec, oracle: ObjectiveOracle, x: Array) -> Array:
    """Resolve the metric W at the current point."""
    if spec.kind is MetricKind.EUCLIDEAN:
        return np.eye(oracle.dim)
    if spec.kind is MetricKind.HESSIAN:
        return shift_to_floor(oracle.hessian(x), spec.eig_floor)
    if spec.kind is MetricKind.QUASI_NEWTON:
        if spec.qn_state is None:
            return np.eye(oracle.dim)
        B = np.asarray(spec.qn_state, dtype=float)
        if B.shape != (oracle.dim, oracle.dim):
            raise ValueError(
                f"qn_state has shape {B.shape}, expected "
                f"({oracle.dim}, {oracle.dim})")
        return B
    raise ValueError(f"unknown metric kind {spec.kind!r}")


def metric_solve(W: Array, rhs: Array) -> Array:
    """Solve W z = rhs after certifying W is positive definite.

    The Cholesky factorization doubles as the definiteness check; a
    failure here means a safeguard upstream was skipped, so it is raised
    as an error instead of being patched over.
    """
    W = np.asarray(W, dtype=float)
    rhs = np.asarray(rhs, dtype=float)
    if W.ndim != 2 or W.shape[0] != W.shape[1] or rhs.shape != (W.shape[0],):
        raise ValueError(f"shape mismatch: W {W.shape}, rhs {rhs.shape}")
    try:
        np.linalg.cholesky(W)
    except np.linalg.LinAlgError as exc:
        raise ValueError("metric is not positive definite; apply "
                         "shift_to_floor or fix the quasi-Newton state") from exc
    return np.linalg.solve(W, rhs)


def quasi_newton_update(spec: MetricSpec, s: Array, g_delta: Array) -> MetricSpec:
    """Damped BFGS update of the quasi-Newton metric from one observed pair.

    Inputs: s, the step taken; g_delta, the gradient change over the step.
    The pair is skipped outright when the curvature s . g_delta falls below
    a small multiple of |s| |g_delta| (this covers zero and negative
    curvature). When the curvature is positive but weak against the model
    curvature s . B s, g_delta is pulled toward B s (Powell damping) so the
    updated matrix stays positive definite. An eigenvalue floor is applied
    afterwards as a belt-and-braces safeguard.
    """
    if spec.kind is not MetricKind.QUASI_NEWTON:
        raise ValueError("quasi_newton_update only applies to quasi_newton metrics")
    s = np.asarray(s, dtype=float)
    y = np.asarray(g_delta, dtype=float)
    if s.shape != y.shape or s.ndim != 1:
        raise ValueError(f"s and g_delta must be 1-D with equal shapes, got "
                         f"{s.shape} and {y.shape}")

    B = spec.qn_state
    B = np.eye(s.size) if B is None else np.asarray(B, dtype=float)

    sy = float(s @ y)
    if not (sy > CURVATURE_SKIP_REL * np.linalg.norm(s) * np.linalg.norm(y)):
        return spec if spec.qn_state is not None else dataclasses.replace(
            spec, qn_state=B)

    Bs = B @ s
    sBs = float(s @ Bs)
    if sBs <= 0.0:
        raise ValueError("quasi-Newton state lost positive definiteness; "
                         "this indicates a corrupted qn_state")
    if sy < 0.2 * sBs:
        theta = 0.8 * sBs / (sBs - sy)
        y = theta * y + (1.0 - theta) * Bs
        sy = float(s @ y)  # equals 0.2 * sBs by construction

    B_new = B - np.outer(Bs, Bs) / sBs + np.outer(y, y) / sy
    B_new = shift_to_floor(B_new, spec.eig_floor)
    return dataclasses.replace(spec, qn_state=B_new)
