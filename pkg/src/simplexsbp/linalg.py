import logging
from collections.abc import Callable

import numpy as np
import scipy.linalg
from pydantic import BaseModel, Field

from simplexsbp.config import LM_DEFAULTS, RANK_TOLERANCE
from simplexsbp.errors import NonConvergence

logger = logging.getLogger(__name__)


def as_dense(A: object, name: str = "A") -> np.ndarray:
    A = np.asarray(A, dtype=np.float64)
    if A.ndim == 1:
        A = A[:, None]
    assert A.ndim == 2 and A.size > 0, f"{name} must be a non-empty matrix. Value shape: {A.shape}"
    if not np.all(np.isfinite(A)):
        raise ValueError(f"{name} contains non-finite entries.")
    return A


def min_norm_lstsq(A: np.ndarray, b: np.ndarray, rank_tol: float = RANK_TOLERANCE) -> np.ndarray:
    """Minimum-norm least-squares solution through a truncated SVD.

    Singular values below ``rank_tol`` times the largest one are treated as zero.
    """
    A = as_dense(A, "A")
    b = np.asarray(b, dtype=np.float64)
    if not np.all(np.isfinite(b)):
        raise ValueError("b contains non-finite entries.")
    assert b.shape[0] == A.shape[0], f"b must have {A.shape[0]} rows. Value shape: {b.shape}"

    U, s, Vh = scipy.linalg.svd(A, full_matrices=False, lapack_driver="gesdd")
    if s.size == 0 or s[0] == 0.0:
        return np.zeros((A.shape[1],) + b.shape[1:])
    keep = s > rank_tol * s[0]
    coeffs = (U[:, keep].T @ b) / (s[keep][:, None] if b.ndim > 1 else s[keep])
    return Vh[keep].T @ coeffs


def numerical_rank(A: np.ndarray, rank_tol: float = RANK_TOLERANCE) -> int:
    s = scipy.linalg.svdvals(as_dense(A))
    return int(np.sum(s > rank_tol * s[0])) if s.size and s[0] > 0 else 0


class LMOptions(BaseModel):
    max_iterations: int = Field(default=LM_DEFAULTS["max_iterations"], ge=1)
    tolerance: float = Field(default=LM_DEFAULTS["tolerance"], gt=0)
    initial_damping: float = Field(default=LM_DEFAULTS["initial_damping"], gt=0)
    damping_growth: float = Field(default=LM_DEFAULTS["damping_growth"], gt=1)
    damping_shrink: float = Field(default=LM_DEFAULTS["damping_shrink"], gt=0, lt=1)
    jacobian_step: float = Field(default=LM_DEFAULTS["jacobian_step"], gt=0)
    max_damping: float = 1e12


def forward_jacobian(
    residual_fn: Callable[[np.ndarray], np.ndarray],
    x: np.ndarray,
    r: np.ndarray,
    step: float,
) -> np.ndarray:
    J = np.empty((r.size, x.size))
    for j in range(x.size):
        h = step * max(1.0, abs(x[j]))
        xh = x.copy()
        xh[j] += h
        J[:, j] = (residual_fn(xh) - r) / h
    return J


def levenberg_marquardt(
    residual_fn: Callable[[np.ndarray], np.ndarray],
    x0: np.ndarray,
    opts: LMOptions | None = None,
) -> np.ndarray:
    opts = opts or LMOptions()
    x = np.array(x0, dtype=np.float64).ravel()
    if not np.all(np.isfinite(x)):
        raise ValueError(f"x0 must be finite. Value: {x0!r}")

    r = np.asarray(residual_fn(x), dtype=np.float64).ravel()
    cost = float(r @ r)
    damping = opts.initial_damping

    for iteration in range(opts.max_iterations):
        if np.max(np.abs(r)) <= opts.tolerance:
            logger.debug("LM converged in %d iterations", iteration)
            return x

        J = forward_jacobian(residual_fn, x, r, opts.jacobian_step)
        scale = np.maximum(np.linalg.norm(J, axis=0), 1e-12)

        while True:
            augmented = np.vstack([J, np.sqrt(damping) * np.diag(scale)])
            rhs = np.concatenate([-r, np.zeros(x.size)])
            dx = scipy.linalg.lstsq(augmented, rhs)[0]
            x_trial = x + dx
            r_trial = np.asarray(residual_fn(x_trial), dtype=np.float64).ravel()
            cost_trial = float(r_trial @ r_trial)
            if np.isfinite(cost_trial) and cost_trial < cost:
                x, r, cost = x_trial, r_trial, cost_trial
                damping = max(damping * opts.damping_shrink, 1e-15)
                break
            damping *= opts.damping_growth
            if damping > opts.max_damping:
                break

        if damping > opts.max_damping:
            break

    residual_norm = float(np.max(np.abs(r)))
    if residual_norm <= opts.tolerance:
        return x
    raise NonConvergence("Levenberg-Marquardt did not converge", best=x, residual_norm=residual_norm)


def eig_general(A: np.ndarray) -> np.ndarray:
    A = as_dense(A, "A")
    if A.shape[0] != A.shape[1]:
        raise ValueError(f"eig_general needs a square matrix. Value shape: {A.shape}")
    return scipy.linalg.eigvals(A, check_finite=True)
