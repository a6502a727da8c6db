"""
Matrix-free conjugate gradients for (H + lam I) p = b.
"""
import logging

from dataclasses import dataclass

import numpy as np

from .exceptions import DefinitenessError


logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class CgResult(object):
    """
    solution: the final iterate
    converged: whether the relative residual reached `tol`
    iterations: number of operator applications after the initial residual
    residual_norm: ||(H + lam I) x - b|| of the recursively updated residual
    history: relative residual after every iteration
    """

    solution: np.ndarray
    converged: bool
    iterations: int
    residual_norm: float
    history: tuple


def jacobi_preconditioner(diagonal, lam=0.0):
    """Returns r -> r / (diag(H) + lam)"""
    scale = np.asarray(diagonal, dtype=float) + lam
    if np.any(scale <= 0.0):
        raise DefinitenessError(
            "Jacobi preconditioner needs a positive diagonal; increase the "
            "regularization"
        )
    inverse = 1.0 / scale
    return lambda r: inverse * r


def cg_solve(matvec, b, lam=0.0, tol=1e-8, maxit=None, preconditioner=None, x0=None):
    """
    Preconditioned conjugate gradients on the operator x -> matvec(x) + lam x.

    Parameters
    ----------
    matvec: Callable[[np.ndarray], np.ndarray]
        Symmetric positive semi-definite operator
    b: np.ndarray
        Right-hand side (typically -g)
    lam: float
        Regularization added to the diagonal
    tol: float
        Stop once ||r|| <= tol * ||b||
    maxit: Optional[int]
        Iteration cap, default len(b)
    preconditioner: Optional[Callable]
        Applies an approximation of (H + lam I)^{-1}
    x0: Optional[np.ndarray]
        Initial guess, default zero

    Returns
    -------
    CgResult
        Non-convergence is reported through `converged`, never raised.
    """
    b = np.asarray(b, dtype=float)
    maxit = len(b) if maxit is None else maxit
    apply_op = lambda v: matvec(v) + lam * v
    apply_pre = preconditioner or (lambda v: v)

    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=float)
    b_norm = np.linalg.norm(b)
    if b_norm == 0.0:
        return CgResult(np.zeros_like(b), True, 0, 0.0, ())

    residual = b - apply_op(x) if x0 is not None else b.copy()
    search = apply_pre(residual)
    delta = residual @ search
    history = []
    iterations = 0
    r_norm = np.linalg.norm(residual)
    while r_norm > tol * b_norm and iterations < maxit:
        forward = apply_op(search)
        curvature = search @ forward
        if curvature <= 0.0:
            logger.warning("CG met non-positive curvature at iteration %d", iterations)
            break
        alpha = delta / curvature
        x += alpha * search
        residual -= alpha * forward
        iterations += 1
        r_norm = np.linalg.norm(residual)
        history.append(r_norm / b_norm)

        preconditioned = apply_pre(residual)
        new_delta = residual @ preconditioned
        search = preconditioned + (new_delta / delta) * search
        delta = new_delta

    converged = bool(r_norm <= tol * b_norm)
    logger.debug(
        "CG finished after %d iterations, relative residual %.3e",
        iterations,
        r_norm / b_norm,
    )
    return CgResult(x, converged, iterations, float(r_norm), tuple(history))
