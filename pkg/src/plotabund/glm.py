"""Poisson log-linear regression with offsets via iteratively weighted least squares.

The model is ``y_i ~ Poisson(mu_i)`` with ``log(mu_i) = offset_i + x_i' theta``
where the offset is the log plot area.  The negative log likelihood (dropping
the ``log(y!)`` constant) is

    sum_i |B_i| exp(x_i' theta) - y_i log|B_i| - y_i x_i' theta.

Each IWLS step solves the weighted normal system ``X'WX theta = X'Wz``.  The
normal matrix is factored with a rank-revealing symmetric eigendecomposition;
a condition number above 1e12 raises ``SingularSystem`` instead of silently
regularizing, because near-singular systems (many fine knots over sparse
counts) must surface as fit failures.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .basis import DesignMatrix
from .errors import NumericOverflow, SingularSystem, NotConverged

COND_THRESHOLD = 1e12
IWLS_TOL = 1e-10
IWLS_MAX_ITER = 50
_MAX_HALVINGS = 10


@dataclass(frozen=True)
class PoissonFit:
    """Coefficients and diagnostics from one IWLS solve at fixed kernel ranges."""

    theta: np.ndarray
    nll: float
    iterations: int
    converged: bool
    mu_hat: np.ndarray
    rank: int


def _values(X) -> np.ndarray:
    return X.values if isinstance(X, DesignMatrix) else np.asarray(X, dtype=float)


def neg_log_lik(X, y, offsets, theta) -> float:
    """Poisson negative log likelihood with log-area offsets."""
    xv = _values(X)
    y = np.asarray(y, dtype=float)
    offsets = np.asarray(offsets, dtype=float)
    eta = offsets + xv @ np.asarray(theta, dtype=float)
    with np.errstate(over="ignore"):
        nll = float(np.sum(np.exp(eta)) - np.sum(y * eta))
    if not np.isfinite(nll):
        raise NumericOverflow("negative log likelihood is not finite")
    return nll


def _solve_normal(A, b):
    """Solve the symmetric PSD system, returning (theta, rank).

    Raises ``SingularSystem`` when the eigenvalue condition number exceeds
    ``COND_THRESHOLD``.
    """
    w, V = np.linalg.eigh(A)
    if not np.all(np.isfinite(w)):
        raise NumericOverflow("non-finite weighted normal system")
    w_max = w[-1]
    if w_max <= 0 or w[0] <= w_max / COND_THRESHOLD:
        raise SingularSystem(
            f"normal system condition {np.inf if w[0] <= 0 else w_max / w[0]:.3g} "
            f"exceeds {COND_THRESHOLD:.0e}"
        )
    rank = int(np.sum(w > w_max * 1e-12))
    vb = V.T @ b
    theta = V @ (vb / (w if vb.ndim == 1 else w[:, None]))
    return theta, rank


def iwls(X, y, offsets, tol: float = IWLS_TOL, max_iter: int = IWLS_MAX_ITER) -> PoissonFit:
    """Maximum-likelihood Poisson regression by IWLS with step halving.

    Starts from an intercept-only guess (``log((sum y + 0.5) / sum |B|)``,
    slope coefficients zero) and iterates until the relative change in the
    negative log likelihood falls below ``tol``.  Steps that would increase
    the objective are halved up to 10 times, so accepted iterates are
    non-increasing in NLL.  Raises ``NotConverged`` (carrying the best fit)
    after ``max_iter`` iterations, and ``SingularSystem`` for rank-deficient
    weighted systems or all-zero counts (whose MLE diverges).
    """
    xv = _values(X)
    y = np.asarray(y, dtype=float)
    offsets = np.asarray(offsets, dtype=float)
    n, q = xv.shape
    if len(y) != n or len(offsets) != n:
        raise ValueError("X, y, offsets must have matching lengths")
    if np.any(y < 0):
        raise ValueError("counts must be non-negative")
    if n < q:
        raise SingularSystem(f"{n} observations cannot identify {q} coefficients")
    if y.sum() == 0:
        raise SingularSystem("all counts are zero; the Poisson MLE diverges")

    areas = np.exp(offsets)
    theta = np.zeros(q)
    theta[0] = np.log((y.sum() + 0.5) / areas.sum())
    nll = neg_log_lik(xv, y, offsets, theta)
    rank = q
    converged = False
    iterations = 0

    for iterations in range(1, max_iter + 1):
        eta = offsets + xv @ theta
        with np.errstate(over="ignore"):
            mu = np.exp(eta)
        if not np.all(np.isfinite(mu)):
            raise NumericOverflow("fitted means overflowed")
        z = (eta - offsets) + (y - mu) / mu
        wx = xv * mu[:, None]
        A = xv.T @ wx
        A = (A + A.T) / 2.0
        b = wx.T @ z
        proposal, rank = _solve_normal(A, b)

        step = proposal - theta
        new_nll = None
        for _ in range(_MAX_HALVINGS + 1):
            candidate = theta + step
            try:
                new_nll = neg_log_lik(xv, y, offsets, candidate)
            except NumericOverflow:
                new_nll = np.inf
            if new_nll <= nll:
                break
            step /= 2.0
        if new_nll > nll:
            # no descent along the IWLS direction; keep the incumbent
            new_nll, candidate = nll, theta

        delta = abs(nll - new_nll) / (abs(new_nll) + 1.0)
        theta, nll = candidate, new_nll
        if delta < tol:
            converged = True
            break

    mu_hat = np.exp(offsets + xv @ theta)
    fit = PoissonFit(
        theta=theta,
        nll=nll,
        iterations=iterations,
        converged=converged,
        mu_hat=mu_hat,
        rank=rank,
    )
    if not converged:
        raise NotConverged(f"IWLS did not converge in {max_iter} iterations", best=fit)
    return fit


def fisher_information(X, mu_hat) -> np.ndarray:
    """Observed information ``sum_i mu_i x_i x_i'`` (exactly symmetric)."""
    xv = _values(X)
    mu = np.asarray(mu_hat, dtype=float)
    A = xv.T @ (xv * mu[:, None])
    return (A + A.T) / 2.0
