"""Krylov drivers: preconditioned CG with a Lanczos condition estimate,
and BiCGstab for the unsymmetric / sanity-check path.

CG accumulates the Lanczos tridiagonal from its own alpha/beta recurrence
(diagonal 1/a_k + b_{k-1}/a_{k-1}, off-diagonal sqrt(b_k)/a_k), so the
condition estimate of the preconditioned operator costs one small
eigenvalue solve after the iteration. Convergence is declared on the
unpreconditioned relative residual; every true_residual_every steps the
recursive residual is replaced by the exact one to stop drift.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NumericalError
from .sparse import tridiag_eigenvalues

BREAKDOWN_EPS = 1e-30


@dataclass
class SolveReport:
    converged: bool
    iterations: int
    relative_residuals: list = field(default_factory=list)
    condition_estimate: float | None = None
    breakdown_reason: str | None = None

    @property
    def final_residual(self) -> float:
        return self.relative_residuals[-1] if self.relative_residuals else 0.0


def _identity(r: np.ndarray) -> np.ndarray:
    return r


def pcg(apply_a, b: np.ndarray, apply_m=None, tol: float = 1e-6,
        max_iterations: int = 1000, true_residual_every: int = 50):
    """Conjugate gradients on an SPD operator, starting from zero.

    Returns (x, SolveReport). Raises NumericalError when a search
    direction has non-positive energy, which means the operator (or the
    preconditioner) is not positive definite.
    """
    apply_m = apply_m or _identity
    b = np.asarray(b, dtype=np.float64)
    x = np.zeros_like(b)
    bnorm = float(np.linalg.norm(b))
    if bnorm == 0.0:
        return x, SolveReport(converged=True, iterations=0,
                              relative_residuals=[0.0], condition_estimate=None)
    r = b.copy()
    z = apply_m(r)
    p = z.copy()
    rz = float(r @ z)
    history = [1.0]
    alphas: list = []
    betas: list = []
    converged = False
    k = 0
    while k < max_iterations:
        q = apply_a(p)
        pq = float(p @ q)
        if pq <= 0.0:
            raise NumericalError(
                f"non-positive curvature p^T A p = {pq:.3e} in iteration {k + 1}; "
                f"the operator is not positive definite")
        alpha = rz / pq
        alphas.append(alpha)
        x += alpha * p
        k += 1
        if k % true_residual_every == 0:
            r = b - apply_a(x)
        else:
            r -= alpha * q
        rel = float(np.linalg.norm(r)) / bnorm
        history.append(rel)
        if rel < tol:
            converged = True
            break
        z = apply_m(r)
        rz_new = float(r @ z)
        beta = rz_new / rz
        betas.append(beta)
        rz = rz_new
        p = z + beta * p
    kappa = _lanczos_condition(alphas, betas)
    return x, SolveReport(converged=converged, iterations=k,
                          relative_residuals=history,
                          condition_estimate=kappa)


def _lanczos_condition(alphas, betas) -> float | None:
    """Condition estimate of the preconditioned operator from the CG
    coefficients."""
    m = len(alphas)
    if m == 0:
        return None
    diag = np.empty(m)
    diag[0] = 1.0 / alphas[0]
    for k in range(1, m):
        diag[k] = 1.0 / alphas[k] + betas[k - 1] / alphas[k - 1]
    off = np.array([np.sqrt(betas[k]) / alphas[k] for k in range(m - 1)])
    eigs = tridiag_eigenvalues(diag, off)
    lo, hi = float(eigs[0]), float(eigs[-1])
    if lo <= 0.0:
        return float("inf")
    return hi / lo


def bicgstab(apply_a, b: np.ndarray, apply_m=None, tol: float = 1e-6,
             max_iterations: int = 1000):
    """Left-preconditioned BiCGstab on M A x = M b, starting from zero.

    Convergence is declared on the preconditioned relative residual. Exact
    breakdowns surface as breakdown_reason with converged False rather
    than an exception: the caller decides whether that is fatal.
    """
    apply_m = apply_m or _identity
    b = np.asarray(b, dtype=np.float64)
    x = np.zeros_like(b)
    r = apply_m(b.copy())
    bnorm = float(np.linalg.norm(r))
    if bnorm == 0.0:
        return x, SolveReport(converged=True, iterations=0,
                              relative_residuals=[0.0])
    r_shadow = r.copy()
    rho = alpha = omega = 1.0
    v = np.zeros_like(b)
    p = np.zeros_like(b)
    history = [1.0]
    reason = None
    converged = False
    k = 0
    while k < max_iterations:
        rho_new = float(r_shadow @ r)
        if abs(rho_new) < BREAKDOWN_EPS * bnorm * bnorm:
            reason = "rho breakdown"
            break
        beta = (rho_new / rho) * (alpha / omega)
        rho = rho_new
        p = r + beta * (p - omega * v)
        v = apply_m(apply_a(p))
        denom = float(r_shadow @ v)
        if abs(denom) < BREAKDOWN_EPS * bnorm * bnorm:
            reason = "alpha breakdown"
            break
        alpha = rho / denom
        s = r - alpha * v
        if float(np.linalg.norm(s)) / bnorm < tol:
            x += alpha * p
            k += 1
            history.append(float(np.linalg.norm(s)) / bnorm)
            converged = True
            break
        t = apply_m(apply_a(s))
        tt = float(t @ t)
        if tt < BREAKDOWN_EPS * bnorm * bnorm:
            reason = "omega breakdown"
            break
        omega = float(t @ s) / tt
        x += alpha * p + omega * s
        r = s - omega * t
        k += 1
        rel = float(np.linalg.norm(r)) / bnorm
        history.append(rel)
        if rel < tol:
            converged = True
            break
        if abs(omega) < BREAKDOWN_EPS:
            reason = "omega breakdown"
            break
    return x, SolveReport(converged=converged, iterations=k,
                          relative_residuals=history,
                          breakdown_reason=reason)
