"""Preconditioned Conjugate Gradient built from two fused sweeps.

Each iteration runs

1. *(Fused) SpMV*: ``u += alpha p; p = z + beta p; q = A z + beta q;
   sigma = <p, q>``;
2. *(Fused) Tridiag*: ``r -= alpha q; z = M^{-1} r; <r, r>; kappa = <r, z>``;

followed by one halo exchange of ``z``.  Because ``u`` is only updated in the
next SpMV sweep, the solution lags one step behind the residual and is
finalised with a single axpy when the loop ends.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import eigvalsh_tridiagonal

from .errors import BreakdownError
from .grid import Field
from .operator import StencilOperator
from .parallel import Communicator
from .smoother import BlockJacobiPreconditioner

__all__ = ["ConvergenceHistory", "CGState", "fused_spmv_kernel",
           "fused_tridiag_kernel", "cg_solve", "estimate_condition"]


@dataclass
class ConvergenceHistory:
    residual_norms: list = field(default_factory=list)
    iterations: int = 0
    converged: bool = False
    final_relative_residual: float = 0.0

    @property
    def relative_residuals(self) -> list:
        r0 = self.residual_norms[0] if self.residual_norms else 0.0
        return [r / r0 if r0 else 0.0 for r in self.residual_norms]

    def convergence_factors(self) -> np.ndarray:
        """Ratios ``||r_t|| / ||r_{t-1}||``."""
        r = np.asarray(self.residual_norms)
        return r[1:] / r[:-1]


@dataclass
class CGState:
    u: Field
    p: Field
    q: Field
    r: Field
    z: Field
    alpha: float = 0.0
    beta: float = 0.0
    first: bool = True

    @classmethod
    def start(cls, f: Field) -> "CGState":
        """Zero initial guess: ``u = 0``, ``r = f``."""
        return cls(Field.like(f), Field.like(f), Field.like(f), f.copy(), Field.like(f))


def fused_spmv_kernel(A: StencilOperator, state: CGState, counters=None) -> float:
    """One sweep of the fused SpMV; returns the local part of ``sigma``.

    On the first iteration ``beta`` is taken as zero and ``u`` is not
    touched.
    """
    u, p, q, z = state.u.interior(), state.p.interior(), state.q.interior(), state.z.interior()
    Az = A.interior_product(state.z)
    if state.first:
        p[...] = z
        q[...] = Az
    else:
        u += state.alpha * p
        p *= state.beta
        p += z
        q *= state.beta
        q += Az
    if counters is not None:
        counters.record("SpMV", A.shape.n_cells)
    return float((p * q).sum(axis=2).sum())


def fused_tridiag_kernel(M: BlockJacobiPreconditioner, state: CGState,
                         counters=None, kernel: str = "Tridiag") -> tuple[float, float]:
    """One sweep of the fused preconditioner; returns local ``(<r,r>, <r,z>)``."""
    r = state.r.interior()
    if state.alpha:
        r -= state.alpha * state.q.interior()
    z = M.solve_interior(r)
    state.z.interior()[...] = z
    if counters is not None:
        counters.record(kernel, M.operator.shape.n_cells)
    return float((r * r).sum(axis=2).sum()), float((r * z).sum(axis=2).sum())


def cg_solve(A: StencilOperator, M: BlockJacobiPreconditioner, f: Field,
             epsilon: float = 1e-5, max_iter: int = 1000,
             comm: Communicator | None = None, counters=None,
             callback=None) -> tuple[Field, ConvergenceHistory]:
    """Solve ``A u = f`` from ``u = 0`` until ``||r|| / ||r_0|| < epsilon``.

    Parameters
    ----------
    A, M : operator and line-relaxation preconditioner on the local grid.
    f : Field
        Right-hand side (interior values used).
    epsilon : float
        Relative residual reduction target.
    max_iter : int
        Iteration cap; hitting it returns with ``converged=False``.
    comm : Communicator, optional
        Decomposition context; serial when omitted.
    counters : PerfCounters, optional
        Kernel tallies.  The initial preconditioner sweep is recorded as
        ``"Tridiag(setup)"`` and the final solution update as
        ``"Axpy(final)"``, so per-iteration work is exactly SpMV + Tridiag.
    callback : callable, optional
        Called as ``callback(t, state)`` after iteration ``t``.

    Raises
    ------
    BreakdownError
        If ``sigma`` or ``kappa`` becomes non-positive.
    """
    comm = Communicator.serial(f.shape) if comm is None else comm
    state = CGState.start(f)
    history = ConvergenceHistory()

    comm.iteration = 0
    rr, kappa = comm.global_sum(fused_tridiag_kernel(M, state, counters, "Tridiag(setup)"))
    r0 = math.sqrt(rr)
    history.residual_norms.append(r0)
    if r0 == 0.0:
        history.converged = True
        return state.u, history
    if kappa <= 0:
        raise BreakdownError(f"<r, M^-1 r> = {kappa} at start")
    comm.exchange(state.z, corners=False)

    for t in range(1, max_iter + 1):
        comm.iteration = t
        sigma = comm.global_sum(fused_spmv_kernel(A, state, counters))
        if sigma <= 0:
            raise BreakdownError(f"<p, A p> = {sigma} at iteration {t}")
        state.first = False
        state.alpha = kappa / sigma
        rr, kappa_new = comm.global_sum(fused_tridiag_kernel(M, state, counters))
        comm.exchange(state.z, corners=False)
        norm = math.sqrt(rr)
        history.residual_norms.append(norm)
        history.iterations = t
        if counters is not None:
            counters.iterations = t
        if callback is not None:
            callback(t, state)
        if norm / r0 < epsilon:
            history.converged = True
            break
        if kappa_new <= 0:
            raise BreakdownError(f"<r, M^-1 r> = {kappa_new} at iteration {t}")
        state.beta = kappa_new / kappa
        kappa = kappa_new

    state.u.interior()[...] += state.alpha * state.p.interior()
    if counters is not None:
        counters.record("Axpy(final)", A.shape.n_cells)
    history.final_relative_residual = history.residual_norms[-1] / r0
    return state.u, history


def estimate_condition(A: StencilOperator, M: BlockJacobiPreconditioner, f: Field,
                       steps: int = 200) -> tuple[float, float]:
    """Extreme eigenvalues of ``M^{-1} A`` from the Lanczos matrix of CG.

    The CG coefficients define the symmetric tridiagonal Lanczos matrix with
    diagonal ``1/alpha_j + beta_{j-1}/alpha_{j-1}`` and off-diagonal
    ``sqrt(beta_j)/alpha_j``.  Returns ``(lambda_min, lambda_max)``.
    """
    alphas, betas = [], []

    def collect(t, state):
        # state.beta is the coefficient that formed p_t from p_{t-1}
        alphas.append(state.alpha)
        betas.append(state.beta)

    cg_solve(A, M, f, epsilon=1e-15, max_iter=steps, callback=collect)
    n = len(alphas)
    alphas = np.asarray(alphas)
    betas = np.asarray(betas)
    diag = 1.0 / alphas
    diag[1:] += betas[1:] / alphas[:-1]
    off = np.sqrt(betas[1:]) / alphas[:-1]
    ev = eigvalsh_tridiagonal(diag, off) if n > 1 else diag
    return float(ev[0]), float(ev[-1])
