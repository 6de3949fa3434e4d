"""Vertical line relaxation: batched Thomas solves and block-Jacobi smoothing."""

from __future__ import annotations

import numpy as np

from .errors import ParameterError, SingularMatrixError
from .grid import Field
from .operator import StencilOperator

__all__ = ["thomas_solve", "ThomasFactors", "BlockJacobiPreconditioner",
           "precondition", "smooth"]


def _band(x, n, name):
    x = np.asarray(x, dtype=float)
    if x.shape[-1] == n:
        return x
    if x.shape[-1] == n - 1:
        pad = [(0, 0)] * (x.ndim - 1)
        return np.pad(x, pad + ([(1, 0)] if name == "lower" else [(0, 1)]))
    if x.ndim == 1 and x.size == 1:
        return np.full(n, float(x[0]))
    raise ValueError(f"{name} band has length {x.shape[-1]}, expected {n} or {n - 1}")


def thomas_solve(lower, diag, upper, rhs) -> np.ndarray:
    """Solve tridiagonal systems along the last axis.

    ``lower[k]`` multiplies ``x[k - 1]`` and ``upper[k]`` multiplies
    ``x[k + 1]``; both may be given with length ``n`` (first/last entry
    ignored) or ``n - 1``.  Leading axes are batch axes and broadcast.
    Inputs are not modified.
    """
    rhs = np.asarray(rhs, dtype=float)
    diag = np.asarray(diag, dtype=float)
    n = rhs.shape[-1]
    lower = _band(lower, n, "lower")
    upper = _band(upper, n, "upper")
    shape = np.broadcast_shapes(lower.shape, diag.shape, upper.shape, rhs.shape)
    cp = np.empty(shape)
    dp = np.empty(shape)
    lo = np.broadcast_to(lower, shape)
    di = np.broadcast_to(diag, shape)
    up = np.broadcast_to(upper, shape)
    r = np.broadcast_to(rhs, shape)

    denom = di[..., 0]
    _check_pivot(denom, 0)
    cp[..., 0] = up[..., 0] / denom
    dp[..., 0] = r[..., 0] / denom
    for k in range(1, n):
        denom = di[..., k] - lo[..., k] * cp[..., k - 1]
        _check_pivot(denom, k)
        cp[..., k] = up[..., k] / denom
        dp[..., k] = (r[..., k] - lo[..., k] * dp[..., k - 1]) / denom
    x = dp
    for k in range(n - 2, -1, -1):
        x[..., k] -= cp[..., k] * x[..., k + 1]
    return x


def _check_pivot(denom, k):
    if np.any(denom == 0) or not np.all(np.isfinite(denom)):
        raise SingularMatrixError(f"zero pivot at level k={k}")


class ThomasFactors:
    """Elimination coefficients of every column, stored level-major.

    ``upper_scaled[k]`` and ``inv_pivot[k]`` are ``(n_x, n_y)`` planes, so the
    sweeps touch contiguous memory one level at a time.
    """

    def __init__(self, lower, diag, upper):
        # bands are (n_x, n_y, n_z) or broadcastable to it
        diag = np.asarray(diag, dtype=float)
        shape = np.broadcast_shapes(np.shape(lower), diag.shape, np.shape(upper))
        nz = shape[-1]
        lo = np.moveaxis(np.broadcast_to(lower, shape), -1, 0)
        di = np.moveaxis(np.broadcast_to(diag, shape), -1, 0)
        up = np.moveaxis(np.broadcast_to(upper, shape), -1, 0)
        self.lower = np.ascontiguousarray(lo)
        self.upper_scaled = np.empty(self.lower.shape)
        self.inv_pivot = np.empty(self.lower.shape)
        denom = di[0]
        _check_pivot(denom, 0)
        self.inv_pivot[0] = 1.0 / denom
        self.upper_scaled[0] = up[0] * self.inv_pivot[0]
        for k in range(1, nz):
            denom = di[k] - lo[k] * self.upper_scaled[k - 1]
            _check_pivot(denom, k)
            self.inv_pivot[k] = 1.0 / denom
            self.upper_scaled[k] = up[k] * self.inv_pivot[k]

    @property
    def n_z(self) -> int:
        return self.lower.shape[0]

    def forward(self, rhs: np.ndarray, work: np.ndarray) -> np.ndarray:
        """Forward elimination of ``rhs`` ``(n_x, n_y, n_z)`` into ``work`` ``(n_z, n_x, n_y)``."""
        work[0] = rhs[:, :, 0] * self.inv_pivot[0]
        for k in range(1, self.n_z):
            np.multiply(self.lower[k], work[k - 1], out=work[k])
            np.subtract(rhs[:, :, k], work[k], out=work[k])
            work[k] *= self.inv_pivot[k]
        return work

    def backward(self, work: np.ndarray) -> np.ndarray:
        """Back substitution in place on ``work``."""
        for k in range(self.n_z - 2, -1, -1):
            work[k] -= self.upper_scaled[k] * work[k + 1]
        return work

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        """Solution as an ``(n_x, n_y, n_z)`` view of a level-major buffer."""
        work = np.empty((self.n_z,) + rhs.shape[:2])
        self.backward(self.forward(rhs, work))
        return np.moveaxis(work, 0, -1)


class BlockJacobiPreconditioner:
    """Block-diagonal part ``M`` of ``A`` (one tridiagonal block per column).

    Parameters
    ----------
    operator : StencilOperator
    rho_relax : float
        Relaxation weight of the smoother, in ``(0, 2)``.
    """

    def __init__(self, operator: StencilOperator, rho_relax: float = 2.0 / 3.0):
        if not 0.0 < rho_relax < 2.0:
            raise ParameterError(f"rho_relax must lie in (0, 2), got {rho_relax}")
        self.operator = operator
        self.rho_relax = rho_relax
        self.factors = ThomasFactors(*operator.column_bands())

    def solve_interior(self, rhs: np.ndarray) -> np.ndarray:
        return self.factors.solve(rhs)


def precondition(M: BlockJacobiPreconditioner, r: Field, out: Field | None = None) -> Field:
    """``z = M^{-1} r``, one Thomas solve per column; reads no halo."""
    z = Field.like(r) if out is None else out
    z.interior()[...] = M.solve_interior(r.interior())
    return z


def smooth(M: BlockJacobiPreconditioner, u: Field, f: Field, counters=None) -> Field:
    """One block-Jacobi step ``u <- u + rho M^{-1} (f - A u)``, in place.

    The first pass forms the residual and eliminates forward into a private
    buffer; the second substitutes back and updates ``u``, so no neighbour
    read of ``u`` sees a partially updated value.
    """
    A = M.operator
    r = f.interior() - A.interior_product(u)
    work = np.empty((A.shape.n_z, A.shape.n_x, A.shape.n_y))
    M.factors.forward(r, work)
    M.factors.backward(work)
    u.interior()[...] += M.rho_relax * np.moveaxis(work, 0, -1)
    if counters is not None:
        counters.record("Smooth", A.shape.n_cells)
    return u
