"""Matrix-free application of the discrete operator.

Row ``(T, k)`` of ``A`` reads

    (A_T u^T)_k + sum_{T'} alpha_{T,T'} d_k u^{T'}_k,
    A_T = |T| diag(a) - alpha_T diag(d) + |T| tridiag(-(b + c), b, c),

where ``tridiag(lower, diag, upper)`` couples level ``k`` to ``k - 1`` through
``b_k`` and to ``k + 1`` through ``c_k``.  Horizontal neighbours are read from
the halo of the input field, so halos must be current before calling
:func:`apply` (no staleness check is made).
"""

from __future__ import annotations

import numpy as np

from .errors import CapacityError, ShapeError
from .geometry import EAST, NORTH, SOUTH, WEST, Geometry
from .grid import Field, GridShape

__all__ = ["StencilOperator", "apply", "residual", "assemble_dense", "DENSE_CAP"]

DENSE_CAP = 65536


class StencilOperator:
    """The operator on one rank's subdomain at one multigrid level.

    Parameters
    ----------
    geometry : Geometry
        Coefficients restricted to the local columns.
    shape : GridShape
        Local grid; ``shape.n_x, shape.n_y`` must match the coefficients.
    level : int
        Multigrid level index (``L`` is finest), informational.
    """

    def __init__(self, geometry: Geometry, shape: GridShape, level: int = 1):
        hc = geometry.horizontal
        if (hc.n_x, hc.n_y) != (shape.n_x, shape.n_y) or geometry.profiles.n_z != shape.n_z:
            raise ShapeError("geometry does not match grid shape")
        if shape.halosize < 1:
            raise ShapeError("stencil application needs halosize >= 1")
        self.geometry = geometry
        self.shape = shape
        self.level = level
        # column scalars as (n_x, n_y, 1); profiles broadcast along k
        self._area = hc.area[:, :, None]
        self._alpha_cell = hc.alpha_cell[:, :, None]
        self._alpha_edge = hc.alpha_edge[:, :, :, None]
        p = geometry.profiles
        self._a, self._b, self._c, self._d = p.a, p.b, p.c, p.d

    @property
    def params(self):
        return self.geometry.params

    def column_diagonal(self) -> np.ndarray:
        """Main diagonal of every ``A_T`` as an ``(n_x, n_y, n_z)`` array."""
        return self._area * (self._a - self._b - self._c) - self._alpha_cell * self._d

    def column_bands(self):
        """``(lower, diag, upper)`` bands of the block-diagonal part."""
        return self._area * self._b, self.column_diagonal(), self._area * self._c

    def _apply_into(self, X: np.ndarray, y: np.ndarray) -> None:
        s = self.shape
        ox, oy, nx, ny = s.ol_x, s.ol_y, s.n_x, s.n_y
        xc = X[ox:ox + nx, oy:oy + ny, :]
        np.multiply(self.column_diagonal(), xc, out=y)
        if s.n_z > 1:
            y[:, :, 1:] += (self._area * self._b[1:]) * xc[:, :, :-1]
            y[:, :, :-1] += (self._area * self._c[:-1]) * xc[:, :, 1:]
        ae = self._alpha_edge
        hsum = ae[EAST] * X[ox + 1:ox + 1 + nx, oy:oy + ny, :]
        hsum += ae[WEST] * X[ox - 1:ox - 1 + nx, oy:oy + ny, :]
        hsum += ae[NORTH] * X[ox:ox + nx, oy + 1:oy + 1 + ny, :]
        hsum += ae[SOUTH] * X[ox:ox + nx, oy - 1:oy - 1 + ny, :]
        hsum *= self._d
        y += hsum

    def interior_product(self, x: Field) -> np.ndarray:
        """``A x`` on the interior as a plain ``(n_x, n_y, n_z)`` array."""
        if x.shape != self.shape:
            raise ShapeError("field shape does not match operator")
        y = np.empty((self.shape.n_x, self.shape.n_y, self.shape.n_z))
        self._apply_into(x.ext(), y)
        return y


def apply(A: StencilOperator, x: Field, out: Field | None = None) -> Field:
    """``y = A x``; only the interior of ``y`` is written."""
    y = Field.like(x) if out is None else out
    y.interior()[...] = A.interior_product(x)
    return y


def residual(A: StencilOperator, u: Field, f: Field, out: Field | None = None) -> Field:
    """``r = f - A u``."""
    r = Field.like(u) if out is None else out
    r.interior()[...] = f.interior() - A.interior_product(u)
    return r


def assemble_dense(A: StencilOperator, cap: int = DENSE_CAP) -> np.ndarray:
    """Explicit ``N x N`` matrix of ``A`` for a single subdomain.

    Unknowns are numbered ``i + n_x * (k + n_z * j)`` (0-based), i.e. the
    unpadded x-contiguous order.  Every horizontal side is treated as a
    physical boundary.  Entries are built cell by cell from the coefficients,
    independently of :func:`apply`.
    """
    s = A.shape
    nx, ny, nz = s.n_x, s.n_y, s.n_z
    n = nx * ny * nz
    if n > cap:
        raise CapacityError(f"{n} unknowns exceed dense cap {cap}")
    g = A.geometry
    area, alpha_edge, alpha_cell = g.horizontal.area, g.horizontal.alpha_edge, g.horizontal.alpha_cell
    a, b, c, d = g.profiles.a, g.profiles.b, g.profiles.c, g.profiles.d
    M = np.zeros((n, n))

    def idx(i, j, k):
        return i + nx * (k + nz * j)

    offsets = {EAST: (1, 0), WEST: (-1, 0), NORTH: (0, 1), SOUTH: (0, -1)}
    for j in range(ny):
        for i in range(nx):
            for k in range(nz):
                row = idx(i, j, k)
                M[row, row] = area[i, j] * (a[k] - b[k] - c[k]) - alpha_cell[i, j] * d[k]
                if k > 0:
                    M[row, idx(i, j, k - 1)] = area[i, j] * b[k]
                if k < nz - 1:
                    M[row, idx(i, j, k + 1)] = area[i, j] * c[k]
                for side, (di, dj) in offsets.items():
                    ii, jj = i + di, j + dj
                    if 0 <= ii < nx and 0 <= jj < ny:
                        M[row, idx(ii, jj, k)] = alpha_edge[side, i, j] * d[k]
    return M
