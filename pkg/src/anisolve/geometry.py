"""Problem parameters and discretisation coefficients for the flat box.

The model problem is the shifted Laplacian

    -omega^2 (Laplace_xy u + lambda^2 d^2u/dz^2) + u = f

on ``[0, 1]^2 x [0, H]`` with homogeneous Dirichlet conditions on the
horizontal boundary and homogeneous Neumann conditions at top and bottom,
discretised with cell-centred finite volumes.  Per column ``T`` the operator
factorises into horizontal scalars (``|T|``, ``alpha_T``, ``alpha_TT'``) and
vertical profile vectors (``a``, ``b``, ``c``, ``d``); see
:mod:`anisolve.operator` for how they combine.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import NamedTuple

import numpy as np

from .errors import ParameterError

__all__ = [
    "ProblemParams", "VerticalProfiles", "HorizontalCoefficients", "Geometry",
    "omega_from_cfl", "condition_estimate", "flat_box_geometry",
    "DEFAULT_NU_CFL", "DEFAULT_H", "DEFAULT_LAMBDA", "DEFAULT_NZ",
    "EAST", "WEST", "NORTH", "SOUTH",
]

DEFAULT_NU_CFL = 8.4
DEFAULT_H = 0.01
DEFAULT_LAMBDA = 1.0
DEFAULT_NZ = 128

# Order of the neighbour axis in HorizontalCoefficients.alpha_edge.
EAST, WEST, NORTH, SOUTH = range(4)


def omega_from_cfl(nu_cfl: float, h: float) -> float:
    """``omega = nu_cfl * h / 2``."""
    if nu_cfl <= 0 or h <= 0:
        raise ParameterError(f"nu_cfl and h must be positive, got {nu_cfl}, {h}")
    return 0.5 * nu_cfl * h


@dataclass(frozen=True)
class ProblemParams:
    nu_cfl: float
    h: float
    h_z: float
    H: float
    lam: float
    omega: float

    def __post_init__(self):
        for name in ("h", "h_z", "H", "lam"):
            if not getattr(self, name) > 0:
                raise ParameterError(f"{name} must be positive")
        # omega = 0 is allowed as the isotropy-free degenerate case
        if self.omega < 0:
            raise ParameterError("omega must be non-negative")

    @classmethod
    def from_cfl(cls, nu_cfl: float, n_x_global: int, n_z: int,
                 H: float = DEFAULT_H, lam: float = DEFAULT_LAMBDA) -> "ProblemParams":
        if n_x_global < 1 or n_z < 1:
            raise ParameterError("grid sizes must be >= 1")
        h = 1.0 / n_x_global
        return cls(nu_cfl, h, H / n_z, H, lam, omega_from_cfl(nu_cfl, h))

    def coarsened(self) -> "ProblemParams":
        """Same physics on a horizontally doubled mesh width."""
        h = 2.0 * self.h
        return replace(self, h=h, nu_cfl=2.0 * self.omega / h)


def condition_estimate(params: ProblemParams) -> float:
    """Condition number estimate ``1 + 8 omega^2 / h^2`` after line relaxation."""
    return 1.0 + 8.0 * params.omega ** 2 / params.h ** 2


@dataclass(frozen=True)
class VerticalProfiles:
    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    d: np.ndarray

    @property
    def n_z(self) -> int:
        return self.a.size

    @classmethod
    def flat_box(cls, params: ProblemParams, n_z: int) -> "VerticalProfiles":
        coupling = -(params.omega * params.lam / params.h_z) ** 2
        b = np.full(n_z, coupling)
        c = np.full(n_z, coupling)
        b[0] = 0.0
        c[-1] = 0.0
        return cls(np.ones(n_z), b, c, np.ones(n_z))

    def tridiag(self):
        """Rows of ``tridiag(-(b+c), b, c)`` as (lower, diag, upper)."""
        return self.b, -(self.b + self.c), self.c


@dataclass(frozen=True)
class HorizontalCoefficients:
    """Per-column scalars on an ``(n_x, n_y)`` horizontal grid.

    ``alpha_edge[EAST]`` couples column ``(i, j)`` to ``(i + 1, j)`` and so
    on.  Edges on the physical boundary keep their coefficient: the
    neighbour value there is a zero ghost, so the term drops out of the
    product but stays in ``alpha_cell``.
    """

    area: np.ndarray
    alpha_edge: np.ndarray
    alpha_cell: np.ndarray

    @property
    def n_x(self) -> int:
        return self.area.shape[0]

    @property
    def n_y(self) -> int:
        return self.area.shape[1]

    @classmethod
    def flat_box(cls, params: ProblemParams, n_x: int, n_y: int) -> "HorizontalCoefficients":
        area = np.ones((n_x, n_y))
        alpha_edge = np.full((4, n_x, n_y), -(params.omega / params.h) ** 2)
        return cls(area, alpha_edge, alpha_edge.sum(axis=0))

    def window(self, i0: int, j0: int, n_x: int, n_y: int) -> "HorizontalCoefficients":
        """Coefficients of the sub-block starting at 0-based column ``(i0, j0)``."""
        sl = (slice(i0, i0 + n_x), slice(j0, j0 + n_y))
        return HorizontalCoefficients(self.area[sl].copy(),
                                      self.alpha_edge[(slice(None),) + sl].copy(),
                                      self.alpha_cell[sl].copy())


class Geometry(NamedTuple):
    params: ProblemParams
    profiles: VerticalProfiles
    horizontal: HorizontalCoefficients

    def coarsened(self) -> "Geometry":
        """Rediscretisation on the horizontally halved grid (same omega, lambda)."""
        params = self.params.coarsened()
        h = self.horizontal
        if h.n_x % 2 or h.n_y % 2:
            raise ParameterError(f"cannot coarsen {h.n_x}x{h.n_y} columns")
        return Geometry(params, VerticalProfiles.flat_box(params, self.profiles.n_z),
                        HorizontalCoefficients.flat_box(params, h.n_x // 2, h.n_y // 2))

    def window(self, i0: int, j0: int, n_x: int, n_y: int) -> "Geometry":
        return Geometry(self.params, self.profiles,
                        self.horizontal.window(i0, j0, n_x, n_y))


def flat_box_geometry(n_x_global: int, n_z: int = DEFAULT_NZ,
                      nu_cfl: float = DEFAULT_NU_CFL, H: float = DEFAULT_H,
                      lam: float = DEFAULT_LAMBDA, n_y_global: int | None = None,
                      omega: float | None = None) -> Geometry:
    """Coefficients of the unit-square flat box with ``h = 1 / n_x_global``.

    ``omega`` overrides the CFL relation; it is meant for degenerate tests
    (``omega = 0`` gives the identity operator).
    """
    n_y_global = n_x_global if n_y_global is None else n_y_global
    params = ProblemParams.from_cfl(nu_cfl, n_x_global, n_z, H, lam)
    if omega is not None:
        params = replace(params, omega=float(omega), nu_cfl=2.0 * omega / params.h)
    return Geometry(params, VerticalProfiles.flat_box(params, n_z),
                    HorizontalCoefficients.flat_box(params, n_x_global, n_y_global))
