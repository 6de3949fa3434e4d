import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from anisolve.errors import ParameterError
from anisolve.geometry import (ProblemParams, condition_estimate, flat_box_geometry,
                               omega_from_cfl)
from anisolve.grid import Field, GridShape
from anisolve.operator import StencilOperator


def test_omega_from_cfl():
    h = 1 / 128
    assert omega_from_cfl(8.4, h) == pytest.approx(4.2 * h, rel=1e-15)
    assert omega_from_cfl(2.0, 0.5) == 0.5
    with pytest.raises(ParameterError):
        omega_from_cfl(0.0, 0.1)
    with pytest.raises(ParameterError):
        omega_from_cfl(1.0, -0.1)


def test_condition_estimate():
    p = ProblemParams.from_cfl(8.4, 128, 128)
    assert condition_estimate(p) == pytest.approx(142, abs=0.5)
    assert condition_estimate(ProblemParams.from_cfl(16.8, 64, 8)) == pytest.approx(
        1 + 8 * 8.4 ** 2, rel=1e-12)
    p0 = ProblemParams(1.0, 0.1, 0.01, 0.01, 1.0, 0.0)
    assert condition_estimate(p0) == 1.0


@pytest.mark.parametrize("n", [16, 64, 256])
def test_condition_estimate_invariant_under_refinement(n):
    ref = condition_estimate(ProblemParams.from_cfl(8.4, 8, 4))
    assert condition_estimate(ProblemParams.from_cfl(8.4, n, 4)) == pytest.approx(ref, rel=1e-12)


def test_params_validation():
    with pytest.raises(ParameterError):
        ProblemParams(1.0, 0.0, 0.1, 0.01, 1.0, 0.1)
    with pytest.raises(ParameterError):
        ProblemParams(1.0, 0.1, 0.1, 0.01, 1.0, -0.1)
    with pytest.raises(ParameterError):
        ProblemParams.from_cfl(8.4, 0, 4)


def test_flat_box_parameters():
    g = flat_box_geometry(128, 128, 8.4)
    assert g.params.h == 1 / 128
    assert g.params.omega == pytest.approx(4.2 / 128, rel=1e-15)
    assert g.params.h_z == pytest.approx(0.01 / 128)


def test_profiles_neumann():
    g = flat_box_geometry(8, 6, 8.4)
    p = g.profiles
    assert p.b[0] == 0 and p.c[-1] == 0
    assert np.all(p.a == 1) and np.all(p.d == 1)
    lower, diag, upper = p.tridiag()
    # tridiag(-(b+c), b, c) applied to a constant column vanishes
    ones = np.ones(6)
    rows = diag * ones
    rows[1:] += lower[1:] * ones[:-1]
    rows[:-1] += upper[:-1] * ones[1:]
    assert np.allclose(rows, 0, atol=1e-9 * abs(diag).max())


def test_horizontal_conservation():
    g = flat_box_geometry(6, 3, 8.4)
    hc = g.horizontal
    assert np.array_equal(hc.alpha_cell, hc.alpha_edge.sum(axis=0))
    assert np.all(hc.area == 1)
    assert np.allclose(hc.alpha_edge, -(g.params.omega / g.params.h) ** 2)


def test_interior_diagonal_closed_form():
    n, nz = 8, 6
    g = flat_box_geometry(n, nz, 8.4)
    A = StencilOperator(g, GridShape(n, n, nz))
    w, h, hz, lam = g.params.omega, g.params.h, g.params.h_z, g.params.lam
    expected = 1 + 4 * w ** 2 / h ** 2 + 2 * w ** 2 * lam ** 2 / hz ** 2
    diag = A.column_diagonal()
    assert abs(diag[3, 3, 2] - expected) <= np.spacing(expected)


def test_coarsened_rediscretisation():
    g = flat_box_geometry(16, 4, 8.4)
    c = g.coarsened()
    assert c.params.h == 2 * g.params.h
    assert c.params.omega == g.params.omega
    assert c.params.nu_cfl == pytest.approx(4.2)
    assert np.allclose(c.horizontal.alpha_edge, -(g.params.omega / (2 * g.params.h)) ** 2)
    assert c.horizontal.n_x == 8


@settings(max_examples=25, deadline=None)
@given(nu=st.floats(0.1, 100), n=st.sampled_from([4, 8, 16]), nz=st.integers(1, 5))
def test_operator_leaves_interior_constants(nu, n, nz):
    A = StencilOperator(flat_box_geometry(n, nz, nu), GridShape(n, n, nz))
    u = Field(GridShape(n, n, nz))
    u.data[...] = 3.0  # halo holds the same constant
    y = A.interior_product(u)
    assert np.allclose(y, 3.0, rtol=1e-9)


def test_omega_scales_with_h():
    a = flat_box_geometry(32, 4, 8.4).params
    b = flat_box_geometry(64, 4, 8.4).params
    assert a.omega == pytest.approx(2 * b.omega, rel=1e-15)
