import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from anisolve.errors import CapacityError, ShapeError
from anisolve.grid import Field, GridShape
from anisolve.operator import StencilOperator, apply, assemble_dense, residual

from conftest import dense_vector, from_dense_vector, make_operator


@pytest.mark.parametrize("dims", [(2, 2, 2), (8, 8, 4), (4, 6, 3), (16, 16, 16)])
def test_apply_matches_dense(dims, rng):
    nx, ny, nz = dims
    A = make_operator(nx, nz, ny=ny)
    x = rng.standard_normal((nx, ny, nz))
    y = A.interior_product(Field.from_interior(x))
    ref = from_dense_vector(assemble_dense(A) @ dense_vector(x), nx, ny, nz)
    assert np.abs(y - ref).max() / np.abs(ref).max() <= 1e-13


def test_small_dense_row_by_hand():
    A = make_operator(2, 2)
    M = assemble_dense(A)
    p = A.params
    wh2, wz2 = (p.omega / p.h) ** 2, (p.omega * p.lam / p.h_z) ** 2
    # every cell is a corner: 4 horizontal faces (2 with zero ghosts), one vertical neighbour
    assert M[0, 0] == pytest.approx(1 + 4 * wh2 + wz2, rel=1e-14)
    assert M[0, 1] == pytest.approx(-wh2, rel=1e-14)     # east
    assert M[0, 2] == pytest.approx(-wz2, rel=1e-14)     # k + 1
    assert M[0, 4] == pytest.approx(-wh2, rel=1e-14)     # north
    assert np.count_nonzero(M[0]) == 4
    assert np.max(np.abs(M - M.T)) == 0


def test_seven_nonzeros_in_interior_rows():
    A = make_operator(5, 4)
    M = assemble_dense(A)
    row = 2 + 5 * (1 + 4 * 2)
    assert np.count_nonzero(M[row]) == 7


def test_positive_definite():
    M = assemble_dense(make_operator(4, 2))
    assert np.linalg.eigvalsh(M)[0] > 0


def test_dense_cap():
    with pytest.raises(CapacityError):
        assemble_dense(make_operator(8, 8), cap=100)


def test_zero_and_constant():
    A = make_operator(8, 4)
    u = Field(A.shape)
    assert np.all(apply(A, u).interior() == 0)
    u.data[...] = 2.0
    y = apply(A, u)
    # columns away from the Dirichlet boundary see only the zero-order term
    assert np.allclose(y.interior()[1:-1, 1:-1], 2.0, rtol=1e-10)


def test_residual(rng):
    A = make_operator(6, 3)
    u = Field.from_interior(rng.standard_normal((6, 6, 3)))
    f = apply(A, u)
    assert np.abs(residual(A, u, f).interior()).max() <= 1e-12 * np.abs(f.interior()).max()
    z = Field(A.shape)
    assert np.array_equal(residual(A, z, f).interior(), f.interior())


def test_residual_of_dense_solution(rng):
    A = make_operator(4, 3)
    b = rng.standard_normal((4, 4, 3))
    x = np.linalg.solve(assemble_dense(A), dense_vector(b))
    u = Field.from_interior(from_dense_vector(x, 4, 4, 3))
    r = residual(A, u, Field.from_interior(b)).interior()
    assert np.abs(r).max() <= 1e-12 * np.abs(b).max()


def test_apply_does_not_mutate_geometry(rng):
    A = make_operator(4, 3)
    before = A.geometry.horizontal.alpha_edge.copy()
    apply(A, Field.from_interior(rng.standard_normal((4, 4, 3))))
    assert np.array_equal(before, A.geometry.horizontal.alpha_edge)


def test_shape_mismatch():
    A = make_operator(4, 3)
    with pytest.raises(ShapeError):
        A.interior_product(Field(GridShape(4, 4, 2)))


def test_padded_layout_same_result(rng):
    x = rng.standard_normal((8, 8, 4))
    A = make_operator(8, 4)
    Ap = StencilOperator(A.geometry, GridShape(8, 8, 4, halosize=1, ol_x=32))
    y = A.interior_product(Field.from_interior(x))
    yp = Ap.interior_product(Field.from_interior(x, ol_x=32))
    assert np.array_equal(y, yp)


def test_symmetry_random_pairs():
    A = make_operator(8, 4)
    rng = np.random.default_rng(7)
    for _ in range(100):
        u = Field.from_interior(rng.standard_normal((8, 8, 4)))
        v = Field.from_interior(rng.standard_normal((8, 8, 4)))
        a = np.sum(A.interior_product(u) * v.interior())
        b = np.sum(u.interior() * A.interior_product(v))
        assert abs(a - b) <= 1e-13 * max(abs(a), abs(b))


@settings(max_examples=20, deadline=None)
@given(nx=st.integers(1, 6), ny=st.integers(1, 6), nz=st.integers(1, 5),
       nu=st.floats(0.5, 50), seed=st.integers(0, 2**31))
def test_apply_dense_property(nx, ny, nz, nu, seed):
    A = make_operator(nx, nz, nu, ny=ny)
    x = np.random.default_rng(seed).standard_normal((nx, ny, nz))
    y = A.interior_product(Field.from_interior(x))
    ref = from_dense_vector(assemble_dense(A) @ dense_vector(x), nx, ny, nz)
    assert np.abs(y - ref).max() <= 1e-13 * np.abs(ref).max()
    assert float(np.sum(y * x)) > 0
