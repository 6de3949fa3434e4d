import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from anisolve.errors import RangeError, ShapeError
from anisolve.grid import (Field, GridShape, Layout, dump_field, fill, index_x_contiguous,
                           index_z_contiguous, load_field, local_axpy, local_dot,
                           transpose_layout)


def extended_range(s):
    return itertools.product(range(1 - s.ol_x, s.n_x + s.ol_x + 1),
                             range(1 - s.ol_y, s.n_y + s.ol_y + 1), range(s.n_z))


def test_x_contiguous_examples():
    s = GridShape(32, 32, 128, halosize=0)
    assert index_x_contiguous(s, 1, 1, 0) == 0
    assert index_x_contiguous(s, 2, 1, 0) == 1
    assert index_x_contiguous(s, 1, 1, 1) == 32


def test_z_contiguous_examples():
    s = GridShape(32, 32, 128, halosize=0)
    assert index_z_contiguous(s, 1, 1, 0) == 0
    assert index_z_contiguous(s, 1, 1, 1) == 1
    assert index_z_contiguous(s, 2, 1, 0) == 128


def test_unpadded_formula():
    s = GridShape(5, 3, 4, halosize=0)
    for i, j, k in itertools.product(range(1, 6), range(1, 4), range(4)):
        assert index_x_contiguous(s, i, j, k) == 5 * (4 * (j - 1) + k) + (i - 1)


@pytest.mark.parametrize("shape", [GridShape(3, 2, 2), GridShape(4, 3, 2, halosize=1, ol_x=3),
                                   GridShape(2, 2, 3, halosize=2), GridShape(3, 4, 1, 0)])
@pytest.mark.parametrize("index", [index_x_contiguous, index_z_contiguous])
def test_index_maps_are_bijections(shape, index):
    offsets = sorted(index(shape, *ijk) for ijk in extended_range(shape))
    assert offsets == list(range(shape.size))


def test_strides():
    s = GridShape(6, 5, 4, halosize=1, ol_x=2)
    assert index_x_contiguous(s, 3, 2, 1) + 1 == index_x_contiguous(s, 4, 2, 1)
    assert index_z_contiguous(s, 3, 2, 1) + 1 == index_z_contiguous(s, 3, 2, 2)


@pytest.mark.parametrize("ijk", [(0, 1, 0), (1, 1, 4), (1, 6, 0), (1, 1, -1)])
def test_out_of_range(ijk):
    s = GridShape(4, 4, 4, halosize=0)
    with pytest.raises(RangeError):
        index_x_contiguous(s, *ijk)
    with pytest.raises(RangeError):
        index_z_contiguous(s, *ijk)


def test_field_storage_matches_index_maps():
    for layout, index in ((Layout.X_CONTIGUOUS, index_x_contiguous),
                          (Layout.Z_CONTIGUOUS, index_z_contiguous)):
        s = GridShape(3, 4, 2, halosize=1, ol_x=2)
        f = Field(s, layout)
        for n, (i, j, k) in enumerate(extended_range(s)):
            f[i, j, k] = n
        for n, (i, j, k) in enumerate(extended_range(s)):
            assert f.data[index(s, i, j, k)] == n


def test_shape_validation():
    with pytest.raises(ShapeError):
        GridShape(0, 4, 4)
    with pytest.raises(ShapeError):
        GridShape(4, 4, 4, halosize=2, ol_x=1)
    with pytest.raises(ShapeError):
        GridShape(3, 4, 4).coarsened()
    assert GridShape(8, 4, 5).coarsened() == GridShape(4, 2, 5)


def test_transpose_constant_and_involution():
    f = fill(Field(GridShape(4, 4, 3)), 2.5)
    g = transpose_layout(f)
    assert g.layout is Layout.Z_CONTIGUOUS
    assert np.all(g.interior() == 2.5)
    assert transpose_layout(g).layout is Layout.X_CONTIGUOUS


def test_transpose_preserves_coordinates():
    s = GridShape(4, 3, 2)
    f = Field(s)
    for i, j, k in extended_range(s):
        f[i, j, k] = index_x_contiguous(s, i, j, k)
    g = transpose_layout(f)
    for i, j, k in extended_range(s):
        assert g[i, j, k] == index_x_contiguous(s, i, j, k)


def test_transpose_round_trip_bit_identical(rng):
    f = Field.from_interior(rng.standard_normal((8, 8, 4)))
    back = transpose_layout(transpose_layout(f))
    assert np.array_equal(back.data, f.data)


def test_dot_counts_interior_cells():
    s = GridShape(4, 4, 2)
    one = Field(s)
    one.data[...] = 1.0  # halo too; it must not count
    assert local_dot(one, one) == 32.0


def test_axpy_zero_and_dot_oracle(rng):
    f = Field.from_interior(rng.standard_normal((8, 8, 4)))
    g = Field.from_interior(rng.standard_normal((8, 8, 4)))
    assert np.array_equal(local_axpy(0.0, f, g).interior(), g.interior())
    naive = 0.0
    for i in range(1, 9):
        for j in range(1, 9):
            for k in range(4):
                naive += f[i, j, k] * g[i, j, k]
    assert local_dot(f, g) == pytest.approx(naive, rel=1e-13)
    assert local_dot(f, g) == local_dot(f, g)


def test_non_conformable():
    with pytest.raises(ShapeError):
        local_dot(Field(GridShape(4, 4, 2)), Field(GridShape(4, 4, 3)))
    with pytest.raises(ShapeError):
        local_axpy(1.0, Field(GridShape(4, 4, 2)), Field(GridShape(2, 4, 2)))


def test_dump_load_round_trip(tmp_path, rng):
    f = Field.from_interior(rng.standard_normal((5, 3, 2)))
    path = tmp_path / "f.amgf"
    dump_field(f, path)
    raw = path.read_bytes()
    assert raw[:4] == b"AMGF"
    assert np.frombuffer(raw[4:24], "<i4").tolist() == [1, 5, 3, 2, 0]
    # body: x fastest, then k, then j
    body = np.frombuffer(raw[24:], "<f8")
    assert body[1] == f[2, 1, 0] and body[5] == f[1, 1, 1]
    g = load_field(path)
    assert np.array_equal(g.interior(), f.interior())


def test_load_rejects_bad_magic(tmp_path):
    path = tmp_path / "bad"
    path.write_bytes(b"XXXX" + bytes(20))
    with pytest.raises(ShapeError):
        load_field(path)


@settings(max_examples=30, deadline=None)
@given(nx=st.integers(1, 5), ny=st.integers(1, 5), nz=st.integers(1, 4),
       seed=st.integers(0, 2**31))
def test_halo_never_contributes(nx, ny, nz, seed):
    rng = np.random.default_rng(seed)
    f = Field.from_interior(rng.standard_normal((nx, ny, nz)))
    g = Field.from_interior(rng.standard_normal((nx, ny, nz)))
    before = local_dot(f, g)
    mask = np.ones(f.shape.size, bool)
    view = mask.reshape(f.shape.ext_y, nz, f.shape.ext_x).transpose(2, 0, 1)
    view[f.shape.interior] = False
    f.data[mask] = rng.standard_normal(mask.sum())
    assert local_dot(f, g) == before
