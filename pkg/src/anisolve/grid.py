"""Grid shapes, padded field storage and level-1 operations.

A field lives on one rank's subdomain: ``n_x * n_y`` vertical columns of
``n_z`` cells, surrounded by a horizontal halo of width ``halosize`` and
optional extra padding in ``x``.  Storage is a flat float64 array in one of
two linear orders:

* ``Layout.X_CONTIGUOUS``: ``x`` fastest, then ``k``, then ``j``
  (the horizontally coalesced ordering used on accelerators);
* ``Layout.Z_CONTIGUOUS``: ``k`` fastest, then ``i``, then ``j``
  (the column-contiguous ordering natural on CPUs).

Kernels never touch the flat array directly.  :meth:`Field.ext` returns a
strided ``(i, j, k)`` view over the extended index range, so the same numpy
code runs on either layout.
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass

import numpy as np

from .errors import RangeError, ShapeError

__all__ = [
    "GridShape", "Layout", "Field",
    "index_x_contiguous", "index_z_contiguous", "transpose_layout",
    "local_dot", "local_axpy", "fill",
    "dump_field", "load_field", "FIELD_MAGIC",
]


class Layout(enum.IntEnum):
    X_CONTIGUOUS = 0
    Z_CONTIGUOUS = 1


@dataclass(frozen=True)
class GridShape:
    """Local grid of ``n_x * n_y * n_z`` cells with halo and padding widths.

    ``ol_x`` defaults to ``halosize``; set it larger (e.g. 32) to reproduce
    aligned-padding experiments.  ``ol_y`` always equals ``halosize``.
    """

    n_x: int
    n_y: int
    n_z: int
    halosize: int = 1
    ol_x: int | None = None

    def __post_init__(self):
        if self.ol_x is None:
            object.__setattr__(self, "ol_x", self.halosize)
        if min(self.n_x, self.n_y, self.n_z) < 1:
            raise ShapeError(f"cell counts must be >= 1, got {self}")
        if self.halosize < 0:
            raise ShapeError("halosize must be >= 0")
        if self.ol_x < self.halosize:
            raise ShapeError("x padding must be at least the halo width")

    @property
    def ol_y(self) -> int:
        return self.halosize

    @property
    def ext_x(self) -> int:
        return self.n_x + 2 * self.ol_x

    @property
    def ext_y(self) -> int:
        return self.n_y + 2 * self.ol_y

    @property
    def size(self) -> int:
        """Storage length including halo and padding."""
        return self.ext_x * self.ext_y * self.n_z

    @property
    def n_cells(self) -> int:
        return self.n_x * self.n_y * self.n_z

    @property
    def interior(self) -> tuple[slice, slice, slice]:
        """Slices selecting owned cells in an extended ``(i, j, k)`` view."""
        return (slice(self.ol_x, self.ol_x + self.n_x),
                slice(self.ol_y, self.ol_y + self.n_y),
                slice(None))

    def coarsened(self) -> "GridShape":
        """Horizontally halved shape with identical ``n_z`` and widths."""
        if self.n_x % 2 or self.n_y % 2:
            raise ShapeError(f"cannot halve {self.n_x}x{self.n_y}")
        return GridShape(self.n_x // 2, self.n_y // 2, self.n_z,
                         self.halosize, self.ol_x)

    def check_index(self, i: int, j: int, k: int) -> None:
        if not (1 - self.ol_x <= i <= self.n_x + self.ol_x
                and 1 - self.ol_y <= j <= self.n_y + self.ol_y
                and 0 <= k < self.n_z):
            raise RangeError(f"index ({i}, {j}, {k}) outside extended range of {self}")


def index_x_contiguous(shape: GridShape, i: int, j: int, k: int) -> int:
    """Storage offset of cell ``(i, j, k)``, ``x`` fastest.

    Indices are 1-based horizontally (interior ``1..n_x``), 0-based in ``k``.
    With zero padding this is ``n_x * (n_z * (j - 1) + k) + (i - 1)``.
    """
    shape.check_index(i, j, k)
    return (shape.ext_x * (shape.n_z * (j - 1 + shape.ol_y) + k)
            + (i - 1 + shape.ol_x))


def index_z_contiguous(shape: GridShape, i: int, j: int, k: int) -> int:
    """Storage offset of cell ``(i, j, k)``, ``k`` fastest."""
    shape.check_index(i, j, k)
    return (((j - 1 + shape.ol_y) * shape.ext_x + (i - 1 + shape.ol_x))
            * shape.n_z + k)


class Field:
    """A float64 scalar field on a padded local grid.

    Parameters
    ----------
    shape : GridShape
        Local grid.
    layout : Layout
        Linear storage order of ``data``.
    data : ndarray, optional
        Flat storage of length ``shape.size``; zeros when omitted.
    """

    __slots__ = ("shape", "layout", "data")

    def __init__(self, shape: GridShape, layout: Layout = Layout.X_CONTIGUOUS,
                 data: np.ndarray | None = None):
        self.shape = shape
        self.layout = Layout(layout)
        if data is None:
            data = np.zeros(shape.size)
        elif data.shape != (shape.size,):
            raise ShapeError(f"storage length {data.shape} != ({shape.size},)")
        self.data = data

    @classmethod
    def like(cls, other: "Field") -> "Field":
        return cls(other.shape, other.layout)

    @classmethod
    def from_interior(cls, values, halosize: int = 1, ol_x: int | None = None,
                      layout: Layout = Layout.X_CONTIGUOUS) -> "Field":
        """Wrap an ``(n_x, n_y, n_z)`` array; halos are zero."""
        values = np.asarray(values, dtype=float)
        if values.ndim != 3:
            raise ShapeError("interior values must be a 3D (n_x, n_y, n_z) array")
        f = cls(GridShape(*values.shape, halosize=halosize, ol_x=ol_x), layout)
        f.interior()[...] = values
        return f

    def ext(self) -> np.ndarray:
        """Writable ``(i, j, k)`` view over the extended range."""
        s = self.shape
        if self.layout is Layout.X_CONTIGUOUS:
            return self.data.reshape(s.ext_y, s.n_z, s.ext_x).transpose(2, 0, 1)
        return self.data.reshape(s.ext_y, s.ext_x, s.n_z).transpose(1, 0, 2)

    def interior(self) -> np.ndarray:
        """Writable ``(n_x, n_y, n_z)`` view of the owned cells."""
        return self.ext()[self.shape.interior]

    def copy(self) -> "Field":
        return Field(self.shape, self.layout, self.data.copy())

    def __getitem__(self, ijk):
        i, j, k = ijk
        self.shape.check_index(i, j, k)
        s = self.shape
        return self.ext()[i - 1 + s.ol_x, j - 1 + s.ol_y, k]

    def __setitem__(self, ijk, value):
        i, j, k = ijk
        self.shape.check_index(i, j, k)
        s = self.shape
        self.ext()[i - 1 + s.ol_x, j - 1 + s.ol_y, k] = value

    def __repr__(self):
        s = self.shape
        return f"Field({s.n_x}x{s.n_y}x{s.n_z}, {self.layout.name})"


def _conformable(f: Field, g: Field) -> None:
    if f.shape != g.shape or f.layout != g.layout:
        raise ShapeError(f"non-conformable fields {f!r} and {g!r}")


def transpose_layout(f: Field) -> Field:
    """Copy of ``f`` stored in the other layout; values at every cell agree."""
    other = Layout.Z_CONTIGUOUS if f.layout is Layout.X_CONTIGUOUS else Layout.X_CONTIGUOUS
    g = Field(f.shape, other)
    g.ext()[...] = f.ext()
    return g


def local_dot(f: Field, g: Field) -> float:
    """Sum of ``f * g`` over interior cells.

    Products are first summed along each vertical column, then the 2D column
    sums are added in ``(j, i)`` order.  The order is fixed by the shape only.
    """
    _conformable(f, g)
    prod = f.interior() * g.interior()
    return float(prod.sum(axis=2).sum())


def local_axpy(alpha: float, f: Field, g: Field) -> Field:
    """New field ``alpha * f + g`` on the interior (halo left zero)."""
    _conformable(f, g)
    out = Field.like(g)
    out.interior()[...] = alpha * f.interior() + g.interior()
    return out


def fill(f: Field, c: float) -> Field:
    f.interior()[...] = c
    return f


FIELD_MAGIC = b"AMGF"
_FIELD_VERSION = 1
_HEADER = struct.Struct("<4s5i")


def dump_field(f: Field, path) -> None:
    """Write interior values in the binary field format.

    Header: magic ``AMGF``, then version, n_x, n_y, n_z and layout tag as
    little-endian int32.  Body: interior float64 little-endian values in
    x-contiguous order (x fastest, then k, then j).
    """
    s = f.shape
    body = np.ascontiguousarray(f.interior().transpose(1, 2, 0), dtype="<f8")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(FIELD_MAGIC, _FIELD_VERSION, s.n_x, s.n_y, s.n_z,
                              int(f.layout)))
        fh.write(body.tobytes())


def load_field(path, halosize: int = 1, ol_x: int | None = None) -> Field:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size:
        raise ShapeError("truncated field header")
    magic, version, n_x, n_y, n_z, layout = _HEADER.unpack_from(raw)
    if magic != FIELD_MAGIC:
        raise ShapeError(f"bad magic {magic!r}")
    if version != _FIELD_VERSION:
        raise ShapeError(f"unsupported field format version {version}")
    body = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size)
    if body.size != n_x * n_y * n_z:
        raise ShapeError("field body length does not match header")
    f = Field(GridShape(n_x, n_y, n_z, halosize, ol_x), Layout(layout))
    f.interior()[...] = body.reshape(n_y, n_z, n_x).transpose(2, 0, 1)
    return f
