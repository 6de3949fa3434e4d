import numpy as np
import pytest

from anisolve.geometry import flat_box_geometry
from anisolve.grid import Field, GridShape
from anisolve.operator import StencilOperator
from anisolve.smoother import BlockJacobiPreconditioner


def make_operator(n, nz, nu=8.4, ny=None, omega=None, H=0.01):
    ny = n if ny is None else ny
    geo = flat_box_geometry(n, nz, nu, H, n_y_global=ny, omega=omega)
    return StencilOperator(geo, GridShape(n, ny, nz))


def make_problem(n, nz, nu=8.4, rho=2.0 / 3.0, **kw):
    A = make_operator(n, nz, nu, **kw)
    return A, BlockJacobiPreconditioner(A, rho)


def random_field(shape_or_n, nz=None, seed=0):
    rng = np.random.default_rng(seed)
    if isinstance(shape_or_n, GridShape):
        s = shape_or_n
        return Field.from_interior(rng.standard_normal((s.n_x, s.n_y, s.n_z)), s.halosize, s.ol_x)
    return Field.from_interior(rng.standard_normal((shape_or_n, shape_or_n, nz)))


def dense_vector(values):
    """Interior array flattened in the dense-assembly order i + nx (k + nz j)."""
    return np.ascontiguousarray(values.transpose(1, 2, 0)).ravel()


def from_dense_vector(vec, nx, ny, nz):
    return vec.reshape(ny, nz, nx).transpose(2, 0, 1)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# acceptance reporting: one PASS/FAIL line per criterion, repeated in the summary
_ACCEPTANCE = {}


@pytest.fixture
def acceptance():
    def record(number, title, ok, detail):
        line = f"criterion {number:2d} {'PASS' if ok else 'FAIL'}: {title} ({detail})"
        _ACCEPTANCE[number] = line
        print(line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for number in sorted(_ACCEPTANCE):
            terminalreporter.write_line(_ACCEPTANCE[number])
