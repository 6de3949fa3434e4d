"""Dense reference computations shared by several test modules."""

import numpy as np
import scipy.linalg

from anisolve.operator import assemble_dense


def block_diagonal(A):
    """Dense block-diagonal part: couplings within one vertical column."""
    M = assemble_dense(A)
    s = A.shape
    idx = np.arange(s.n_x * s.n_y * s.n_z)
    i = idx % s.n_x
    j = idx // (s.n_x * s.n_z)
    same = (i[:, None] == i[None, :]) & (j[:, None] == j[None, :])
    return np.where(same, M, 0.0)


def preconditioned_spectrum(A):
    """Smallest and largest eigenvalue of M^-1 A by a dense generalized eigensolve."""
    ev = scipy.linalg.eigh(assemble_dense(A), block_diagonal(A), eigvals_only=True)
    return float(ev[0]), float(ev[-1])
