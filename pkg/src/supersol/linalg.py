"""Symmetric positive definite solves: plain conjugate gradients and a
factorised path for many solves against one matrix."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .errors import NoConvergence


@dataclass
class CGInfo:
    iterations: int
    relative_residual: float
    energies: list = field(default_factory=list)


def conjugate_gradient(A, b, x0=None, tol=1e-10, max_iter=None, track_energy=False):
    """Solve ``A x = b`` for SPD ``A`` by conjugate gradients.

    Stops once ``||b - A x|| <= tol * ||b||``. Returns ``(x, CGInfo)``;
    with ``track_energy`` the quadratic form ``x.Ax/2 - b.x`` is recorded
    after each step (it must decrease monotonically).
    """
    b = np.asarray(b, dtype=float)
    n = b.shape[0]
    max_iter = 10 * n if max_iter is None else max_iter
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    bnorm = np.linalg.norm(b)
    if bnorm == 0:
        return np.zeros(n), CGInfo(0, 0.0)
    r = b - A @ x
    p = r.copy()
    rr = r @ r
    energies = []
    for k in range(1, max_iter + 1):
        Ap = A @ p
        alpha = rr / (p @ Ap)
        x += alpha * p
        r -= alpha * Ap
        rr_new = r @ r
        if track_energy:
            energies.append(0.5 * x @ (A @ x) - b @ x)
        if np.sqrt(rr_new) <= tol * bnorm:
            return x, CGInfo(k, float(np.sqrt(rr_new) / bnorm), energies)
        p = r + (rr_new / rr) * p
        rr = rr_new
    raise NoConvergence("conjugate gradient", max_iter)


class FactorizedSPD:
    """LU factorisation of ``A + diag(shift)`` reused across solves."""

    def __init__(self, A, shift=0.0):
        shift = np.broadcast_to(np.asarray(shift, dtype=float), (A.shape[0],))
        self.matrix = (A + sp.diags(shift)).tocsc()
        self._lu = splu(self.matrix)

    def solve(self, rhs):
        return self._lu.solve(np.asarray(rhs, dtype=float))
