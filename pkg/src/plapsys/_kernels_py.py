"""Pure numpy implementation of the discrete p-Laplacian kernels.

This is the reference backend and the fallback when the compiled extension is
not importable. ``_kernels.pyx`` mirrors every function here one to one.

Conventions: ``u`` holds the ``n`` interior values, ``w`` the ``n+1`` edge
weights and ``h`` the spacing. The weighted operator is
``K(u)_i = -(w_{i+1/2} F_{i+1/2} - w_{i-1/2} F_{i-1/2})``
with ``F = phi(D)`` and ``D`` the edge difference quotient, so that
``K(u) = V * (-Delta_p u)`` for control volumes ``V``.
"""

import numpy as np
from scipy.linalg import LinAlgError, solveh_banded


def _edge_diff(u, h):
    D = np.empty(u.shape[0] + 1)
    D[0] = u[0]
    D[1:-1] = u[1:] - u[:-1]
    D[-1] = -u[-1]
    D /= h
    return D


def _flux(D, p, floor):
    if p == 2.0:
        return D.copy()
    if p < 2.0:
        if floor > 0.0:
            return (D * D + floor * floor) ** (0.5 * (p - 2.0)) * D
        a = np.abs(D)
        out = np.zeros_like(D)
        nz = a > 0.0
        out[nz] = a[nz] ** (p - 2.0) * D[nz]
        return out
    return np.abs(D) ** (p - 2.0) * D


def _dflux(D, p, floor):
    if p == 2.0:
        return np.ones_like(D)
    if p < 2.0:
        s = D * D + floor * floor
        with np.errstate(divide="ignore", invalid="ignore"):
            out = s ** (0.5 * (p - 4.0)) * ((p - 1.0) * D * D + floor * floor)
        return out
    return (p - 1.0) * (D * D + floor * floor) ** (0.5 * (p - 2.0))


def weighted_operator(u, p, floor, h, w):
    """Return ``K(u)`` (length n)."""
    F = w * _flux(_edge_diff(u, h), p, floor)
    return F[:-1] - F[1:]


def operator_and_conductance(u, p, floor, h, w):
    """Return ``(K(u), c)`` where ``c_k = w_k phi'(D_k) / h``.

    The Jacobian of ``K`` is the symmetric tridiagonal matrix with diagonal
    ``c[:-1] + c[1:]`` and off-diagonal ``-c[1:-1]``.
    """
    D = _edge_diff(u, h)
    F = w * _flux(D, p, floor)
    c = w * _dflux(D, p, floor) / h
    return F[:-1] - F[1:], c


def gradient_energy(u, p, floor, h, w):
    """Discrete ``int |grad u|^p / p`` without the sphere factor."""
    D = _edge_diff(u, h)
    if p < 2.0 and floor > 0.0:
        dens = ((D * D + floor * floor) ** (0.5 * p) - floor**p) / p
    else:
        dens = np.abs(D) ** p / p
    return float(h * np.dot(w, dens))


def solve_tridiag(diag, off, rhs):
    """Solve the symmetric tridiagonal system by banded Cholesky.

    Raises ``LinAlgError`` when the matrix is not positive definite.
    """
    n = diag.shape[0]
    ab = np.empty((2, n))
    ab[0, 0] = 0.0
    ab[0, 1:] = off
    ab[1] = diag
    if not np.all(np.isfinite(ab)):
        raise LinAlgError("non-finite Jacobian entries")
    return solveh_banded(ab, rhs, check_finite=False)
