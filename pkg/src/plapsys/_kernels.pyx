# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled p-Laplacian kernels; same contract as ``_kernels_py``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport fabs, pow, sqrt

from scipy.linalg import LinAlgError

cnp.import_array()


cdef inline double _pw(double a, double e) nogil:
    # a >= 0; common exponents avoid the generic pow call
    if e == 1.0:
        return a
    if e == 0.5:
        return sqrt(a)
    if e == 2.0:
        return a * a
    if e == -0.5:
        return 1.0 / sqrt(a)
    if e == 1.5:
        return a * sqrt(a)
    if e == -1.5:
        return 1.0 / (a * sqrt(a))
    if e == 3.0:
        return a * a * a
    if e == 2.5:
        return a * a * sqrt(a)
    if e == 0.25:
        return sqrt(sqrt(a))
    return pow(a, e)


cdef inline double _flux(double D, double p, double floor) nogil:
    cdef double a
    if p == 2.0:
        return D
    if p < 2.0:
        if floor > 0.0:
            return _pw(D * D + floor * floor, 0.5 * (p - 2.0)) * D
        a = fabs(D)
        if a == 0.0:
            return 0.0
        return _pw(a, p - 2.0) * D
    return _pw(fabs(D), p - 2.0) * D


cdef inline double _dflux(double D, double p, double floor) nogil:
    if p == 2.0:
        return 1.0
    if p < 2.0:
        return _pw(D * D + floor * floor, 0.5 * (p - 4.0)) * ((p - 1.0) * D * D + floor * floor)
    return (p - 1.0) * _pw(D * D + floor * floor, 0.5 * (p - 2.0))


def weighted_operator(const double[::1] u, double p, double floor, double h, const double[::1] w):
    cdef Py_ssize_t n = u.shape[0], i
    cdef cnp.ndarray[double, ndim=1] out = np.empty(n)
    cdef double Fl, Fr, D
    with nogil:
        D = u[0] / h
        Fl = w[0] * _flux(D, p, floor)
        for i in range(n):
            if i < n - 1:
                D = (u[i + 1] - u[i]) / h
            else:
                D = -u[i] / h
            Fr = w[i + 1] * _flux(D, p, floor)
            out[i] = Fl - Fr
            Fl = Fr
    return out


def operator_and_conductance(const double[::1] u, double p, double floor, double h, const double[::1] w):
    cdef Py_ssize_t n = u.shape[0], i
    cdef cnp.ndarray[double, ndim=1] K = np.empty(n)
    cdef cnp.ndarray[double, ndim=1] c = np.empty(n + 1)
    cdef double[::1] Kv = K
    cdef double[::1] cv = c
    cdef double Fl, Fr, D
    with nogil:
        D = u[0] / h
        Fl = w[0] * _flux(D, p, floor)
        cv[0] = w[0] * _dflux(D, p, floor) / h
        for i in range(n):
            if i < n - 1:
                D = (u[i + 1] - u[i]) / h
            else:
                D = -u[i] / h
            Fr = w[i + 1] * _flux(D, p, floor)
            cv[i + 1] = w[i + 1] * _dflux(D, p, floor) / h
            Kv[i] = Fl - Fr
            Fl = Fr
    return K, c


def gradient_energy(const double[::1] u, double p, double floor, double h, const double[::1] w):
    cdef Py_ssize_t n = u.shape[0], k
    cdef double total = 0.0, D, fp
    cdef bint reg = p < 2.0 and floor > 0.0
    fp = pow(floor, p) if reg else 0.0
    with nogil:
        for k in range(n + 1):
            if k == 0:
                D = u[0] / h
            elif k == n:
                D = -u[n - 1] / h
            else:
                D = (u[k] - u[k - 1]) / h
            if reg:
                total += w[k] * (_pw(D * D + floor * floor, 0.5 * p) - fp)
            else:
                total += w[k] * _pw(fabs(D), p)
    return h * total / p


def solve_tridiag(const double[::1] diag, const double[::1] off, const double[::1] rhs):
    """Symmetric tridiagonal LDL^T solve; rejects non-positive pivots."""
    cdef Py_ssize_t n = diag.shape[0], i
    cdef cnp.ndarray[double, ndim=1] x = np.empty(n)
    cdef cnp.ndarray[double, ndim=1] d = np.empty(n)
    cdef double[::1] xv = x
    cdef double[::1] dv = d
    cdef double l
    cdef bint bad = False
    with nogil:
        dv[0] = diag[0]
        xv[0] = rhs[0]
        if not (dv[0] > 0.0):
            bad = True
        else:
            for i in range(1, n):
                l = off[i - 1] / dv[i - 1]
                dv[i] = diag[i] - l * off[i - 1]
                xv[i] = rhs[i] - l * xv[i - 1]
                if not (dv[i] > 0.0) or dv[i] != dv[i]:
                    bad = True
                    break
        if not bad:
            xv[n - 1] = xv[n - 1] / dv[n - 1]
            for i in range(n - 2, -1, -1):
                xv[i] = (xv[i] - off[i] * xv[i + 1]) / dv[i]
    if bad:
        raise LinAlgError("tridiagonal matrix is not positive definite")
    return x
