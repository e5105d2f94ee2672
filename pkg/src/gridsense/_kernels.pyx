# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled Euler-Maruyama loop for the classical swing equations.

Mirrors ``_kernels_py.em_integrate`` argument for argument.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport sin, cos, fabs

cnp.import_array()


def em_integrate(delta_in, omega_in, G_in, B_in, E_in, M_in, D_in, Pm_in, forcing_in,
                 double dt, int coi_dep, int decim, delta_eq_in, double max_dev):
    cdef double[::1] delta = np.array(delta_in, dtype=np.float64)
    cdef double[::1] omega = np.array(omega_in, dtype=np.float64)
    cdef double[:, ::1] G = np.ascontiguousarray(G_in, dtype=np.float64)
    cdef double[:, ::1] B = np.ascontiguousarray(B_in, dtype=np.float64)
    cdef double[::1] E = np.ascontiguousarray(E_in, dtype=np.float64)
    cdef double[::1] M = np.ascontiguousarray(M_in, dtype=np.float64)
    cdef double[::1] D = np.ascontiguousarray(D_in, dtype=np.float64)
    cdef double[::1] Pm = np.ascontiguousarray(Pm_in, dtype=np.float64)
    cdef double[:, ::1] forcing = np.ascontiguousarray(forcing_in, dtype=np.float64)
    cdef double[::1] delta_eq = np.ascontiguousarray(delta_eq_in, dtype=np.float64)

    cdef Py_ssize_t steps = forcing.shape[0]
    cdef Py_ssize_t n = forcing.shape[1]
    cdef Py_ssize_t n_out = (steps + decim - 1) // decim
    d_out_arr = np.empty((n_out, n))
    w_out_arr = np.empty((n_out, n))
    cdef double[:, ::1] d_out = d_out_arr
    cdef double[:, ::1] w_out = w_out_arr

    cdef double[::1] c = np.empty(n)
    cdef double[::1] s = np.empty(n)
    cdef double[::1] pa = np.empty(n)
    cdef double[::1] EE = np.empty(n * n)
    cdef double[::1] eq_c = np.empty(n)
    cdef Py_ssize_t i, j, k
    cdef Py_ssize_t rec = 0
    cdef Py_ssize_t bad = -1
    cdef double MT = 0.0, acc, pcoi, d0, dev, cij, sij, w_new, num, tmp

    for i in range(n):
        MT += M[i]
        for j in range(n):
            EE[i * n + j] = E[i] * E[j]
    d0 = 0.0
    for i in range(n):
        d0 += M[i] * delta_eq[i]
    d0 /= MT
    for i in range(n):
        eq_c[i] = delta_eq[i] - d0

    for k in range(steps):
        if k % decim == 0:
            for i in range(n):
                d_out[rec, i] = delta[i]
                w_out[rec, i] = omega[i]
            d0 = 0.0
            for i in range(n):
                d0 += M[i] * delta[i]
            d0 /= MT
            for i in range(n):
                dev = delta[i] - d0 - eq_c[i]
                if fabs(dev) > max_dev:
                    bad = rec
                    break
            if bad >= 0:
                return (d_out_arr[: rec + 1], w_out_arr[: rec + 1],
                        np.asarray(delta), np.asarray(omega), bad)
            rec += 1
        for i in range(n):
            c[i] = cos(delta[i])
            s[i] = sin(delta[i])
        pcoi = 0.0
        for i in range(n):
            acc = 0.0
            for j in range(n):
                cij = c[i] * c[j] + s[i] * s[j]
                sij = s[i] * c[j] - c[i] * s[j]
                acc += EE[i * n + j] * (G[i, j] * cij + B[i, j] * sij)
            pa[i] = Pm[i] - acc
            pcoi += pa[i]
        if coi_dep >= 0:
            for i in range(n):
                pa[i] -= M[i] / MT * pcoi
        for i in range(n):
            w_new = omega[i] + dt / M[i] * (pa[i] - D[i] * omega[i]) + forcing[k, i]
            delta[i] = delta[i] + dt * omega[i]
            omega[i] = w_new
        if coi_dep >= 0:
            num = 0.0
            tmp = 0.0
            for i in range(n):
                if i != coi_dep:
                    num += M[i] * delta[i]
                    tmp += M[i] * omega[i]
            delta[coi_dep] = -num / M[coi_dep]
            omega[coi_dep] = -tmp / M[coi_dep]

    return d_out_arr, w_out_arr, np.asarray(delta), np.asarray(omega), bad
