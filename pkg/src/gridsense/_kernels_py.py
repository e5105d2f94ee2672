"""Pure NumPy versions of the compiled kernels in ``_kernels.pyx``.

Both implementations take identical arguments and must agree to rounding.
"""

import numpy as np


def em_integrate(delta, omega, G, B, E, M, D, Pm, forcing, dt, coi_dep, decim, delta_eq, max_dev):
    """Euler-Maruyama steps of the classical swing equations.

    ``forcing`` (steps x n) is the already scaled noise increment per step.
    With ``coi_dep >= 0`` the COI correction term is applied and the dependent
    machine is re-projected onto the inertia constraint after every step.
    The state is recorded before every ``decim``-th step.

    Returns (delta_out, omega_out, delta, omega, bad) where ``bad`` is the
    record index at which the COI-centred angles first strayed more than
    ``max_dev`` from ``delta_eq``, or -1.
    """
    delta = np.array(delta, dtype=float)
    omega = np.array(omega, dtype=float)
    steps, n = forcing.shape
    n_out = (steps + decim - 1) // decim
    d_out = np.empty((n_out, n))
    w_out = np.empty((n_out, n))
    MT = M.sum()
    wM = M / MT
    inv_M = 1.0 / M
    EE_G = np.outer(E, E) * G
    EE_B = np.outer(E, E) * B
    eq_c = delta_eq - np.dot(wM, delta_eq)
    others = None
    if coi_dep >= 0:
        others = np.array([i for i in range(n) if i != coi_dep], dtype=int)
    rec = 0
    bad = -1
    for k in range(steps):
        if k % decim == 0:
            d_out[rec] = delta
            w_out[rec] = omega
            if bad < 0:
                dev = delta - np.dot(wM, delta) - eq_c
                if np.abs(dev).max() > max_dev:
                    bad = rec
                    return d_out[: rec + 1], w_out[: rec + 1], delta, omega, bad
            rec += 1
        c = np.cos(delta)
        s = np.sin(delta)
        cc = np.outer(c, c) + np.outer(s, s)
        sc = np.outer(s, c) - np.outer(c, s)
        pa = Pm - (EE_G * cc + EE_B * sc).sum(axis=1)
        if coi_dep >= 0:
            pa = pa - wM * pa.sum()
        new_omega = omega + dt * inv_M * (pa - D * omega) + forcing[k]
        delta = delta + dt * omega
        omega = new_omega
        if coi_dep >= 0:
            delta[coi_dep] = -np.dot(M[others], delta[others]) / M[coi_dep]
            omega[coi_dep] = -np.dot(M[others], omega[others]) / M[coi_dep]
    return d_out, w_out, delta, omega, bad
