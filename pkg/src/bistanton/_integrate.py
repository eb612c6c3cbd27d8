"""Compiled adaptive Dormand-Prince 5(4) integrator for Hamilton's equations.

State layout: ``(qx, qy, px, py, S)`` where ``S`` accumulates ``p.qdot - H``.
Every accepted step is recorded; with the default tight tolerances the
samples are dense enough for quadrature and angle reconstruction.
"""

import numba
import numpy as np

OK, LEFT_DOMAIN, BUFFER_FULL, STEP_UNDERFLOW = 0, 1, 2, 3

_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = np.zeros((7, 7))
_A[1, :1] = [1 / 5]
_A[2, :2] = [3 / 40, 9 / 40]
_A[3, :3] = [44 / 45, -56 / 15, 32 / 9]
_A[4, :4] = [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729]
_A[5, :5] = [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656]
_A[6, :6] = [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84]
# difference between the 5th- and embedded 4th-order weights
_E = np.array([71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40])


@numba.njit(cache=True, nogil=True)
def hamilton_rhs(y, g, d, e, k, out):
    qx, qy, px, py = y[0], y[1], y[2], y[3]
    r2 = qx * qx + qy * qy
    de = d + k * r2
    fx = -g * qx + de * qy - e * qy
    fy = -g * qy - de * qx - e * qx
    f00 = -g + 2 * k * qx * qy
    f01 = de - e + 2 * k * qy * qy
    f10 = -de - e - 2 * k * qx * qx
    f11 = -g - 2 * k * qx * qy
    dqx = 2 * px + fx
    dqy = 2 * py + fy
    out[0] = dqx
    out[1] = dqy
    out[2] = -(f00 * px + f10 * py)
    out[3] = -(f01 * px + f11 * py)
    h = px * px + py * py + px * fx + py * fy
    out[4] = px * dqx + py * dqy - h


@numba.njit(cache=True, nogil=True)
def integrate(y0, t_end, g, d, e, k, rtol, atol, r_max, max_steps):
    """Integrate from t=0 to ``t_end``; returns ``(ts, ys, status, t_stop)``."""
    n = 5
    ts = np.empty(max_steps)
    ys = np.empty((max_steps, n))
    stages = np.empty((7, n))
    y = y0.copy()
    trial = np.empty(n)
    t = 0.0
    ts[0] = 0.0
    ys[0] = y
    m = 1
    status = OK
    hamilton_rhs(y, g, d, e, k, stages[0])
    h = min(1e-3, t_end)
    while t < t_end:
        if m >= max_steps:
            status = BUFFER_FULL
            break
        if t + h > t_end:
            h = t_end - t
        for s in range(1, 7):
            for i in range(n):
                acc = y[i]
                for j in range(s):
                    acc += h * _A[s, j] * stages[j, i]
                trial[i] = acc
            hamilton_rhs(trial, g, d, e, k, stages[s])
        err = 0.0
        for i in range(n):
            ei = 0.0
            for s in range(7):
                ei += _E[s] * stages[s, i]
            sc = atol + rtol * max(abs(y[i]), abs(trial[i]))
            err += (h * ei / sc) ** 2
        err = np.sqrt(err / n)
        if err != err:
            # overflow inside a stage: treat as a hard rejection
            err = 1e10
        if err <= 1.0:
            t += h
            for i in range(n):
                y[i] = trial[i]
                stages[0, i] = stages[6, i]
            ts[m] = t
            ys[m] = y
            m += 1
            if y[0] * y[0] + y[1] * y[1] > r_max * r_max or y[2] * y[2] + y[3] * y[3] > r_max * r_max:
                status = LEFT_DOMAIN
                break
            fac = 5.0 if err == 0.0 else 0.9 * err ** -0.2
            h *= min(5.0, max(0.2, fac))
        else:
            h *= max(0.2, 0.9 * err ** -0.2)
            if h < 1e-14 * max(1.0, t):
                status = STEP_UNDERFLOW
                break
    return ts[:m].copy(), ys[:m].copy(), status, t
