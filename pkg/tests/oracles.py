"""Independent reference implementations used by the tests.

Everything here is written from the model definitions with plain loops and
scalar math; none of it calls into the package's FIM or gradient code.
"""
import math

import numpy as np


def aoa_scalar(q, s):
    dx, dy = q[0] - s[0], q[1] - s[1]
    dist = math.hypot(dx, dy)
    return math.atan(dist / s[2]), math.acos((s[0] - q[0]) / dist)


def steering(theta, phi, n, k):
    return np.array([complex(math.cos(m * k * math.sin(theta) * math.sin(phi)),
                             math.sin(m * k * math.sin(theta) * math.sin(phi)))
                     for m in range(n)])


def channel_by_summation(el, az, el_t, az_t, gains, phases, n_rx, n_tx, k):
    """Sum of per-path rank-one terms, one path at a time."""
    H = np.zeros((n_rx, n_tx), dtype=complex)
    for i in range(len(gains)):
        a_r = steering(el[i], az[i], n_rx, k)
        a_t = steering(el_t[i], az_t[i], n_tx, k)
        H += gains[i] * np.exp(1j * phases[i]) * np.outer(a_r, a_t.conj())
    return H


def aoa_jacobian_fd(q, s, step=1e-6):
    """d(elevation, azimuth)/d(q_x, q_y) by central differences, shape (2, 2)."""
    J = np.zeros((2, 2))
    for c in (0, 1):
        qp, qm = list(q), list(q)
        qp[c] += step
        qm[c] -= step
        J[:, c] = (np.array(aoa_scalar(qp, s)) - np.array(aoa_scalar(qm, s))) / (2 * step)
    return J


def numerical_position_fim(el, az, el_t, az_t, gains, phases, X, n_rx, k, s2,
                           elev_jac, azim_jac, step=1e-6):
    """Position FIM through the full-parameter route.

    Central differences of the stacked mean with respect to every AoA angle
    give the angle block of the parameter FIM; the angle-to-position
    Jacobian (zero on the gain parameters) then maps it to position.
    """
    n = len(gains)
    n_tx = X.shape[0]

    def mu(el_, az_):
        H = channel_by_summation(el_, az_, el_t, az_t, gains, phases, n_rx, n_tx, k)
        return (H @ X).T.reshape(-1)

    cols = []
    for which in (0, 1):
        for i in range(n):
            e = np.zeros(n)
            e[i] = step
            if which == 0:
                d = (mu(el + e, az) - mu(el - e, az)) / (2 * step)
            else:
                d = (mu(el, az + e) - mu(el, az - e)) / (2 * step)
            cols.append(d)
    D = np.stack(cols, axis=1)
    A = (2 / s2) * (D.conj().T @ D).real
    T = np.hstack([elev_jac, azim_jac])
    return T @ A @ T.T
